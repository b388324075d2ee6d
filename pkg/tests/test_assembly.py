import numpy as np
import pytest

from iga_radapt.assembly import (
    SolverError,
    assemble_mass,
    assemble_stiffness,
    l2_project,
    solve_poisson,
    solve_spd,
)
from iga_radapt.bezier_geom import QuadPatchNet, RegularityError
from iga_radapt.multipatch import NEUMANN, build_dof_map, build_domain
from iga_radapt.problems import error_norms, get_case, lshape, pentagon
from iga_radapt.tensor_spline import TensorSpace


def curved(domain, seed=0, amp=0.05):
    """Perturb interior control points (keeps interfaces conforming on single patches)."""
    rng = np.random.default_rng(seed)
    out = []
    for net in domain.patches:
        P = np.array(net.points)
        P[1, 1] += rng.uniform(-amp, amp, 2)
        out.append(QuadPatchNet(P))
    return domain.with_patches(out)


def test_mass_sums_to_area_and_stiffness_kills_constants():
    dom = curved(pentagon())
    space = TensorSpace.uniform(2, 3)
    dm = build_dof_map(dom, space)
    M = assemble_mass(dom, space, dm)
    K = assemble_stiffness(dom, space, dm)
    assert abs(M.sum() - dom.area()) < 1e-12
    assert np.abs(K @ np.ones(dm.ndofs)).max() < 1e-12
    assert abs(K - K.T).max() < 1e-14


def test_element_order_does_not_change_matrix():
    dom = curved(lshape())
    space = TensorSpace.uniform(2, 4)
    dm = build_dof_map(dom, space)
    K1 = assemble_stiffness(dom, space, dm, element_order=np.arange(16))
    K2 = assemble_stiffness(dom, space, dm, element_order=np.random.default_rng(0).permutation(16))
    assert (K1 != K2).nnz == 0


@pytest.mark.parametrize("p", [1, 2, 3])
def test_patch_test_linear_solution(p):
    # linear u is reproduced exactly on curved multi-patch geometry (p >= 2 isoparametric)
    dom = pentagon() if p == 1 else curved(pentagon())
    space = TensorSpace.uniform(p, 2)
    dm = build_dof_map(dom, space)

    def u(x):
        return 1 + 2 * x[:, 0] - 3 * x[:, 1]

    uh = solve_poisson(dom, space, dm, f=lambda x: np.zeros(len(x)), g_D=u)
    from iga_radapt.problems import ManufacturedCase
    case = ManufacturedCase("lin", "poisson", "", None, u,
                            lambda x: np.tile([2.0, -3.0], (len(x), 1)))
    l2, h1 = error_norms(uh, case)
    assert l2 < 1e-10 and h1 < 1e-10


def test_neumann_patch_test():
    corners = [[(0, 0), (1, 0), (0, 1), (1, 1)]]
    dom = build_domain(corners, boundary_tags={(0, 1): NEUMANN, (0, 2): NEUMANN})
    space = TensorSpace.uniform(2, 3)
    dm = build_dof_map(dom, space)
    u = lambda x: x[:, 0] ** 2 + x[:, 1]
    grad = lambda x: np.column_stack([2 * x[:, 0], np.ones(len(x))])
    uh = solve_poisson(dom, space, dm, f=lambda x: -2 * np.ones(len(x)), g_D=u,
                       g_N=lambda x, n: np.sum(grad(x) * n, 1))
    from iga_radapt.problems import ManufacturedCase
    case = ManufacturedCase("q", "poisson", "", None, u, grad)
    assert max(error_norms(uh, case)) < 1e-10


def test_l2_projection_reproduces_space_function():
    # affine patches: quadratics in x, y lie in the biquadratic space
    dom = lshape()
    space = TensorSpace.uniform(2, 2)
    dm = build_dof_map(dom, space)
    u = lambda x: x[:, 0] * x[:, 1] + x[:, 0] ** 2
    uh = l2_project(dom, space, dm, u)
    from iga_radapt.problems import ManufacturedCase
    case = ManufacturedCase("q", "l2", "", None, u,
                            lambda x: np.column_stack([x[:, 1] + 2 * x[:, 0], x[:, 0]]))
    assert max(error_norms(uh, case)) < 1e-9


def test_nonregular_geometry_rejected():
    dom = lshape()
    P = np.array(dom.patches[0].points)
    P[1, 1] = (1.5, 2.0)
    bad = dom.with_patches([QuadPatchNet(P)] + list(dom.patches[1:]))
    space = TensorSpace.uniform(2, 2)
    with pytest.raises(RegularityError):
        assemble_stiffness(bad, space, build_dof_map(bad, space, check_greville=False))


def test_solvers_agree():
    case = get_case("smooth")
    dom = case.build_domain()
    space = TensorSpace.uniform(2, 24)
    dm = build_dof_map(dom, space)
    K = assemble_stiffness(dom, space, dm)[dm.free][:, dm.free]
    b = np.random.default_rng(0).random(K.shape[0])
    x1 = solve_spd(K, b, "cg")
    x2 = solve_spd(K, b, "direct")
    x3 = solve_spd(K, b, "auto")
    assert np.allclose(x1, x2, atol=1e-9 * np.abs(x2).max())
    assert np.allclose(x3, x2, atol=1e-9 * np.abs(x2).max())


def test_unknown_solver_rejected():
    import scipy.sparse as sp
    A = sp.diags(np.logspace(0, 2, 200)).tocsr()
    with pytest.raises(ValueError):
        solve_spd(A, np.ones(200), "magic")


def test_cg_reports_nonconvergence():
    import scipy.sparse as sp
    # singular Neumann Laplacian with an incompatible right-hand side
    n = 50
    d = 2 * np.ones(n)
    d[[0, -1]] = 1
    A = sp.diags([-np.ones(n - 1), d, -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    with pytest.raises(SolverError):
        solve_spd(A, np.ones(n), "cg")
