"""Model problems with manufactured solutions, error norms and the gradient diagnostic."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import iter_element_blocks, l2_project, solve_poisson
from .bezier_geom import eval_quad_jacobian
from .multipatch import DIRICHLET, NEUMANN, build_domain
from .quadrature import gauss_rule


# --- domains -----------------------------------------------------------------

def unit_square():
    return build_domain([[(0, 0), (1, 0), (0, 1), (1, 1)]])


QUAD_CORNERS = [(0.0, 0.0), (0.7, 0.0), (0.2, 0.8), (1.0, 1.0)]


def skew_quad():
    """Convex quadrilateral with its lower right corner at (0.7, 0)."""
    return build_domain([QUAD_CORNERS])


def _fan(center, rim):
    """Quads (center, m_{i-1,i}, m_{i,i+1}, v_i) around a convex polygon."""
    c = np.asarray(center, float)
    v = np.asarray(rim, float)
    n = len(v)
    quads = []
    for i in range(n):
        m_prev = 0.5 * (v[i - 1] + v[i])
        m_next = 0.5 * (v[i] + v[(i + 1) % n])
        quads.append([c, m_prev, m_next, v[i]])
    return quads


def three_patch():
    """Equilateral triangle around the origin split into three quads meeting at (0, 0)."""
    ang = np.deg2rad([90.0, 210.0, 330.0])
    rim = np.column_stack([np.cos(ang), np.sin(ang)])
    return build_domain(_fan((0, 0), rim))


PENTAGON = [(1.0, 0.0), (0.3, 1.0), (-1.0, 0.5), (-0.5, -1.0), (0.6, -0.9)]


def pentagon():
    """Five quads meeting at (0, 0); (1, 0) and (-0.5, -1) are patch corners."""
    return build_domain(_fan((0, 0), PENTAGON))


def lshape():
    """[-1, 1]^2 minus [0, 1]^2 as three unit squares.

    Dirichlet on the two edges at the reentrant corner, Neumann elsewhere.
    """
    corners = [
        [(-1, 0), (0, 0), (-1, 1), (0, 1)],
        [(-1, -1), (0, -1), (-1, 0), (0, 0)],
        [(0, -1), (1, -1), (0, 0), (1, 0)],
    ]
    tags = {(k, e): NEUMANN for k in range(3) for e in range(4)}
    tags[(0, 1)] = DIRICHLET
    tags[(2, 2)] = DIRICHLET
    for k, e in [(0, 0), (1, 2), (1, 1), (2, 3)]:
        tags.pop((k, e))
    return build_domain(corners, boundary_tags=tags)


CRACK_ANGLE = 350.0


def cracked_disk(npatch=5, radius=1.0):
    """Fan of quads around (0, 0) with a reentrant corner of 350 degrees.

    The crack faces are the rays at -5 and +5 degrees.
    """
    gap = 360.0 - CRACK_ANGLE
    step = CRACK_ANGLE / npatch
    corners = []
    for i in range(npatch):
        a = np.deg2rad(gap / 2 + i * step)
        b = np.deg2rad(gap / 2 + (i + 1) * step)
        m = 0.5 * (a + b)
        corners.append([(0.0, 0.0),
                        (radius * np.cos(a), radius * np.sin(a)),
                        (radius * np.cos(b), radius * np.sin(b)),
                        (radius * np.cos(m), radius * np.sin(m))])
    tags = {}
    for k in range(npatch):
        tags[(k, 1)] = NEUMANN
        tags[(k, 2)] = NEUMANN
    tags[(0, 0)] = DIRICHLET
    tags[(npatch - 1, 3)] = DIRICHLET
    return build_domain(corners, boundary_tags=tags)


# --- closed-form solutions ----------------------------------------------------

def _radial(center, power, eps=0.0):
    """u = (|x - c|^2 + eps)^power with gradient and Laplacian."""
    c = np.asarray(center, float)

    def q_r2(x):
        d = np.asarray(x, float) - c
        r2 = np.sum(d * d, axis=-1)
        return d, r2, r2 + eps

    def u(x):
        return q_r2(x)[2] ** power

    def grad(x):
        d, _, q = q_r2(x)
        return (2 * power * q ** (power - 1))[..., None] * d

    def lap(x):
        _, r2, q = q_r2(x)
        return 4 * power * q ** (power - 2) * (q + (power - 1) * r2)

    return u, grad, lap


def _side(axis, expo=0.6):
    """(1 - x_axis^2)^expo."""
    def u(x):
        return np.maximum(1 - x[..., axis] ** 2, 0.0) ** expo

    def grad(x):
        xa = x[..., axis]
        w = np.maximum(1 - xa ** 2, 1e-300)
        g = np.zeros(np.shape(x))
        g[..., axis] = -2 * expo * xa * w ** (expo - 1)
        return g

    def lap(x):
        xa = x[..., axis]
        w = np.maximum(1 - xa ** 2, 1e-300)
        return -2 * expo * w ** (expo - 1) + 4 * expo * (expo - 1) * xa ** 2 * w ** (expo - 2)

    return u, grad, lap


def _sum(*parts):
    return (lambda x: sum(p[0](x) for p in parts),
            lambda x: sum(p[1](x) for p in parts),
            lambda x: sum(p[2](x) for p in parts))


def _sin_y():
    return (lambda x: np.sin(np.pi * x[..., 1]),
            lambda x: np.stack([np.zeros(np.shape(x)[:-1]), np.pi * np.cos(np.pi * x[..., 1])], -1),
            lambda x: -np.pi ** 2 * np.sin(np.pi * x[..., 1]))


def _sin_sin():
    def u(x):
        return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])

    def grad(x):
        sx, sy = np.sin(np.pi * x[..., 0]), np.sin(np.pi * x[..., 1])
        cx, cy = np.cos(np.pi * x[..., 0]), np.cos(np.pi * x[..., 1])
        return np.pi * np.stack([cx * sy, sx * cy], -1)

    def lap(x):
        return -2 * np.pi ** 2 * u(x)

    return u, grad, lap


def _lshape_polar():
    """r^(2/3) sin((2 phi - pi)/3) with phi in (0, 2 pi], harmonic."""
    def polar(x):
        r = np.hypot(x[..., 0], x[..., 1])
        phi = np.arctan2(x[..., 1], x[..., 0])
        phi = np.where(phi <= 0, phi + 2 * np.pi, phi)
        return r, phi

    def u(x):
        r, phi = polar(x)
        return r ** (2.0 / 3.0) * np.sin((2 * phi - np.pi) / 3)

    def grad(x):
        r, phi = polar(x)
        r = np.maximum(r, 1e-300)
        arg = (2 * phi - np.pi) / 3
        ur = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.sin(arg)
        uphi = (2.0 / 3.0) * r ** (-1.0 / 3.0) * np.cos(arg)
        c, s = np.cos(phi), np.sin(phi)
        return np.stack([ur * c - uphi * s, ur * s + uphi * c], -1)

    def lap(x):
        return np.zeros(np.shape(x)[:-1])

    return u, grad, lap


# --- the catalog ---------------------------------------------------------------

@dataclass(frozen=True)
class ManufacturedCase:
    """One model problem.

    ``kind`` is ``"l2"`` (L2 projection of `u`) or ``"poisson"``.
    Callables take points of shape (N, 2); `g_N` also receives outward normals.
    """

    name: str
    kind: str
    formula: str
    build_domain: Callable
    u: Optional[Callable] = None
    grad_u: Optional[Callable] = None
    laplace_u: Optional[Callable] = None
    f: Optional[Callable] = None
    g_D: Optional[Callable] = None
    g_N: Optional[Callable] = None
    singular_points: tuple = ()
    has_exact: bool = True

    @property
    def sampling(self):
        """Sampling mode used by default for this problem type."""
        return "L2" if self.kind == "l2" else "H1"


def _poisson(name, formula, dom, parts, singular=(), neumann_from_exact=False):
    u, grad, lap = parts
    def flux(x, n):
        return np.sum(grad(x) * n, axis=-1)
    g_N = flux if neumann_from_exact else None
    return ManufacturedCase(name, "poisson", formula, dom, u, grad, lap,
                            f=lambda x: -lap(x), g_D=u, g_N=g_N, singular_points=tuple(singular))


def _l2(name, formula, dom, parts, singular=()):
    u, grad, lap = parts
    return ManufacturedCase(name, "l2", formula, dom, u, grad, lap, singular_points=tuple(singular))


def catalog():
    """All model problems, keyed by stable CLI names (insertion ordered)."""
    cases = [
        _l2("l2_square_corner", "((x-1)^2+(y-1)^2)^(1/16)", unit_square,
            _radial((1, 1), 1.0 / 16), [(1, 1)]),
        _l2("l2_square_perturbed", "((x-1)^2+(y-1)^2+0.0001)^(-1/4)", unit_square,
            _radial((1, 1), -0.25, 1e-4), [(1, 1)]),
        _poisson("poisson_square_corner", "((x-1)^2+(y-1)^2)^(1/4)", unit_square,
                 _radial((1, 1), 0.25), [(1, 1)]),
        _poisson("poisson_side", "sin(pi y)+(1-x^2)^(3/5)", unit_square,
                 _sum(_sin_y(), _side(0))),
        _l2("l2_quad_corner", "((x-0.7)^2+y^2+0.0001)^(-1/4)", skew_quad,
            _radial((0.7, 0), -0.25, 1e-4), [(0.7, 0)]),
        _poisson("three_patch", "(x^2+y^2+0.00001)^(1/8)", three_patch,
                 _radial((0, 0), 1.0 / 8, 1e-5), [(0, 0)]),
        _poisson("pentagon",
                 "((x+0.5)^2+(y+1)^2)^(1/8)+(x^2+y^2+0.00001)^(1/4)+((x-1)^2+y^2)^(1/8)",
                 pentagon,
                 _sum(_radial((-0.5, -1), 1.0 / 8), _radial((0, 0), 0.25, 1e-5),
                      _radial((1, 0), 1.0 / 8)),
                 [(-0.5, -1), (0, 0), (1, 0)]),
        _poisson("two_sides", "(1-x^2)^(3/5)+(1-y^2)^(3/5)", unit_square,
                 _sum(_side(0), _side(1))),
        _poisson("lshape_heat", "r^(2/3) sin((2 phi - pi)/3)", lshape, _lshape_polar(),
                 [(0, 0)], neumann_from_exact=True),
        ManufacturedCase("crack", "poisson", "f=0, g_N=1, u=0 on crack faces", cracked_disk,
                         f=None, g_D=lambda x: np.zeros(len(x)),
                         g_N=lambda x, n: np.ones(len(x)), singular_points=((0, 0),),
                         has_exact=False),
        _poisson("smooth", "sin(pi x) sin(pi y)", unit_square, _sin_sin()),
    ]
    return {c.name: c for c in cases}


def get_case(name):
    cases = catalog()
    if name not in cases:
        raise KeyError(f"unknown case {name!r}; choose from {', '.join(cases)}")
    return cases[name]


def solve_case(case, domain, space, dofmap, method="auto"):
    """Discrete solution of `case` on the given (possibly reparameterized) domain."""
    if case.kind == "l2":
        return l2_project(domain, space, dofmap, case.u, method)
    return solve_poisson(domain, space, dofmap, case.f, case.g_D, case.g_N, method)


# --- errors ----------------------------------------------------------------------

def _field_at(uh, k, s, t):
    """Value and physical gradient of u_h plus geometry at parameters on patch k."""
    from .bezier_geom import eval_quad
    net = uh.domain.patches[k]
    vals = uh.eval_param(k, s, t, nder=1)
    J = eval_quad_jacobian(net, s, t)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    gs, gt = vals[..., 1], vals[..., 2]
    gx = (J[..., 1, 1] * gs - J[..., 1, 0] * gt) / det
    gy = (-J[..., 0, 1] * gs + J[..., 0, 0] * gt) / det
    return vals[..., 0], np.stack([gx, gy], -1), eval_quad(net, s, t), det


def _singular_corner_elements(domain, space, points, tol=1e-10):
    """Per patch, element indices (ex, ey) whose patch corner is a singular point."""
    hits = {}
    labels = {(0, 0): (0, 0), (2, 0): (space.s.n - 1, 0),
              (0, 2): (0, space.t.n - 1), (2, 2): (space.s.n - 1, space.t.n - 1)}
    for k, net in enumerate(domain.patches):
        for lab, el in labels.items():
            if any(np.linalg.norm(net.points[lab] - np.asarray(p)) < tol for p in points):
                hits.setdefault(k, set()).add(el)
    return hits


def error_norms(uh, case, m=None, boost=1):
    """(L2 error, H1 seminorm error) of `uh` against the exact solution of `case`.

    Uses ``m = p + 2`` Gauss points per direction. With ``boost > 1`` the
    elements touching the case's singular corners are integrated with a
    ``boost x boost`` composite rule.
    """
    if not case.has_exact:
        raise ValueError(f"case {case.name!r} has no exact solution")
    space = uh.space
    m = m or space.degree + 2
    l2 = h1 = 0.0
    special = _singular_corner_elements(uh.domain, space, case.singular_points) if boost > 1 else {}
    for blk in iter_element_blocks(uh.domain, space, uh.dofmap, m):
        c = uh.coeffs[blk.ids]
        val = np.einsum("eqa,ea->eq", blk.N, c)
        grad = np.einsum("eqad,ea->eqd", blk.dN, c)
        x = blk.x.reshape(-1, 2)
        ue = case.u(x).reshape(val.shape)
        ge = case.grad_u(x).reshape(grad.shape)
        el2 = blk.w * (val - ue) ** 2
        eh1 = blk.w * np.sum((grad - ge) ** 2, -1)
        if blk.patch in special:
            nt = space.t.n
            for (ex, ey) in special[blk.patch]:
                pos = np.flatnonzero(blk.elements == ex * nt + ey)
                if len(pos):
                    el2[pos] = 0.0
                    eh1[pos] = 0.0
        l2 += el2.sum()
        h1 += eh1.sum()
    for k, els in special.items():
        for (ex, ey) in els:
            a, b = _composite_element(uh, case, k, ex, ey, m, boost)
            l2 += a
            h1 += b
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def _composite_element(uh, case, k, ex, ey, m, boost):
    rule = gauss_rule(m)
    ns, nt = uh.space.s.n, uh.space.t.n
    sub = (np.arange(boost)[:, None] + rule.nodes[None, :]).ravel() / boost
    wsub = np.tile(rule.weights, boost) / boost
    s = (ex + sub) / ns
    t = (ey + sub) / nt
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(wsub, wsub) / (ns * nt)
    val, grad, x, det = _field_at(uh, k, S.ravel(), T.ravel())
    w = W.ravel() * det
    return (float(np.sum(w * (val - case.u(x)) ** 2)),
            float(np.sum(w * np.sum((grad - case.grad_u(x)) ** 2, -1))))


def max_gradient(uh, m=None):
    """Maximum of |grad u_h| over the assembly quadrature nodes."""
    m = m or uh.space.degree + 1
    best = 0.0
    for blk in iter_element_blocks(uh.domain, uh.space, uh.dofmap, m):
        grad = np.einsum("eqad,ea->eqd", blk.dN, uh.coeffs[blk.ids])
        best = max(best, float(np.sqrt(np.sum(grad ** 2, -1)).max()))
    return best
