"""Galerkin assembly and linear solves on multi-patch isogeometric spaces."""
from dataclasses import dataclass
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bezier_geom import check_regularity, RegularityError
from .multipatch import DIRICHLET, NEUMANN, edge_dof_indices
from .quadrature import gauss_rule
from .tensor_spline import basis_ders, collocation_matrix

log = logging.getLogger(__name__)

DENSE_LIMIT = 500


class SolverError(RuntimeError):
    pass


# --- per-patch quadrature data --------------------------------------------

@dataclass
class ElementBlock:
    """Quadrature data for a block of elements of one patch.

    Shapes: ``ids`` (E, L); ``N`` (E, Q, L); ``dN_hat`` and ``dN`` (E, Q, L, 2);
    ``x`` (E, Q, 2); ``w`` (E, Q) including ``|det J|``; ``jac`` (E, Q, 2, 2).
    """

    patch: int
    elements: np.ndarray
    ids: np.ndarray
    N: np.ndarray
    dN_hat: np.ndarray
    dN: np.ndarray
    x: np.ndarray
    w: np.ndarray
    jac: np.ndarray
    st: np.ndarray


def iter_element_blocks(domain, space, dofmap, m, block_rows=16, element_order=None, patches=None):
    """Yield :class:`ElementBlock` chunks covering every element of every patch.

    `element_order` optionally permutes the element indices within each patch.
    """
    rule = gauss_rule(m)
    ks, kt = space.s, space.t
    ps, pt = ks.degree + 1, kt.degree + 1
    # univariate data on all elements: (n, m)
    s_pts = (np.arange(ks.n)[:, None] + rule.nodes[None, :]) / ks.n
    t_pts = (np.arange(kt.n)[:, None] + rule.nodes[None, :]) / kt.n
    fs, ds = basis_ders(ks, s_pts, 1)
    ft, dt = basis_ders(kt, t_pts, 1)
    fs = fs.reshape(ks.n, m)[:, 0]
    ft = ft.reshape(kt.n, m)[:, 0]
    ds = ds.reshape(ks.n, m, 2, ps)
    dt = dt.reshape(kt.n, m, 2, pt)
    from .tensor_spline import bernstein
    gs = bernstein(2, s_pts, 1).reshape(ks.n, m, 2, 3)
    gt = bernstein(2, t_pts, 1).reshape(kt.n, m, 2, 3)
    wq = np.outer(rule.weights, rule.weights).ravel() / (ks.n * kt.n)

    nel = ks.n * kt.n
    all_el = np.arange(nel) if element_order is None else np.asarray(element_order)
    which = range(domain.K) if patches is None else patches
    for k in which:
        net = domain.patches[k]
        G = net.points
        gdofs = dofmap.patch_dofs[k]
        for start in range(0, nel, block_rows * kt.n):
            els = all_el[start:start + block_rows * kt.n]
            ex, ey = els // kt.n, els % kt.n
            E = len(els)
            # basis: (E, m, m, ps, pt)
            Bs, dBs = ds[ex, :, 0, :], ds[ex, :, 1, :]
            Bt, dBt = dt[ey, :, 0, :], dt[ey, :, 1, :]
            N = np.einsum("eai,ebj->eabij", Bs, Bt).reshape(E, m * m, ps * pt)
            Ns = np.einsum("eai,ebj->eabij", dBs, Bt).reshape(E, m * m, ps * pt)
            Nt = np.einsum("eai,ebj->eabij", Bs, dBt).reshape(E, m * m, ps * pt)
            # geometry
            gS, gdS = gs[ex, :, 0, :], gs[ex, :, 1, :]
            gT, gdT = gt[ey, :, 0, :], gt[ey, :, 1, :]
            x = np.einsum("eai,ebj,ijd->eabd", gS, gT, G).reshape(E, m * m, 2)
            xs = np.einsum("eai,ebj,ijd->eabd", gdS, gT, G).reshape(E, m * m, 2)
            xt = np.einsum("eai,ebj,ijd->eabd", gS, gdT, G).reshape(E, m * m, 2)
            jac = np.stack([xs, xt], axis=-1)  # [..., d, param]
            det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
            if np.any(det <= 0):
                raise RegularityError(f"patch {k}: non-positive Jacobian at quadrature points")
            # inverse transpose applied to (d/ds, d/dt)
            inv00 = jac[..., 1, 1] / det
            inv01 = -jac[..., 0, 1] / det
            inv10 = -jac[..., 1, 0] / det
            inv11 = jac[..., 0, 0] / det
            dN_hat = np.stack([Ns, Nt], axis=-1)
            dNx = inv00[..., None] * Ns + inv10[..., None] * Nt
            dNy = inv01[..., None] * Ns + inv11[..., None] * Nt
            dN = np.stack([dNx, dNy], axis=-1)
            ii = fs[ex][:, None] + np.arange(ps)[None, :]
            jj = ft[ey][:, None] + np.arange(pt)[None, :]
            ids = gdofs[ii[:, :, None], jj[:, None, :]].reshape(E, ps * pt)
            sq = np.stack(np.broadcast_arrays(
                s_pts[ex][:, :, None], t_pts[ey][:, None, :]), axis=-1).reshape(E, m * m, 2)
            yield ElementBlock(k, els, ids, N, dN_hat, dN, x, wq[None, :] * det, jac, sq)


def _require_regular(domain):
    for k, net in enumerate(domain.patches):
        res = check_regularity(net)
        if not res.regular:
            raise RegularityError(
                f"patch {k} is not regular: min det {res.min_det:.3e} at {res.location}")


def _assemble(domain, space, dofmap, kind, element_order=None, m=None):
    _require_regular(domain)
    m = m or space.degree + 1
    rows, cols, vals = [], [], []
    for blk in iter_element_blocks(domain, space, dofmap, m, element_order=element_order):
        if kind == "stiffness":
            loc = np.einsum("eqad,eqbd,eq->eab", blk.dN, blk.dN, blk.w)
        else:
            loc = np.einsum("eqa,eqb,eq->eab", blk.N, blk.N, blk.w)
        L = blk.ids.shape[1]
        rows.append(np.repeat(blk.ids, L, axis=1).ravel())
        cols.append(np.tile(blk.ids, (1, L)).ravel())
        vals.append(loc.ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    if element_order is not None:
        # fixed accumulation order regardless of element traversal
        perm = np.lexsort((vals, cols, rows))
        rows, cols, vals = rows[perm], cols[perm], vals[perm]
    A = sp.coo_matrix((vals, (rows, cols)), shape=(dofmap.ndofs, dofmap.ndofs)).tocsr()
    A.sum_duplicates()
    return A


def assemble_stiffness(domain, space, dofmap, element_order=None):
    """Stiffness matrix ``a(phi_i, phi_j) = int grad phi_i . grad phi_j``."""
    return _assemble(domain, space, dofmap, "stiffness", element_order)


def assemble_mass(domain, space, dofmap, element_order=None):
    return _assemble(domain, space, dofmap, "mass", element_order)


def edge_quadrature(net, space, edge, m):
    """Points, parameters, arc-length weights and outward normals along an edge."""
    rule = gauss_rule(m)
    kn = space.s if edge in (0, 2) else space.t
    tau = ((np.arange(kn.n)[:, None] + rule.nodes[None, :]) / kn.n).ravel()
    w = np.tile(rule.weights, kn.n) / kn.n
    fixed = 0.0 if edge in (0, 3) else 1.0
    if edge in (0, 2):
        s, t = tau, np.full_like(tau, fixed)
    else:
        s, t = np.full_like(tau, fixed), tau
    from .bezier_geom import eval_quad, eval_quad_jacobian
    x = eval_quad(net, s, t)
    J = eval_quad_jacobian(net, s, t)
    tang = J[:, :, 0] if edge in (0, 2) else J[:, :, 1]
    length = np.linalg.norm(tang, axis=1)
    if edge in (0, 1):
        nrm = np.column_stack([tang[:, 1], -tang[:, 0]])
    else:
        nrm = np.column_stack([-tang[:, 1], tang[:, 0]])
    nrm /= length[:, None]
    return s, t, x, w * length, nrm


def assemble_load(domain, space, dofmap, f=None, g_N=None, m=None):
    """Load vector ``int f v + int_{Gamma_N} g_N v``.

    `f` takes points (N, 2); `g_N` takes points (N, 2) and outward normals (N, 2).
    """
    from .tensor_spline import eval_tensor_basis
    m = m or space.degree + 1
    b = np.zeros(dofmap.ndofs)
    if f is not None:
        for blk in iter_element_blocks(domain, space, dofmap, m):
            fx = np.asarray(f(blk.x.reshape(-1, 2)), float).reshape(blk.w.shape)
            loc = np.einsum("eqa,eq->ea", blk.N, blk.w * fx)
            np.add.at(b, blk.ids.ravel(), loc.ravel())
    if g_N is not None:
        for (k, e) in domain.edges_tagged(NEUMANN):
            net = domain.patches[k]
            s, t, x, w, nrm = edge_quadrature(net, space, e, m)
            idx, vals = eval_tensor_basis(space, s, t)
            g = np.asarray(g_N(x, nrm), float)
            gids = dofmap.patch_dofs[k].ravel()[idx]
            np.add.at(b, gids.ravel(), (vals * (w * g)[:, None]).ravel())
    return b


def l2_load(domain, space, dofmap, u, m=None):
    """Right-hand side ``int u v`` of the L2 projection."""
    return assemble_load(domain, space, dofmap, f=u, m=m)


def dirichlet_values(domain, space, dofmap, g_D):
    """Boundary coefficients by interpolation of g_D at edge Greville points."""
    vals = {}
    shape = space.shape
    for (k, e) in domain.edges_tagged(DIRICHLET):
        kn = space.s if e in (0, 2) else space.t
        g = kn.greville
        fixed = 0.0 if e in (0, 3) else 1.0
        s, t = (g, np.full_like(g, fixed)) if e in (0, 2) else (np.full_like(g, fixed), g)
        from .bezier_geom import eval_quad
        x = eval_quad(domain.patches[k], s, t)
        gx = np.asarray(g_D(x), float)
        coef = np.linalg.solve(collocation_matrix(kn, g), gx)
        for ij, c in zip(edge_dof_indices(shape, e), coef):
            gid = int(dofmap.patch_dofs[k][ij])
            if gid in vals and abs(vals[gid] - c) > 1e-8 * (1 + abs(c)):
                log.debug("inconsistent Dirichlet value at dof %d: %g vs %g", gid, vals[gid], c)
            vals[gid] = c
    out = np.zeros(dofmap.ndofs)
    for gid, c in vals.items():
        out[gid] = c
    return out


def _jacobi_cg(A, b, rtol, maxiter, stall_window=None):
    d = A.diagonal()
    Minv = 1.0 / d
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    z = Minv * r
    p = z.copy()
    rz = r @ z
    best, best_it = 1.0, 0
    res = 1.0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= rtol:
            return x, it, res
        if res < 0.5 * best:
            best, best_it = res, it
        elif stall_window and it - best_it > stall_window:
            break
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it, res


def solve_spd(A, b, method="auto", rtol=1e-12):
    """Solve an SPD system; dense Cholesky for small systems, else as requested."""
    n = A.shape[0]
    if n == 0:
        return np.zeros(0)
    if method == "auto":
        if n < DENSE_LIMIT:
            method = "cholesky"
        else:
            x, it, res = _jacobi_cg(A.tocsr(), b, rtol, 10 * n, stall_window=500)
            if res <= rtol:
                return x
            log.warning("CG stalled at relative residual %.2e after %d iterations; "
                        "falling back to sparse LU", res, it)
            method = "direct"
    if method == "cholesky":
        c = scipy.linalg.cho_factor(A.toarray() if sp.issparse(A) else A)
        return scipy.linalg.cho_solve(c, b)
    if method == "direct":
        return spla.spsolve(A.tocsc(), b)
    if method == "cg":
        x, it, res = _jacobi_cg(A.tocsr(), b, rtol, 10 * n)
        if res > rtol:
            raise SolverError(f"CG did not converge in {it} iterations (relative residual {res:.3e})")
        return x
    raise ValueError(f"unknown solver {method!r}")


def solve_dirichlet(A, b, dofmap, g_D=None, domain=None, fixed=None, method="auto"):
    """Solve ``A u = b`` with Dirichlet coefficients prescribed.

    The Dirichlet coefficients come from `fixed` (full-length vector) or are
    interpolated from `g_D` on `domain`.
    """
    u = np.zeros(dofmap.ndofs)
    dd = dofmap.dirichlet
    if len(dd):
        if fixed is None:
            if g_D is None:
                fixed = np.zeros(dofmap.ndofs)
            else:
                fixed = dirichlet_values(domain, dofmap.space, dofmap, g_D)
        u[dd] = fixed[dd]
    free = dofmap.free
    A = A.tocsr()
    rhs = b[free] - A[free][:, dd] @ u[dd] if len(dd) else b[free]
    u[free] = solve_spd(A[free][:, free], rhs, method)
    return u


@dataclass
class DiscreteField:
    """Global coefficient vector of an isogeometric function."""

    coeffs: np.ndarray
    domain: object
    space: object
    dofmap: object

    def patch_coeffs(self, k):
        return self.coeffs[self.dofmap.patch_dofs[k]]

    def eval_param(self, k, s, t, nder=0):
        """Pullback values (and d/ds, d/dt for nder=1) on patch k."""
        from .tensor_spline import eval_tensor_basis
        s = np.asarray(s, float)
        t = np.asarray(t, float)
        shp = np.broadcast(s, t).shape
        s, t = np.broadcast_arrays(s, t)
        idx, vals = eval_tensor_basis(self.space, s.ravel(), t.ravel(), nder)
        c = self.patch_coeffs(k).ravel()[idx]
        if nder == 0:
            return (vals * c).sum(-1).reshape(shp)
        out = (vals * c[:, None, :]).sum(-1)
        return out.reshape(shp + (3,))


def solve_poisson(domain, space, dofmap, f, g_D=None, g_N=None, method="auto"):
    A = assemble_stiffness(domain, space, dofmap)
    b = assemble_load(domain, space, dofmap, f, g_N)
    u = solve_dirichlet(A, b, dofmap, g_D, domain, method=method)
    return DiscreteField(u, domain, space, dofmap)


def l2_project(domain, space, dofmap, u, method="auto"):
    M = assemble_mass(domain, space, dofmap)
    b = l2_load(domain, space, dofmap, u)
    c = solve_spd(M, b, method)
    return DiscreteField(c, domain, space, dofmap)
