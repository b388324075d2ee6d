"""r-adaptive reparameterization of multi-patch domains driven by the point cloud network.

Per patch, the bilinear quadrilateral is split into four corner triangles.
Each triangle's quadratic parameterization is optimized by sampling the graph
of (a derivative of) the initial discrete solution and fitting edge control
points to the network's parameter predictions. The four triangle nets are
then averaged into one biquadratic net.

Triangle vertex labels (T200, T020, T002) as quad control point indices::

    tri 0: 00 20 02      tri 2: 00 22 02
    tri 1: 00 20 22      tri 3: 20 22 02

With these labels every triangle is positively oriented and the edge control
points T110, T101, T011 of triangle w lie on the quad edges or diagonals listed
in ``TRI_EDGES``.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .bezier_geom import (
    CORNERS,
    InversionError,
    QuadPatchNet,
    TriBezierNet,
    eval_tri,
    invert_bilinear,
    linear_tri_net,
)
from .multipatch import EDGE_MIDDLE, build_dof_map
from .net import EDGE_ROWS, NPTS, fit_residual, infer, sample_simplex, standardize
from .quadrature import tri_rule
from .tensor_spline import TensorSpace, bernstein, bernstein_tri_all

log = logging.getLogger(__name__)

TRI_VERTICES = (
    ((0, 0), (2, 0), (0, 2)),
    ((0, 0), (2, 0), (2, 2)),
    ((0, 0), (2, 2), (0, 2)),
    ((2, 0), (2, 2), (0, 2)),
)
# parameter-square images of the labels above
TRI_PARAMS = tuple(tuple((i / 2, j / 2) for i, j in tri) for tri in TRI_VERTICES)

DELTA_NAMES = ("110", "101", "011")

QUAD_EDGE_POINTS = ((1, 0), (0, 1), (2, 1), (1, 2))

TAGS = ("value", "d_e1", "d_e2", "d_Re1", "d_Re2")
STRATEGIES = ("BAI", "PA", "CPA")


def tri_edge_targets():
    """Quad control point each triangle edge point starts on: (tri, delta index) -> (i, j)."""
    out = {}
    for w, tri in enumerate(TRI_VERTICES):
        for d, (_, a, b) in enumerate(EDGE_ROWS):
            (i0, j0), (i1, j1) = tri[a], tri[b]
            mid = ((i0 + i1) // 2, (j0 + j1) // 2)
            out[(w, d)] = mid
    return out


TRI_EDGE_TARGETS = tri_edge_targets()


# --- sample functions -----------------------------------------------------------------

@dataclass(frozen=True)
class SampleFunction:
    """z-values for clouds: the normalized pullback or one of its directional derivatives."""

    tag: str
    field: object
    factor: float

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown sample function {self.tag!r}")

    def __call__(self, k, s, t):
        if self.tag == "value":
            return self.factor * self.field.eval_param(k, s, t, nder=0)
        v = self.field.eval_param(k, s, t, nder=1)
        ds, dt = v[..., 1], v[..., 2]
        r = {"d_e1": ds, "d_e2": dt,
             "d_Re1": (ds + dt) / np.sqrt(2.0), "d_Re2": (ds - dt) / np.sqrt(2.0)}[self.tag]
        return self.factor * r


def solution_range(uh, grid_n=65):
    lo, hi = np.inf, -np.inf
    g = np.linspace(0.0, 1.0, grid_n)
    S, T = np.meshgrid(g, g, indexing="ij")
    for k in range(uh.domain.K):
        v = uh.eval_param(k, S.ravel(), T.ravel(), nder=0)
        lo, hi = min(lo, v.min()), max(hi, v.max())
    return float(lo), float(hi)


def normalize_solution(uh, domain=None, grid_n=65):
    """Scale factor ``max_k diam / (max u - min u)``; None for a constant field."""
    domain = domain or uh.domain
    lo, hi = solution_range(uh, grid_n)
    if not hi - lo > 1e-14 * max(1.0, abs(hi), abs(lo)):
        return None
    return domain.max_diameter() / (hi - lo)


def sample_functions(uh, factor, sampling):
    tags = ("value",) if sampling == "L2" else TAGS
    return [SampleFunction(tag, uh, factor) for tag in tags]


# --- triangle jobs ------------------------------------------------------------------------

@dataclass
class TriangleJob:
    """One corner triangle of one patch under one sample function."""

    patch: int
    tri: int
    corners: np.ndarray  # bilinear corners of the initial patch (G00, G20, G02, G22)
    net: TriBezierNet
    delta: np.ndarray = field(default_factory=lambda: np.full(3, 0.5))
    iteration: int = 0

    @classmethod
    def initial(cls, patch, tri, quad):
        verts = [quad.points[ij] for ij in TRI_VERTICES[tri]]
        return cls(patch, tri, quad.corners.copy(), linear_tri_net(verts, TRI_VERTICES[tri]))

    @property
    def vertices(self):
        return self.net.vertices


def net_from_delta(vertices, delta, labels=None):
    """Triangle net with fixed vertices and edge points placed by the three deltas."""
    v = np.asarray(vertices, float)
    pts = np.empty((6, v.shape[1]))
    pts[0], pts[3], pts[5] = v
    for (row, a, b), d in zip(EDGE_ROWS, delta):
        pts[row] = (1 - d) * v[a] + d * v[b]
    return TriBezierNet(pts, labels)


def sample_cloud(job, fn, rng, n=NPTS, max_retries=20):
    """Points (x, y, z) of the graph of `fn` over the job's current triangle net."""
    bary = sample_simplex(rng, (n,))
    xy = eval_tri(job.net, bary)
    st = np.empty((n, 2))
    for i in range(n):
        for attempt in range(max_retries + 1):
            try:
                st[i] = invert_bilinear(job.corners, xy[i])
                break
            except InversionError:
                if attempt == max_retries:
                    raise
                bary[i] = sample_simplex(rng, ())
                xy[i] = eval_tri(job.net, bary[i])
    z = fn(job.patch, st[:, 0], st[:, 1])
    return np.column_stack([xy, z]), bary


def fit_triangle_reparam(vertices, coords, targets, clamp=(0.05, 0.95), previous=None):
    """Deltas whose net maps `coords` closest to the physical `targets`.

    Linear least squares in the three deltas, then clamped. A singular normal
    matrix keeps `previous` (default: midpoints).
    """
    v = np.asarray(vertices, float)
    Bm = bernstein_tri_all(np.asarray(coords, float))
    base = Bm[:, [0]] * v[0] + Bm[:, [3]] * v[1] + Bm[:, [5]] * v[2]
    cols = []
    for row, a, b in EDGE_ROWS:
        base = base + Bm[:, [row]] * v[a]
        cols.append((Bm[:, [row]] * (v[b] - v[a])).ravel())
    A = np.column_stack(cols)
    rhs = (np.asarray(targets, float)[:, :2] - base).ravel()
    N = A.T @ A
    if np.linalg.cond(N) > 1e12:
        return np.full(3, 0.5) if previous is None else np.asarray(previous, float).copy()
    delta = np.linalg.solve(N, A.T @ rhs)
    return np.clip(delta, *clamp)


def _predict_deltas(job, fn, weights, rng, M, clamp):
    clouds = [sample_cloud(job, fn, rng)[0] for _ in range(M)]
    coords = infer(weights, np.stack([standardize(c, job.vertices)[0] for c in clouds]))
    deltas = [fit_triangle_reparam(job.vertices, b, c, clamp, job.delta)
              for b, c in zip(coords, clouds)]
    return np.mean(deltas, axis=0)


def _validation_residual(job, fn, weights, rng):
    tot = 0.0
    for _ in range(2):
        cloud, _ = sample_cloud(job, fn, rng)
        std, _ = standardize(cloud, job.vertices)
        tot += float(fit_residual(std, infer(weights, std))[0])
    return tot


def optimize_triangle(job, fn, weights, M=20, iters=10, rng=None, clamp=(0.05, 0.95),
                      early_stop=False):
    """Iteratively update the job's triangle net; returns the final net."""
    if M < 1 or iters < 1:
        raise ValueError("need M >= 1 and iters >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    best, stale = np.inf, 0
    labels = TRI_VERTICES[job.tri]
    for _ in range(iters):
        job.delta = _predict_deltas(job, fn, weights, rng, M, clamp)
        job.net = net_from_delta(job.vertices, job.delta, labels)
        job.iteration += 1
        if early_stop:
            val = _validation_residual(job, fn, weights, rng)
            if val < best:
                best, stale = val, 0
            else:
                stale += 1
                if stale >= 2:
                    break
    return job.net


# --- averaging ------------------------------------------------------------------------------

def _tri_edge_points(tri_nets):
    """Map quad control point -> list of triangle edge points initially coinciding with it."""
    out = {}
    for w, net in enumerate(tri_nets):
        for d, (row, _, _) in enumerate(EDGE_ROWS):
            out.setdefault(TRI_EDGE_TARGETS[(w, d)], []).append(net.points[row])
    return out


def average_CPA(tri_nets, initial):
    """Edge points: mean of the two coinciding triangle points; G11: mean of the four diagonal points."""
    pts = np.array(initial.points)
    for ij, cand in _tri_edge_points(tri_nets).items():
        pts[ij] = np.mean(cand, axis=0)
    return QuadPatchNet(pts)


def average_PA(tri_nets, initial):
    """As CPA on the edges; G11 from the least-squares fit of the corner 2-jets."""
    pts = np.array(average_CPA(tri_nets, initial).points)
    total = sum(net.points[row] for net in tri_nets for row, _, _ in EDGE_ROWS)
    pts[1, 1] = (total - initial.corners.sum(axis=0)) / 8.0
    return QuadPatchNet(pts)


@lru_cache(maxsize=None)
def bai_operator():
    """Linear map from the 9 quad control points to 4 x 6 fitted triangle control points.

    Returns the scalar (24, 9) matrix; the vector-valued map is ``kron(A, I2)``.
    Rows are ordered (triangle, TRI_INDICES), columns by ``3 * i + j``.
    """
    rule = tri_rule(6)
    bary = rule.nodes
    Bt = bernstein_tri_all(bary)                     # (q, 6)
    M = Bt.T @ (rule.weights[:, None] * Bt)
    blocks = []
    for params in TRI_PARAMS:
        st = bary @ np.asarray(params)
        bs = bernstein(2, st[:, 0], 0)[:, 0]
        bt = bernstein(2, st[:, 1], 0)[:, 0]
        Bq = (bs[:, :, None] * bt[:, None, :]).reshape(len(st), 9)
        R = Bt.T @ (rule.weights[:, None] * Bq)
        blocks.append(np.linalg.solve(M, R))
    return np.vstack(blocks)


def bai_operator_2d():
    """The (48, 18) operator acting on interleaved (x, y) coordinates."""
    return np.kron(bai_operator(), np.eye(2))


def _pinv_eig(A, rel=1e-10):
    """(A^T A)^+ A^T with eigenvalues below rel * max dropped."""
    lam, V = np.linalg.eigh(A.T @ A)
    keep = lam > rel * lam.max()
    return (V[:, keep] / lam[keep]) @ V[:, keep].T @ A.T


def average_BAI(tri_nets, initial, check=True):
    """Pseudoinverse of the triangle fitting operator applied to the deformed nets.

    Corners are fixed. Boundary-edge points are restricted to their straight
    edges (one parameter each) and G11 is free, giving six unknowns.
    """
    A = bai_operator()
    T = np.vstack([net.points for net in tri_nets])  # (24, 2)
    G0 = np.array(initial.points)
    flat0 = G0.reshape(9, 2)
    # unknowns: 4 edge parameters and G11 (x, y)
    cols = np.zeros((9, 2, 6))
    for n, (i, j) in enumerate(QUAD_EDGE_POINTS):
        (ai, aj), (bi, bj) = _edge_ends(i, j)
        cols[3 * i + j, :, n] = G0[bi, bj] - G0[ai, aj]
    cols[4, 0, 4] = 1.0
    cols[4, 1, 5] = 1.0
    base = flat0.copy()
    for (i, j) in QUAD_EDGE_POINTS:
        (ai, aj), _ = _edge_ends(i, j)
        base[3 * i + j] = G0[ai, aj]
    base[4] = 0.0
    # residual A (base + cols z) - T, stacked over the two coordinates
    Az = np.einsum("rc,cdk->rdk", A, cols).reshape(48, 6)
    rhs = (T - A @ base).reshape(48)
    z = _pinv_eig(Az) @ rhs
    pts = (base + np.einsum("cdk,k->cd", cols, z)).reshape(3, 3, 2)
    for c in CORNERS:
        pts[c] = G0[c]
    net = QuadPatchNet(pts)
    if check:
        net = net.checked()
    return net


def _edge_ends(i, j):
    if j in (0, 2) and i == 1:
        return (0, j), (2, j)
    return (i, 0), (i, 2)


def average(strategy, tri_nets, initial):
    if strategy == "CPA":
        return average_CPA(tri_nets, initial)
    if strategy == "PA":
        return average_PA(tri_nets, initial)
    if strategy == "BAI":
        return average_BAI(tri_nets, initial)
    raise ValueError(f"unknown strategy {strategy!r}")


def combine_max_deformation(results, initial):
    """Per control point, take the candidate farthest from the initial net.

    Ties go to the earliest result (tag order).
    """
    if not results:
        raise ValueError("need at least one result")
    P = np.stack([np.asarray(r.points) for r in results])
    dist = np.linalg.norm(P - np.asarray(initial.points), axis=-1)  # (R, 3, 3)
    pick = np.argmax(dist, axis=0)
    out = np.take_along_axis(P, pick[None, :, :, None], axis=0)[0]
    return QuadPatchNet(out)


def conform_interfaces(domain):
    """Average the middle control points of every interface edge."""
    pts = [np.array(p.points) for p in domain.patches]
    for itf in domain.interfaces:
        ma = EDGE_MIDDLE[itf.edge_a]
        mb = EDGE_MIDDLE[itf.edge_b]
        avg = 0.5 * (pts[itf.patch_a][ma] + pts[itf.patch_b][mb])
        pts[itf.patch_a][ma] = avg
        pts[itf.patch_b][mb] = avg
    return domain.with_patches([QuadPatchNet(p) for p in pts])


# --- pipeline -----------------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    degree: int = 2
    theta_n: int = 8
    M: int = 20
    iters: int = 10
    seed: int = 0
    clamp: tuple = (0.05, 0.95)
    early_stop: bool = False
    threads: Optional[int] = None
    solver: str = "auto"


@dataclass
class DeformationResult:
    domain: object                   # deformed, conforming MultiPatchDomain
    initial: object                  # initial MultiPatchDomain
    strategy: str
    sampling: str
    per_function: dict               # tag -> list of per-patch QuadPatchNet (before combining)
    triangle_nets: dict              # (tag, patch) -> list of 4 TriBezierNet
    regular: list                    # per-patch regularity flags
    notice: str = ""

    @property
    def all_regular(self):
        return all(self.regular)


def worker_count(threads=None):
    if threads is None:
        threads = int(os.environ.get("IGA_RADAPT_THREADS", "1") or 1)
    if threads <= 0:
        threads = os.cpu_count() or 1
    return threads


def job_seed(seed, patch, tri, fn_index):
    return np.random.SeedSequence([int(seed), int(patch), int(tri), int(fn_index)])


def adapt_domain(domain, fns, weights, strategy="PA", config=PipelineConfig()):
    """Deformed domain for the given sample functions; returns a DeformationResult."""
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    cfg = config
    specs = [(fi, k, w) for fi in range(len(fns)) for k in range(domain.K) for w in range(4)]

    def run(spec):
        fi, k, w = spec
        job = TriangleJob.initial(k, w, domain.patches[k])
        rng = np.random.default_rng(job_seed(cfg.seed, k, w, fi))
        return optimize_triangle(job, fns[fi], weights, cfg.M, cfg.iters, rng, cfg.clamp,
                                 cfg.early_stop)

    nworkers = worker_count(cfg.threads)
    if nworkers > 1:
        with ThreadPoolExecutor(max_workers=nworkers) as ex:
            nets = list(ex.map(run, specs))
    else:
        nets = [run(s) for s in specs]
    tri = {}
    for (fi, k, w), net in zip(specs, nets):
        tri.setdefault((fns[fi].tag, k), [None] * 4)[w] = net

    per_fn = {}
    for fn in fns:
        per_fn[fn.tag] = [average(strategy, tri[(fn.tag, k)], domain.patches[k])
                          for k in range(domain.K)]
    combined = [combine_max_deformation([per_fn[fn.tag][k] for fn in fns], domain.patches[k])
                for k in range(domain.K)]
    deformed = conform_interfaces(domain.with_patches(combined))
    checked = [p.checked() for p in deformed.patches]
    deformed = deformed.with_patches(checked)
    return DeformationResult(deformed, domain, strategy, None, per_fn, tri,
                             [bool(p.regular) for p in checked])


def run_pipeline(case, strategy, sampling, weights, config=PipelineConfig(), domain=None):
    """Solve on the initial geometry, then adapt its parameterization.

    `sampling` is "L2" (values only) or "H1" (value and four directional
    derivatives, combined by maximum deformation).
    """
    from .problems import solve_case

    if sampling not in ("L2", "H1"):
        raise ValueError(f"unknown sampling {sampling!r}")
    domain = domain or case.build_domain()
    space = TensorSpace.uniform(config.degree, config.theta_n)
    dofmap = build_dof_map(domain, space)
    uh = solve_case(case, domain, space, dofmap, config.solver)
    factor = normalize_solution(uh, domain)
    if factor is None:
        notice = "initial solution is constant; parameterization left unchanged"
        log.warning(notice)
        return DeformationResult(domain, domain, strategy, sampling, {}, {},
                                 [True] * domain.K, notice)
    fns = sample_functions(uh, factor, sampling)
    res = adapt_domain(domain, fns, weights, strategy, config)
    res.sampling = sampling
    return res
