"""Biquadratic quadrilateral and quadratic triangular Bezier geometry."""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .tensor_spline import (
    TRI_INDICES,
    bernstein,
    bernstein_tri_all,
    _check_bary,
)

CORNERS = ((0, 0), (2, 0), (0, 2), (2, 2))


class RegularityError(ValueError):
    """Degenerate or non-regular geometry."""


class InversionError(ValueError):
    """Physical point could not be mapped back to the parameter square."""


@dataclass(frozen=True)
class QuadPatchNet:
    """3x3 control net ``G[i, j]`` of a biquadratic patch; i runs along s.

    ``regular`` stays ``None`` until :func:`check_regularity` has passed or
    failed on the net (see :meth:`checked`).
    """

    points: np.ndarray
    regular: Optional[bool] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.shape != (3, 3, 2):
            raise ValueError(f"control net must have shape (3, 3, 2), got {pts.shape}")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __getitem__(self, ij):
        return self.points[ij]

    @property
    def corners(self):
        """Corners in the order G00, G20, G02, G22."""
        return np.array([self.points[c] for c in CORNERS])

    def diameter(self):
        c = self.corners
        return max(np.linalg.norm(a - b) for a in c for b in c)

    def with_points(self, points):
        return QuadPatchNet(points)

    def checked(self, grid_n=33):
        res = check_regularity(self, grid_n)
        return replace(self, regular=res.regular)

    def __call__(self, s, t):
        return eval_quad(self, s, t)


def degree_elevate_bilinear(corners):
    """Biquadratic net of the bilinear map through corners (G00, G20, G02, G22)."""
    c = np.asarray(corners, dtype=float).reshape(4, 2)
    g00, g20, g02, g22 = c
    # adjacent-corner triangles must have nonzero signed area of one sign
    areas = [
        _cross(g20 - g00, g02 - g00),
        _cross(g22 - g20, g00 - g20),
        _cross(g02 - g22, g20 - g22),
        _cross(g00 - g02, g22 - g02),
    ]
    diam2 = max(np.sum((a - b) ** 2) for a in c for b in c)
    if diam2 == 0.0 or min(areas) <= 1e-12 * diam2:
        raise RegularityError("quadrilateral corners are degenerate or not positively oriented")
    pts = np.empty((3, 3, 2))
    pts[0, 0], pts[2, 0], pts[0, 2], pts[2, 2] = g00, g20, g02, g22
    pts[1, 0] = 0.5 * (g00 + g20)
    pts[0, 1] = 0.5 * (g00 + g02)
    pts[1, 2] = 0.5 * (g02 + g22)
    pts[2, 1] = 0.5 * (g20 + g22)
    pts[1, 1] = 0.25 * (g00 + g20 + g02 + g22)
    return QuadPatchNet(pts)


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _quad_bases(s, t, nder):
    bs = bernstein(2, np.atleast_1d(s), nder)
    bt = bernstein(2, np.atleast_1d(t), nder)
    return bs, bt


def eval_quad(net, s, t):
    """Evaluate the patch at (s, t); scalars give a point, arrays give (N, 2)."""
    scalar = np.ndim(s) == 0 and np.ndim(t) == 0
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    bs, bt = _quad_bases(s.ravel(), t.ravel(), 0)
    x = np.einsum("ni,nj,ijd->nd", bs[:, 0], bt[:, 0], net.points)
    return x[0] if scalar else x.reshape(s.shape + (2,))


def eval_quad_jacobian(net, s, t):
    """Jacobian ``[[dx/ds, dx/dt], [dy/ds, dy/dt]]`` at (s, t)."""
    scalar = np.ndim(s) == 0 and np.ndim(t) == 0
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    bs, bt = _quad_bases(s.ravel(), t.ravel(), 1)
    ds = np.einsum("ni,nj,ijd->nd", bs[:, 1], bt[:, 0], net.points)
    dt = np.einsum("ni,nj,ijd->nd", bs[:, 0], bt[:, 1], net.points)
    jac = np.stack([ds, dt], axis=-1)
    return jac[0] if scalar else jac.reshape(s.shape + (2, 2))


def jacobian_det(net, s, t):
    jac = eval_quad_jacobian(net, s, t)
    return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]


@dataclass(frozen=True)
class RegularityResult:
    regular: bool
    min_det: float
    location: tuple

    def __bool__(self):
        return self.regular


def check_regularity(net, grid_n=33):
    """Sample det(grad G) on a uniform grid; regular iff min > 1e-8 * diam**2."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    u = np.linspace(0.0, 1.0, grid_n)
    s, t = np.meshgrid(u, u, indexing="ij")
    det = jacobian_det(net, s, t)
    k = np.unravel_index(np.argmin(det), det.shape)
    min_det = float(det[k])
    ok = min_det > 1e-8 * net.diameter() ** 2
    return RegularityResult(bool(ok), min_det, (float(s[k]), float(t[k])))


# --- triangles ---------------------------------------------------------------

@dataclass(frozen=True)
class TriBezierNet:
    """Quadratic triangular Bezier net.

    ``points`` has shape (6, dim) in the order of ``TRI_INDICES``
    (T200, T110, T101, T020, T011, T002). ``vertex_labels`` optionally records
    which quad corner (i, j) each of T200, T020, T002 coincides with.
    """

    points: np.ndarray
    vertex_labels: Optional[tuple] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] != 6:
            raise ValueError("triangle net needs six control points")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def cp(self, i, j, k):
        return self.points[TRI_INDICES.index((i, j, k))]

    @property
    def vertices(self):
        return self.points[[0, 3, 5]]

    def __call__(self, bary):
        return eval_tri(self, bary)


def linear_tri_net(vertices, vertex_labels=None):
    """Quadratic representation of the linear map onto a triangle."""
    v = np.asarray(vertices, dtype=float)
    a, b, c = v
    pts = np.array([a, 0.5 * (a + b), 0.5 * (a + c), b, 0.5 * (b + c), c])
    return TriBezierNet(pts, vertex_labels)


def eval_tri(net, bary):
    """Bernstein-Bezier evaluation at barycentric coordinates (3,) or (N, 3)."""
    bary = _check_bary(bary)
    return bernstein_tri_all(bary) @ net.points


def de_casteljau_tri(points, bary):
    """Reference evaluation by repeated convex combination (used for checks)."""
    a, b, c = bary
    cp = {idx: np.asarray(points[n], float) for n, idx in enumerate(TRI_INDICES)}
    level1 = {
        (1, 0, 0): a * cp[(2, 0, 0)] + b * cp[(1, 1, 0)] + c * cp[(1, 0, 1)],
        (0, 1, 0): a * cp[(1, 1, 0)] + b * cp[(0, 2, 0)] + c * cp[(0, 1, 1)],
        (0, 0, 1): a * cp[(1, 0, 1)] + b * cp[(0, 1, 1)] + c * cp[(0, 0, 2)],
    }
    return a * level1[(1, 0, 0)] + b * level1[(0, 1, 0)] + c * level1[(0, 0, 1)]


# --- bilinear inversion ------------------------------------------------------

def eval_bilinear(corners, s, t):
    g00, g20, g02, g22 = np.asarray(corners, dtype=float).reshape(4, 2)
    s = np.asarray(s, float)[..., None]
    t = np.asarray(t, float)[..., None]
    return (1 - s) * (1 - t) * g00 + s * (1 - t) * g20 + (1 - s) * t * g02 + s * t * g22


def invert_bilinear(corners, x, tol=1e-10):
    """Parameters (s, t) with ``bilinear(s, t) = x``.

    Accepts a single point (2,) or an array (N, 2). Uses the closed-form
    quadratic in s, polished by Newton steps; Newton from (0.5, 0.5) is the
    fallback. Raises :class:`InversionError` for points outside the patch.
    """
    c = np.asarray(corners, dtype=float).reshape(4, 2)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    g00, g20, g02, g22 = c
    a = g20 - g00
    b = g02 - g00
    e = g00 - g20 - g02 + g22
    q = xs - g00
    diam = max(np.linalg.norm(p1 - p2) for p1 in c for p2 in c)

    # cross(q - s a, b + s e) = 0  ->  A s^2 + B s + C = 0
    A = -_cross(a, e) * np.ones(len(xs))
    B = _cross(q, e) - _cross(a, b)
    C = _cross(q, b)
    lin = np.abs(A) <= 1e-12 * diam ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = B ** 2 - 4 * A * C
        sq = np.sqrt(np.maximum(disc, 0.0))
        qq = -0.5 * (B + np.copysign(sq, B))
        cands = [np.where(lin, -C / B, qq / A), np.where(lin, np.nan, C / qq)]

    def _t_of(s):
        den = b + s[:, None] * e
        num = q - s[:, None] * a
        use_x = np.abs(den[:, 0]) >= np.abs(den[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(use_x, num[:, 0] / den[:, 0], num[:, 1] / den[:, 1])

    def _outside(s, t):
        d = np.maximum.reduce([-s, s - 1, -t, t - 1, np.zeros_like(s)])
        return np.where(np.isfinite(d), d, np.inf)

    s, t = np.full(len(xs), 0.5), np.full(len(xs), 0.5)
    best = np.full(len(xs), np.inf)
    for sc in cands:
        tc = _t_of(sc)
        d = _outside(sc, tc)
        take = d < best
        s[take], t[take], best[take] = sc[take], tc[take], d[take]
    # degenerate branch: Newton from the patch center
    far = ~(best < 1e-3)
    s[far], t[far] = 0.5, 0.5

    for _ in range(8):
        r = eval_bilinear(c, s, t) - xs
        js = a + t[:, None] * e
        jt = b + s[:, None] * e
        det = _cross(js, jt)
        det = np.where(np.abs(det) < 1e-300, 1e-300, det)
        ds = (r[:, 0] * jt[:, 1] - r[:, 1] * jt[:, 0]) / det
        dt = (js[:, 0] * r[:, 1] - js[:, 1] * r[:, 0]) / det
        s = s - ds
        t = t - dt

    res = np.linalg.norm(eval_bilinear(c, s, t) - xs, axis=1)
    outside = (s < -tol) | (s > 1 + tol) | (t < -tol) | (t > 1 + tol)
    if np.any(outside) or np.any(res > max(tol, 1e-12 * diam) * 10):
        raise InversionError("point outside the quadrilateral or inversion failed")
    s = np.clip(s, 0.0, 1.0)
    t = np.clip(t, 0.0, 1.0)
    if single:
        return float(s[0]), float(t[0])
    return s, t
