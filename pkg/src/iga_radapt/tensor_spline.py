"""Univariate and tensor-product B-spline bases on [0, 1].

Only open uniform knot vectors with maximal regularity ``p - 1`` are used.
Evaluation follows the half-open element convention, with ``t = 1`` assigned
to the last element.
"""
from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np


class DomainError(ValueError):
    """Raised for parameters outside the admissible domain."""


@dataclass(frozen=True)
class KnotSpace:
    """Spline space of degree `degree` on `n` uniform elements of [0, 1]."""

    degree: int
    n: int

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.n < 1:
            raise ValueError("need at least one element")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def dim(self):
        return self.n + self.degree

    @cached_property
    def knots(self):
        p = self.degree
        inner = np.linspace(0.0, 1.0, self.n + 1)
        return np.concatenate([np.zeros(p), inner, np.ones(p)])

    @cached_property
    def greville(self):
        p = self.degree
        kv = self.knots
        return np.array([kv[i + 1:i + p + 1].mean() for i in range(self.dim)])

    def element_of(self, t):
        t = np.asarray(t, dtype=float)
        return np.minimum(np.floor(t * self.n).astype(int), self.n - 1)


@dataclass(frozen=True)
class TensorSpace:
    """Tensor product ``S1 (x) S2``; index (i, j) maps to ``i * dim2 + j``."""

    s: KnotSpace
    t: KnotSpace

    @classmethod
    def uniform(cls, degree, n):
        ks = KnotSpace(degree, n)
        return cls(ks, ks)

    @property
    def degree(self):
        return self.s.degree

    @property
    def shape(self):
        return (self.s.dim, self.t.dim)

    @property
    def dim(self):
        return self.s.dim * self.t.dim


def _check_param(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0) or np.any(~np.isfinite(t)):
        raise DomainError("spline parameter outside [0, 1]")
    return t


def basis_ders(space, t, nder=0):
    """Vectorized evaluation of the active basis functions and derivatives.

    Parameters
    ----------
    space : KnotSpace
    t : array_like
        Parameters in [0, 1], any shape; flattened internally.
    nder : int
        Highest derivative order.

    Returns
    -------
    first : ndarray of int, shape (N,)
        Index of the first active basis function at each parameter.
    ders : ndarray, shape (N, nder + 1, p + 1)
        ``ders[:, k, r]`` is the k-th derivative of function ``first + r``.
    """
    t = _check_param(t).ravel()
    p = space.degree
    kv = space.knots
    el = space.element_of(t)
    span = el + p
    npts = t.size

    left = np.empty((npts, p + 1))
    right = np.empty((npts, p + 1))
    ndu = np.empty((npts, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    for j in range(1, p + 1):
        left[:, j] = t - kv[span + 1 - j]
        right[:, j] = kv[span + j] - t
        saved = np.zeros(npts)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            tmp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * tmp
            saved = left[:, j - r] * tmp
        ndu[:, j, j] = saved

    ders = np.zeros((npts, nder + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    if nder > 0:
        a = np.zeros((2, npts, p + 1))
        for r in range(p + 1):
            s1, s2 = 0, 1
            a[0, :, 0] = 1.0
            for k in range(1, nder + 1):
                d = np.zeros(npts)
                rk = r - k
                pk = p - k
                if k > p:
                    break
                if r >= k:
                    a[s2, :, 0] = a[s1, :, 0] / ndu[:, pk + 1, rk]
                    d = a[s2, :, 0] * ndu[:, rk, pk]
                j1 = 1 if rk >= -1 else -rk
                j2 = k - 1 if r - 1 <= pk else p - r
                for j in range(j1, j2 + 1):
                    a[s2, :, j] = (a[s1, :, j] - a[s1, :, j - 1]) / ndu[:, pk + 1, rk + j]
                    d = d + a[s2, :, j] * ndu[:, rk + j, pk]
                if r <= pk:
                    a[s2, :, k] = -a[s1, :, k - 1] / ndu[:, pk + 1, r]
                    d = d + a[s2, :, k] * ndu[:, r, pk]
                ders[:, k, r] = d
                s1, s2 = s2, s1
        fac = p
        for k in range(1, min(nder, p) + 1):
            ders[:, k, :] *= fac
            fac *= p - k
    return span - p, ders


def eval_basis(space, t):
    """Active basis functions at a scalar parameter as ``[(index, value), ...]``."""
    return eval_basis_deriv(space, t, 0)


def eval_basis_deriv(space, t, k):
    """k-th derivatives of the active basis functions at scalar `t`.

    Orders above the degree give zeros.
    """
    if k < 0:
        raise ValueError("derivative order must be nonnegative")
    first, ders = basis_ders(space, np.array([t], dtype=float), k)
    vals = ders[0, k]
    return [(int(first[0]) + r, float(v)) for r, v in enumerate(vals)]


def collocation_matrix(space, t, nder=0):
    """Dense matrix of basis values (or derivatives) at the points `t`."""
    t = np.asarray(t, dtype=float).ravel()
    first, ders = basis_ders(space, t, nder)
    out = np.zeros((t.size, space.dim))
    rows = np.arange(t.size)
    for r in range(space.degree + 1):
        out[rows, first + r] = ders[:, nder, r]
    return out


def eval_tensor_basis(space, s, t, nder=0):
    """Values/gradients of all active tensor basis functions at points (s, t).

    Returns ``(indices, vals)`` with indices of shape (N, (p+1)**2) into the
    flattened tensor index and vals of shape (N, (p+1)**2) for ``nder=0`` or
    (N, 3, (p+1)**2) holding value, d/ds and d/dt for ``nder=1``.
    """
    fs, ds = basis_ders(space.s, s, nder)
    ft, dt = basis_ders(space.t, t, nder)
    ps, pt = space.s.degree + 1, space.t.degree + 1
    ii = fs[:, None] + np.arange(ps)[None, :]
    jj = ft[:, None] + np.arange(pt)[None, :]
    idx = (ii[:, :, None] * space.t.dim + jj[:, None, :]).reshape(len(fs), -1)
    val = (ds[:, 0, :, None] * dt[:, 0, None, :]).reshape(len(fs), -1)
    if nder == 0:
        return idx, val
    dval_s = (ds[:, 1, :, None] * dt[:, 0, None, :]).reshape(len(fs), -1)
    dval_t = (ds[:, 0, :, None] * dt[:, 1, None, :]).reshape(len(fs), -1)
    return idx, np.stack([val, dval_s, dval_t], axis=1)


def bernstein(p, t, nder=0):
    """Bernstein polynomials of degree p at points t, shape (N, nder+1, p+1)."""
    _, ders = basis_ders(KnotSpace(p, 1), t, nder)
    return ders


# Canonical ordering of the quadratic triangle Bernstein indices.
TRI_INDICES = ((2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2))


def _check_bary(bary, tol=1e-12):
    bary = np.asarray(bary, dtype=float)
    if bary.shape[-1] != 3:
        raise DomainError("barycentric coordinates need three components")
    if np.any(bary < -tol) or np.any(np.abs(bary.sum(axis=-1) - 1.0) > 1e-10):
        raise DomainError("invalid barycentric coordinates")
    return bary


def bernstein_tri(i, j, k, bary):
    """Quadratic triangle Bernstein polynomial ``2/(i!j!k!) a^i b^j c^k``."""
    if i + j + k != 2 or min(i, j, k) < 0:
        raise ValueError("need i + j + k = 2")
    a, b, c = _check_bary(bary)
    return 2.0 / (factorial(i) * factorial(j) * factorial(k)) * a ** i * b ** j * c ** k


def bernstein_tri_all(bary):
    """All six quadratic Bernstein values at barycentric points (..., 3) -> (..., 6)."""
    bary = np.asarray(bary, dtype=float)
    a, b, c = bary[..., 0], bary[..., 1], bary[..., 2]
    return np.stack([a * a, 2 * a * b, 2 * a * c, b * b, 2 * b * c, c * c], axis=-1)


def bernstein_tri_grad(bary):
    """Partial derivatives w.r.t. (a, b, c) treated independently: (..., 6, 3)."""
    bary = np.asarray(bary, dtype=float)
    a, b, c = bary[..., 0], bary[..., 1], bary[..., 2]
    z = np.zeros_like(a)
    rows = [
        (2 * a, z, z),
        (2 * b, 2 * a, z),
        (2 * c, z, 2 * a),
        (z, 2 * b, z),
        (z, 2 * c, 2 * b),
        (z, z, 2 * c),
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
