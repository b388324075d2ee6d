"""Gauss-Legendre rules on [0, 1] and symmetric rules on the reference triangle.

Triangle rules are given in barycentric coordinates; their weights sum to the
area of the reference triangle (0,0), (1,0), (0,1), i.e. 1/2.
"""
from dataclasses import dataclass
from functools import lru_cache
import itertools

import numpy as np


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_rule(m):
    """Gauss-Legendre rule with `m` nodes on [0, 1].

    Exact for polynomials of degree ``2*m - 1``.
    """
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= 10:
        raise QuadratureError(f"Gauss rule size must be in 1..10, got {m!r}")
    x, w = np.polynomial.legendre.leggauss(int(m))
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadRule(nodes, weights)


def gauss_rule_2d(m):
    """Tensor Gauss rule on [0,1]^2; nodes have shape (m*m, 2), s-major."""
    r = gauss_rule(m)
    s, t = np.meshgrid(r.nodes, r.nodes, indexing="ij")
    w = np.outer(r.weights, r.weights)
    return QuadRule(np.column_stack([s.ravel(), t.ravel()]), w.ravel())


def _orbit_aab(a):
    b = 0.5 * (1.0 - a)
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit_abc(a, b):
    c = 1.0 - a - b
    return sorted(set(itertools.permutations((a, b, c))))


# (orbit type, parameters, weight) with weights already scaled to area 1/2.
_TRI_TABLES = {
    2: [("aab", (2.0 / 3.0,), 1.0 / 6.0)],
    4: [
        ("aab", (0.10810301816807043,), 0.11169079483900565),
        ("aab", (0.8168475729804583,), 0.05497587182766102),
    ],
    6: [
        ("aab", (0.5014265096582353,), 0.05839313786321289),
        ("aab", (0.8738219710169841,), 0.025422453185107524),
        ("abc", (0.053145049844797565, 0.3103524510338061), 0.041425537809173116),
    ],
}


@lru_cache(maxsize=None)
def tri_rule(order):
    """Symmetric rule on the reference triangle, exact up to total degree `order`.

    Nodes are barycentric triples of shape (n, 3).
    """
    if order not in _TRI_TABLES:
        raise QuadratureError(f"unsupported triangle rule order {order!r}; use 2, 4 or 6")
    nodes, weights = [], []
    for kind, params, w in _TRI_TABLES[order]:
        pts = _orbit_aab(*params) if kind == "aab" else _orbit_abc(*params)
        nodes.extend(pts)
        weights.extend([w] * len(pts))
    nodes = np.array(nodes)
    weights = np.array(weights)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadRule(nodes, weights)
