"""Multi-patch topology, C0-conforming global DOF numbering and boundary tags.

Local edge numbering of a patch (s runs along i, t along j)::

    edge 0: t = 0, from G00 to G20
    edge 1: s = 1, from G20 to G22
    edge 2: t = 1, from G02 to G22
    edge 3: s = 0, from G00 to G02
"""
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .bezier_geom import degree_elevate_bilinear, eval_quad

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

EDGE_CORNERS = {0: ((0, 0), (2, 0)), 1: ((2, 0), (2, 2)), 2: ((0, 2), (2, 2)), 3: ((0, 0), (0, 2))}
EDGE_MIDDLE = {0: (1, 0), 1: (2, 1), 2: (1, 2), 3: (0, 1)}


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Interface:
    patch_a: int
    edge_a: int
    patch_b: int
    edge_b: int
    reversed: bool


@dataclass(frozen=True)
class VertexRecord:
    point: tuple
    incidences: tuple  # ((patch, corner label), ...)


@dataclass(frozen=True)
class MultiPatchDomain:
    patches: tuple
    interfaces: tuple
    vertices: tuple
    boundary: Dict[Tuple[int, int], str] = field(default_factory=dict)

    @property
    def K(self):
        return len(self.patches)

    @property
    def boundary_edges(self):
        return sorted(self.boundary)

    def edges_tagged(self, tag):
        return [pe for pe in sorted(self.boundary) if self.boundary[pe] == tag]

    def with_patches(self, patches):
        """Same topology and boundary tags with new control nets."""
        if len(patches) != len(self.patches):
            raise TopologyError("patch count changed")
        return MultiPatchDomain(tuple(patches), self.interfaces, self.vertices, dict(self.boundary))

    def max_diameter(self):
        return max(p.diameter() for p in self.patches)

    def area(self, m=6):
        from .quadrature import gauss_rule_2d
        from .bezier_geom import jacobian_det
        rule = gauss_rule_2d(m)
        return sum(float(rule.weights @ jacobian_det(p, rule.nodes[:, 0], rule.nodes[:, 1]))
                   for p in self.patches)

    def interface_mismatch(self):
        """Largest distance between edge control points seen from both sides."""
        worst = 0.0
        for itf in self.interfaces:
            pa = edge_control_points(self.patches[itf.patch_a], itf.edge_a)
            pb = edge_control_points(self.patches[itf.patch_b], itf.edge_b)
            if itf.reversed:
                pb = pb[::-1]
            worst = max(worst, float(np.abs(pa - pb).max()))
        return worst


def edge_control_points(net, edge):
    (i0, j0), (i1, j1) = EDGE_CORNERS[edge]
    mid = EDGE_MIDDLE[edge]
    return np.array([net.points[i0, j0], net.points[mid], net.points[i1, j1]])


def _edge_endpoints(net, edge):
    a, b = EDGE_CORNERS[edge]
    return net.points[a], net.points[b]


def _find_interfaces(patches, tol):
    found = []
    for ka in range(len(patches)):
        for kb in range(ka + 1, len(patches)):
            for ea in range(4):
                a0, a1 = _edge_endpoints(patches[ka], ea)
                for eb in range(4):
                    b0, b1 = _edge_endpoints(patches[kb], eb)
                    if np.linalg.norm(a0 - b0) < tol and np.linalg.norm(a1 - b1) < tol:
                        found.append(Interface(ka, ea, kb, eb, False))
                    elif np.linalg.norm(a0 - b1) < tol and np.linalg.norm(a1 - b0) < tol:
                        found.append(Interface(ka, ea, kb, eb, True))
    return found


def _on_segment_interior(p, a, b, tol):
    ab = b - a
    L2 = ab @ ab
    lam = (p - a) @ ab / L2
    if lam <= tol or lam >= 1 - tol:
        return False
    return np.linalg.norm(a + lam * ab - p) < tol * np.sqrt(L2) + tol


def build_domain(corner_lists, interface_spec=None, boundary_tags=None, default_tag=DIRICHLET,
                 tol=1e-9):
    """Validated multi-patch domain from bilinear patch corners.

    Parameters
    ----------
    corner_lists : sequence of 4 points per patch, ordered (G00, G20, G02, G22)
    interface_spec : optional list of ``(patch_a, edge_a, patch_b, edge_b)``;
        orientation is derived from the geometry. When omitted, interfaces
        are detected by matching edge end points.
    boundary_tags : optional mapping ``(patch, edge) -> "dirichlet" | "neumann"``
        for boundary edges; untagged boundary edges get `default_tag`.
    """
    patches = tuple(degree_elevate_bilinear(c) for c in corner_lists)
    if interface_spec is None:
        interfaces = _find_interfaces(patches, tol)
    else:
        interfaces = []
        for spec in interface_spec:
            ka, ea, kb, eb = (int(v) for v in spec[:4])
            a0, a1 = _edge_endpoints(patches[ka], ea)
            b0, b1 = _edge_endpoints(patches[kb], eb)
            if np.linalg.norm(a0 - b0) < tol and np.linalg.norm(a1 - b1) < tol:
                interfaces.append(Interface(ka, ea, kb, eb, False))
            elif np.linalg.norm(a0 - b1) < tol and np.linalg.norm(a1 - b0) < tol:
                interfaces.append(Interface(ka, ea, kb, eb, True))
            else:
                raise TopologyError(f"interface {spec} has mismatched corners")

    used = set()
    for itf in interfaces:
        for pe in ((itf.patch_a, itf.edge_a), (itf.patch_b, itf.edge_b)):
            if pe in used:
                raise TopologyError(f"edge {pe} appears in more than one interface")
            used.add(pe)

    # hanging vertices: a corner strictly inside another patch's edge
    for k, pk in enumerate(patches):
        for c in pk.corners:
            for l, pl in enumerate(patches):
                if l == k:
                    continue
                for e in range(4):
                    a, b = _edge_endpoints(pl, e)
                    if _on_segment_interior(c, a, b, tol):
                        raise TopologyError(f"hanging vertex {tuple(c)} on edge {e} of patch {l}")

    # vertex records
    verts = []
    labels = ((0, 0), (2, 0), (0, 2), (2, 2))
    for k, pk in enumerate(patches):
        for lab in labels:
            x = pk.points[lab]
            for v in verts:
                if np.linalg.norm(v[0] - x) < tol:
                    v[1].append((k, lab))
                    break
            else:
                verts.append((x.copy(), [(k, lab)]))
    vertices = tuple(VertexRecord(tuple(float(c) for c in x), tuple(inc)) for x, inc in verts)

    boundary = {}
    tags = dict(boundary_tags or {})
    for k in range(len(patches)):
        for e in range(4):
            if (k, e) in used:
                continue
            tag = tags.pop((k, e), default_tag)
            if tag not in (DIRICHLET, NEUMANN):
                raise TopologyError(f"unknown boundary tag {tag!r}")
            boundary[(k, e)] = tag
    if tags:
        raise TopologyError(f"boundary tags given for non-boundary edges: {sorted(tags)}")
    return MultiPatchDomain(patches, tuple(interfaces), vertices, boundary)


# --- global DOF numbering ----------------------------------------------------

def edge_dof_indices(shape, edge):
    """Local tensor indices (i, j) along an edge, in edge direction."""
    n1, n2 = shape
    if edge == 0:
        return [(i, 0) for i in range(n1)]
    if edge == 1:
        return [(n1 - 1, j) for j in range(n2)]
    if edge == 2:
        return [(i, n2 - 1) for i in range(n1)]
    if edge == 3:
        return [(0, j) for j in range(n2)]
    raise ValueError(edge)


@dataclass(frozen=True)
class GlobalDofMap:
    space: object
    patch_dofs: tuple  # per patch int array of shape space.shape
    ndofs: int
    dirichlet: np.ndarray

    @property
    def free(self):
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.dirichlet] = False
        return np.flatnonzero(mask)

    def local_to_global(self, k):
        return self.patch_dofs[k].ravel()


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def build_dof_map(domain, space, check_greville=True):
    """C0 global numbering for `space` on every patch of `domain`."""
    shape = space.shape
    dim = space.dim
    K = domain.K
    uf = _UnionFind(K * dim)

    def flat(k, ij):
        return k * dim + ij[0] * shape[1] + ij[1]

    for itf in domain.interfaces:
        ia = edge_dof_indices(shape, itf.edge_a)
        ib = edge_dof_indices(shape, itf.edge_b)
        if len(ia) != len(ib):
            raise TopologyError("non-matching spaces across interface")
        if itf.reversed:
            ib = ib[::-1]
        for a, b in zip(ia, ib):
            uf.union(flat(itf.patch_a, a), flat(itf.patch_b, b))

    roots = np.array([uf.find(i) for i in range(K * dim)])
    _, first_idx, inverse = np.unique(roots, return_index=True, return_inverse=True)
    # number classes by first appearance to keep ids stable
    order = np.argsort(first_idx)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    gids = rank[inverse]
    patch_dofs = tuple(gids[k * dim:(k + 1) * dim].reshape(shape) for k in range(K))
    ndofs = int(len(order))

    if check_greville:
        _check_greville(domain, space, patch_dofs, ndofs)

    dir_set = set()
    for (k, e), tag in domain.boundary.items():
        if tag == DIRICHLET:
            for ij in edge_dof_indices(shape, e):
                dir_set.add(int(patch_dofs[k][ij]))
    return GlobalDofMap(space, patch_dofs, ndofs, np.array(sorted(dir_set), dtype=int))


def _check_greville(domain, space, patch_dofs, ndofs):
    gs, gt = space.s.greville, space.t.greville
    pos = np.full((ndofs, 2), np.nan)
    scale = domain.max_diameter()
    for k, net in enumerate(domain.patches):
        S, T = np.meshgrid(gs, gt, indexing="ij")
        X = eval_quad(net, S, T)
        ids = patch_dofs[k]
        known = ~np.isnan(pos[ids][..., 0])
        if np.any(known):
            d = np.linalg.norm(pos[ids][known] - X[known], axis=-1)
            if d.max() > 1e-9 * scale:
                raise TopologyError("identified DOFs have non-matching Greville points")
        pos[ids] = X
