import numpy as np
import pytest

from iga_radapt.bezier_geom import QuadPatchNet
from iga_radapt.multipatch import (
    DIRICHLET,
    NEUMANN,
    TopologyError,
    build_dof_map,
    build_domain,
    edge_dof_indices,
)
from iga_radapt.problems import cracked_disk, lshape, pentagon, three_patch
from iga_radapt.tensor_spline import TensorSpace


def two_squares(reverse=False):
    left = [(0, 0), (1, 0), (0, 1), (1, 1)]
    # right patch with the shared edge parameterized from the top when reversed
    right = [(1, 1), (1, 0), (2, 1), (2, 0)] if reverse else [(1, 0), (2, 0), (1, 1), (2, 1)]
    if reverse:
        right = [(1, 1), (2, 1), (1, 0), (2, 0)]
        # clockwise; rotate to keep a positive orientation
        right = [(2, 1), (1, 1), (2, 0), (1, 0)]
    return build_domain([left, right])


def test_single_interface_detected():
    dom = two_squares()
    assert len(dom.interfaces) == 1
    itf = dom.interfaces[0]
    assert (itf.edge_a, itf.edge_b, itf.reversed) == (1, 3, False)
    assert len(dom.boundary) == 6


def test_reversed_interface_dof_count():
    dom = two_squares(reverse=True)
    assert dom.interfaces[0].reversed
    dm = build_dof_map(dom, TensorSpace.uniform(2, 3))
    assert dm.ndofs == 2 * 25 - 5


@pytest.mark.parametrize("builder,n,expected", [
    (lshape, 1, 21),            # 3 * 9 - 2 * 3
    (three_patch, 1, 19),       # 3 * 9 - 3 * 3 + 1
    (pentagon, 1, 31),          # 5 * 9 - 5 * 3 + 1
    (cracked_disk, 1, 33),      # 5 * 9 - 4 * 3
    (lshape, 4, 3 * 36 - 2 * 6),
])
def test_dof_counts(builder, n, expected):
    assert build_dof_map(builder(), TensorSpace.uniform(2, n)).ndofs == expected


def test_lshape_boundary_tags():
    dom = lshape()
    assert dom.edges_tagged(DIRICHLET) == [(0, 1), (2, 2)]
    assert len(dom.edges_tagged(NEUMANN)) == 6


def test_dirichlet_dofs_cover_tagged_edges():
    dom = build_domain([[(0, 0), (1, 0), (0, 1), (1, 1)]])
    dm = build_dof_map(dom, TensorSpace.uniform(2, 2))
    assert len(dm.dirichlet) == 16 - 4
    assert len(dm.free) == 4


def test_hanging_vertex_rejected():
    with pytest.raises(TopologyError):
        build_domain([[(0, 0), (2, 0), (0, 1), (2, 1)],
                      [(0, 1), (1, 1), (0, 2), (1, 2)],
                      [(1, 1), (2, 1), (1, 2), (2, 2)]])


def test_unknown_boundary_tag_rejected():
    with pytest.raises(TopologyError):
        build_domain([[(0, 0), (1, 0), (0, 1), (1, 1)]], boundary_tags={(0, 0): "robin"})
    with pytest.raises(TopologyError):
        build_domain([[(0, 0), (1, 0), (0, 1), (1, 1)], [(1, 0), (2, 0), (1, 1), (2, 1)]],
                     boundary_tags={(0, 1): NEUMANN})


def test_mismatched_interface_geometry_detected():
    dom = two_squares()
    P = np.array(dom.patches[1].points)
    P[0, 1] = (1.0, 0.3)   # shared edge middle point moved on one side only
    bad = dom.with_patches([dom.patches[0], QuadPatchNet(P)])
    assert bad.interface_mismatch() > 0.1
    with pytest.raises(TopologyError):
        build_dof_map(bad, TensorSpace.uniform(2, 2))


def test_edge_dof_indices():
    assert edge_dof_indices((3, 4), 1) == [(2, 0), (2, 1), (2, 2), (2, 3)]
    assert edge_dof_indices((3, 4), 2) == [(0, 3), (1, 3), (2, 3)]


def test_area():
    assert abs(lshape().area() - 3.0) < 1e-13
    assert abs(three_patch().area() - 3 * np.sqrt(3) / 4) < 1e-13
