import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iga_radapt.bezier_geom import (
    InversionError,
    QuadPatchNet,
    RegularityError,
    check_regularity,
    de_casteljau_tri,
    degree_elevate_bilinear,
    eval_bilinear,
    eval_quad,
    eval_quad_jacobian,
    eval_tri,
    invert_bilinear,
    jacobian_det,
    linear_tri_net,
)

SQUARE = [(0, 0), (1, 0), (0, 1), (1, 1)]
SKEW = [(0, 0), (0.7, 0), (0.2, 0.8), (1.0, 1.0)]


def test_degree_elevation_reproduces_bilinear():
    net = degree_elevate_bilinear(SKEW)
    rng = np.random.default_rng(1)
    s, t = rng.random(20), rng.random(20)
    assert np.allclose(eval_quad(net, s, t), eval_bilinear(SKEW, s, t), atol=1e-15)
    assert np.allclose(net.points[1, 1], np.mean(SKEW, axis=0))


def test_degree_elevation_rejects_degenerate():
    with pytest.raises(RegularityError):
        degree_elevate_bilinear([(0, 0), (1, 0), (2, 0), (3, 0)])
    with pytest.raises(RegularityError):
        degree_elevate_bilinear([(0, 0), (0, 1), (1, 0), (1, 1)])   # clockwise


def test_net_is_read_only():
    net = degree_elevate_bilinear(SQUARE)
    with pytest.raises(ValueError):
        net.points[0, 0, 0] = 5.0


def test_jacobian_against_finite_differences():
    rng = np.random.default_rng(2)
    P = np.array(degree_elevate_bilinear(SKEW).points) + rng.normal(0, 0.02, (3, 3, 2))
    net = QuadPatchNet(P)
    s, t, h = 0.3, 0.6, 1e-6
    J = eval_quad_jacobian(net, s, t)
    ds = (eval_quad(net, s + h, t) - eval_quad(net, s - h, t)) / (2 * h)
    dt = (eval_quad(net, s, t + h) - eval_quad(net, s, t - h)) / (2 * h)
    assert np.allclose(J[:, 0], ds, atol=1e-8)
    assert np.allclose(J[:, 1], dt, atol=1e-8)


def test_unit_square_det_is_one():
    net = degree_elevate_bilinear(SQUARE)
    assert np.allclose(jacobian_det(net, np.linspace(0, 1, 7), np.linspace(1, 0, 7)), 1.0)


def test_regularity_flags_folded_net():
    P = np.array(degree_elevate_bilinear(SQUARE).points)
    P[1, 1] = (1.6, 1.6)
    res = check_regularity(QuadPatchNet(P))
    assert not res.regular and res.min_det < 0
    assert check_regularity(degree_elevate_bilinear(SQUARE)).regular
    assert QuadPatchNet(P).checked().regular is False


def test_regularity_flags_corner_degeneracy():
    # edge points pushed onto the corner: det vanishes there
    P = np.array(degree_elevate_bilinear(SQUARE).points)
    P[1, 0], P[0, 1] = (0, 0), (0, 0)
    assert not check_regularity(QuadPatchNet(P)).regular


def test_triangle_eval_matches_de_casteljau():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(6, 3))
    net = linear_tri_net([(0, 0, 0), (1, 0, 0), (0, 1, 0)])
    assert np.allclose(eval_tri(net, (0.2, 0.3, 0.5)), (0.3, 0.5, 0.0))
    from iga_radapt.bezier_geom import TriBezierNet
    net = TriBezierNet(pts)
    for _ in range(10):
        u = np.sort(rng.random(2))
        b = (u[0], u[1] - u[0], 1 - u[1])
        assert np.allclose(eval_tri(net, b), de_casteljau_tri(pts, b), atol=1e-14)
    assert np.allclose(net.vertices, pts[[0, 3, 5]])
    assert np.allclose(net.cp(0, 1, 1), pts[4])


def test_invert_bilinear_parallelogram_center():
    corners = [(0, 0), (2, 0), (1, 1), (3, 1)]
    s, t = invert_bilinear(corners, (1.5, 0.5))
    assert abs(s - 0.5) < 1e-12 and abs(t - 0.5) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_invert_bilinear_round_trip(s, t):
    x = eval_bilinear(SKEW, s, t)
    s2, t2 = invert_bilinear(SKEW, x)
    assert abs(s2 - s) < 1e-9 and abs(t2 - t) < 1e-9


def test_invert_bilinear_vectorized_and_outside():
    rng = np.random.default_rng(4)
    st_ = rng.random((200, 2))
    x = eval_bilinear(SKEW, st_[:, 0], st_[:, 1])
    s, t = invert_bilinear(SKEW, x)
    assert np.allclose(np.column_stack([s, t]), st_, atol=1e-12)
    with pytest.raises(InversionError):
        invert_bilinear(SKEW, (2.0, 2.0))
