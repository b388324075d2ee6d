from math import factorial

import numpy as np
import pytest

from iga_radapt.quadrature import QuadratureError, gauss_rule, gauss_rule_2d, tri_rule


def monomial_tri(a, b):
    # integral of x^a y^b over the unit right triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("m", range(1, 11))
def test_gauss_exact_up_to_2m_minus_1(m):
    rule = gauss_rule(m)
    assert len(rule) == m
    assert abs(rule.weights.sum() - 1.0) < 1e-14
    for k in range(2 * m):
        assert abs(rule.weights @ rule.nodes ** k - 1.0 / (k + 1)) < 1e-14


def test_gauss_not_exact_beyond_degree():
    rule = gauss_rule(2)
    assert abs(rule.weights @ rule.nodes ** 4 - 0.2) > 1e-4


def test_gauss_two_point_nodes():
    rule = gauss_rule(2)
    expected = 0.5 + np.array([-1, 1]) / (2 * np.sqrt(3))
    assert np.allclose(rule.nodes, expected, atol=1e-15)


@pytest.mark.parametrize("m", [0, 11, -1])
def test_gauss_rejects_sizes(m):
    with pytest.raises(QuadratureError):
        gauss_rule(m)


def test_gauss_2d_tensor():
    rule = gauss_rule_2d(3)
    s, t = rule.nodes.T
    assert abs(rule.weights @ (s ** 5 * t ** 4) - 1 / 30) < 1e-14


@pytest.mark.parametrize("order", [2, 4, 6])
def test_triangle_rule_exactness(order):
    rule = tri_rule(order)
    bary = rule.nodes
    assert np.allclose(bary.sum(1), 1.0)
    assert np.all(bary >= 0)
    assert abs(rule.weights.sum() - 0.5) < 1e-14
    x, y = bary[:, 1], bary[:, 2]
    for a in range(order + 1):
        for b in range(order + 1 - a):
            assert abs(rule.weights @ (x ** a * y ** b) - monomial_tri(a, b)) < 1e-14


def test_triangle_rule_order_known_value():
    # 1/420 from exact symbolic integration of x^3 y^2
    rule = tri_rule(6)
    x, y = rule.nodes[:, 1], rule.nodes[:, 2]
    assert abs(rule.weights @ (x ** 3 * y ** 2) - 1 / 420) < 1e-15


@pytest.mark.parametrize("order", [1, 3, 8])
def test_triangle_rule_rejects_orders(order):
    with pytest.raises(QuadratureError):
        tri_rule(order)
