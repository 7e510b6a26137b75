import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.legendre import leggauss

from polyvem.mesh import element_geometry, generate, polygon_geometry
from polyvem.polyquad import (MonomialBasis, edge_rule, element_rule, eval_basis, eval_grad,
                              exponent_index, exponents, gauss_legendre, grad_coefficients,
                              integrate_edge, integrate_element, mass_matrix, poly_dim,
                              triangle_rule)

UNIT = polygon_geometry([[0, 0], [1, 0], [1, 1], [0, 1]])
L_HEX = polygon_geometry([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]])


def random_convex(rng):
    m = rng.integers(3, 11)
    ang = np.sort(rng.uniform(0, 2 * np.pi, m))
    while np.max(np.diff(np.r_[ang, ang[0] + 2 * np.pi])) > np.pi * 0.9 or \
            np.min(np.diff(np.r_[ang, ang[0] + 2 * np.pi])) < 0.05:
        ang = np.sort(rng.uniform(0, 2 * np.pi, m))
    p = np.column_stack([np.cos(ang), np.sin(ang)]) * rng.uniform(0.1, 3)
    return polygon_geometry(p + rng.uniform(-2, 2, 2))


def green_moment(geom, ax, ay):
    """Exact int_E x^ax y^ay via the divergence theorem on each straight edge.

    With F = (x^(ax+1) y^ay / (ax+1), 0), the edge integral of F.n is a
    polynomial in the edge parameter, integrated with a Gauss rule that is
    exact for its degree (independent of the fan rule under test).
    """
    t, w = leggauss(ax + ay + 3)
    t, w = (t + 1) / 2, w / 2
    total = 0.0
    v = geom.vertices
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        x = a[0] + t * (b[0] - a[0])
        y = a[1] + t * (b[1] - a[1])
        total += np.sum(w * x ** (ax + 1) * y ** ay) / (ax + 1) * (b[1] - a[1])
    return total


def test_ordering_and_dimension():
    ex = exponents(3)
    assert len(ex) == poly_dim(3) == 10
    assert ex.tolist()[:6] == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    assert all(exponent_index(tuple(a)) == i for i, a in enumerate(ex))


def test_basis_values():
    b = MonomialBasis.on(UNIT, 2)
    v = eval_basis(b, [[1.0, 0.5]])[0]
    assert v[0] == 1.0
    assert v[1] == pytest.approx(0.5 / np.sqrt(2))
    g = eval_grad(b, [UNIT.centroid])[0]
    assert np.allclose(g[3], 0.0)


def test_basis_gradient_matches_finite_differences():
    b = MonomialBasis(4, np.array([0.3, -0.2]), 0.7)
    x = np.array([[0.11, 0.43]])
    g = b.eval_grad(x)[0]
    eps = 1e-6
    fd = np.column_stack([(b.eval(x + [eps, 0]) - b.eval(x - [eps, 0]))[0],
                          (b.eval(x + [0, eps]) - b.eval(x - [0, eps]))[0]]) / (2 * eps)
    assert np.allclose(g, fd, atol=1e-8)


def test_grad_coefficients():
    b = MonomialBasis(3, np.zeros(2), 2.0)
    x = np.random.default_rng(0).random((5, 2))
    gc = grad_coefficients(3, 2.0)
    low = MonomialBasis(2, np.zeros(2), 2.0).eval(x)
    g = b.eval_grad(x)
    for d in range(2):
        assert np.allclose(low @ gc[d], g[..., d])


def test_element_integrals():
    assert integrate_element(UNIT, 4, lambda x, y: x ** 2 * y ** 2) == pytest.approx(1 / 9, abs=1e-13)
    assert integrate_element(UNIT, 4, lambda x, y: (x - x * x) * (y - y * y)) == pytest.approx(1 / 36, abs=1e-13)
    assert integrate_element(L_HEX, 0, lambda x, y: np.ones_like(x)) == pytest.approx(3.0, rel=1e-14)


def test_edge_integrals():
    assert integrate_edge(([0, 0], [1, 0]), 3, lambda x, y: x ** 3) == pytest.approx(0.25, rel=1e-15)
    assert len(gauss_legendre(3).points) == 2
    a, b = np.array([0.2, 0.1]), np.array([1.3, 2.0])
    assert integrate_edge((a, b), 0, lambda x, y: np.ones_like(x)) == pytest.approx(np.hypot(*(b - a)))
    m10 = MonomialBasis.on(UNIT, 1)
    assert integrate_edge(([0, 0], [1, 0]), 1, lambda x, y: m10.eval(np.column_stack([x, y]))[:, 1]) \
        == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("ex", range(0, 16))
def test_reference_triangle_exactness(ex):
    rule = triangle_rule(ex)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(0.5, rel=1e-14)
    from math import factorial
    for a in range(ex + 1):
        for b in range(ex + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert got == pytest.approx(exact, rel=1e-13)


def test_edge_rule_exactness():
    for ex in range(12):
        r = edge_rule([0, 0], [1, 0], ex)
        for p in range(ex + 1):
            assert r.weights @ r.points[:, 0] ** p == pytest.approx(1 / (p + 1), rel=1e-14)


def test_element_rule_exact_on_100_convex_polygons():
    rng = np.random.default_rng(7)
    for _ in range(100):
        g = random_convex(rng)
        for d in (0, 3, 6):
            rule = element_rule(g, d)
            b = MonomialBasis.on(g, d)
            got = rule.weights @ b.eval(rule.points)
            # scaled monomials are plain monomials of the shifted, rescaled polygon
            shifted = polygon_geometry((g.vertices - g.centroid) / g.diameter)
            for i, (ax, ay) in enumerate(exponents(d)):
                exact = green_moment(shifted, ax, ay) * g.diameter ** 2
                assert abs(got[i] - exact) <= 1e-13 * g.area, (d, ax, ay)


def test_mass_matrix_unit_square():
    assert np.allclose(mass_matrix(MonomialBasis.on(UNIT, 0)), [[1.0]])
    h = mass_matrix(MonomialBasis.on(UNIT, 1))
    assert np.allclose(np.diag(h), [1, 1 / 24, 1 / 24], atol=1e-15)
    assert np.allclose(h - np.diag(np.diag(h)), 0, atol=1e-15)


@pytest.mark.parametrize("kind", ["squares", "triangles", "random_quads", "voronoi"])
def test_mass_matrix_spd_on_generated_meshes(kind):
    m = generate(kind, 4, 0)
    for c in range(m.n_cells):
        g = element_geometry(m, c)
        for k in range(5):
            h = mass_matrix(MonomialBasis.on(g, k))
            assert np.abs(h - h.T).max() <= 1e-14 * np.abs(h).max()
            assert np.linalg.eigvalsh(h).min() > 0


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-50, 50), st.floats(-50, 50))
def test_mass_matrix_condition_scale_invariant(scale, dx, dy):
    base = L_HEX.vertices
    g = polygon_geometry((base + [dx, dy]) * scale)
    c0 = np.linalg.cond(mass_matrix(MonomialBasis.on(L_HEX, 3)))
    c1 = np.linalg.cond(mass_matrix(MonomialBasis.on(g, 3)))
    assert c1 == pytest.approx(c0, rel=1e-9)
