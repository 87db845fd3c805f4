import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentforge.poly import (
    DimensionError,
    Polynomial,
    PolySyntaxError,
    PolynomialError,
    PolySystem,
    ZERO_DEGREE,
    build_ux,
    double_zero_test,
    grlex_key,
    monomials_up_to,
    parse_poly,
    random_polynomial,
    shifted_concavity_transform,
)

from conftest import DISK_G, ONEDIM_G, P, X1, XY, points, polynomials


def test_monomials_graded_lex_and_counts():
    mons = monomials_up_to(2, 2)
    assert mons == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(monomials_up_to(3, 4)) == math.comb(7, 3)
    assert sorted(mons, key=grlex_key) == mons


def test_parse_onedim_generator():
    g = parse_poly(ONEDIM_G, X1)
    assert g.degree == 4
    x = np.linspace(-1, 3, 9)
    assert np.allclose(g.eval(x[:, None]), x * (1 - x) * (x - 2) ** 2)


def test_parse_zero_has_sentinel_degree():
    z = parse_poly("0", XY)
    assert z.is_zero() and z.degree == ZERO_DEGREE and z.degree < -1e300


def test_parse_disk_expansion():
    assert P("1 - (x-1)^2 - y^2") == Polynomial(2, {(2, 0): -1.0, (1, 0): 2.0, (0, 2): -1.0})


def test_parse_cancellation_pruned():
    assert P("x - x + y").terms == {(0, 1): 1.0}


@pytest.mark.parametrize("text", ["x y", "2x", "x^", "x^-1", "(x", "x**2", "x +- y", ""])
def test_parse_rejects(text):
    with pytest.raises(PolySyntaxError):
        parse_poly(text, XY)


def test_parse_error_offset_and_unknown_variable():
    with pytest.raises(PolySyntaxError) as exc:
        parse_poly("x + * y", XY)
    assert exc.value.offset == 4
    with pytest.raises(PolynomialError, match="unknown variable 'z'"):
        parse_poly("x + z", XY)


def test_parse_numbers_with_exponent():
    assert parse_poly("1.5e-1*x + 2E1", X1).terms == {(1,): 0.15, (0,): 20.0}


def test_eval_examples():
    g = parse_poly(ONEDIM_G, X1)
    assert g.eval([2.0]) == 0.0
    assert Polynomial.constant(2, 1.0).eval([3.0, -7.0]) == 1.0
    assert P(DISK_G).eval([0.0, 0.0]) == 0.0


def test_eval_dimension_mismatch():
    with pytest.raises(DimensionError):
        P("x*y").eval([1.0, 2.0, 3.0])


def test_derivatives_onedim():
    g = parse_poly(ONEDIM_G, X1)
    assert g.gradient_at([0.0]).tolist() == [4.0]
    assert g.gradient_at([2.0]).tolist() == [0.0]
    assert g.hessian_at([2.0]).tolist() == [[-4.0]]


def test_hessian_xy_and_constant_gradient():
    H = P("x*y").hessian()
    assert [[h.eval([0.3, -1.0]) for h in row] for row in H] == [[0.0, 1.0], [1.0, 0.0]]
    assert all(q.is_zero() for q in Polynomial.constant(2, 5.0).gradient())


def test_arithmetic_examples():
    x = Polynomial.variable(1, 0)
    assert x * x == Polynomial(1, {(2,): 1.0})
    assert (1 - x) ** 0 == Polynomial.constant(1, 1.0)
    u = build_ux([[0.0]]) * build_ux([[1.0]])
    assert u == Polynomial(1, {(4,): 1.0, (3,): -2.0, (2,): 1.0})
    with pytest.raises(DimensionError):
        Polynomial.variable(1, 0) + Polynomial.variable(2, 0)


def test_build_ux_examples():
    assert build_ux([], n=2) == Polynomial.constant(2, 1.0)
    assert build_ux([(0.0, 0.0)]) == P("x^2 + y^2")
    assert build_ux([[0.0], [1.0]]) == parse_poly("x^2*(x-1)^2", X1)
    with pytest.raises(DimensionError):
        build_ux([(0.0, 0.0), (1.0,)])


def test_shifted_concavity_transform_example():
    x = Polynomial.variable(1, 0)
    assert shifted_concavity_transform(x, 1) == parse_poly("x - x^2", X1)


def test_double_zero_examples():
    assert double_zero_test(P("x*y"), (0.0, 0.0), 1e-12)
    assert not double_zero_test(parse_poly("x", X1), (0.0,), 1e-12)
    x1, x2 = np.array([0.5, -1.0]), np.array([2.0, 0.25])
    assert double_zero_test(build_ux([x1]) * build_ux([x2]), x1, 1e-12)


def test_system_has_shared_dimension():
    with pytest.raises(DimensionError):
        PolySystem(2, (Polynomial.variable(1, 0),))


def _central(p, x, h):
    n = x.shape[0]
    grad, hess = np.zeros(n), np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        grad[i] = (p.eval(x + e) - p.eval(x - e)) / (2 * h[i])
        for j in range(n):
            f = np.zeros(n)
            f[j] = h[j]
            hess[i, j] = (p.eval(x + e + f) - p.eval(x + e - f) - p.eval(x - e + f) + p.eval(x - e - f)) / (4 * h[i] * h[j])
    return grad, hess


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(polynomials(n=n), points(n))))
def test_finite_difference_gradient_hessian(case):
    p, x = case
    h = 1e-4 * (1 + np.abs(x))
    fd_grad, fd_hess = _central(p, x, h)
    scale = 1 + max((abs(c) for c in p.terms.values()), default=0.0) * (1 + np.max(np.abs(x))) ** max(p.degree, 0)
    assert np.allclose(p.gradient_at(x), fd_grad, rtol=1e-5, atol=1e-5 * scale)
    assert np.allclose(p.hessian_at(x), fd_hess, rtol=1e-5, atol=1e-5 * scale)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(polynomials(n=n, max_degree=3), polynomials(n=n, max_degree=3), points(n))))
def test_mul_evaluates_as_product(case):
    p, q, x = case
    lhs, rhs = (p * q).eval(x), p.eval(x) * q.eval(x)
    scale = (1 + sum(abs(c) for c in p.terms.values())) * (1 + sum(abs(c) for c in q.terms.values())) * (1 + np.max(np.abs(x))) ** 6
    assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), scale * 1e-3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: points(n)))
def test_ux_identities(x):
    u = build_ux([x])
    n = x.shape[0]
    assert abs(u.eval(x)) <= 1e-12
    assert np.max(np.abs(u.gradient_at(x))) <= 1e-12
    assert np.max(np.abs(u.hessian_at(x) - 2 * np.eye(n))) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(polynomials(n=n, max_degree=2), points(n, -1, 1))))
def test_double_zero_survives_multiplication(case):
    q, x = case
    p = build_ux([x]) * Polynomial.variable(x.shape[0], 0)
    assert double_zero_test(p, x, 1e-9)
    assert double_zero_test(p * q, x, 1e-9)


def test_prune_threshold_is_relative():
    p = Polynomial(1, {(0,): 1.0, (1,): 1e-15})
    assert p.terms == {(0,): 1.0}
    assert Polynomial(1, {(1,): 1e-20}).terms == {(1,): 1e-20}


def test_random_polynomial_deterministic():
    a = random_polynomial(np.random.default_rng(3), 2, 3)
    b = random_polynomial(np.random.default_rng(3), 2, 3)
    assert a == b and a.degree <= 3


def test_substitute_affine_matches_composition():
    p = P("x^3*y - 2*x*y^2 + 1")
    shift, scale = np.array([0.5, -1.0]), np.array([2.0, 0.25])
    q = p.substitute_affine(shift, scale)
    z = np.array([0.3, -0.7])
    assert q.eval(z) == pytest.approx(p.eval(shift + scale * z), rel=1e-12)
