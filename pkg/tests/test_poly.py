import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from momentshock.poly import (
    Polynomial,
    VariableSpace,
    compose_flux,
    flux_derivative_antiderivative,
    integrate_monomial_box,
    monomial_basis,
    monomials_up_to,
)

TXY = VariableSpace.make(t=(0.0, 1.0), x=(-0.5, 0.5), y=(0.0, 1.0))
TX = VariableSpace.make(t=(0.0, 1.0), x=(-0.5, 0.5))


def random_poly(space, degree, rng):
    basis = space.basis(degree)
    coeffs = {e: rng.uniform(-2, 2) for e in basis if rng.random() < 0.6}
    return Polynomial(space, coeffs)


def test_basis_counts():
    for n in range(1, 7):
        for d in range(0, 9):
            assert len(monomial_basis(n, d)) == math.comb(n + d, d)


def test_basis_order_matches_two_variable_degree_three():
    # 1, w1, w2, w1^2, w1w2, w2^2, w1^3, w1^2w2, w1w2^2, w2^3
    expected = [
        (0, 0),
        (1, 0), (0, 1),
        (2, 0), (1, 1), (0, 2),
        (3, 0), (2, 1), (1, 2), (0, 3),
    ]
    assert list(monomial_basis(2, 3)) == expected


def test_monomials_up_to_examples():
    assert len(monomials_up_to(TXY, 2)) == 10
    four = VariableSpace.make(t=(0, 1), x=(-0.5, 0.5), y=(0, 1), v=(0, 1))
    assert monomials_up_to(four, 0) == ((0, 0, 0, 0),)
    assert monomials_up_to(TXY, 3)[0] == (0, 0, 0)


def test_differentiate_examples():
    p = Polynomial(TXY, {(2, 1, 0): 1.0})  # t^2 x
    dt = p.differentiate("t")
    assert dt.coeffs == {(1, 1, 0): 2.0}
    t = Polynomial.variable(TXY, "t")
    assert t.differentiate("x").is_zero()
    q = Polynomial(TXY, {(0, 0, 3): 0.25})  # y^3/4
    assert q.differentiate("y").coeffs == {(0, 0, 2): 0.75}
    with pytest.raises(KeyError):
        Polynomial.variable(TX, "t").differentiate("y")


def test_integrate_monomial_box_examples():
    assert integrate_monomial_box((1, 0), TX) == pytest.approx(0.5, abs=1e-15)
    assert integrate_monomial_box((0, 1), TX) == 0.0
    assert integrate_monomial_box((0, 2), TX) == pytest.approx(1.0 / 12.0, abs=1e-15)
    # restricting to a subset skips the other variables' factors
    assert integrate_monomial_box((1, 5), TX, subset=("t",)) == pytest.approx(0.5)


def test_integrate_monomial_box_against_quadrature():
    rng = np.random.default_rng(7)
    for _ in range(25):
        exp = tuple(int(k) for k in rng.integers(0, 5, size=3))
        if sum(exp) > 12:
            continue
        exact = integrate_monomial_box(exp, TXY)
        ref = 1.0
        for (lo, hi), k in zip(TXY.bounds, exp):
            val, err = quad(lambda s, k=k: s**k, lo, hi, epsabs=1e-13)
            ref *= val
        assert exact == pytest.approx(ref, abs=1e-10)


def test_compose_flux():
    f = compose_flux((0.0, 0.0, 0.25))
    assert f.coeffs == {(2,): 0.25}
    assert compose_flux((3.0,)).coeffs == {(0,): 3.0}
    assert compose_flux((0.0, 1.0)).coeffs == {(1,): 1.0}
    with pytest.raises(ValueError):
        compose_flux(())


def test_entropy_flux_companion_matches_derivative_identity():
    # q_k' == f' * (y^k)' checked symbolically for the quadratic flux
    f = compose_flux((0.0, 0.0, 0.25))
    for k in range(2, 7):
        q = flux_derivative_antiderivative((0.0, 0.0, 0.25), k)
        eta = Polynomial.monomial(f.space, (k,))
        lhs = q.differentiate("y")
        rhs = f.differentiate("y") * eta.differentiate("y")
        assert (lhs - rhs).is_zero()
        assert q.evaluate({"y": 0.0}) == 0.0
    q2 = flux_derivative_antiderivative((0.0, 0.0, 0.25), 2)
    assert q2.coeffs == {(3,): pytest.approx(1.0 / 3.0)}


def test_substitute_and_embed():
    p = Polynomial(TXY, {(1, 0, 2): 2.0, (0, 1, 0): 1.0})  # 2 t y^2 + x
    q = p.substitute("t", 0.0)
    assert q.space.names == ("x", "y")
    assert q.coeffs == {(1, 0): 1.0}
    back = q.embed(TXY)
    assert back.coeffs == {(0, 1, 0): 1.0}
    # 0**0 == 1 for the constant term
    c = Polynomial.constant(TXY, 3.0).substitute("t", 0.0)
    assert c.coeffs == {(0, 0): 3.0}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_product_evaluation_consistency(seed):
    rng = np.random.default_rng(seed)
    p = random_poly(TXY, 3, rng)
    q = random_poly(TXY, 3, rng)
    point = {
        "t": rng.uniform(0, 1),
        "x": rng.uniform(-0.5, 0.5),
        "y": rng.uniform(0, 1),
    }
    lhs = (p * q).evaluate(point)
    rhs = p.evaluate(point) * q.evaluate(point)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_derivative_linearity_and_product_rule(seed):
    rng = np.random.default_rng(seed)
    p = random_poly(TXY, 3, rng)
    q = random_poly(TXY, 3, rng)
    a, b = rng.uniform(-3, 3, size=2)
    point = {
        "t": rng.uniform(0, 1),
        "x": rng.uniform(-0.5, 0.5),
        "y": rng.uniform(0, 1),
    }
    for var in ("t", "x", "y"):
        lin = (a * p + b * q).differentiate(var)
        assert lin.evaluate(point) == pytest.approx(
            a * p.differentiate(var).evaluate(point)
            + b * q.differentiate(var).evaluate(point),
            rel=1e-12,
            abs=1e-12,
        )
        prod = (p * q).differentiate(var)
        assert prod.evaluate(point) == pytest.approx(
            p.differentiate(var).evaluate(point) * q.evaluate(point)
            + p.evaluate(point) * q.differentiate(var).evaluate(point),
            rel=1e-11,
            abs=1e-11,
        )


def test_zero_polynomial_behaviour():
    z = Polynomial.zero(TXY)
    assert z.degree == -1
    assert z.evaluate({"t": 0.3, "x": 0.1, "y": 0.9}) == 0.0
    p = Polynomial(TXY, {(1, 0, 0): 1.0})
    assert (p - p).is_zero()


def test_space_validation():
    with pytest.raises(ValueError):
        VariableSpace(("x", "t"), ((0.0, 1.0), (0.0, 1.0)))  # wrong order
    with pytest.raises(ValueError):
        VariableSpace.make(t=(1.0, 0.0))  # empty interval
    with pytest.raises(ValueError):
        VariableSpace.make(z=(0.0, 1.0))  # unknown name
