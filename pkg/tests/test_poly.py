import math

import numpy as np
import pytest

from sosorbit import poly
from sosorbit.poly import MultiPoly, ScalingTransform


def p_xy(terms):
    return MultiPoly(2, terms)


def test_eval_hand_cases():
    p = p_xy({(2, 0): 1.0, (0, 2): 1.0})  # x^2 + y^2
    assert poly.eval_poly(p, [1.0, 1.0]) == pytest.approx(2.0)
    assert poly.eval_poly(MultiPoly.zero(2), [3.0, -4.0]) == 0.0
    q = p_xy({(1, 1): 1.0})  # x*y
    assert poly.eval_poly(q, [2.0, 3.0]) == pytest.approx(6.0)


def test_eval_dimension_mismatch():
    p = p_xy({(1, 0): 1.0})
    with pytest.raises(ValueError):
        poly.eval_poly(p, [1.0, 2.0, 3.0])


def test_grad_hand_cases():
    p = p_xy({(2, 0): 1.0, (0, 2): 1.0})
    gx, gy = poly.grad(p)
    assert gx.terms == {(1, 0): 2.0}
    assert gy.terms == {(0, 1): 2.0}

    const = MultiPoly.constant(2, 7.0)
    assert all(g.is_zero() for g in poly.grad(const))

    p = p_xy({(1, 2): 1.0})  # x y^2
    gx, gy = poly.grad(p)
    assert gx.terms == {(0, 2): 1.0}
    assert gy.terms == {(1, 1): 2.0}


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(5):
        n = rng.integers(1, 4)
        terms = {}
        for _ in range(12):
            exps = tuple(int(e) for e in rng.integers(0, 4, size=n))
            terms[exps] = rng.standard_normal()
        p = MultiPoly(n, terms)
        g = poly.grad(p)
        for _ in range(4):
            a = rng.uniform(-1, 1, size=n)
            h = 1e-5
            for i in range(n):
                ap, am = a.copy(), a.copy()
                ap[i] += h
                am[i] -= h
                fd = (poly.eval_poly(p, ap) - poly.eval_poly(p, am)) / (2 * h)
                exact = poly.eval_poly(g[i], a)
                assert fd == pytest.approx(exact, rel=1e-6, abs=1e-6)


def test_multiply_hand_cases():
    x_plus_y = p_xy({(1, 0): 1.0, (0, 1): 1.0})
    x_minus_y = p_xy({(1, 0): 1.0, (0, 1): -1.0})
    prod = poly.multiply(x_plus_y, x_minus_y)
    assert prod.terms == {(2, 0): 1.0, (0, 2): -1.0}

    one = MultiPoly.constant(2, 1.0)
    p = p_xy({(2, 1): 3.0, (0, 0): -1.5})
    assert poly.multiply(p, one).terms == p.terms


def test_multiply_degree_additivity_and_pointwise():
    rng = np.random.default_rng(11)
    for _ in range(6):
        n = 2
        p = MultiPoly(n, {tuple(rng.integers(0, 3, n)): rng.standard_normal() for _ in range(5)})
        q = MultiPoly(n, {tuple(rng.integers(0, 3, n)): rng.standard_normal() for _ in range(5)})
        if p.is_zero() or q.is_zero():
            continue
        pq = poly.multiply(p, q)
        assert pq.degree() == p.degree() + q.degree()
        for _ in range(4):
            a = rng.uniform(-1, 1, size=n)
            lhs = poly.eval_poly(pq, a)
            rhs = poly.eval_poly(p, a) * poly.eval_poly(q, a)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_affine_substitute_hand_cases():
    # p = x, scale 2, offset 0 -> x_s / 2
    p = MultiPoly.variable(1, 0)
    t = ScalingTransform((2.0,), (0.0,))
    q = poly.affine_substitute(p, t)
    assert q.terms == {(1,): 0.5}

    ident = ScalingTransform.identity(2)
    p2 = p_xy({(2, 1): 1.0, (0, 0): 4.0})
    assert poly.affine_substitute(p2, ident).terms == p2.terms

    # p = x^2, scale 2, offset 1 -> 0.25 x_s^2 - 0.5 x_s + 0.25
    p3 = MultiPoly(1, {(2,): 1.0})
    t3 = ScalingTransform((2.0,), (1.0,))
    q3 = poly.affine_substitute(p3, t3)
    assert q3.terms[(2,)] == pytest.approx(0.25)
    assert q3.terms[(1,)] == pytest.approx(-0.5)
    assert q3.terms[(0,)] == pytest.approx(0.25)


def test_affine_substitute_eval_consistency():
    rng = np.random.default_rng(3)
    p = MultiPoly(3, {tuple(rng.integers(0, 4, 3)): rng.standard_normal() for _ in range(10)})
    t = ScalingTransform((0.5, 2.0, 1.25), (0.1, -0.3, 2.0))
    q = poly.affine_substitute(p, t)
    for _ in range(6):
        a = rng.uniform(-1, 1, size=3)
        assert poly.eval_poly(q, t.apply(a)) == pytest.approx(
            poly.eval_poly(p, a), rel=1e-12, abs=1e-12
        )


def test_affine_substitute_round_trip():
    rng = np.random.default_rng(5)
    p = MultiPoly(2, {tuple(rng.integers(0, 5, 2)): rng.standard_normal() for _ in range(8)})
    t = ScalingTransform((0.25, 3.0), (1.0, -0.5))
    back = poly.affine_substitute(poly.affine_substitute(p, t), t.inverse())
    for exps, c in p.terms.items():
        assert back.terms[exps] == pytest.approx(c, rel=1e-10, abs=1e-12)
    for exps, c in back.terms.items():
        assert p.terms.get(exps, 0.0) == pytest.approx(c, rel=1e-10, abs=1e-10)


def test_scaling_transform_validation():
    with pytest.raises(ValueError):
        ScalingTransform((0.0, 1.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        ScalingTransform((-1.0,), (0.0,))


def test_scaling_inverse_composes_to_identity():
    t = ScalingTransform((0.2, 5.0, 1.0), (0.3, -2.0, 0.0))
    tinv = t.inverse()
    a = np.array([0.7, -1.1, 2.2])
    np.testing.assert_allclose(tinv.apply(t.apply(a)), a, rtol=1e-14)


def test_monomial_basis_counts():
    assert len(poly.monomial_basis(2, 5)) == 21
    assert len(poly.monomial_basis(4, 11)) == 1365
    assert poly.monomial_basis(1, 0) == [(0,)]
    for n in range(1, 7):
        for d in range(0, 16, 5):
            assert len(poly.monomial_basis(n, d)) == math.comb(n + d, d)


def test_monomial_basis_graded_lex():
    basis = poly.monomial_basis(2, 2)
    assert basis == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    # degrees never decrease
    degs = [sum(e) for e in basis]
    assert degs == sorted(degs)


def test_text_round_trip():
    p = MultiPoly(3, {(0, 0, 0): -2.5, (1, 2, 0): 1e-7, (3, 0, 4): 123.456})
    text = poly.to_text(p)
    q = poly.from_text(text)
    assert q.nvars == 3
    assert q.terms == p.terms


def test_normalization_drops_tiny_coefficients():
    p = MultiPoly(1, {(0,): 1e-310, (1,): 1.0})
    assert (0,) not in p.terms
    assert p.degree() == 1


def test_vectorized_evaluator_matches_reference():
    rng = np.random.default_rng(17)
    p = MultiPoly(2, {tuple(rng.integers(0, 6, 2)): rng.standard_normal() for _ in range(9)})
    ev = poly.PolyEvaluator(p)
    pts = rng.uniform(-2, 2, size=(20, 2))
    batch = ev.at_many(pts)
    for k in range(20):
        assert batch[k] == pytest.approx(poly.eval_poly(p, pts[k]), rel=1e-12, abs=1e-12)
