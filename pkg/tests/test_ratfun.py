import numpy as np
import pytest

from gfpc.errors import DegenerateLoopError, InvalidDegreeError, PoleOnGridError
from gfpc.ratfun import (
    Polynomial,
    RationalTF,
    S,
    freq_response,
    poly_eval,
    poly_from_roots,
    poly_roots,
    rat_arith,
    rat_feedback,
    zero_tf,
)


def test_poly_eval_points():
    p = Polynomial([1.0, 0.0, 1.0])  # s^2 + 1
    assert poly_eval(p, 1j) == pytest.approx(0.0)
    assert poly_eval(p, 0.0) == pytest.approx(1.0)
    assert poly_eval(p, 1.0 + 1.0j) == pytest.approx(1.0 + 2.0j)


def test_poly_trimming_and_zero():
    assert Polynomial([1.0, 2.0, 0.0, 0.0]).coeffs == (1.0, 2.0)
    z = Polynomial([0.0, 0.0])
    assert z.is_zero and z.degree == 0 and z.coeffs == (0.0,)


def test_poly_arithmetic():
    p = Polynomial([1.0, 1.0])  # 1 + s
    q = Polynomial([-1.0, 1.0])  # -1 + s
    assert (p * q).coeffs == (-1.0, 0.0, 1.0)
    assert (p + q).coeffs == (0.0, 2.0)
    assert (p - p).is_zero
    assert (2.0 * p).coeffs == (2.0, 2.0)
    assert Polynomial([1.0, 2.0, 3.0]).derivative().coeffs == (2.0, 6.0)


def test_roots_imaginary_pair():
    r = poly_roots(Polynomial([1.0, 0.0, 1.0]))
    assert r == [(-0.0 - 1.0j), (0.0 + 1.0j)] or np.allclose(r, [-1j, 1j])


def test_roots_constructed_cubic():
    # (s+1)(s+2)(s+3) = 6 + 11 s + 6 s^2 + s^3
    r = poly_roots(Polynomial([6.0, 11.0, 6.0, 1.0]))
    assert np.allclose(sorted(z.real for z in r), [-3.0, -2.0, -1.0], atol=1e-12)
    assert all(abs(z.imag) < 1e-12 for z in r)


def test_roots_no_damping_closed_loop_cubic():
    # s^3 + s + 0.05: characteristic cubic of the undamped droop loop with
    # K_p = 0.01, L_c = 0.2. One stable real root plus an unstable pair.
    r = poly_roots(Polynomial([0.05, 1.0, 0.0, 1.0]))
    real = [z for z in r if abs(z.imag) < 1e-12]
    pair = [z for z in r if z.imag > 0]
    assert len(real) == 1 and real[0].real < 0
    assert len(pair) == 1 and pair[0].real > 0
    # independent check: coefficient identities of the factorization
    q = 1.0 + real[0].real ** 2
    assert abs(pair[0]) ** 2 == pytest.approx(q, rel=1e-9)


def test_roots_degree_zero_rejected():
    with pytest.raises(InvalidDegreeError):
        poly_roots(Polynomial([3.0]))


def test_roots_random_property_suite():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        deg = int(rng.integers(1, 7))
        coeffs = rng.normal(size=deg + 1)
        while abs(coeffs[-1]) < 1e-2:
            coeffs[-1] = rng.normal()
        p = Polynomial(coeffs)
        roots = poly_roots(p)
        assert len(roots) == p.degree
        scale = max(abs(c) for c in p.coeffs)
        for z in roots:
            assert abs(poly_eval(p, z)) < 1e-7 * scale * max(1.0, abs(z)) ** p.degree
        # conjugate pairing
        ims = sorted(z.imag for z in roots)
        assert np.allclose(ims, [-x for x in reversed(ims)], atol=1e-9 * max(1.0, max(abs(z) for z in roots)))
        # monic-product reconstruction
        rebuilt = poly_from_roots(roots, leading=p.coeffs[-1])
        assert rebuilt.approx_equal(p, rtol=1e-7)


def test_rat_arith_basics():
    integ = RationalTF(Polynomial([1.0]), S)  # 1/s
    k = RationalTF(Polynomial([3.0]))
    prod = rat_arith(integ, k, "mul")
    assert prod.num.coeffs == (3.0,) and prod.den.coeffs == (0.0, 1.0)
    diff = rat_arith(prod, prod, "sub")
    assert diff.num.is_zero
    # scalar times integrator: K_p/s times a constant plant stays an integrator
    g = RationalTF(Polynomial([5.0]))
    loop = rat_arith(RationalTF(Polynomial([0.1]), S), g, "mul")
    assert loop.num.coeffs == (0.5,) and loop.den.coeffs == (0.0, 1.0)


def test_rat_arith_no_implicit_cancellation():
    # (s+1)/(s+1) must stay degree 1 over degree 1
    p = Polynomial([1.0, 1.0])
    tf = RationalTF(p, p)
    prod = rat_arith(tf, RationalTF(Polynomial([1.0]), p), "mul")
    assert prod.den.degree == 2


def test_feedback_unit_integrator():
    L = RationalTF(Polynomial([1.0]), S)
    cl = rat_feedback(L)
    assert cl.num.coeffs == (1.0,)
    assert cl.den.coeffs == (1.0, 1.0)


def test_feedback_dc_gain_unity_for_integrating_loop():
    # any loop with a pole at the origin forces closed-loop value 1 at s = 0
    L = RationalTF(Polynomial([2.0, 0.3]), Polynomial([0.0, 1.0, 0.4]))
    cl = rat_feedback(L)
    assert cl(0.0) == pytest.approx(1.0, rel=1e-12)


def test_feedback_degenerate():
    L = RationalTF(Polynomial([-1.0, -1.0]), Polynomial([1.0, 1.0]))
    with pytest.raises(DegenerateLoopError):
        rat_feedback(L)


def test_freq_response_integrator():
    tf = RationalTF(Polynomial([1.0]), S)
    (v,) = freq_response(tf, [1.0])
    assert abs(v) == pytest.approx(1.0)
    assert np.degrees(np.angle(v)) == pytest.approx(-90.0)


def test_freq_response_high_pass_asymptote():
    # k_v s / (s + w_v) tends to k_v at high frequency and 0 at dc
    kv, wv = 1.0, 0.1
    tf = RationalTF(Polynomial([0.0, kv]), Polynomial([wv, 1.0]))
    lo, hi = freq_response(tf, [1e-9, 1e9])
    assert abs(lo) < 1e-8
    assert abs(hi) == pytest.approx(kv, rel=1e-9)


def test_freq_response_conjugate_symmetry():
    rng = np.random.default_rng(7)
    tf = RationalTF(Polynomial(rng.normal(size=3)), Polynomial([1.0, 0.5, 2.0, 1.0]))
    ws = [0.1, 0.9, 3.7]
    pos = freq_response(tf, ws)
    neg = freq_response(tf, [-w for w in ws])
    assert np.allclose(neg, np.conj(pos), rtol=1e-12)


def test_freq_response_pole_on_grid():
    tf = RationalTF(Polynomial([1.0]), Polynomial([1.0, 0.0, 1.0]))
    with pytest.raises(PoleOnGridError) as ei:
        freq_response(tf, [0.5, 1.0])
    assert ei.value.omega == pytest.approx(1.0)


def test_feedback_matches_pointwise_evaluation():
    rng = np.random.default_rng(3)
    for _ in range(50):
        num = Polynomial(rng.normal(size=2))
        den = Polynomial(np.concatenate([rng.normal(size=3), [1.0]]))
        L = RationalTF(num, den)
        cl = rat_feedback(L)
        for s in (0.3 + 0.2j, 1j * 2.0, -0.5 + 1j):
            lv = L(s)
            assert cl(s) == pytest.approx(lv / (1.0 + lv), rel=1e-9)


def test_zero_tf():
    z = zero_tf()
    assert z.is_zero and z(1.23j) == 0.0
