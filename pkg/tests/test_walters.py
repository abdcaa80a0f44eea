import math

import numpy as np
import pytest
from scipy.special import logsumexp

from zerotemp import fixtures as F
from zerotemp import transfer as T
from zerotemp import walters as W
from zerotemp.asymptotics import SweepTable, BetaGrid, fit_rate
from zerotemp.potential import (ONE_FIX, ZERO_FIX, GeometricTailSequence, WaltersPotential, classify,
                                eval_walters, one_run, project, zero_run)
from zerotemp.shift_space import EPPoint, shift, state_of

GRID = BetaGrid.linspace(20.0, 50.0, 16)
ALL_W = [F.w1(), F.w2(), F.w1_mirror()]


def P(text):
    return EPPoint.parse(text)


def slope(fn):
    return fit_rate(SweepTable(GRID, tuple(fn(b) for b in GRID))).slope


def classes(qmax=20):
    return [ZERO_FIX, ONE_FIX] + [c(n) for n in range(1, qmax + 1) for c in (zero_run, one_run)]


# -- series against direct summation

def partials(seq, lo, count):
    return np.cumsum([seq.value(n) for n in range(lo, lo + count)])


def direct_plain(seq, beta, p, q, terms=4000):
    j = np.arange(1, terms)
    return float(logsumexp(np.concatenate([[0.0], beta * partials(seq, q + 1, terms - 1) - j * p])))


def direct_run(seq, beta, p, n, terms=4000):
    j = np.arange(1, terms)
    logs = np.log(np.maximum(j - n + 1, 1)) + beta * np.concatenate([[0.0], partials(seq, 2, terms - 2)]) - j * p
    return float(logsumexp(logs[j >= n]))


def direct_shifted(seq, beta, p, terms=4000):
    j = np.arange(1, terms)
    logs = np.log(j + 1.0) + beta * partials(seq, 2, terms - 1) - j * p
    return float(logsumexp(np.concatenate([[0.0], logs])))


@pytest.mark.parametrize("beta", [0.0, 0.5, 2.0])
@pytest.mark.parametrize("q", [1, 2, 5])
def test_series_against_direct_sums(beta, q):
    seq = GeometricTailSequence(-1.3, 0.6, prefix=(-0.4, -2.0))
    p = 0.35
    assert W.series_plain_log(seq, beta, p, q).log_value == pytest.approx(direct_plain(seq, beta, p, q), abs=1e-12)
    assert W.series_counted_log(seq, beta, p, q).log_value == pytest.approx(direct_run(seq, beta, p, q), abs=1e-12)
    assert W.series_counted_log(seq, beta, p, 1, "shifted").log_value == pytest.approx(
        direct_shifted(seq, beta, p), abs=1e-12)


def test_series_examples():
    seq = F.w1().a_seq
    assert W.series_plain_log(seq, 0.0, math.log(2), 1).log_value == pytest.approx(math.log(2), abs=1e-14)
    zero = GeometricTailSequence(0.0, 0.5)
    p = 0.7
    assert W.series_plain_log(zero, 3.0, p, 4).log_value == pytest.approx(
        math.log(math.exp(p) / math.expm1(p)), abs=1e-14)
    # sum_{j>=1} j x^j = x / (1-x)^2
    x = math.exp(-p)
    assert W.series_counted_log(zero, 1.0, p, 1).log_value == pytest.approx(math.log(x / (1 - x) ** 2), abs=1e-13)
    for beta in (10.0, 20.0, 50.0):
        pr = W.pressure_w(F.w1(), beta)
        assert W.series_plain_log(seq, beta, pr, 1).tail_bound <= 1e-12
        assert W.series_counted_log(F.w1().c_seq, beta, pr, 3).tail_bound <= 1e-12


def test_shifted_weight_relation():
    seq, beta, p = F.w1().a_seq, 3.0, 0.2
    shifted = W.series_counted_log(seq, beta, p, 1, "shifted").log_value
    run = W.series_counted_log(seq, beta, p, 1).log_value
    assert shifted == pytest.approx(p + run, abs=1e-13)


def test_series_argument_checks():
    seq = F.w1().a_seq
    with pytest.raises(ValueError):
        W.series_plain_log(seq, 1.0, 0.0, 1)
    with pytest.raises(ValueError):
        W.series_counted_log(seq, 1.0, -1.0, 1)
    with pytest.raises(ValueError):
        W.series_counted_log(seq, 1.0, 0.3, 1, "other")


# -- pressure

@pytest.mark.parametrize("f", ALL_W)
def test_pressure_at_zero_and_bounds(f):
    assert W.pressure_w(f, 0.0) == pytest.approx(math.log(2), abs=1e-14)
    for beta in (0.5, 5.0, 30.0):
        assert 0 < W.pressure_w(f, beta) < math.log(2)


@pytest.mark.parametrize("f", ALL_W)
@pytest.mark.parametrize("beta", [0.5, 1, 2, 5, 10, 20, 50])
def test_consistency_residual(f, beta):
    p = W.pressure_w(f, beta)
    assert abs(W.consistency_residual(f, beta, p)) <= 1e-12 * max(1.0, beta)


def test_pressure_slopes():
    assert slope(lambda b: math.log(W.pressure_w(F.w1(), b))) == pytest.approx(-0.7, abs=0.01)
    assert slope(lambda b: math.log(W.pressure_w(F.w2(), b))) == pytest.approx(-1.5, abs=0.01)
    assert slope(lambda b: math.log(W.pressure_w(F.w1_mirror(), b))) == pytest.approx(-0.7, abs=0.01)


def test_negative_beta_rejected():
    with pytest.raises(ValueError):
        W.pressure_w(F.w1(), -1.0)


# -- eigenfunction

def test_eigenfunction_examples():
    f = F.w1()
    assert W.eigenfunction_w(f, 7.0, ZERO_FIX) == 0.0
    for cls in classes(6):
        assert W.eigenfunction_w(f, 0.0, cls) == pytest.approx(0.0, abs=1e-14)
    assert slope(lambda b: W.eigenfunction_w(f, b, zero_run(1))) == pytest.approx(-0.7, abs=0.02)


@pytest.mark.parametrize("f", ALL_W)
@pytest.mark.parametrize("beta", [0.7, 3.0, 12.0])
def test_eigen_equation_at_every_class(f, beta):
    # lambda H(x) = H(0x) e^{beta f(0x)} + H(1x) e^{beta f(1x)}
    lam = W.pressure_w(f, beta)
    for x in [P("(0)"), P("(1)"), P("0(1)"), P("000(1)"), P("11(0)"), P("1(0)")]:
        lhs = lam + W.log_h_point(f, beta, x)
        rhs = logsumexp([beta * eval_walters(f, EPPoint((a,) + x.pre, x.period))
                         + W.log_h_point(f, beta, EPPoint((a,) + x.pre, x.period)) for a in (0, 1)])
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_eigenfunction_matches_transfer():
    f, beta, k = F.w1(), 2.0, 12
    pot = project(f, k + 1)
    S = T.spectral(pot, beta, k)
    ref = S.log_h[0]     # state 0^k carries H(0^inf) = 1 up to the depth error
    for word in [(0,) * k, (1,) * k, (0,) + (1,) * (k - 1), (1, 1, 0) + (0,) * (k - 3)]:
        cls = classify(EPPoint(word, (word[-1],)))
        got = S.log_h[state_of(f.space, word)] - ref
        assert got == pytest.approx(W.eigenfunction_w(f, beta, cls), abs=4 * beta * pot.variation_bound)


# -- S values and run-cylinder masses

def test_s_values_at_zero_temperature_infinity():
    sv = W.s_values(F.w1(), 0.0)
    assert math.exp(sv.log_S0) == pytest.approx(2.0, rel=1e-13)
    assert math.exp(sv.log_S1) == pytest.approx(2.0, rel=1e-13)
    assert W.mu_w(F.w1(), 0.0, (0, 1)) == pytest.approx(math.log(0.25), abs=1e-13)


def test_s_value_slopes():
    f = F.w1()
    assert slope(lambda b: W.s_values(f, b).log_S0) == pytest.approx(0.4, abs=0.02)
    assert slope(lambda b: W.s_values(f, b).log_S1) == pytest.approx(0.7, abs=0.02)
    assert slope(lambda b: W.s_values(f, b, [12]).log_S0n[12]) == pytest.approx(0.4, abs=0.02)
    lim = W.s_limits(f, 12)
    assert (lim["S0"], lim["S1"], lim["S0n"]) == pytest.approx((0.4, 0.7, 0.4), abs=1e-12)


@pytest.mark.parametrize("f", ALL_W)
@pytest.mark.parametrize("beta", [0.0, 1.0, 8.0, 40.0])
def test_mu_probability_and_run_decomposition(f, beta):
    assert np.logaddexp(W.mu_w(f, beta, (0,)), W.mu_w(f, beta, (1,))) == pytest.approx(0.0, abs=1e-12)
    assert W.mu_w(f, beta, (0, 1)) == pytest.approx(W.mu_w(f, beta, (1, 0)), abs=1e-12)
    for sym in (0, 1):
        # mu([s^n]) = mu([s^{n+1}]) + mu([s^n (1-s)])
        for n in (1, 3, 6):
            lhs = W.mu_w(f, beta, (sym,) * n)
            rhs = np.logaddexp(W.mu_w(f, beta, (sym,) * (n + 1)), W.mu_w(f, beta, (sym,) * n + (1 - sym,)))
            assert lhs == pytest.approx(rhs, abs=1e-10)


@pytest.mark.parametrize("f", ALL_W)
@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_mu_is_the_sum_over_run_cylinders(f, beta):
    # the terms decay like e^{-jP}; at these temperatures 400 terms suffice
    for sym in (0, 1):
        parts = [W.mu_w(f, beta, (sym,) * j + (1 - sym,)) for j in range(1, 400)]
        assert math.exp(W.mu_w(f, beta, (sym,))) == pytest.approx(math.exp(logsumexp(parts)), abs=1e-10)


def test_mu_slopes():
    f = F.w1()
    for n in (2, 4, 8):
        assert slope(lambda b: W.mu_w(f, b, (0,) * n)) == pytest.approx(-0.3, abs=0.01)
        assert slope(lambda b: W.mu_w(f, b, (1,) * n)) == pytest.approx(0.0, abs=0.01)


def test_unsupported_cylinders():
    with pytest.raises(W.UnsupportedCylinder):
        W.mu_w(F.w1(), 1.0, (0, 1, 0))
    with pytest.raises(W.UnsupportedCylinder):
        W.nu_w(F.w1(), 1.0, (0, 1))
    with pytest.raises(W.UnsupportedCylinder):
        W.mu_w(F.w1(), 1.0, ())


@pytest.mark.parametrize("beta", [1.0, 4.0])
def test_masses_match_transfer(beta):
    f, k = F.w1(), 14
    S = T.spectral(project(f, k + 1), beta, k)
    bound = beta * 2.0 ** (-k + 3) + 1e-6
    for sym in (0, 1):
        for n in range(1, 7):
            w = (sym,) * n
            assert abs(T.gibbs_log_measure(S, w) - W.mu_w(f, beta, w)) <= bound
            assert abs(T.eigenmeasure_log(S, w) - W.nu_w(f, beta, w)) <= bound
            w = (sym,) * n + (1 - sym,)
            assert abs(T.gibbs_log_measure(S, w) - W.mu_w(f, beta, w)) <= bound


# -- limits

def test_limit_A_examples():
    assert W.limit_A(F.w1()) == pytest.approx(-0.7, abs=1e-15)
    assert W.limit_A(F.w2()) == pytest.approx(-1.5, abs=1e-15)
    assert W.limit_A(F.w1_mirror()) == pytest.approx(-0.7, abs=1e-15)


def test_limit_U_examples():
    f = F.w1()
    got = [W.limit_U(f, c) for c in (zero_run(1), zero_run(2), one_run(1), ONE_FIX)]
    assert got == pytest.approx([-0.7, -0.5, -0.6, -0.1], abs=1e-15)
    assert W.limit_U(f, ZERO_FIX) == 0.0
    assert W.limit_U(F.w2(), ONE_FIX) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("f", ALL_W)
def test_general_U_reproduces_regime_displays(f):
    for cls in classes(20):
        assert W.limit_U(f, cls) == pytest.approx(W.regime_U(f, cls), abs=1e-15)


@pytest.mark.parametrize("f", ALL_W)
def test_U_is_the_slope_of_log_H(f):
    for cls in (one_run(1), zero_run(3), ONE_FIX, one_run(2)):
        assert slope(lambda b: W.eigenfunction_w(f, b, cls)) == pytest.approx(W.limit_U(f, cls), abs=0.02)


@pytest.mark.parametrize("f", ALL_W)
def test_U_is_calibrated(f):
    assert W.calibration_defect(f, 40) == pytest.approx(0.0, abs=1e-15)
    assert W.calibration_defect(f, 40, {zero_run(3): 0.01}) == pytest.approx(0.01, abs=1e-12)


def test_regimes():
    assert W.regime(F.w1()) == W.WaltersRegime.A_LESS_C_SIDE
    assert W.regime(F.w1_mirror()) == W.WaltersRegime.C_LESS_A_SIDE
    assert W.regime(F.w2()) == W.WaltersRegime.SYMMETRIC
    edge = WaltersPotential(-0.25, -0.25, GeometricTailSequence(-2.0, 0.5), GeometricTailSequence(-1.0, 0.5))
    assert W.regime(edge) == W.WaltersRegime.BOUNDARY
    with pytest.raises(W.UnsupportedRegime):
        W.deviation_w(edge, P("(0)"))
    with pytest.raises(W.UnsupportedRegime):
        W.regime_U(edge, ONE_FIX)


# -- deviation function

def test_deviation_examples():
    f = F.w1()
    assert W.deviation_w(f, P("(0)")) == pytest.approx(0.3, abs=1e-15)
    assert W.deviation_w(f, P("(1)")) == 0.0
    assert W.deviation_w(f, P("0(1)")) == pytest.approx(0.7, abs=1e-15)
    assert W.deviation_w(f, P("00(1)")) == pytest.approx(1.0, abs=1e-15)
    assert W.deviation_w(f, P("(01)")) == math.inf
    g = F.w2()
    assert W.deviation_w(g, P("(0)")) == 0.0 and W.deviation_w(g, P("(1)")) == 0.0
    assert W.deviation_w(g, P("(01)")) == math.inf
    assert W.deviation_w(F.w1_mirror(), P("(1)")) == pytest.approx(0.3, abs=1e-15)


def test_r_plus_examples():
    f = F.w1()
    assert W.r_plus_w(f, P("0(1)")) == pytest.approx(0.7, abs=1e-15)
    assert W.r_plus_infinity_w(f, P("(01)")) == math.inf
    assert W.r_plus_infinity_w(f, P("00(1)")) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("f", ALL_W)
def test_deviation_identities(f):
    rng = np.random.default_rng(0)
    for _ in range(200):
        pre = tuple(int(v) for v in rng.integers(0, 2, rng.integers(0, 9)))
        period = [(0,), (1,), (0, 1), (0, 0, 1)][rng.integers(0, 4)]
        p = EPPoint(pre, period)
        I, Is = W.deviation_w(f, p), W.deviation_w(f, shift(p))
        assert W.r_plus_w(f, p) >= -1e-15
        assert I >= 0 and I >= Is - 1e-12
        if math.isfinite(I):
            assert I - Is == pytest.approx(W.r_plus_w(f, p), abs=1e-12)
        rinf = W.r_plus_infinity_w(f, p)
        assert I >= rinf - 1e-12
        if W.regime(f) == W.WaltersRegime.SYMMETRIC:
            assert I == rinf or I == pytest.approx(rinf, abs=1e-12)


def test_normalized_potential_table():
    f, beta, k = F.w1(), 3.0, 10
    g = W.g_table(f, beta, k)
    pot = project(f, k + 1)
    M = T.build_transfer(pot, beta, k)
    # closed-form weights are normalized up to the depth error
    assert T.normalization_residual(M, g) <= 4 * beta * pot.variation_bound
    assert W.g_w(f, beta, P("0(1)")) == pytest.approx(
        beta * -0.1 + W.eigenfunction_w(f, beta, zero_run(1)) - W.eigenfunction_w(f, beta, ONE_FIX)
        - W.pressure_w(f, beta), abs=1e-14)


def test_nu_ratio_is_H_at_one_fix():
    f, beta = F.w1(), 6.0
    log_ratio = W.nu_w(f, beta, (0,)) - W.nu_w(f, beta, (1,))
    assert log_ratio == pytest.approx(W.eigenfunction_w(f, beta, ONE_FIX), abs=1e-13)
    assert np.logaddexp(W.nu_w(f, beta, (0,)), W.nu_w(f, beta, (1,))) == pytest.approx(0.0, abs=1e-13)
