"""Closed forms for the binary run-class potentials.

Everything here is exact up to floating point: pressure from a scalar
consistency equation, the eigenfunction ``H = h / h(0^inf)`` as series in
``e^{-P}``, Gibbs masses of run cylinders, and the zero-temperature limits
(``A``, ``U``, ``R+``, ``I``).  Series are summed explicitly until the
sequence tail is negligible and closed with exact geometric or
arithmetico-geometric remainders, so ``P`` of order ``e^{-35}`` costs a few
dozen terms.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from . import ergodic_opt
from .potential import (
    ONE_FIX, ZERO_FIX, ClassKind, GeometricTailSequence, PointClass, WaltersPotential,
    classify, one_run, run_lengths, walters_on_words, zero_run,
)
from .shift_space import EPPoint, edge_structure, shift, word_array

# Explicit terms continue until beta * |remaining tail of the sequence| <= this.
SERIES_DELTA = 1e-13
MAX_TERMS = 1_000_000
BOUNDARY_TOL = 1e-12


class UnsupportedRegime(ValueError):
    """Raised on the boundary between regimes, where no deviation formula is available."""


class UnsupportedCylinder(ValueError):
    """Raised for cylinder shapes without a closed form here."""


class WaltersRegime(enum.Enum):
    A_LESS_C_SIDE = "AsymALessCSide"      # sum a < b + d + sum c
    C_LESS_A_SIDE = "AsymCLessASide"      # sum c < b + d + sum a
    SYMMETRIC = "Symmetric"               # both reverse inequalities strict
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class SeriesValue:
    log_value: float
    terms_used: int
    tail_bound: float


def _log_one_minus_exp_neg(p: float) -> float:
    """``log(1 - e^{-p})`` without cancellation."""
    return math.log(-math.expm1(-p))


def _cutoff(seq: GeometricTailSequence, beta: float, base: int, jmin: int) -> int:
    J = max(jmin, seq.tail_start - base, 1)
    while beta * abs(seq.tail_sum(base + J)) > SERIES_DELTA:
        J += 1
        if J > MAX_TERMS:
            raise ArithmeticError("series cutoff not reached; tail decays too slowly")
    return J


def _partials(seq: GeometricTailSequence, lo: int, count: int) -> np.ndarray:
    """Cumulative sums ``s_lo, s_lo + s_{lo+1}, ...`` (``count`` entries)."""
    return np.cumsum(seq.values(np.arange(lo, lo + count)))


def _finish(log_terms: list, closure: float, drift: float, J: int) -> SeriesValue:
    total = float(logsumexp(log_terms + [closure]))
    bound = math.expm1(drift) * math.exp(closure - total)
    return SeriesValue(total, J, bound)


def series_plain_log(seq: GeometricTailSequence, beta: float, p: float, q: int) -> SeriesValue:
    """``log(1 + sum_{j>=1} exp(beta (s_{q+1} + ... + s_{q+j}) - j p))``."""
    if not p > 0:
        raise ValueError(f"series needs p > 0, got {p}")
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    J = _cutoff(seq, beta, q, 1)
    j = np.arange(1, J + 1)
    terms = beta * _partials(seq, q + 1, J) - j * p
    s_inf = seq.tail_sum(q)
    closure = beta * s_inf - J * p - math.log(math.expm1(p))
    drift = beta * abs(seq.tail_sum(q + J))
    return _finish([0.0] + terms.tolist(), closure, drift, J)


def series_counted_log(seq: GeometricTailSequence, beta: float, p: float, n: int,
                       weight: str = "run") -> SeriesValue:
    """Weighted series of the run-cylinder masses.

    ``weight="run"``: ``log sum_{j>=n} (j-n+1) exp(beta (s_2+...+s_j) - j p)``.
    ``weight="shifted"``: ``log(1 + sum_{j>=1} (j+1) exp(beta (s_2+...+s_{1+j}) - j p))``
    (``n`` is ignored); it equals ``p`` plus the ``run`` value at ``n = 1``,
    which the tests use as a cross-check.
    """
    if not p > 0:
        raise ValueError(f"series needs p > 0, got {p}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    s_inf = seq.tail_sum(1)
    log1mx = _log_one_minus_exp_neg(p)
    if weight == "run":
        J = _cutoff(seq, beta, 0, n)
        j = np.arange(n, J + 1)
        partial = np.concatenate([[0.0], _partials(seq, 2, J - 1)])[j - 1]
        terms = np.log(j - n + 1.0) + beta * partial - j * p
        bracket = np.logaddexp(math.log(J + 2.0 - n) - log1mx, -p - 2 * log1mx)
        closure = beta * s_inf - (J + 1) * p + float(bracket)
        drift = beta * abs(seq.tail_sum(J))
        return _finish(terms.tolist(), closure, drift, J)
    if weight == "shifted":
        J = _cutoff(seq, beta, 1, 1)
        j = np.arange(1, J + 1)
        terms = np.log(j + 1.0) + beta * _partials(seq, 2, J) - j * p
        bracket = np.logaddexp(math.log(J + 2.0) - log1mx, -p - 2 * log1mx)
        closure = beta * s_inf - (J + 1) * p + float(bracket)
        drift = beta * abs(seq.tail_sum(1 + J))
        return _finish([0.0] + terms.tolist(), closure, drift, J)
    raise ValueError(f"unknown weight mode {weight!r}")


def _plain(seq, beta, p, q) -> float:
    return series_plain_log(seq, beta, p, q).log_value


def consistency_residual(f: WaltersPotential, beta: float, p: float) -> float:
    """``2p - beta (b+d) - log(1+Sigma_a) - log(1+Sigma_c)``; increasing in ``p``."""
    return (2 * p - beta * (f.coeff_b + f.coeff_d)
            - _plain(f.a_seq, beta, p, 1) - _plain(f.c_seq, beta, p, 1))


@lru_cache(maxsize=8192)
def _pressure(f: WaltersPotential, beta: float) -> float:
    if beta == 0:
        return math.log(2.0)
    hi = math.log(math.log(2.0))

    def resid(u):
        return consistency_residual(f, beta, math.exp(u))

    if resid(hi) <= 0:
        raise ArithmeticError(f"pressure: no sign change at p = log 2 for beta = {beta}")
    lo, step = hi - 1.0, 1.0
    while resid(lo) >= 0:
        step *= 2
        lo = hi - step
        if lo < -700:
            raise ArithmeticError(f"pressure: no bracket found for beta = {beta}")
    u = brentq(resid, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(u)


def pressure_w(f: WaltersPotential, beta: float) -> float:
    """Pressure ``P(beta f)`` from the consistency equation, bracketed in ``log p``."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return _pressure(f, float(beta))


def eigenfunction_w(f: WaltersPotential, beta: float, cls: PointClass) -> float:
    """``log H_beta`` on a run class, ``H_beta(0^inf) = 1``."""
    p = pressure_w(f, beta)
    if cls == ZERO_FIX:
        return 0.0
    log_h1 = beta * f.coeff_b - p + _plain(f.a_seq, beta, p, 1)
    if cls == ONE_FIX:
        return log_h1
    if cls.kind == ClassKind.ZERO_RUN:
        return _log_one_minus_exp_neg(p) + _plain(f.a_seq, beta, p, cls.n)
    return log_h1 + _log_one_minus_exp_neg(p) + _plain(f.c_seq, beta, p, cls.n)


def log_h_point(f: WaltersPotential, beta: float, p: EPPoint) -> float:
    return eigenfunction_w(f, beta, classify(p))


@dataclass(frozen=True)
class SValues:
    log_S0: float
    log_S1: float
    log_S0n: Dict[int, float] = field(default_factory=dict)
    log_S1n: Dict[int, float] = field(default_factory=dict)

    @property
    def log_total(self) -> float:
        return float(np.logaddexp(self.log_S0, self.log_S1))


def _log_sn(seq, beta, p, n) -> float:
    return p + series_counted_log(seq, beta, p, n).log_value - _plain(seq, beta, p, 1)


def s_values(f: WaltersPotential, beta: float, ns: Iterable[int] = ()) -> SValues:
    p = pressure_w(f, beta)
    s0 = series_counted_log(f.a_seq, beta, p, 1, "shifted").log_value - _plain(f.a_seq, beta, p, 1)
    s1 = series_counted_log(f.c_seq, beta, p, 1, "shifted").log_value - _plain(f.c_seq, beta, p, 1)
    ns = sorted(set(int(n) for n in ns))
    return SValues(s0, s1,
                   {n: _log_sn(f.a_seq, beta, p, n) for n in ns},
                   {n: _log_sn(f.c_seq, beta, p, n) for n in ns})


def _run_shape(word) -> tuple:
    """``(symbol, run, closed)`` for 0^n / 1^n (closed False) or 0^j 1 / 1^j 0 (closed True)."""
    word = tuple(word)
    if not word or any(s not in (0, 1) for s in word):
        raise UnsupportedCylinder(f"cylinder {word} is not a binary word")
    a = word[0]
    if all(s == a for s in word):
        return a, len(word), False
    if all(s == a for s in word[:-1]) and word[-1] == 1 - a:
        return a, len(word) - 1, True
    raise UnsupportedCylinder(f"no closed form for cylinder {word}")


def mu_w(f: WaltersPotential, beta: float, word) -> float:
    """``log mu_beta`` of [0^n], [1^n], [0^j 1] or [1^j 0]."""
    sym, n, closed = _run_shape(word)
    seq = f.run_seq(sym)
    p = pressure_w(f, beta)
    sv = s_values(f, beta)
    if not closed:
        log_sn = _log_sn(seq, beta, p, n)
        return log_sn - sv.log_total
    return (-sv.log_total + beta * seq.partial_sum(2, n)
            + _plain(seq, beta, p, n) - _plain(seq, beta, p, 1) - (n - 1) * p)


def nu_w(f: WaltersPotential, beta: float, word) -> float:
    """``log nu_beta`` of [0^n] or [1^n] for the eigenmeasure with ``nu(X) = 1``.

    From ``d mu = h d nu``: ``nu([0]) / nu([1]) = H(1^inf)`` and
    ``nu([0^n]) = nu([0]) exp(beta (a_2+...+a_n) - (n-1) P) (1+Sigma_a(n)) / (1+Sigma_a(1))``.
    """
    sym, n, closed = _run_shape(word)
    if closed:
        raise UnsupportedCylinder("eigenmeasure closed form covers [0^n] and [1^n] only")
    seq = f.run_seq(sym)
    p = pressure_w(f, beta)
    log_h1 = eigenfunction_w(f, beta, ONE_FIX)
    log_first = (log_h1 if sym == 0 else 0.0) - float(np.logaddexp(0.0, log_h1))
    return (log_first + beta * seq.partial_sum(2, n) - (n - 1) * p
            + _plain(seq, beta, p, n) - _plain(seq, beta, p, 1))


# ---------------------------------------------------------------- limits

def regime(f: WaltersPotential, tol: float = BOUNDARY_TOL) -> WaltersRegime:
    bd = f.coeff_b + f.coeff_d
    g1 = bd + f.sum_c - f.sum_a
    g2 = bd + f.sum_a - f.sum_c
    if g1 > tol:
        return WaltersRegime.A_LESS_C_SIDE
    if g2 > tol:
        return WaltersRegime.C_LESS_A_SIDE
    if g1 < -tol and g2 < -tol:
        return WaltersRegime.SYMMETRIC
    return WaltersRegime.BOUNDARY


def limit_A(f: WaltersPotential) -> float:
    """``lim (1/beta) log P(beta f)``; the three cases agree where they overlap."""
    bd, sa, sc = f.coeff_b + f.coeff_d, f.sum_a, f.sum_c
    if sa <= bd + sc:
        return bd + sc
    if sc <= bd + sa:
        return bd + sa
    return 0.5 * (bd + sa + sc)


def limit_U(f: WaltersPotential, cls: PointClass) -> float:
    """``U = lim (1/beta) log H_beta`` on a run class."""
    A = limit_A(f)
    u1 = f.coeff_b + max(0.0, f.sum_a - A)
    if cls == ZERO_FIX:
        return 0.0
    if cls == ONE_FIX:
        return u1
    if cls.kind == ClassKind.ZERO_RUN:
        return A + max(0.0, f.a_seq.tail_sum(cls.n) - A)
    return u1 + A + max(0.0, f.c_seq.tail_sum(cls.n) - A)


def regime_U(f: WaltersPotential, cls: PointClass) -> float:
    """The regime-specific displays of ``U`` (used to cross-check ``limit_U``)."""
    reg = regime(f)
    bd, sa, sc = f.coeff_b + f.coeff_d, f.sum_a, f.sum_c
    if cls == ZERO_FIX:
        return 0.0
    if reg == WaltersRegime.A_LESS_C_SIDE:
        if cls == ONE_FIX:
            return f.coeff_b
        if cls.kind == ClassKind.ZERO_RUN:
            return max(bd + sc, f.a_seq.tail_sum(cls.n))
        return f.coeff_b + f.c_seq.tail_sum(cls.n)
    if reg == WaltersRegime.C_LESS_A_SIDE:
        if cls == ONE_FIX:
            return -f.coeff_d
        if cls.kind == ClassKind.ZERO_RUN:
            return f.a_seq.tail_sum(cls.n)
        return -f.coeff_d + max(bd + sa, f.c_seq.tail_sum(cls.n))
    if reg == WaltersRegime.SYMMETRIC:
        u1 = 0.5 * (f.coeff_b - f.coeff_d + sa - sc)
        if cls == ONE_FIX:
            return u1
        if cls.kind == ClassKind.ZERO_RUN:
            return f.a_seq.tail_sum(cls.n)
        return u1 + f.c_seq.tail_sum(cls.n)
    raise UnsupportedRegime("U displays are not defined on the regime boundary")


def s_limits(f: WaltersPotential, n: Optional[int] = None) -> dict:
    """Limits of ``(1/beta) log`` of ``S0``, ``S1`` (and ``S0^n``, ``S1^n`` if ``n`` given)."""
    A = limit_A(f)
    sa, sc = f.sum_a, f.sum_c
    out = {"S0": max(0.0, sa - 2 * A) - max(0.0, sa - A),
           "S1": max(0.0, sc - 2 * A) - max(0.0, sc - A)}
    if n is not None:
        out["S0n"] = max(f.a_seq.partial_sum(2, n), sa - 2 * A) - max(0.0, sa - A)
        out["S1n"] = max(f.c_seq.partial_sum(2, n), sc - 2 * A) - max(0.0, sc - A)
    return out


def fixed_point_deviation(f: WaltersPotential) -> tuple:
    """``(I(0^inf), I(1^inf))``."""
    reg = regime(f)
    bd = f.coeff_b + f.coeff_d
    if reg == WaltersRegime.A_LESS_C_SIDE:
        return bd + f.sum_c - f.sum_a, 0.0
    if reg == WaltersRegime.C_LESS_A_SIDE:
        return 0.0, bd + f.sum_a - f.sum_c
    if reg == WaltersRegime.SYMMETRIC:
        return 0.0, 0.0
    raise UnsupportedRegime(
        "deviation function unsupported on the regime boundary "
        f"(b+d+sum c - sum a = {bd + f.sum_c - f.sum_a:.3g}, "
        f"b+d+sum a - sum c = {bd + f.sum_a - f.sum_c:.3g})")


def r_plus_w(f: WaltersPotential, p: EPPoint) -> float:
    """``R+(p) = -f(p) - U(p) + U(sigma p)``."""
    c = classify(p)
    return -f.class_value(c) - limit_U(f, c) + limit_U(f, classify(shift(p)))


def r_plus_n_w(f: WaltersPotential, p: EPPoint, n: int) -> float:
    vals, q = [], p
    for _ in range(n):
        vals.append(r_plus_w(f, q))
        q = shift(q)
    return math.fsum(vals)


def r_plus_infinity_w(f: WaltersPotential, p: EPPoint, tol: float = 1e-12) -> float:
    tail = p.tail()
    if r_plus_n_w(f, tail, len(tail.period)) > tol:
        return math.inf
    return r_plus_n_w(f, p, len(p.pre))


def deviation_w(f: WaltersPotential, p: EPPoint) -> float:
    """Closed-form deviation function at an eventually periodic point."""
    i0, i1 = fixed_point_deviation(f)
    if len(p.period) > 1:
        return math.inf
    return r_plus_n_w(f, p, len(p.pre)) + (i0 if p.period[0] == 0 else i1)


def g_w(f: WaltersPotential, beta: float, p: EPPoint) -> float:
    """Normalized potential ``beta f + log H - log H o sigma - P`` at ``p``."""
    c = classify(p)
    return (beta * f.class_value(c) + eigenfunction_w(f, beta, c)
            - eigenfunction_w(f, beta, classify(shift(p))) - pressure_w(f, beta))


def _class_table(words: np.ndarray, value_of) -> np.ndarray:
    """Evaluate ``value_of(cls)`` at the representative ``w . last^inf`` of each row."""
    n = run_lengths(words)
    first = words[:, 0]
    k = words.shape[1]
    out = np.empty(len(words))
    cache = {}
    for sym in (0, 1):
        for length in np.unique(n[first == sym]):
            if length == k:
                cls = ZERO_FIX if sym == 0 else ONE_FIX
            else:
                cls = zero_run(int(length)) if sym == 0 else one_run(int(length))
            if cls not in cache:
                cache[cls] = value_of(cls)
            out[(first == sym) & (n == length)] = cache[cls]
    return out


def g_table(f: WaltersPotential, beta: float, k: int) -> np.ndarray:
    """Closed-form ``g_beta`` on the depth-``k`` edges, at representatives ``e . last^inf``."""
    es = edge_structure(f.space, k)
    logh_e = _class_table(es.words, lambda c: eigenfunction_w(f, beta, c))
    logh_t = _class_table(es.words[:, 1:], lambda c: eigenfunction_w(f, beta, c))
    return beta * walters_on_words(f, es.words) + logh_e - logh_t - pressure_w(f, beta)


def r_plus_table(f: WaltersPotential, k: int, u_shift: Optional[Dict[PointClass, float]] = None):
    """Subaction table whose R+ is the exact ``-f - U + U o sigma`` at edge representatives.

    ``V`` holds ``U`` at state representatives and ``m = 0``.  ``u_shift`` adds
    offsets to ``U`` on chosen classes (fault injection for validation).
    """
    shifts = u_shift or {}

    def u(cls):
        return limit_U(f, cls) + shifts.get(cls, 0.0)

    es = edge_structure(f.space, k)
    G = ergodic_opt.digraph_from_weights(es, walters_on_words(f, es.words))
    u_e = _class_table(es.words, u)
    u_t = _class_table(es.words[:, 1:], u)
    r = -G.weights - u_e + u_t
    V = _class_table(word_array(f.space, k), u)
    return ergodic_opt.from_edge_values(G, V, 0.0, r, source="walters")


def deviation_anchors(f: WaltersPotential, k: int) -> dict:
    """Anchors for the min-plus formula, keyed by the constant states."""
    i0, i1 = fixed_point_deviation(f)
    return {(0,) * k: i0, (1,) * k: i1}




def calibration_defect(f: WaltersPotential, max_run: int = 32,
                       u_shift: Optional[Dict[PointClass, float]] = None) -> float:
    """``max_c |max over preimages q of c of (f(q) + U(q) - U(c))|`` over run classes up to ``max_run``.

    The preimages of a class point are ``0p`` and ``1p``, whose classes are
    fixed by the class of ``p`` alone, so the check is exact.
    """
    shifts = u_shift or {}

    def u(cls):
        return limit_U(f, cls) + shifts.get(cls, 0.0)

    def prepend(sym, cls):
        if cls.is_fixed:
            if cls.symbol == sym:
                return cls
            return zero_run(1) if sym == 0 else one_run(1)
        if cls.symbol == sym:
            return zero_run(cls.n + 1) if sym == 0 else one_run(cls.n + 1)
        return zero_run(1) if sym == 0 else one_run(1)

    classes = [ZERO_FIX, ONE_FIX] + [c(n) for n in range(1, max_run + 1) for c in (zero_run, one_run)]
    worst = 0.0
    for cls in classes:
        best = max(f.class_value(q) + u(q) - u(cls) for q in (prepend(0, cls), prepend(1, cls)))
        worst = max(worst, abs(best))
    return worst
