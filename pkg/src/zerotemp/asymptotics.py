"""Beta sweeps and rate extraction.

Rates are slopes of ``log Q(beta) = s beta + c`` fitted on the top part of a
beta grid.  Finite-beta data comes from one of two sources: the closed forms
(``WaltersSource``) or depth-k transfer matrices (``TransferSource``).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import transfer, walters
from .potential import LocallyConstantPotential, PointClass, WaltersPotential, classify, project
from .shift_space import EPPoint, point_edges, shift, state_of

Word = Tuple[int, ...]
CONVERGENCE_STEP = 0.01


@dataclass(frozen=True)
class BetaGrid:
    values: Tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 4:
            raise ValueError(f"beta grid needs at least 4 points, got {len(vals)}")
        if vals[0] <= 0 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("beta grid must be positive and strictly increasing")
        if vals[-1] / vals[0] < 2:
            raise ValueError("beta grid must span a factor of at least 2")

    @classmethod
    def linspace(cls, start: float, stop: float, count: int) -> "BetaGrid":
        return cls(tuple(np.linspace(start, stop, int(count))))

    @classmethod
    def parse(cls, text: str) -> "BetaGrid":
        """``"start:stop:count"``."""
        try:
            start, stop, count = text.split(":")
            return cls.linspace(float(start), float(stop), int(count))
        except ValueError as exc:
            raise ValueError(f"bad grid {text!r}: {exc}") from exc

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)


WALTERS_GRID = BetaGrid.linspace(20.0, 50.0, 16)
# Transfer spectra stay accurate while the subdominant gap exceeds ~1e-10.
TRANSFER_GRID = BetaGrid.linspace(15.0, 30.0, 8)
TRANSFER_DEPTH = 14


@dataclass(frozen=True)
class SweepTable:
    grid: BetaGrid
    log_values: Tuple[float, ...]
    label: str = ""


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual_rms: float
    window: float
    n_points: int


class SweepError(RuntimeError):
    pass


def sweep(evaluator: Callable[[float], float], grid: BetaGrid, label: str = "") -> SweepTable:
    vals = []
    for b in grid:
        try:
            v = float(evaluator(b))
        except Exception as exc:
            raise SweepError(f"{label or 'evaluator'} failed at beta = {b}: {exc}") from exc
        if not math.isfinite(v):
            raise SweepError(f"{label or 'evaluator'} returned {v} at beta = {b}")
        vals.append(v)
    return SweepTable(grid, tuple(vals), label)


def fit_rate(t: SweepTable, window: float = 0.5) -> SlopeFit:
    """Least-squares line through the top ``window`` fraction of the grid."""
    n = len(t.grid)
    m = int(math.ceil(window * n))
    if m < 3:
        raise ValueError(f"fit window holds {m} points; at least 3 required")
    x = np.asarray(t.grid.values[-m:])
    y = np.asarray(t.log_values[-m:])
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    return SlopeFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))), window, m)


# ------------------------------------------------------------------ sources

class WaltersSource:
    """Closed-form finite-beta data; only run cylinders are available."""

    name = "walters"

    def __init__(self, f: WaltersPotential):
        self.f = f

    def log_mu(self, beta: float, word: Word) -> float:
        return walters.mu_w(self.f, beta, word)

    def log_nu(self, beta: float, word: Word) -> float:
        return walters.nu_w(self.f, beta, word)

    def log_h(self, beta: float, target) -> float:
        cls = classify(target) if isinstance(target, EPPoint) else target
        return walters.eigenfunction_w(self.f, beta, cls)

    def g_at(self, beta: float, p: EPPoint) -> float:
        return walters.g_w(self.f, beta, p)


class TransferSource:
    """Depth-k transfer data, one spectral solve per beta (cached)."""

    name = "transfer"

    def __init__(self, f: Union[WaltersPotential, LocallyConstantPotential], k: int = TRANSFER_DEPTH):
        self.k = k
        self.potential = project(f, k + 1) if isinstance(f, WaltersPotential) else f
        self._cache: Dict[float, tuple] = {}

    def data(self, beta: float):
        beta = float(beta)
        if beta not in self._cache:
            T = transfer.build_transfer(self.potential, beta, self.k)
            self._cache[beta] = (T, transfer.leading_spectral(T))
        return self._cache[beta]

    def log_mu(self, beta: float, word: Word) -> float:
        return transfer.gibbs_log_measure(self.data(beta)[1], word)

    def log_nu(self, beta: float, word: Word) -> float:
        return transfer.eigenmeasure_log(self.data(beta)[1], word)

    def _state(self, target) -> int:
        word = target.head(self.k) if isinstance(target, EPPoint) else tuple(target)
        return state_of(self.potential.space, word)

    def log_h(self, beta: float, target) -> float:
        return float(self.data(beta)[1].log_h[self._state(target)])

    def g_at(self, beta: float, p: EPPoint) -> float:
        T, S = self.data(beta)
        e = point_edges(self.potential.space, self.k, p, 1)[0]
        return float(transfer.normalized_log_potential(S, T)[e])


Source = Union[WaltersSource, TransferSource]


def make_source(f, kind: str, k: int = TRANSFER_DEPTH) -> Source:
    if kind == "walters":
        if not isinstance(f, WaltersPotential):
            raise ValueError("the walters source needs a run-class potential")
        return WaltersSource(f)
    if kind == "transfer":
        return TransferSource(f, k)
    raise ValueError(f"unknown source {kind!r}")


def default_grid(source: Source) -> BetaGrid:
    return WALTERS_GRID if isinstance(source, WaltersSource) else TRANSFER_GRID


# --------------------------------------------------------------- estimators

@dataclass(frozen=True)
class DeviationEstimate:
    """Rates ``-slope log mu([x_1...x_n])`` for ``n = 1..n_max``; the last one estimates ``I``."""

    target: str
    n_values: Tuple[int, ...]
    rates: Tuple[float, ...]
    fits: Tuple[SlopeFit, ...]
    value: float
    converged: bool
    source: str


def _family(target) -> Tuple[str, Callable[[int], Word]]:
    if isinstance(target, EPPoint):
        return str(target), target.head
    if callable(target):
        return getattr(target, "__name__", "family"), target
    word = tuple(target)
    return "[" + "".join(map(str, word)) + "]", lambda n: word[:n]


def estimate_I(source: Source, target, n_max: int = 10, grid: Optional[BetaGrid] = None,
               window: float = 0.5, n_min: int = 1) -> DeviationEstimate:
    """Per-n rates of the cylinders around ``target`` (an EPPoint or a word family)."""
    grid = grid or default_grid(source)
    label, head = _family(target)
    ns, rates, fits = [], [], []
    for n in range(n_min, n_max + 1):
        word = tuple(head(n))
        fit = fit_rate(sweep(lambda b: source.log_mu(b, word), grid, f"log mu{list(word)}"), window)
        ns.append(n)
        rates.append(-fit.slope)
        fits.append(fit)
    # a period-q target can climb in steps every q symbols, so look back q + 1 rates
    span = len(target.period) + 1 if isinstance(target, EPPoint) else 2
    tail = rates[-span:]
    converged = len(rates) >= span and max(tail) - min(tail) < CONVERGENCE_STEP
    return DeviationEstimate(label, tuple(ns), tuple(rates), tuple(fits), rates[-1], converged, source.name)


def estimate_V(source: Source, target, grid: Optional[BetaGrid] = None, reference=None,
               window: float = 0.5) -> SlopeFit:
    """Slope of ``log h_beta`` at ``target`` (minus that at ``reference`` if given)."""
    grid = grid or default_grid(source)

    def ev(b):
        v = source.log_h(b, target)
        return v - source.log_h(b, reference) if reference is not None else v

    return fit_rate(sweep(ev, grid, "log h"), window)


def estimate_R_plus(source: Source, p: EPPoint, grid: Optional[BetaGrid] = None,
                    window: float = 0.5) -> SlopeFit:
    """Slope of ``-g_beta`` at ``p``: estimates ``R+(p)``."""
    grid = grid or default_grid(source)
    return fit_rate(sweep(lambda b: -source.g_at(b, p), grid, f"-g at {p}"), window)


# -------------------------------------------------------- identity checks

def candidate_points(max_runs: int = 3, max_run_length: int = 8) -> List[EPPoint]:
    """Points whose preperiod has at most ``max_runs`` runs, ending in 0^inf or 1^inf."""
    out = {EPPoint((), (0,)), EPPoint((), (1,))}
    lengths = range(1, max_run_length + 1)
    for m in range(1, max_runs + 1):
        for first in (0, 1):
            for runs in itertools.product(lengths, repeat=m):
                pre = []
                for i, r in enumerate(runs):
                    pre.extend([(first + i) % 2] * r)
                tail = (first + m) % 2
                out.add(EPPoint(tuple(pre), (tail,)))
    return sorted(out, key=lambda p: (len(p.pre), p.pre, p.period))


def nu_rate_target(f: WaltersPotential, word: Word, max_runs: int = 3,
                   max_run_length: Optional[int] = None) -> Tuple[float, float]:
    """``(-(inf over [word] of (I+U) - inf over X of (I+U)), inf over X)`` by enumeration."""
    word = tuple(word)
    L = max_run_length or max(len(word) + 3, 8)
    best_all, best_in = math.inf, math.inf
    for p in candidate_points(max_runs, L):
        v = walters.deviation_w(f, p) + walters.limit_U(f, classify(p))
        best_all = min(best_all, v)
        if p.head(len(word)) == word:
            best_in = min(best_in, v)
    return -(best_in - best_all), best_all


@dataclass(frozen=True)
class LdpCheck:
    word: Word
    fit: SlopeFit
    target: float
    inf_total: float
    error: float


def check_ldp_nu(f: WaltersPotential, word: Word, source: Optional[Source] = None,
                 grid: Optional[BetaGrid] = None, window: float = 0.5, max_runs: int = 3) -> LdpCheck:
    """Compare the slope of ``log nu_beta([word])`` with ``-(inf_[word](I+U) - inf_X(I+U))``."""
    source = source or WaltersSource(f)
    grid = grid or default_grid(source)
    word = tuple(word)
    fit = fit_rate(sweep(lambda b: source.log_nu(b, word), grid, f"log nu{list(word)}"), window)
    target, total = nu_rate_target(f, word, max_runs)
    return LdpCheck(word, fit, target, total, abs(fit.slope - target))


@dataclass(frozen=True)
class RelationRecord:
    point: str
    I: float
    R_plus: float
    I_shift: float
    residual: float
    passed: bool


def check_relation_I_R(source: Source, points: Sequence[EPPoint], grid: Optional[BetaGrid] = None,
                       n_max: int = 10, threshold: float = 0.05) -> List[RelationRecord]:
    """``|I(p) - R+(p) - I(sigma p)|`` from three independent estimates per point."""
    out = []
    for p in points:
        i_p = estimate_I(source, p, n_max, grid).value
        r_p = estimate_R_plus(source, p, grid).slope
        i_s = estimate_I(source, shift(p), n_max, grid).value
        res = abs(i_p - r_p - i_s)
        out.append(RelationRecord(str(p), i_p, r_p, i_s, res, res <= threshold))
    return out
