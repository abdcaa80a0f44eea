"""Finite-temperature Gibbs data from depth-k transfer matrices, in log domain.

State ``w`` (a depth-k word) collects the branches ``a.w``; the edge ``a.w``
runs from state ``(a.w)[:k]`` to ``w`` with log-weight ``beta f(a.w)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import logsumexp

from .potential import LocallyConstantPotential
from .shift_space import EdgeStructure, ShiftSpace, edge_structure, prefix_mask, state_of, word_array

CONVERGENCE_TOL = 1e-13
MAX_ITER = 200_000
# Below this many states the warm start uses a dense eigensolver.
_DENSE_LIMIT = 512
# Smallest relative gap 1 - |lambda_2| / lambda_1 that double precision resolves.
MIN_RELATIVE_GAP = 1e-10


class SpectralConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    beta: float
    depth: int
    space: ShiftSpace
    edges: EdgeStructure
    log_weights: np.ndarray

    @property
    def n_states(self) -> int:
        return self.edges.n_states

    def incoming(self, state: int) -> list:
        """``(source state, log-weight)`` pairs of the branches entering ``state``."""
        es = self.edges
        ids = es.by_target[es.target_starts[state]: (es.target_starts[state + 1]
                                                     if state + 1 < es.n_states else es.n_edges)]
        return [(int(es.src[i]), float(self.log_weights[i])) for i in ids]


def build_transfer(f: LocallyConstantPotential, beta: float, k: int,
                   space: Optional[ShiftSpace] = None) -> TransferMatrix:
    space = space or f.space
    if space != f.space:
        raise ValueError("potential and transfer matrix must share the shift space")
    if f.depth > k + 1:
        raise ValueError(f"potential depth {f.depth} exceeds k+1 = {k + 1}; edge weights would not be exact")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    es = edge_structure(space, k)
    logw = float(beta) * f.values_on(es.words)
    logw.setflags(write=False)
    return TransferMatrix(float(beta), k, space, es, logw)


def transfer_from_log_weights(es: EdgeStructure, beta: float, log_weights: np.ndarray) -> TransferMatrix:
    logw = np.array(log_weights, dtype=float)
    logw.setflags(write=False)
    return TransferMatrix(float(beta), es.depth, es.space, es, logw)


def _seg_lse(values: np.ndarray, order: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-segment log-sum-exp of ``values[order]`` split at ``starts``."""
    v = values[order]
    mx = np.maximum.reduceat(v, starts)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    counts = np.diff(np.append(starts, len(v)))
    s = np.add.reduceat(np.exp(v - np.repeat(safe, counts)), starts)
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(mx), safe + np.log(s), mx)


def apply_log(T: TransferMatrix, log_phi: np.ndarray, log_weights: Optional[np.ndarray] = None) -> np.ndarray:
    """``log (L phi)`` with ``(L phi)(w) = sum over incoming edges of e^{weight} phi(source)``."""
    es = T.edges
    lw = T.log_weights if log_weights is None else log_weights
    return _seg_lse(lw + log_phi[es.src], es.by_target, es.target_starts)


def apply_dual_log(T: TransferMatrix, log_nu: np.ndarray) -> np.ndarray:
    """``log (L* nu)``: ``(L* nu)(s) = sum over outgoing edges of e^{weight} nu(target)``."""
    es = T.edges
    return _seg_lse(T.log_weights + log_nu[es.tgt], es.by_source, es.source_starts)


@dataclass(frozen=True, eq=False)
class SpectralData:
    log_lambda: float
    log_h: np.ndarray
    log_nu: np.ndarray
    log_mu: np.ndarray
    iterations: int
    residual: float
    space: ShiftSpace
    depth: int
    beta: float

    @property
    def pressure(self) -> float:
        return self.log_lambda


def _warm_start(T: TransferMatrix):
    """Linear-domain Perron vectors (max-shifted weights) as logs, plus ``|lambda_2| / lambda_1``."""
    es = T.edges
    n = es.n_states
    shift = float(np.max(T.log_weights))
    vals = np.exp(T.log_weights - shift)
    M = sp.csr_matrix((vals, (es.tgt, es.src)), shape=(n, n))
    floor = 1e-300
    if n <= _DENSE_LIMIT:
        w, vl, vr = scipy.linalg.eig(M.toarray(), left=True, right=True)
        order = np.argsort(-np.abs(w), kind="stable")
        i = int(np.argmax(w.real))
        h, nu = np.abs(vr[:, i].real), np.abs(vl[:, i].real)
        lam = np.abs(w[order])
    else:
        v0 = np.ones(n)
        ncv = min(n - 1, 40)
        lam_r, vr = spla.eigs(M, k=2, which="LM", v0=v0, tol=0, ncv=ncv)
        _, vl = spla.eigs(M.T.tocsr(), k=1, which="LM", v0=v0, tol=0, ncv=ncv)
        top = int(np.argmax(np.abs(lam_r)))
        h, nu = np.abs(vr[:, top].real), np.abs(vl[:, 0].real)
        lam = np.sort(np.abs(lam_r))[::-1]
    rho = float(lam[1] / lam[0]) if len(lam) > 1 and lam[0] > 0 else 0.0
    return np.log(np.maximum(h, floor)), np.log(np.maximum(nu, floor)), rho


def _power(step, x: np.ndarray, tol: float, max_iter: int, rho: float = 0.0):
    """Power iteration on centred log vectors.

    When the subdominant ratio ``rho`` is close to 1 the iterates drift along
    a single slow mode; once successive steps point the same way, the
    remaining geometric series ``step * rho / (1 - rho)`` is added in one go.
    """
    x = x - x.max()
    prev = None
    for it in range(1, max_iter + 1):
        y = step(x)
        y = y - y.max()
        d = y - x
        change = float(np.max(np.abs(d)))
        if change <= tol:
            return y, it
        if rho > 0.5 and prev is not None and it >= 8:
            cos = float(d @ prev) / (float(np.linalg.norm(d) * np.linalg.norm(prev)) or 1.0)
            if cos > 1 - 1e-4:
                y = y + d * (rho / (1.0 - rho))
                y = y - y.max()
                prev = None
                x = y
                continue
        prev = d
        x = y
    raise SpectralConvergenceError(
        f"power iteration did not converge in {max_iter} steps (last change {change:.3g}); "
        "the transition graph may be reducible or periodic")


def leading_spectral(T: TransferMatrix, warm_start: bool = True, max_iter: int = MAX_ITER) -> SpectralData:
    """Perron eigen-data by log-domain power iteration on ``L`` and ``L*``.

    With ``warm_start`` the iteration is seeded by a linear-domain
    eigensolver; the iteration then only polishes, which matters when the
    spectral gap is tiny (large beta).  Without it the start is the constant
    function 1 (all-zero logs).
    """
    n = T.n_states
    if warm_start:
        h0, nu0, rho = _warm_start(T)
        if 1.0 - rho < MIN_RELATIVE_GAP:
            raise SpectralConvergenceError(
                f"subdominant gap {1.0 - rho:.2e} at beta = {T.beta} is below double precision; "
                "use a smaller beta")
    else:
        h0, nu0, rho = np.zeros(n), np.zeros(n), 0.0
    scale = max(1.0, float(np.max(np.abs(T.log_weights))))
    tol = CONVERGENCE_TOL * scale
    log_h, it_h = _power(lambda x: apply_log(T, x), h0, tol, max_iter, rho)
    log_nu, it_nu = _power(lambda x: apply_dual_log(T, x), nu0, tol, max_iter, rho)
    Lh = apply_log(T, log_h)
    log_lambda = float(logsumexp(log_nu + Lh) - logsumexp(log_nu + log_h))
    residual = float(np.max(np.abs(Lh - log_lambda - log_h)))
    log_nu = log_nu - logsumexp(log_nu)
    log_h = log_h - logsumexp(log_h + log_nu)
    log_mu = log_h + log_nu
    log_mu = log_mu - logsumexp(log_mu)
    for arr in (log_h, log_nu, log_mu):
        arr.setflags(write=False)
    return SpectralData(log_lambda, log_h, log_nu, log_mu, max(it_h, it_nu), residual,
                        T.space, T.depth, T.beta)


def spectral(f: LocallyConstantPotential, beta: float, k: int, warm_start: bool = True) -> SpectralData:
    return leading_spectral(build_transfer(f, beta, k), warm_start=warm_start)


def _cylinder_lse(S: SpectralData, values: np.ndarray, w: Sequence[int]) -> float:
    if len(w) > S.depth:
        raise ValueError(f"cylinder length {len(w)} exceeds depth {S.depth}")
    mask = prefix_mask(S.space, S.depth, w)
    if not mask.any():
        return -math.inf
    return float(logsumexp(values[mask]))


def gibbs_log_measure(S: SpectralData, w: Sequence[int]) -> float:
    """``log mu_beta([w])``."""
    return _cylinder_lse(S, S.log_mu, w)


def eigenmeasure_log(S: SpectralData, w: Sequence[int]) -> float:
    """``log nu_beta([w])``."""
    return _cylinder_lse(S, S.log_nu, w)


def normalized_log_potential(S: SpectralData, T: TransferMatrix) -> np.ndarray:
    """``g = beta f + log h(source) - log h(target) - P`` per edge."""
    es = T.edges
    g = T.log_weights + S.log_h[es.src] - S.log_h[es.tgt] - S.log_lambda
    g.setflags(write=False)
    return g


def normalization_residual(T: TransferMatrix, log_g: np.ndarray) -> float:
    """``max_w |log sum over incoming edges of e^g|``; zero when ``L_g 1 = 1``."""
    return float(np.max(np.abs(apply_log(T, np.zeros(T.n_states), log_g))))


def iterate_log(T: TransferMatrix, log_g: np.ndarray, log_phi: np.ndarray, n: int) -> np.ndarray:
    """``log (L_g^n phi)`` by ``n`` sparse log-domain applications."""
    x = np.asarray(log_phi, dtype=float)
    for _ in range(n):
        x = apply_log(T, x, log_g)
    return x


def finite_time_measure(S: Optional[SpectralData], T: TransferMatrix, x: Sequence[int], w: Sequence[int],
                        n: int, log_g: Optional[np.ndarray] = None) -> float:
    """``log (L_g^n chi_[w])(x)``.

    ``log_g`` overrides the normalized potential derived from ``S`` (for
    example with a closed-form table); ``S`` may then be ``None``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if log_g is None:
        if S is None:
            raise ValueError("need spectral data or an explicit normalized potential")
        log_g = normalized_log_potential(S, T)
    mask = prefix_mask(T.space, T.depth, w)
    log_phi = np.where(mask, 0.0, -np.inf)
    return float(iterate_log(T, log_g, log_phi, n)[state_of(T.space, x)])


def variation_constants(S: SpectralData, f: LocallyConstantPotential, beta_min: float) -> dict:
    """Empirical constants for the Gibbs and eigenfunction-oscillation bounds.

    ``C2 = max|f| + log(d) / beta_min + osc(log h) / beta`` and
    ``C1 = max |log h(w) - log h(w')| / (beta d_theta(w, w'))`` over state pairs.
    """
    beta = S.beta
    states = word_array(S.space, S.depth)
    osc = float(np.max(S.log_h) - np.min(S.log_h))
    C2 = float(np.max(np.abs(f.array))) + math.log(S.space.alphabet_size) / beta_min + osc / beta
    # first disagreement index between all pairs of states, 1-based
    neq = states[:, None, :] != states[None, :, :] if len(states) <= 1024 else None
    if neq is None:
        C1 = math.nan
    else:
        has = neq.any(axis=2)
        first = np.where(has, neq.argmax(axis=2) + 1, 0)
        dist = np.where(has, S.space.theta ** first.astype(float), np.inf)
        diff = np.abs(S.log_h[:, None] - S.log_h[None, :])
        C1 = float(np.max(diff / (beta * dist)))
    return {"C1": C1, "C2": C2}
