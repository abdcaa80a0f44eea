import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from zerotemp import fixtures as F
from zerotemp import transfer as T
from zerotemp import walters as W
from zerotemp.potential import LocallyConstantPotential, project, zero_potential
from zerotemp.shift_space import ShiftSpace, edge_structure, state_of, word_array

BIN = F.BINARY
GOLDEN = ShiftSpace(2, 0.5, ((1, 1), (1, 0)))


def dense_matrix(M):
    A = np.zeros((M.n_states, M.n_states))
    np.add.at(A, (M.edges.tgt, M.edges.src), np.exp(M.log_weights))
    return A


def random_table(rng, space, depth, scale=1.0):
    n = len(word_array(space, depth))
    return LocallyConstantPotential(space, depth, tuple(scale * rng.standard_normal(n)))


# -- construction

def test_zero_potential_has_zero_weights():
    M = T.build_transfer(F.zero(), 1.0, 1)
    assert np.all(M.log_weights == 0.0)


def test_toy_weights():
    M = T.build_transfer(F.toy_symmetric(), 1.0, 1)
    assert np.allclose(dense_matrix(M), [[1, math.exp(-1)], [math.exp(-1), 1]], rtol=0, atol=1e-15)


def test_walters_projection_weight_into_01():
    M = T.build_transfer(project(F.w1(), 3), 2.0, 2)
    into = dict(M.incoming(state_of(BIN, (0, 1))))
    assert into[state_of(BIN, (0, 0))] == pytest.approx(-1.0, abs=1e-15)


def test_depth_too_large_rejected():
    with pytest.raises(ValueError):
        T.build_transfer(project(F.w1(), 5), 1.0, 3)
    with pytest.raises(ValueError):
        T.build_transfer(F.zero(), -1.0, 2)


def test_apply_log_matches_dense():
    rng = np.random.default_rng(3)
    f = random_table(rng, BIN, 3)
    M = T.build_transfer(f, 1.7, 3)
    phi = rng.standard_normal(M.n_states)
    A = dense_matrix(M)
    assert np.allclose(T.apply_log(M, phi), np.log(A @ np.exp(phi)), atol=1e-12)
    assert np.allclose(T.apply_dual_log(M, phi), np.log(A.T @ np.exp(phi)), atol=1e-12)


# -- Perron data

@pytest.mark.parametrize("k", [2, 3, 6])
def test_zero_potential_spectral(k):
    S = T.spectral(F.zero(), 1.0, k)
    assert S.log_lambda == pytest.approx(math.log(2), abs=1e-12)
    assert np.allclose(S.log_h, S.log_h[0], atol=1e-12)
    assert np.allclose(S.log_mu, -k * math.log(2), atol=1e-12)
    assert T.gibbs_log_measure(S, (0, 1)) == pytest.approx(-2 * math.log(2), abs=1e-12)
    assert T.eigenmeasure_log(S, (0,)) == pytest.approx(-math.log(2), abs=1e-12)


def test_toy_pressure_and_symmetry():
    S = T.spectral(F.toy_symmetric(), 1.0, 1)
    assert S.log_lambda == pytest.approx(math.log1p(math.exp(-1)), abs=1e-12)
    assert S.log_lambda == pytest.approx(0.313262, abs=1e-6)
    assert T.gibbs_log_measure(S, (0,)) == pytest.approx(math.log(0.5), abs=1e-12)


def test_beta_zero_gives_log_spectral_radius():
    S = T.spectral(zero_potential(GOLDEN, 1), 0.0, 4)
    assert S.log_lambda == pytest.approx(math.log((1 + math.sqrt(5)) / 2), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.1, 5.0))
def test_pressure_matches_dense_eigenvalue(seed, k, beta):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, k + 2))
    f = random_table(rng, BIN, depth)
    M = T.build_transfer(f, beta, k)
    S = T.leading_spectral(M)
    lam = np.max(np.abs(np.linalg.eigvals(dense_matrix(M))))
    assert S.log_lambda == pytest.approx(math.log(lam), abs=1e-10)


@pytest.mark.parametrize("space", [BIN, GOLDEN, ShiftSpace(3, 0.4)])
def test_normalizations_and_eigen_equations(space):
    rng = np.random.default_rng(11)
    f = random_table(rng, space, 2)
    M = T.build_transfer(f, 2.5, 4)
    S = T.leading_spectral(M)
    assert logsumexp(S.log_nu) == pytest.approx(0.0, abs=1e-10)
    assert logsumexp(S.log_h + S.log_nu) == pytest.approx(0.0, abs=1e-10)
    assert logsumexp(S.log_mu) == pytest.approx(0.0, abs=1e-10)
    assert np.max(np.abs(T.apply_log(M, S.log_h) - S.log_lambda - S.log_h)) < 1e-10
    assert np.max(np.abs(T.apply_dual_log(M, S.log_nu) - S.log_lambda - S.log_nu)) < 1e-10
    g = T.normalized_log_potential(S, M)
    assert T.normalization_residual(M, g) < 1e-10


def test_cold_and_warm_starts_agree():
    f = project(F.w1(), 7)
    M = T.build_transfer(f, 3.0, 6)
    a, b = T.leading_spectral(M, warm_start=True), T.leading_spectral(M, warm_start=False)
    assert a.log_lambda == pytest.approx(b.log_lambda, abs=1e-12)
    assert np.allclose(a.log_mu, b.log_mu, atol=1e-9)


def test_iteration_cap_raises():
    M = T.build_transfer(project(F.w1(), 7), 3.0, 6)
    with pytest.raises(T.SpectralConvergenceError):
        T.leading_spectral(M, warm_start=False, max_iter=3)


def test_tiny_gap_is_refused():
    # at beta = 60 the subdominant gap of W1 is far below double precision
    M = T.build_transfer(project(F.w1(), 9), 60.0, 8)
    with pytest.raises(T.SpectralConvergenceError):
        T.leading_spectral(M)


def test_large_sparse_state_space():
    # above the dense threshold the warm start goes through ARPACK
    f = project(F.w1(), 12)
    S = T.spectral(f, 8.0, 11)
    assert S.residual < 1e-10
    assert abs(S.log_lambda - W.pressure_w(F.w1(), 8.0)) <= 8.0 * f.variation_bound + 1e-8


# -- measures

def test_cylinder_length_checked():
    S = T.spectral(F.zero(), 1.0, 2)
    with pytest.raises(ValueError):
        T.gibbs_log_measure(S, (0, 0, 0))
    with pytest.raises(ValueError):
        T.eigenmeasure_log(S, (0, 0, 0))


def test_measure_is_shift_invariant():
    rng = np.random.default_rng(5)
    f = random_table(rng, BIN, 3)
    S = T.spectral(f, 1.5, 6)
    for n in range(1, 6):
        for w in map(tuple, word_array(BIN, n)):
            left = T.gibbs_log_measure(S, w)
            right = logsumexp([T.gibbs_log_measure(S, (a,) + w) for a in (0, 1)])
            assert left == pytest.approx(right, abs=1e-9)


def test_subshift_cylinders_of_forbidden_words():
    S = T.spectral(zero_potential(GOLDEN, 1), 1.0, 4)
    assert T.gibbs_log_measure(S, (1, 1)) == -math.inf
    assert logsumexp([T.eigenmeasure_log(S, (a,)) for a in (0, 1)]) == pytest.approx(0.0, abs=1e-12)


def test_normalized_potential_examples():
    M = T.build_transfer(F.zero(), 1.0, 2)
    g = T.normalized_log_potential(T.leading_spectral(M), M)
    assert np.allclose(g, -math.log(2), atol=1e-12)
    M = T.build_transfer(F.toy_symmetric(), 1.0, 1)
    g = T.normalized_log_potential(T.leading_spectral(M), M)
    e00 = int(np.flatnonzero((M.edges.words == (0, 0)).all(axis=1))[0])
    assert g[e00] == pytest.approx(-math.log1p(math.exp(-1)), abs=1e-12)


def test_finite_time_measure_examples():
    M = T.build_transfer(F.zero(), 1.0, 3)
    S = T.leading_spectral(M)
    assert T.finite_time_measure(S, M, (0, 1, 1), (0,), 0) == 0.0
    assert T.finite_time_measure(S, M, (1, 1, 1), (0,), 0) == -math.inf
    for n in (1, 2, 7):
        assert T.finite_time_measure(S, M, (1, 0, 1), (0,), n) == pytest.approx(-math.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        T.finite_time_measure(S, M, (0, 0, 0), (0,), -1)


def test_finite_time_measure_converges_to_gibbs_mass():
    # L_g^n chi_[w] -> mu([w]) uniformly for a mixing chain
    f = F.toy_asymmetric()
    M = T.build_transfer(f, 1.0, 3)
    S = T.leading_spectral(M)
    v = T.finite_time_measure(S, M, (1, 0, 1), (0, 1), 200)
    assert v == pytest.approx(T.gibbs_log_measure(S, (0, 1)), abs=1e-10)


# -- cross-oracle with the closed forms

@pytest.mark.parametrize("k", [10, 14])
@pytest.mark.parametrize("beta", [1.0, 4.0])
def test_pressure_cross_oracle(k, beta):
    f = F.w1()
    pot = project(f, k + 1)
    S = T.spectral(pot, beta, k)
    assert abs(S.log_lambda - W.pressure_w(f, beta)) <= beta * pot.variation_bound + 1e-8


@pytest.mark.parametrize("k", [4, 6, 8])
def test_consecutive_depths_agree(k):
    f, beta = F.w2(), 3.0
    Pk = T.spectral(project(f, k + 1), beta, k).log_lambda
    Pk1 = T.spectral(project(f, k + 2), beta, k + 1).log_lambda
    assert abs(Pk - Pk1) <= beta * project(f, k + 1).variation_bound


# -- empirical bound constants

def test_gibbs_per_symbol_bound():
    f = project(F.w1(), 9)
    betas = [2.0, 4.0, 8.0]
    for beta in betas:
        S = T.spectral(f, beta, 8)
        C = T.variation_constants(S, f, min(betas))
        assert C["C2"] > 0
        assert np.all(np.abs(S.log_mu) <= beta * 8 * C["C2"])


def test_eigenfunction_oscillation_constant_does_not_grow():
    f = project(F.w1(), 9)
    vals = [T.variation_constants(T.spectral(f, b, 8), f, 2.0)["C1"] for b in (2.0, 4.0, 8.0, 12.0)]
    assert all(v > 0 for v in vals)
    assert vals[-1] <= 2 * vals[0] + 1e-6
