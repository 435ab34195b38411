import numpy as np
import pytest

from dtzfp import chest
from dtzfp.errors import InsufficientPilotError

from conftest import random_complex


@pytest.mark.parametrize("K,tau", [(4, 4), (1, 1), (3, 8)])
def test_pilots_orthonormal(K, tau):
    P = chest.make_pilots(K, tau).sequences
    assert P.shape == (tau, K)
    np.testing.assert_allclose(P.conj().T @ P, np.eye(K), atol=1e-14)


def test_sixteen_pilots_off_diagonal():
    P = chest.make_pilots(16, 16).sequences
    gram = P.conj().T @ P
    assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-12


def test_pilot_length_too_short():
    with pytest.raises(InsufficientPilotError):
        chest.make_pilots(4, 3)


def test_noiseless_single_user_observation(rng):
    pilots = chest.make_pilots(1)
    G = random_complex(rng, 1, 5)
    y = chest.uplink_observe(G, pilots, 0.1, 0.0, rng)
    np.testing.assert_allclose(y, np.sqrt(0.1) * G.T * pilots.sequences[0, 0], rtol=1e-14)


def test_observation_power_budget():
    rng = np.random.default_rng(21)
    K, M, n = 4, 3, 20_000
    pilots = chest.make_pilots(K)
    G = 1e-5 * random_complex(rng, K, M)
    p_u, s2 = 0.1, 3e-12
    pw = np.array([np.sum(np.abs(chest.uplink_observe(G, pilots, p_u, s2, rng)) ** 2, axis=1)
                   for _ in range(n)])
    expected = p_u * np.sum(np.abs(G) ** 2, axis=0) + K * s2
    se = pw.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(pw.mean(axis=0) - expected) < 3 * se)


def test_zero_power_observation_is_noise():
    rng = np.random.default_rng(22)
    pilots = chest.make_pilots(2)
    y = chest.uplink_observe(random_complex(rng, 2, 50_000), pilots, 0.0, 2.0, rng)
    assert abs(np.mean(np.abs(y) ** 2) - 2.0) < 3 * 2.0 / np.sqrt(y.size)


def test_noiseless_mmse_is_exact(rng):
    K, M = 4, 6
    pilots = chest.make_pilots(K)
    beta = rng.uniform(1e-10, 1e-8, size=(M, K))
    G = np.sqrt(beta.T) * random_complex(rng, K, M)
    y = chest.uplink_observe(G, pilots, 0.1, 0.0, rng)
    est = chest.mmse_estimate(y, pilots, beta, 0.1, 0.0)
    np.testing.assert_allclose(est.ghat, G.T, rtol=1e-12)
    np.testing.assert_allclose(est.alpha, beta, rtol=1e-15)


def test_zero_gain_prior_kills_estimate(rng):
    pilots = chest.make_pilots(2)
    y = random_complex(rng, 3, 2)
    est = chest.mmse_estimate(y, pilots, np.zeros((3, 2)), 0.1, 1e-12)
    np.testing.assert_array_equal(est.ghat, 0)


def test_single_ap_row(rng):
    pilots = chest.make_pilots(3)
    beta = np.array([1e-9, 2e-9, 3e-9])
    y = random_complex(rng, 3)
    row = chest.mmse_estimate(y, pilots, beta, 0.1, 1e-12)
    full = chest.mmse_estimate(y[None], pilots, beta[None], 0.1, 1e-12)
    np.testing.assert_allclose(row.ghat, full.ghat[0])


def test_alpha_closed_form():
    a = chest.estimate_variance(1e-10, 0.1, 6.36e-13)
    assert a == pytest.approx(9.402030838661151e-11, rel=1e-12)
    assert 1e-10 - a == pytest.approx(5.979691613388491e-12, rel=1e-9)
    b = np.logspace(-14, -6, 9)
    assert np.all(chest.estimate_variance(b, 0.1, 6.36e-13) <= b)


@pytest.mark.parametrize("beta,s2", [(1e-10, 6.36e-13), (1e-12, 6.36e-13), (3e-11, 1e-11)])
def test_mmse_variance_law(beta, s2):
    rng = np.random.default_rng(23)
    K, M, reps = 4, 64, 400
    p_u = 0.1
    pilots = chest.make_pilots(K)
    B = np.full((M, K), beta)
    g_all, gh_all = [], []
    for _ in range(reps):
        G = np.sqrt(beta) * chest.crandn(rng, K, M)
        y = chest.uplink_observe(G, pilots, p_u, s2, rng)
        est = chest.mmse_estimate(y, pilots, B, p_u, s2)
        g_all.append(G.T.ravel())
        gh_all.append(est.ghat.ravel())
    g, gh = np.concatenate(g_all), np.concatenate(gh_all)
    err = g - gh
    n = g.size
    alpha = chest.estimate_variance(beta, p_u, s2)
    # bias
    assert abs(err.mean().real) < 3 * np.sqrt((beta - alpha) / 2 / n)
    assert abs(err.mean().imag) < 3 * np.sqrt((beta - alpha) / 2 / n)
    # variance law; |CN(0, v)|^2 has std v
    assert abs(np.mean(np.abs(gh) ** 2) - alpha) < 3 * alpha / np.sqrt(n)
    assert abs(np.mean(np.abs(err) ** 2) - (beta - alpha)) < 3 * (beta - alpha) / np.sqrt(n)
    # orthogonality of estimate and error
    cross = np.mean(gh * err.conj())
    assert abs(cross) < 3 * np.sqrt(alpha * (beta - alpha) / n)


def test_orthogonal_pilots_decouple_users(rng):
    K, M = 4, 5
    pilots = chest.make_pilots(K)
    beta = rng.uniform(1e-10, 1e-9, size=(M, K))
    G = np.sqrt(beta.T) * random_complex(rng, K, M)
    noise = 1e-6 * random_complex(rng, M, K)
    y_all = chest.uplink_observe(G, pilots, 0.1, 0.0, rng) + noise
    only = np.zeros_like(G)
    only[1] = G[1]
    y_one = chest.uplink_observe(only, pilots, 0.1, 0.0, rng) + noise
    a = chest.mmse_estimate(y_all, pilots, beta, 0.1, 1e-12).ghat[:, 1]
    b = chest.mmse_estimate(y_one, pilots, beta, 0.1, 1e-12).ghat[:, 1]
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-22)


@pytest.mark.parametrize("snr,var", [(30, 0.001), (0, 1.0)])
def test_normalized_snr(snr, var):
    assert chest.normalized_estimate_snr(snr) == pytest.approx(var, rel=1e-12)


def test_normalized_snr_15db():
    assert chest.normalized_estimate_snr(15) == pytest.approx(0.0316, abs=1e-4)


def test_normalized_estimate_noise_variance():
    rng = np.random.default_rng(24)
    h = np.zeros(200_000, dtype=complex)
    e = chest.estimate_normalized(h, 20.0, rng)
    assert abs(np.mean(np.abs(e) ** 2) - 0.01) < 3 * 0.01 / np.sqrt(h.size)
    np.testing.assert_array_equal(chest.estimate_normalized(h[:5] + 1, np.inf, rng), 1)
