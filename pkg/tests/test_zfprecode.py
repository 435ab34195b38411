import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtzfp import zfprecode as zf
from dtzfp.errors import InvalidParameterError, SingularChannelError

from conftest import random_complex


def test_hand_inverse_2x2():
    G = np.array([[1.0, 0.0], [0.0, 2.0]])
    np.testing.assert_allclose(zf.zf_matrix(G), [[1.0, 0.0], [0.0, 0.5]], atol=1e-15)


def test_unitary_channel_gives_conjugate_transpose(rng):
    Q, _ = np.linalg.qr(random_complex(rng, 6, 6))
    G = Q[:3]       # orthonormal rows
    np.testing.assert_allclose(zf.zf_matrix(G), G.conj().T, atol=1e-12)


def test_zero_forcing_residual(rng):
    beta = 10 ** rng.uniform(-12, -8, size=(16, 128))
    G = np.sqrt(beta) * random_complex(rng, 16, 128)
    A = zf.zf_matrix(G)
    assert A.shape == (128, 16)
    assert np.abs(G @ A - np.eye(16)).max() < 1e-10


def test_singular_channels_raise(rng):
    G = random_complex(rng, 3, 8)
    G[2] = G[0]
    with pytest.raises(SingularChannelError):
        zf.zf_matrix(G)
    with pytest.raises(SingularChannelError):
        zf.zf_matrix(random_complex(rng, 4, 3))


def test_power_control_identity_channel():
    # (G G^H)^-1 g_m = e_m, so every AP carries load 1
    ens = np.stack([np.eye(4, 6)] * 3)
    np.testing.assert_allclose(zf.power_control(ens), np.ones(4))
    delta, skipped = zf.power_control_deltas(ens)
    assert skipped == 0
    np.testing.assert_allclose(delta[:4], np.eye(4))
    np.testing.assert_array_equal(delta[4:], 0)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-4, 1e4), seed=st.integers(0, 2 ** 16))
def test_power_control_homogeneity(c, seed):
    rng = np.random.default_rng(seed)
    ens = random_complex(rng, 5, 3, 10)
    base_a = zf.power_control(ens)
    base_p = zf.power_control(ens, rule="inverse-load")
    np.testing.assert_allclose(zf.power_control(c * ens), c * base_a, rtol=1e-9)
    np.testing.assert_allclose(zf.power_control(c * ens, rule="inverse-load"), c * c * base_p,
                               rtol=1e-9)


def test_delta_matches_precoder_rows(rng):
    # [(G G^H)^-1 g_m]_k is the conjugate of A[m, k]
    ens = random_complex(rng, 7, 4, 9)
    delta, _ = zf.power_control_deltas(ens)
    via_a = np.mean([np.abs(zf.zf_matrix(G)) ** 2 for G in ens], axis=0)
    np.testing.assert_allclose(delta, via_a, rtol=1e-10)
    want = 1 / np.sqrt(via_a.sum(axis=1).max())
    np.testing.assert_allclose(zf.power_control(ens), want, rtol=1e-10)


def test_power_control_skips_singular_draws(rng, caplog):
    ens = random_complex(rng, 4, 2, 5)
    ens[1, 1] = ens[1, 0]
    delta, skipped = zf.power_control_deltas(ens)
    assert skipped == 1
    ref, _ = zf.power_control_deltas(ens[[0, 2, 3]])
    np.testing.assert_allclose(delta, ref)
    assert "skipped 1" in caplog.text
    with pytest.raises(SingularChannelError):
        zf.power_control_deltas(np.zeros((3, 2, 5)))


def test_unknown_rule(rng):
    with pytest.raises(InvalidParameterError):
        zf.power_control(random_complex(rng, 2, 2, 4), rule="bogus")


def test_precode_frame_linearity_and_residual(rng):
    G = random_complex(rng, 4, 12)
    A = zf.zf_matrix(G)
    psi = rng.uniform(0.5, 2, size=4)
    S1, S2 = zf.draw_symbols(4, 30, rng), zf.draw_symbols(4, 30, rng, "gaussian")
    a, b = 0.7 - 0.2j, -1.3
    X = zf.precode_frame(A, psi, a * S1 + b * S2).X
    lin = a * zf.precode_frame(A, psi, S1).X + b * zf.precode_frame(A, psi, S2).X
    np.testing.assert_allclose(X, lin, atol=1e-12)
    # each user receives only its own scaled stream
    np.testing.assert_allclose(G @ zf.precode_frame(A, psi, S1).X, psi[:, None] * S1, atol=1e-10)
    with pytest.raises(InvalidParameterError):
        zf.precode_frame(A, psi, S1[:3])


def test_qpsk_symbols(rng):
    S = zf.draw_symbols(3, 4000, rng)
    np.testing.assert_allclose(np.abs(S), 1.0)
    assert set(np.round(S.real * np.sqrt(2)).ravel()) == {-1.0, 1.0}
    assert abs(np.mean(np.abs(S) ** 2) - 1) < 1e-12
    assert abs(S.mean()) < 0.05
    with pytest.raises(InvalidParameterError):
        zf.draw_symbols(2, 2, rng, "bpsk")
