"""Uplink pilot training and per-AP linear MMSE channel estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPilotError


@dataclass(frozen=True)
class PilotBook:
    sequences: np.ndarray   # (tau_p, K), column k is pilot i_k with unit norm

    @property
    def num_users(self):
        return self.sequences.shape[1]


@dataclass(frozen=True)
class EstimateSet:
    ghat: np.ndarray    # (M, K)
    alpha: np.ndarray   # (M, K)


def crandn(rng, *shape):
    """Samples of CN(0, 1)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def make_pilots(K, tau_p=None):
    """First K columns of the unitary tau_p-point DFT matrix."""
    tau_p = K if tau_p is None else tau_p
    if tau_p < K:
        raise InsufficientPilotError(f"pilot length {tau_p} cannot hold {K} orthogonal pilots")
    n = np.arange(tau_p)
    dft = np.exp(-2j * np.pi * np.outer(n, n) / tau_p) / np.sqrt(tau_p)
    return PilotBook(dft[:, :K])


def uplink_observe(G, pilots, p_u, sigma2, rng):
    """Received pilot blocks, one row per AP: shape (M, tau_p).

    ``G`` is the K x M channel matrix.
    """
    tau_p = pilots.sequences.shape[0]
    M = G.shape[1]
    y = np.sqrt(p_u) * (pilots.sequences @ G).T
    if sigma2 > 0:
        y = y + np.sqrt(sigma2) * crandn(rng, M, tau_p)
    return y


def estimate_variance(beta, p_u, sigma2):
    beta = np.asarray(beta, dtype=float)
    return p_u * beta ** 2 / (p_u * beta + sigma2)


def mmse_estimate(y, pilots, beta, p_u, sigma2):
    """MMSE estimates from received pilots.

    ``y`` is a single AP observation (tau_p,) with ``beta`` of shape (K,), or a
    stack (M, tau_p) with ``beta`` of shape (M, K).
    """
    beta = np.asarray(beta, dtype=float)
    proj = y @ pilots.sequences.conj()          # i_k^H y_m
    coef = np.sqrt(p_u) * beta / (p_u * beta + sigma2)
    return EstimateSet(coef * proj, estimate_variance(beta, p_u, sigma2))


def normalized_estimate_snr(snr_db):
    """Variance of the additive error applied to normalized channels at a pilot SNR in dB."""
    return 10.0 ** (-snr_db / 10.0)


def estimate_normalized(h, snr_db, rng):
    """Noisy normalized estimate h + e with e ~ CN(0, 10^(-snr/10))."""
    h = np.asarray(h)
    return h + np.sqrt(normalized_estimate_snr(snr_db)) * crandn(rng, *h.shape)
