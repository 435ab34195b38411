"""Zero-forcing precoding at the CPU and the sub-optimal power control."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidParameterError, SingularChannelError

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class PrecodeMatrix:
    A: np.ndarray       # (M, K)
    psi: np.ndarray     # (K,)
    source_csi_tag: str = ""


@dataclass(frozen=True)
class PrecodedFrame:
    X: np.ndarray       # (M, N)
    frame_index: int = 0


def gram_condition(gram):
    """Condition number(s) of Hermitian positive semi-definite Gram matrices."""
    ev = np.linalg.eigvalsh(gram)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = ev[..., -1] / ev[..., 0]
    return np.where(ev[..., 0] > 0, cond, np.inf)


def _gram_solve(G):
    """(G G^H)^{-1} G for a K x M channel, via Cholesky of the Gram matrix."""
    gram = G @ G.conj().T
    cond = gram_condition(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularChannelError(f"Gram matrix condition number {cond:.3g}")
    try:
        cho = scipy.linalg.cho_factor(gram, lower=True)
        return scipy.linalg.cho_solve(cho, G)
    except np.linalg.LinAlgError:
        return scipy.linalg.solve(gram, G, assume_a="her")


def zf_matrix(G):
    """Right pseudo-inverse G^H (G G^H)^{-1}, shape (M, K)."""
    G = np.asarray(G)
    K, M = G.shape
    if M < K:
        raise SingularChannelError(f"need M >= K, got K={K}, M={M}")
    return _gram_solve(G).conj().T


def power_control_deltas(ensemble):
    """delta[m, k] = E|[(G G^H)^{-1} g_m]_k|^2 over full-rank draws; returns (delta, n_skipped).

    ``ensemble`` is an iterable of K x M matrices or a (n, K, M) array.
    """
    G = np.asarray(ensemble)
    if G.ndim == 2:
        G = G[None]
    gram = G @ G.conj().transpose(0, 2, 1)
    cond = gram_condition(gram)
    ok = np.isfinite(cond) & (cond <= MAX_CONDITION)
    skipped = int(np.count_nonzero(~ok))
    if skipped:
        log.warning("power control: skipped %d singular CSI draw(s)", skipped)
    if not ok.any():
        raise SingularChannelError("every CSI draw in the power-control ensemble is singular")
    # (G G^H)^{-1} G, column m is (G G^H)^{-1} g_m
    P = np.linalg.solve(gram[ok], G[ok])
    delta = np.mean(np.abs(P) ** 2, axis=0).T
    return delta, skipped


def power_control(ensemble, rule="amplitude"):
    """Common power-control coefficient for all users.

    With ``s = max_m sum_k delta[m, k]``, the default ``"amplitude"`` rule
    returns psi = s^(-1/2), so the most loaded AP transmits unit average
    power. ``"inverse-load"`` returns s^(-1) instead, which does not scale like an
    amplitude and leaves the network almost silent.
    """
    delta, _ = power_control_deltas(ensemble)
    load = delta.sum(axis=1).max()
    K = delta.shape[1]
    if rule == "amplitude":
        value = 1.0 / np.sqrt(load)
    elif rule == "inverse-load":
        value = 1.0 / load
    else:
        raise InvalidParameterError(f"unknown power-control rule {rule!r}")
    return np.full(K, value)


def precode(G, psi, tag=""):
    return PrecodeMatrix(zf_matrix(G), np.asarray(psi, dtype=float), tag)


def precode_frame(A, psi, S, frame_index=0):
    A = np.asarray(A)
    S = np.asarray(S)
    psi = np.asarray(psi)
    if A.shape[1] != S.shape[0] or psi.shape != (A.shape[1],):
        raise InvalidParameterError(
            f"dimension mismatch: A {A.shape}, psi {psi.shape}, S {S.shape}")
    return PrecodedFrame(A @ (psi[:, None] * S), frame_index)


def draw_symbols(K, N, rng, kind="qpsk"):
    """Unit-power information symbols, K x N."""
    if kind == "qpsk":
        bits = rng.integers(0, 2, size=(2, K, N))
        return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2.0)
    if kind == "gaussian":
        return (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / np.sqrt(2.0)
    raise InvalidParameterError(f"unknown symbol alphabet {kind!r}")
