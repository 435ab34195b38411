"""Doppler-correlated Rayleigh fading (sum of sinusoids) and channel assembly.

Each trace is a sum of equal-power complex sinusoids with i.i.d. uniform
arrival angles and phases, which gives unit mean power and the Clarke
autocorrelation J0(2*pi*f_d*tau).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

NUM_SINUSOIDS = 64
TRACE_MAGIC = b"CFTRACE1"
_HEADER = struct.Struct("<8sHHIdd")   # magic, M, K, T, spacing, f_d -> 32 bytes


@dataclass(frozen=True)
class FadingTrace:
    samples: np.ndarray   # complex, length T
    sample_spacing: float
    doppler: float


@dataclass(frozen=True)
class TraceSet:
    """Small-scale traces for every link, ``samples[m, k, t]``."""
    samples: np.ndarray
    sample_spacing: float
    doppler: float

    @property
    def shape(self):
        return self.samples.shape

    def trace(self, m, k):
        return FadingTrace(self.samples[m, k], self.sample_spacing, self.doppler)


def _check(f_d, spacing, length):
    if f_d < 0:
        raise InvalidParameterError("Doppler shift must be non-negative")
    if spacing <= 0:
        raise InvalidParameterError("sample spacing must be positive")
    if length < 1:
        raise InvalidParameterError("trace length must be >= 1")


def _draw_paths(f_d, shape, rng, num_sinusoids):
    angles = rng.uniform(-np.pi, np.pi, size=tuple(shape) + (num_sinusoids,))
    phases = rng.uniform(-np.pi, np.pi, size=tuple(shape) + (num_sinusoids,))
    return 2.0 * np.pi * f_d * np.cos(angles), phases


def sos_samples(f_d, times, shape, rng, num_sinusoids=NUM_SINUSOIDS):
    """Independent sum-of-sinusoids processes of the given ``shape``, sampled at ``times``.

    Returns an array of shape ``shape + (len(times),)``.
    """
    times = np.asarray(times, dtype=float)
    omega, phases = _draw_paths(f_d, shape, rng, num_sinusoids)
    arg = omega[..., None, :] * times[:, None] + phases[..., None, :]
    scale = 1.0 / np.sqrt(num_sinusoids)
    return scale * (np.cos(arg).sum(axis=-1) + 1j * np.sin(arg).sum(axis=-1))


def _sos_grid(f_d, spacing, length, shape, rng, num_sinusoids):
    """Same process as :func:`sos_samples` on the grid ``spacing * arange(length)``."""
    shape = tuple(shape)
    if length > max(int(np.prod(shape)), 1):
        return sos_samples(f_d, spacing * np.arange(length), shape, rng, num_sinusoids)
    omega, phases = _draw_paths(f_d, shape, rng, num_sinusoids)
    # rotate each path phasor by omega*spacing per sample
    cur = np.exp(1j * phases) / np.sqrt(num_sinusoids)
    rot = np.exp(1j * omega * spacing)
    out = np.empty(shape + (length,), dtype=complex)
    for t in range(length):
        out[..., t] = cur.sum(axis=-1)
        cur *= rot
    return out


def gen_trace(f_d, spacing, length, rng, num_sinusoids=NUM_SINUSOIDS):
    _check(f_d, spacing, length)
    return FadingTrace(_sos_grid(f_d, spacing, length, (), rng, num_sinusoids), spacing, f_d)


def gen_traces(f_d, spacing, length, shape, rng, num_sinusoids=NUM_SINUSOIDS):
    """Mutually independent traces for an array of links (e.g. ``shape=(M, K)``)."""
    _check(f_d, spacing, length)
    return TraceSet(_sos_grid(f_d, spacing, length, shape, rng, num_sinusoids), spacing, f_d)


def channel_at(traces, gains, t):
    """K x M channel matrix G with G[k, m] = sqrt(beta[m, k]) * h[m, k, t]."""
    T = traces.shape[-1]
    if not -T <= t < T:
        raise IndexError(f"time index {t} outside trace of length {T}")
    return (np.sqrt(gains.beta) * traces.samples[..., t]).T


def write_traces(traces, path):
    M, K, T = traces.shape
    data = np.empty((M, K, T, 2), dtype="<f8")
    data[..., 0] = traces.samples.real
    data[..., 1] = traces.samples.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TRACE_MAGIC, M, K, T, traces.sample_spacing, traces.doppler))
        fh.write(data.tobytes())


def read_traces(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated trace header")
        magic, M, K, T, spacing, f_d = _HEADER.unpack(head)
        if magic != TRACE_MAGIC:
            raise ValueError(f"{path}: not a trace file")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != M * K * T * 2:
        raise ValueError(f"{path}: expected {M * K * T * 2} values, found {raw.size}")
    raw = raw.reshape(M, K, T, 2)
    return TraceSet(raw[..., 0] + 1j * raw[..., 1], spacing, f_d)
