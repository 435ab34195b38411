"""Network geometry, large-scale fading and thermal noise."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(frozen=True)
class Placement:
    ap_xy: np.ndarray   # (M, 2) meters
    ue_xy: np.ndarray   # (K, 2) meters


@dataclass(frozen=True)
class LinkGainMap:
    """Large-scale gains indexed [m, k] (AP m, UE k)."""
    beta: np.ndarray
    pathloss_db: np.ndarray
    shadow_db: np.ndarray

    @classmethod
    def from_db(cls, pathloss_db, shadow_db):
        pathloss_db = np.asarray(pathloss_db, dtype=float)
        shadow_db = np.asarray(shadow_db, dtype=float)
        return cls(10.0 ** ((pathloss_db + shadow_db) / 10.0), pathloss_db, shadow_db)

    @property
    def shape(self):
        return self.beta.shape


def compute_p0(cfg):
    """Reference path loss at 1 m in dB (carrier in MHz, heights in meters)."""
    fc, h_ap, h_ue = cfg.carrier_freq_mhz, cfg.ap_height, cfg.ue_height
    if fc <= 0 or h_ap <= 0 or h_ue <= 0:
        raise InvalidParameterError("carrier frequency and antenna heights must be positive")
    lf = np.log10(fc)
    return float(46.3 + 33.9 * lf - 13.82 * np.log10(h_ap)
                 - (1.1 * lf - 0.7) * h_ue + 1.56 * lf - 0.8)


def path_loss(d, p0, cfg):
    """Three-slope COST-Hata path loss in dB for distance(s) ``d`` in meters.

    Logarithms take kilometers, so the far branch reads -p0 at exactly 1 km.
    Works elementwise on arrays.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise InvalidParameterError("distance must be positive")
    d_km = d / 1e3
    d0, d1 = cfg.break_d0 / 1e3, cfg.break_d1 / 1e3
    far = -p0 - 35.0 * np.log10(d_km)
    mid = -p0 - 15.0 * np.log10(d1) - 20.0 * np.log10(d_km)
    near = -p0 - 15.0 * np.log10(d1) - 20.0 * np.log10(d0)
    out = np.where(d_km > d1, far, np.where(d_km > d0, mid, near))
    return float(out) if out.ndim == 0 else out


def draw_placement(cfg, rng):
    ap = rng.uniform(0.0, cfg.area_side, size=(cfg.num_aps, 2))
    ue = rng.uniform(0.0, cfg.area_side, size=(cfg.num_ues, 2))
    return Placement(ap, ue)


def link_distances(placement, cfg):
    """3-D AP-UE distances, shape (M, K)."""
    horiz = np.linalg.norm(placement.ap_xy[:, None, :] - placement.ue_xy[None, :, :], axis=2)
    return np.sqrt(horiz ** 2 + (cfg.ap_height - cfg.ue_height) ** 2)


def large_scale_gains(placement, p0, cfg, rng):
    d = link_distances(placement, cfg)
    pl = path_loss(d, p0, cfg)
    shadow = cfg.shadow_sigma_db * rng.standard_normal(d.shape)
    return LinkGainMap.from_db(pl, shadow)


def noise_power(cfg):
    """Thermal noise power in watts; the noise figure is converted from dB."""
    return cfg.boltzmann * cfg.bandwidth * cfg.temperature * 10.0 ** (cfg.noise_figure_db / 10.0)


def write_gains_csv(gains, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "k", "beta", "pathloss_db", "shadow_db"])
        M, K = gains.shape
        for m in range(M):
            for k in range(K):
                w.writerow([m, k, repr(float(gains.beta[m, k])),
                            repr(float(gains.pathloss_db[m, k])),
                            repr(float(gains.shadow_db[m, k]))])


def read_gains_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    M = 1 + max(int(r["m"]) for r in rows)
    K = 1 + max(int(r["k"]) for r in rows)
    arrays = {key: np.zeros((M, K)) for key in ("beta", "pathloss_db", "shadow_db")}
    for r in rows:
        for key, arr in arrays.items():
            arr[int(r["m"]), int(r["k"])] = float(r[key])
    return LinkGainMap(**arrays)
