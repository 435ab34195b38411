"""Monte Carlo drops for perfect, outdated and predicted-CSI zero-forcing.

Every drop places APs and UEs afresh, draws shadowing and one fading trace
per link on a grid spaced by the delay/horizon D, and evaluates the
downlink at the last grid point. Outdated CSI is the channel one grid step
(D) earlier; predicted CSI is the predictor bank's output after consuming
the noisy estimates up to that same earlier instant.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chest, fading, netgeom, neural, zfprecode
from .errors import InvalidParameterError, SingularChannelError

log = logging.getLogger(__name__)

CSI_KINDS = ("perfect", "outdated", "predicted", "noisy-predicted")


@dataclass(frozen=True)
class CsiMode:
    kind: str = "perfect"
    delay: float = 1e-3
    pilot_snr_db: float | None = None   # overrides the simulation pilot SNR when set

    def __post_init__(self):
        if self.kind not in CSI_KINDS:
            raise InvalidParameterError(f"unknown CSI mode {self.kind!r}")
        if self.kind != "perfect" and not self.delay > 0:
            raise InvalidParameterError(f"{self.kind} CSI needs a positive delay/horizon")

    @property
    def needs_predictor(self):
        return self.kind in ("predicted", "noisy-predicted")

    def label(self):
        if self.kind == "perfect":
            return "perfect"
        tag = f"{self.kind}-{self.delay * 1e3:g}ms"
        if self.pilot_snr_db is not None:
            tag += f"-{self.pilot_snr_db:g}dB"
        return tag

    def to_dict(self):
        return {"kind": self.kind, "delay": self.delay, "pilot_snr_db": self.pilot_snr_db}


# -- frame timeline ---------------------------------------------------------

@dataclass(frozen=True)
class FrameTimeline:
    """Event instants (seconds from the start of frame t) for one scheme."""
    mode: str
    training_end: float
    csi_available: float
    symbols_available: float
    downlink_start: float
    downlink_end: float
    idle: float
    utilization: float


def timeline_report(cfg, mode="pipelined", training_duration=None, switch_time=0.0):
    """Per-frame events and air-interface utilization for ``stop-and-wait`` or ``pipelined``.

    Stop-and-wait ZFP waits D after training for the precoded symbols;
    the pipelined scheme transmits symbols buffered during the previous
    frame right after the uplink/downlink switch.
    """
    frame = cfg.frame_duration
    D = cfg.delay
    tr = cfg.training_duration if training_duration is None else training_duration
    if mode == "stop-and-wait":
        idle = D
        symbols = tr + D
    elif mode == "pipelined":
        idle = 0.0
        symbols = tr + D - frame
    else:
        raise InvalidParameterError(f"unknown timeline mode {mode!r}")
    start = tr + switch_time + idle
    busy = max(frame - start, 0.0)
    return FrameTimeline(mode, tr, tr, symbols, start, frame, idle, busy / frame)


# -- link-level pieces ------------------------------------------------------

def csi_for_precoding(mode, traces, gains, t_tx, estimates=None, modules=None):
    """K x M CSI used to precode the transmission at grid index ``t_tx``.

    ``estimates`` are noisy normalized estimates aligned with ``traces``
    (only needed for predicted modes); ``modules`` are the per-user predictors.
    """
    T = traces.shape[-1]
    if not 0 <= t_tx < T:
        raise IndexError(f"transmission index {t_tx} outside traces of length {T}")
    if mode.kind == "perfect":
        return fading.channel_at(traces, gains, t_tx)
    if t_tx < 1:
        raise IndexError("aged CSI needs at least one earlier trace sample")
    if mode.kind == "outdated":
        return fading.channel_at(traces, gains, t_tx - 1)
    if modules is None:
        raise InvalidParameterError(f"{mode.kind} CSI needs a trained predictor bank")
    est = traces.samples if estimates is None else estimates
    M, K = gains.shape
    ghat_hist = np.sqrt(gains.beta)[..., None] * est[..., :t_tx]
    modules = list(modules)
    if len(modules) == M * K:
        # one bank per AP, each with its own K modules
        out = np.empty((M, K), dtype=complex)
        for m in range(M):
            bank = neural.PredictorBank.from_gains(modules[m * K:(m + 1) * K], gains.beta[m],
                                                   mode.delay)
            out[m] = neural.predict_bank_sequence(bank, ghat_hist[m])
        return out.T
    if len(modules) == 1:
        modules = modules * K
    if len(modules) != K:
        raise InvalidParameterError(f"expected 1, {K} or {M * K} predictor modules, "
                                    f"got {len(modules)}")
    bank = neural.PredictorBank.from_gains(modules, gains.beta, mode.delay)
    return neural.predict_bank_sequence(bank, ghat_hist).T


def downlink_receive(G, X, p_d, sigma2, rng):
    """Received symbols R = sqrt(p_d) G X + noise, shape K x N."""
    R = np.sqrt(p_d) * (G @ X)
    if sigma2 > 0:
        R = R + np.sqrt(sigma2) * chest.crandn(rng, *R.shape)
    return R


def effective_sinr(G, A, psi, p_d, sigma2):
    C = np.sqrt(p_d) * (G @ A) * np.asarray(psi)[None, :]
    power = np.abs(C) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    return signal / (interference + sigma2)


# -- drops ------------------------------------------------------------------

@dataclass
class DropResult:
    se: np.ndarray
    ap_power_max: float
    ap_power_mean: float
    retries: int = 0


def _pilot_snr(cfg, mode):
    return cfg.simulation.pilot_snr_db if mode.pilot_snr_db is None else mode.pilot_snr_db


def _estimates(cfg, traces, gains, snr_db, rng):
    """Normalized noisy estimates for every trace sample."""
    sim = cfg.simulation
    if sim.estimation == "normalized":
        return chest.estimate_normalized(traces.samples, snr_db, rng)
    sysc = cfg.system
    sigma2 = netgeom.noise_power(sysc)
    pilots = chest.make_pilots(sysc.num_ues)
    out = np.empty_like(traces.samples)
    for t in range(traces.shape[-1]):
        G = fading.channel_at(traces, gains, t)
        y = chest.uplink_observe(G, pilots, sysc.ue_power, sigma2, rng)
        out[..., t] = chest.mmse_estimate(y, pilots, gains.beta, sysc.ue_power, sigma2).ghat
    return out / np.sqrt(gains.beta)[..., None]


def _one_drop(cfg, mode, rng, modules):
    sysc = cfg.system
    M, K = sysc.num_aps, sysc.num_ues
    p0 = netgeom.compute_p0(sysc)
    sigma2 = netgeom.noise_power(sysc)
    placement = netgeom.draw_placement(sysc, rng)
    gains = netgeom.large_scale_gains(placement, p0, sysc, rng)
    spacing = mode.delay if mode.kind != "perfect" else sysc.delay
    T = cfg.training.window + 1
    traces = fading.gen_traces(sysc.doppler, spacing, T, (M, K), rng)
    estimates = _estimates(cfg, traces, gains, _pilot_snr(cfg, mode), rng)
    ensemble = np.sqrt(gains.beta.T) * chest.crandn(rng, cfg.simulation.power_control_draws, K, M)

    t_tx = T - 1
    G_csi = csi_for_precoding(mode, traces, gains, t_tx, estimates, modules)
    G_true = fading.channel_at(traces, gains, t_tx)
    psi = zfprecode.power_control(ensemble)
    A = zfprecode.zf_matrix(G_csi)
    sinr = effective_sinr(G_true, A, psi, sysc.ap_power, sigma2)
    ap_power = (np.abs(A) ** 2) @ (psi ** 2)
    return DropResult(np.log2(1.0 + sinr), float(ap_power.max()), float(ap_power.mean()))


def drop_rng(seed, index):
    return np.random.default_rng([seed, index])


def run_drop(cfg, mode, rng, modules=None):
    """One Monte Carlo drop; singular geometries are redrawn up to ``max_retries`` times."""
    if mode.needs_predictor and modules is None:
        raise InvalidParameterError(f"{mode.kind} mode needs trained predictor modules")
    retries = 0
    while True:
        try:
            res = _one_drop(cfg, mode, rng, modules)
            res.retries = retries
            return res
        except SingularChannelError:
            retries += 1
            if retries > cfg.simulation.max_retries:
                raise
            log.warning("singular channel, redrawing drop (%d)", retries)


def _drop_worker(args):
    cfg, mode, seed, index, modules = args
    return run_drop(cfg, mode, drop_rng(seed, index), modules)


def run_drops(cfg, mode, modules=None, drops=None, seed=None, jobs=None):
    drops = cfg.simulation.drops if drops is None else drops
    seed = cfg.system.rng_seed if seed is None else seed
    jobs = cfg.simulation.jobs if jobs is None else jobs
    tasks = [(cfg, mode, seed, i, modules) for i in range(drops)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_drop_worker, tasks, chunksize=max(1, drops // (4 * jobs))))
    return [_drop_worker(t) for t in tasks]


# -- reporting ----------------------------------------------------------------

@dataclass
class SeReport:
    per_user_se: np.ndarray          # (drops, K)
    q05: float
    median: float
    metadata: dict = field(default_factory=dict)

    @property
    def samples(self):
        return self.per_user_se.reshape(-1)


def quantile(samples, q):
    return float(np.quantile(np.asarray(samples, dtype=float), q, method="linear"))


def aggregate(drops, metadata=None):
    if len(drops) == 0:
        raise InvalidParameterError("cannot aggregate an empty set of drops")
    se = np.array([np.atleast_1d(d.se if isinstance(d, DropResult) else d) for d in drops],
                  dtype=float)
    flat = se.reshape(-1)
    meta = dict(metadata or {})
    results = [d for d in drops if isinstance(d, DropResult)]
    if results:
        meta.setdefault("ap_power_max_mean", float(np.mean([d.ap_power_max for d in results])))
        meta.setdefault("ap_power_max_worst", float(np.max([d.ap_power_max for d in results])))
        meta.setdefault("ap_power_mean", float(np.mean([d.ap_power_mean for d in results])))
        meta.setdefault("singular_redraws", int(sum(d.retries for d in results)))
    return SeReport(se, quantile(flat, 0.05), quantile(flat, 0.5), meta)


def empirical_cdf(samples, grid):
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, grid, side="right") / len(s)


def simulate(cfg, mode, modules=None, drops=None, seed=None, jobs=None, extra_meta=None):
    seed = cfg.system.rng_seed if seed is None else seed
    results = run_drops(cfg, mode, modules, drops, seed, jobs)
    meta = {"mode": mode.to_dict(), "label": mode.label(), "config_hash": cfg.digest(),
            "system_hash": cfg.system_digest(),
            "seed": seed, "drops": len(results)}
    meta.update(extra_meta or {})
    return aggregate(results, meta)


def write_report(report, csv_path, json_path=None):
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["drop", "user", "se_bps_hz"])
        for d, row in enumerate(report.per_user_se):
            for k, se in enumerate(row):
                w.writerow([d, k, repr(float(se))])
    if json_path is not None:
        side = {"q05": report.q05, "median": report.median, **report.metadata}
        with open(json_path, "w") as fh:
            json.dump(side, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_report(csv_path, json_path=None):
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    D = 1 + max(int(r["drop"]) for r in rows)
    K = 1 + max(int(r["user"]) for r in rows)
    se = np.zeros((D, K))
    for r in rows:
        se[int(r["drop"]), int(r["user"])] = float(r["se_bps_hz"])
    meta = {}
    if json_path is not None:
        with open(json_path) as fh:
            meta = json.load(fh)
        for key in ("q05", "median"):
            meta.pop(key, None)
    flat = se.reshape(-1)
    return SeReport(se, quantile(flat, 0.05), quantile(flat, 0.5), meta)
