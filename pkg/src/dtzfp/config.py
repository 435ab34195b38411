"""Run configuration: system constants, predictor training and simulation knobs.

The defaults reproduce the evaluation setup (128 APs, 16 UEs, 1 km square,
COST-Hata three-slope path loss, 100 Hz Doppler, 2x25 LSTM predictor).
Configs are stored as JSON with three flat sections, ``system``,
``training`` and ``simulation``; unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import InvalidParameterError

BOLTZMANN = 1.381e-23
SHARING_MODES = ("shared", "per-user", "per-link")


@dataclass(frozen=True)
class SystemConfig:
    num_aps: int = 128
    num_ues: int = 16
    area_side: float = 1000.0
    break_d0: float = 10.0
    break_d1: float = 50.0
    carrier_freq_mhz: float = 1900.0
    ap_height: float = 15.0
    ue_height: float = 1.65
    shadow_sigma_db: float = 8.0
    ap_power: float = 0.2
    ue_power: float = 0.1
    bandwidth: float = 20e6
    temperature: float = 290.0
    noise_figure_db: float = 9.0
    boltzmann: float = BOLTZMANN
    doppler: float = 100.0
    frame_duration: float = 10e-3
    delay: float = 1e-3
    training_duration: float = 0.5e-3
    symbols_per_frame: int = 64
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_ues < 1 or self.num_aps <= self.num_ues:
            raise InvalidParameterError(
                f"need num_aps > num_ues >= 1, got M={self.num_aps}, K={self.num_ues}")
        positive = ("area_side", "break_d0", "break_d1", "carrier_freq_mhz", "ap_height",
                    "ue_height", "ap_power", "ue_power", "bandwidth", "temperature",
                    "boltzmann", "frame_duration")
        if self.training_duration < 0:
            raise InvalidParameterError("training_duration must be >= 0")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.break_d0 >= self.break_d1:
            raise InvalidParameterError("break_d0 must be smaller than break_d1")
        if self.shadow_sigma_db < 0 or self.doppler < 0 or self.delay < 0:
            raise InvalidParameterError("shadow_sigma_db, doppler and delay must be >= 0")
        if self.symbols_per_frame < 1:
            raise InvalidParameterError("symbols_per_frame must be >= 1")


@dataclass(frozen=True)
class TrainingConfig:
    cell: str = "lstm"
    num_layers: int = 2
    hidden: int = 25
    window: int = 20
    training_length: int = 5000
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    target_mse: float = 0.0
    pilot_snr_db: float = 30.0
    target: str = "clean"       # "clean" true future channel, or "noisy" future estimate
    sharing: str = "shared"     # "shared" (one module), "per-user" (K) or "per-link" (M*K)

    def __post_init__(self):
        if self.cell not in ("lstm", "gru"):
            raise InvalidParameterError(f"unknown cell type {self.cell!r}")
        if self.sharing not in SHARING_MODES:
            raise InvalidParameterError(f"unknown module sharing {self.sharing!r}")
        if self.target not in ("clean", "noisy"):
            raise InvalidParameterError(f"unknown training target {self.target!r}")
        if self.num_layers < 1 or self.hidden < 1 or self.window < 1:
            raise InvalidParameterError("num_layers, hidden and window must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.training_length < 1:
            raise InvalidParameterError("bad epochs / batch_size / training_length")


@dataclass(frozen=True)
class SimulationConfig:
    drops: int = 500
    power_control_draws: int = 200
    pilot_snr_db: float = 30.0
    estimation: str = "normalized"   # or "mmse" for the physical pilot path
    symbols: str = "qpsk"            # or "gaussian"
    max_retries: int = 10
    jobs: int = 1

    def __post_init__(self):
        if self.drops < 1 or self.power_control_draws < 1:
            raise InvalidParameterError("drops and power_control_draws must be >= 1")
        if self.estimation not in ("normalized", "mmse"):
            raise InvalidParameterError(f"unknown estimation mode {self.estimation!r}")
        if self.symbols not in ("qpsk", "gaussian"):
            raise InvalidParameterError(f"unknown symbol alphabet {self.symbols!r}")


@dataclass(frozen=True)
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)

    def to_dict(self):
        return {"system": asdict(self.system), "training": asdict(self.training),
                "simulation": asdict(self.simulation)}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self):
        """Stable hash of the full configuration."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def system_digest(self):
        canon = json.dumps(asdict(self.system), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def with_overrides(self, section, **kwargs):
        kwargs = {k: v for k, v in kwargs.items() if v is not None}
        if not kwargs:
            return self
        return replace(self, **{section: _build(type(getattr(self, section)),
                                                {**asdict(getattr(self, section)), **kwargs},
                                                section)})


_SECTIONS = {"system": SystemConfig, "training": TrainingConfig, "simulation": SimulationConfig}


def _build(cls, values, section):
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise InvalidParameterError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    out = {}
    for name, value in values.items():
        ftype = known[name].type
        if ftype == "int":
            if isinstance(value, bool) or int(value) != value:
                raise InvalidParameterError(f"{section}.{name} must be an integer")
            value = int(value)
        elif ftype == "float":
            value = float(value)
        elif ftype == "bool":
            if not isinstance(value, bool):
                raise InvalidParameterError(f"{section}.{name} must be true/false")
        out[name] = value
    return cls(**out)


def config_from_dict(data):
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise InvalidParameterError(f"unknown config section(s): {', '.join(unknown)}")
    return RunConfig(**{name: _build(cls, data.get(name, {}), name)
                        for name, cls in _SECTIONS.items()})


def load_config(path):
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def save_config(cfg, path):
    Path(path).write_text(cfg.to_json() + "\n")
