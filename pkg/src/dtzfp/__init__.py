"""Cell-free massive MIMO downlink simulator with delay-tolerant zero-forcing precoding."""

from .config import RunConfig, SimulationConfig, SystemConfig, TrainingConfig
from .simkernel import CsiMode, SeReport, simulate

__all__ = ["RunConfig", "SystemConfig", "TrainingConfig", "SimulationConfig",
           "CsiMode", "SeReport", "simulate"]
__version__ = "0.1.0"
