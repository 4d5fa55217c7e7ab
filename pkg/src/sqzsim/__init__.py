"""Gaussian-state simulator for a double-pass OPA squeezer with balanced homodyne readout."""

from .chain import ChainConfig, OpaParams, PumpStage
from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .gaussian import QuadratureState
from .homodyne import BhdSettings, ScanTrace
from .inference import ChainFitter, FitResult, MeasurementRecord, fit, forward_observables, grid_oracle, sensitivity

__version__ = "0.1.0"

__all__ = [
    "BhdSettings",
    "ChainConfig",
    "ChainFitter",
    "ExperimentConfig",
    "FitResult",
    "MeasurementRecord",
    "OpaParams",
    "PumpStage",
    "QuadratureState",
    "ScanTrace",
    "fit",
    "forward_observables",
    "grid_oracle",
    "load_config",
    "parse_config",
    "sensitivity",
    "serialize_config",
]
