"""Distinctive-trust consensus simulator for multi-chain blockchains."""

from .config import ConfigError, SimConfig, load_config
from .engine import Simulation, run_baseline, run_simulation
from .metrics import MetricsSeries, RoundOutcome, compute_metrics
from .trust import TrustLedger, TrustState

__all__ = ["ConfigError", "MetricsSeries", "RoundOutcome", "SimConfig", "Simulation",
           "TrustLedger", "TrustState", "compute_metrics", "load_config", "run_baseline",
           "run_simulation"]
__version__ = "0.1.0"
