"""Named experiments; importing this package fills ``REGISTRY``."""

from . import encoder_runs, graph_runs, label_runs, neighbor_runs, oracle_runs  # noqa: F401
from .base import REGISTRY, ConfigError, ExperimentResult, resolve_config, write_outputs

__all__ = ["REGISTRY", "ConfigError", "ExperimentResult", "resolve_config", "write_outputs"]
