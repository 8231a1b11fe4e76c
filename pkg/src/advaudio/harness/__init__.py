"""Config-driven orchestration of dataset synthesis, training and the three experiments."""
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import PreconditionError, Workspace, experiment1, experiment2, experiment3, prepare, report, train_models

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_config", "PreconditionError", "Workspace",
    "prepare", "train_models", "experiment1", "experiment2", "experiment3", "report",
]
