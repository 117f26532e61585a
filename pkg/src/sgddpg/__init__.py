"""Safety-guided DDPG: deterministic policy gradients steered by a GP safety model."""
from .config import TrainConfig
from .confidence import BetaConfig, beta, bounds, info_capacity, rkhs_bound
from .exceptions import ConfigError
from .gp import GpDataset, GpPosterior, KernelHyperparams, SafetyGP
from .harness import Trainer, evaluate, record_trajectory, run_summary, train

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "ConfigError", "BetaConfig", "beta", "bounds", "info_capacity", "rkhs_bound",
    "GpDataset", "GpPosterior", "KernelHyperparams", "SafetyGP", "Trainer", "train", "evaluate",
    "record_trajectory", "run_summary",
]
