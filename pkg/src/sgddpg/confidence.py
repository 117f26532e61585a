"""Confidence-interval scaling and the safety bounds ``mean -/+ beta * std``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .gp.core import GpDataset, PosteriorStats, jittered_cholesky
from .gp.kernels import KernelHyperparams, kernel_matrix


@dataclass(frozen=True)
class BetaConfig:
    mode: str = "fixed"
    fixed_value: float = 2.0
    delta: float = 0.1
    rkhs_floor: float = 1.0

    def __post_init__(self):
        if self.mode not in ("fixed", "online"):
            raise ValueError(f"beta mode must be 'fixed' or 'online', got {self.mode!r}")
        if not self.fixed_value > 0:
            raise ValueError("fixed_value must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if not self.rkhs_floor >= 0:
            raise ValueError("rkhs_floor must be >= 0")

    @classmethod
    def parse(cls, text: str, rkhs_floor: float = 1.0) -> "BetaConfig":
        """Parse ``fixed:<value>`` or ``online:<delta>``."""
        mode, _, arg = text.partition(":")
        mode = mode.strip().lower()
        if mode == "fixed":
            return cls("fixed", fixed_value=float(arg) if arg else 2.0, rkhs_floor=rkhs_floor)
        if mode == "online":
            return cls("online", delta=float(arg) if arg else 0.1, rkhs_floor=rkhs_floor)
        raise ValueError(f"cannot parse beta setting {text!r}; use fixed:<v> or online:<delta>")

    def __str__(self):
        return f"fixed:{self.fixed_value:g}" if self.mode == "fixed" else f"online:{self.delta:g}"


@dataclass(frozen=True)
class SafetyBound:
    mean: float
    std: float
    beta: float
    lower: float
    upper: float


def info_capacity(data: GpDataset, hp: KernelHyperparams) -> float:
    """Mutual information between the latent function and the measurements.

    Sums ``0.5 * log(1 + var_i / noise^2)`` where ``var_i`` is the latent
    posterior variance of element ``i`` given the noisy measurements of
    elements ``1..i-1``. Those sequential predictive variances are read off
    the Cholesky diagonal of ``K + noise^2 I``, so the total equals
    ``0.5 * log det(I + K / noise^2)``.
    """
    n = len(data)
    if n == 0:
        return 0.0
    s2 = hp.noise_std**2
    K = kernel_matrix(data.inputs, data.inputs, hp)
    # the noise term already makes the matrix positive definite, so no base jitter
    L, jitter = jittered_cholesky(K + s2 * np.eye(n), hp.signal_variance, 0.0)
    seq_var = np.maximum(np.diag(L)**2 - s2 - jitter, 0.0)
    return float(0.5 * np.sum(np.log1p(seq_var / s2)))


def rkhs_bound(data: GpDataset, hp: KernelHyperparams, floor: float = 1.0) -> float:
    """``max(floor, sqrt(y^T K^{-1} y))`` with the noise-free gram matrix."""
    if len(data) == 0:
        return float(floor)
    K = kernel_matrix(data.inputs, data.inputs, hp)
    L, _ = jittered_cholesky(K, hp.signal_variance, hp.jitter)
    y = data.targets
    norm2 = float(y @ cho_solve((L, True), y))
    return max(float(floor), math.sqrt(max(norm2, 0.0)))


def beta(config: BetaConfig, data: GpDataset, hp: KernelHyperparams) -> float:
    if config.mode == "fixed":
        return float(config.fixed_value)
    b_g = rkhs_bound(data, hp, config.rkhs_floor)
    gamma = info_capacity(data, hp)
    value = math.sqrt(b_g) + 4.0 * hp.noise_std * math.sqrt(
        gamma + 1.0 + math.log(2.0 / config.delta))
    return value


def bounds(stats: PosteriorStats, beta_value: float) -> SafetyBound:
    if stats.variance < 0:
        raise ValueError("posterior variance must be non-negative")
    std = math.sqrt(stats.variance)
    return SafetyBound(stats.mean, std, float(beta_value),
                       stats.mean - beta_value * std, stats.mean + beta_value * std)
