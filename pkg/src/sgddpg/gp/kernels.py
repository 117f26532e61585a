"""Squared-exponential ARD kernel and its hyperparameter container."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..exceptions import DimensionMismatchError


@dataclass(frozen=True)
class KernelHyperparams:
    """SE-ARD kernel parameters plus the observation-noise bound.

    ``noise_std`` plays two roles: it is the GP observation noise and the
    radius of the measurement-validity ball used by the agent.
    """

    signal_variance: float = 1.0
    lengthscales: tuple[float, ...] = field(default=(1.0,))
    noise_std: float = 0.1
    jitter: float = 1e-10

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_std", float(self.noise_std))
        object.__setattr__(self, "jitter", float(self.jitter))
        if not self.signal_variance > 0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance}")
        if len(ls) == 0 or not all(v > 0 for v in ls):
            raise ValueError(f"lengthscales must be non-empty and positive, got {ls}")
        if not self.noise_std > 0:
            raise ValueError(f"noise_std must be > 0, got {self.noise_std}")
        if not self.jitter >= 0:
            raise ValueError(f"jitter must be >= 0, got {self.jitter}")

    @classmethod
    def isotropic(cls, dim: int, lengthscale: float = 1.0, **kwargs) -> "KernelHyperparams":
        return cls(lengthscales=(lengthscale,) * dim, **kwargs)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    @property
    def ls(self) -> np.ndarray:
        return np.asarray(self.lengthscales)

    def to_log_params(self) -> np.ndarray:
        """``[log signal_variance, log lengthscale_1, ..., log lengthscale_d]``."""
        return np.concatenate([[np.log(self.signal_variance)], np.log(self.ls)])

    def with_log_params(self, theta: Sequence[float]) -> "KernelHyperparams":
        theta = np.asarray(theta, dtype=float)
        return replace(self, signal_variance=float(np.exp(theta[0])),
                       lengthscales=tuple(np.exp(theta[1:])))

    def to_dict(self) -> dict:
        return {"signal_variance": self.signal_variance,
                "lengthscales": list(self.lengthscales),
                "noise_std": self.noise_std, "jitter": self.jitter}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelHyperparams":
        return cls(signal_variance=d["signal_variance"], lengthscales=tuple(d["lengthscales"]),
                   noise_std=d["noise_std"], jitter=d.get("jitter", 1e-10))


def _check_dim(n_cols: int, hp: KernelHyperparams, what: str):
    if n_cols != hp.dim:
        raise DimensionMismatchError(
            f"{what} has dimension {n_cols} but the kernel has {hp.dim} lengthscales")


def kernel_matrix(A, B, hp: KernelHyperparams) -> np.ndarray:
    """Cross-covariance ``k(A_i, B_j)`` for row-stacked inputs."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    _check_dim(A.shape[1], hp, "first input")
    _check_dim(B.shape[1], hp, "second input")
    return hp.signal_variance * np.exp(-0.5 * scaled_sqdist(A, B, hp.ls))


def scaled_sqdist(A: np.ndarray, B: np.ndarray, ls: np.ndarray) -> np.ndarray:
    # per-dimension accumulation keeps the diagonal exactly zero and the result symmetric
    sq = np.zeros((A.shape[0], B.shape[0]))
    for d in range(A.shape[1]):
        diff = (A[:, d, None] - B[None, :, d]) / ls[d]
        sq += diff * diff
    return sq


def kernel_eval(z, z2, hp: KernelHyperparams) -> float:
    z = np.asarray(z, dtype=float).ravel()
    z2 = np.asarray(z2, dtype=float).ravel()
    if z.shape != z2.shape:
        raise DimensionMismatchError(f"inputs have dimensions {z.size} and {z2.size}")
    _check_dim(z.size, hp, "input")
    # direct difference form: exact k(z, z) == signal_variance, exact symmetry
    r = (z - z2) / hp.ls
    return float(hp.signal_variance * np.exp(-0.5 * np.dot(r, r)))
