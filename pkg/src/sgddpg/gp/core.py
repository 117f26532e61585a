"""Exact GP regression over state-action inputs.

All routines are pure functions of a :class:`GpDataset` and a
:class:`KernelHyperparams`. Linear algebra goes through a jitter-escalated
Cholesky factor of ``K + (noise_std**2 + jitter) I``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ..exceptions import DimensionMismatchError, FactorizationError
from .kernels import KernelHyperparams, kernel_matrix

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
JITTER_START = 1e-10
JITTER_STOP = 1e-4


@dataclass(frozen=True, eq=False)
class GpDataset:
    """Capacity-bounded set of ``(z_i, y_i)`` pairs, ``z = (s, a)``."""

    inputs: np.ndarray
    targets: np.ndarray
    capacity: int = 2000

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.targets, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(len(y), -1) if len(y) else X.reshape(0, 0)
        if X.ndim != 2:
            raise DimensionMismatchError("inputs must be a 2-D array of row vectors")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatchError(
                f"{X.shape[0]} inputs but {y.shape[0]} targets")
        if int(self.capacity) < 1:
            raise ValueError("capacity must be a positive integer")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "capacity", int(self.capacity))

    @classmethod
    def empty(cls, dim: int, capacity: int = 2000) -> "GpDataset":
        return cls(np.zeros((0, dim)), np.zeros(0), capacity)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index) -> "GpDataset":
        index = np.asarray(index, dtype=int)
        return GpDataset(self.inputs[index], self.targets[index], self.capacity)

    def concat(self, inputs, targets) -> "GpDataset":
        """Append new pairs. May exceed capacity; eviction is the caller's job."""
        inputs = np.asarray(inputs, dtype=float).reshape(-1, self.dim)
        return GpDataset(np.vstack([self.inputs, inputs]),
                         np.concatenate([self.targets, np.asarray(targets, float).ravel()]),
                         self.capacity)

    def equals(self, other: "GpDataset") -> bool:
        return (self.capacity == other.capacity
                and np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.targets, other.targets))


@dataclass(frozen=True)
class PosteriorStats:
    mean: float
    variance: float


def jittered_cholesky(A: np.ndarray, scale: float, base_jitter: float = 0.0):
    """Lower Cholesky factor of ``A + jitter I`` with escalating jitter.

    Tries ``base_jitter`` first, then adds ``1e-10 * scale`` growing by 10x
    up to ``1e-4 * scale``. Returns ``(L, jitter_used)``.
    """
    n = A.shape[0]
    eye = np.eye(n)
    extra = 0.0
    while True:
        jitter = base_jitter + extra
        try:
            return np.linalg.cholesky(A + jitter * eye), jitter
        except np.linalg.LinAlgError:
            pass
        extra = JITTER_START * scale if extra == 0.0 else extra * 10.0
        if extra > JITTER_STOP * scale * (1 + 1e-9):
            raise FactorizationError(
                f"matrix of size {n} not positive-definite with jitter up to {JITTER_STOP * scale:g}")
        log.debug("escalating Cholesky jitter to %g", extra)


class GpPosterior:
    """Cached factorization of the noisy gram matrix for repeated queries."""

    def __init__(self, data: GpDataset, hp: KernelHyperparams):
        if len(data) and data.dim != hp.dim:
            raise DimensionMismatchError(
                f"dataset inputs have dimension {data.dim}, kernel has {hp.dim}")
        self.data = data
        self.hp = hp
        n = len(data)
        if n == 0:
            self.L = np.zeros((0, 0))
            self.alpha = np.zeros(0)
            self.jitter = 0.0
            return
        K = kernel_matrix(data.inputs, data.inputs, hp)
        self.K = K
        noisy = K + hp.noise_std**2 * np.eye(n)
        self.L, self.jitter = jittered_cholesky(noisy, hp.signal_variance, hp.jitter)
        self.alpha = cho_solve((self.L, True), data.targets)

    def __len__(self):
        return len(self.data)

    def _check_query(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.hp.dim:
            raise DimensionMismatchError(
                f"query has dimension {Z.shape[1]}, kernel has {self.hp.dim}")
        return Z

    def predict(self, Z) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at each row of ``Z``."""
        Z = self._check_query(Z)
        sf2 = self.hp.signal_variance
        if len(self) == 0:
            return np.zeros(Z.shape[0]), np.full(Z.shape[0], sf2)
        Kq = kernel_matrix(Z, self.data.inputs, self.hp)
        mean = Kq @ self.alpha
        V = solve_triangular(self.L, Kq.T, lower=True)
        var = sf2 - np.sum(V * V, axis=0)
        return mean, np.maximum(var, 0.0)

    def predict_grad(self, Z):
        """Mean, variance and their gradients with respect to the query rows."""
        Z = self._check_query(Z)
        sf2 = self.hp.signal_variance
        m, d = Z.shape
        if len(self) == 0:
            zeros = np.zeros((m, d))
            return np.zeros(m), np.full(m, sf2), zeros, zeros.copy()
        X = self.data.inputs
        inv_l2 = 1.0 / self.hp.ls**2
        Kq = kernel_matrix(Z, X, self.hp)
        mean = Kq @ self.alpha
        W = cho_solve((self.L, True), Kq.T).T  # rows: (K + s^2 I)^-1 k(z)
        var = sf2 - np.sum(Kq * W, axis=1)
        # d k(z, x_i)/dz = -k(z, x_i) (z - x_i) / l^2
        wm = Kq * self.alpha
        dmean = -(wm.sum(axis=1)[:, None] * Z - wm @ X) * inv_l2
        wv = Kq * W
        dvar = 2.0 * (wv.sum(axis=1)[:, None] * Z - wv @ X) * inv_l2
        return mean, np.maximum(var, 0.0), dmean, dvar


def gram_matrix(data: GpDataset, hp: KernelHyperparams) -> np.ndarray:
    """Noise-free gram matrix, checked to factorize once noise is added."""
    if len(data) == 0:
        raise ValueError("gram_matrix needs a nonempty dataset")
    if data.dim != hp.dim:
        raise DimensionMismatchError(f"dataset dimension {data.dim} != kernel dimension {hp.dim}")
    K = kernel_matrix(data.inputs, data.inputs, hp)
    jittered_cholesky(K + hp.noise_std**2 * np.eye(len(data)), hp.signal_variance, hp.jitter)
    return K


def posterior(data: GpDataset, hp: KernelHyperparams, z) -> PosteriorStats:
    mean, var = GpPosterior(data, hp).predict(np.asarray(z, dtype=float).reshape(1, -1))
    return PosteriorStats(float(mean[0]), float(var[0]))


def posterior_grad(data: GpDataset, hp: KernelHyperparams, z):
    """Gradients ``(d mean/dz, d variance/dz)`` at a single query."""
    _, _, dmean, dvar = GpPosterior(data, hp).predict_grad(np.asarray(z, dtype=float).reshape(1, -1))
    return dmean[0], dvar[0]


def _lml_parts(data: GpDataset, hp: KernelHyperparams):
    post = GpPosterior(data, hp)
    n = len(data)
    value = (-0.5 * data.targets @ post.alpha - np.sum(np.log(np.diag(post.L)))
             - 0.5 * n * LOG_2PI)
    return float(value), post


def log_marginal_likelihood(data: GpDataset, hp: KernelHyperparams) -> float:
    if len(data) == 0:
        return 0.0
    return _lml_parts(data, hp)[0]


def log_marginal_likelihood_grad(data: GpDataset, hp: KernelHyperparams):
    """Value and gradient with respect to ``[log sf2, log l_1..l_d, log noise_std]``."""
    d = hp.dim
    if len(data) == 0:
        return 0.0, np.zeros(d + 2)
    value, post = _lml_parts(data, hp)
    n = len(data)
    Ainv = cho_solve((post.L, True), np.eye(n))
    W = np.outer(post.alpha, post.alpha) - Ainv
    K = post.K
    grad = np.empty(d + 2)
    grad[0] = 0.5 * np.sum(W * K)
    X = data.inputs
    WK = W * K
    for j in range(d):
        diff = (X[:, j, None] - X[None, :, j]) / hp.lengthscales[j]
        grad[1 + j] = 0.5 * np.sum(WK * diff * diff)
    grad[-1] = hp.noise_std**2 * np.trace(W)
    return value, grad


def fit_hyperparams(data: GpDataset, hp: KernelHyperparams, steps: int,
                    learning_rate: float = 1e-2, max_halvings: int = 20,
                    log_bounds: tuple[float, float] = (-12.0, 12.0)) -> KernelHyperparams:
    """Gradient ascent on the log marginal likelihood in log-parameter space.

    Only the signal variance and lengthscales move; ``noise_std`` stays fixed
    because it doubles as the measurement-validity radius. Each step halves
    the step size until the likelihood does not decrease, so the result is
    never worse than the input.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if steps == 0 or len(data) == 0:
        return hp
    best = hp
    best_val, grad = log_marginal_likelihood_grad(data, hp)
    if not np.isfinite(best_val):
        return hp
    for _ in range(steps):
        g = grad[:-1]
        if not np.all(np.isfinite(g)):
            break
        theta = best.to_log_params()
        step = learning_rate
        accepted = False
        for _ in range(max_halvings + 1):
            cand_theta = np.clip(theta + step * g, *log_bounds)
            try:
                cand = best.with_log_params(cand_theta)
                val, cand_grad = log_marginal_likelihood_grad(data, cand)
            except (FactorizationError, ValueError, FloatingPointError):
                val = -np.inf
            if np.isfinite(val) and val >= best_val:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        best, best_val, grad = cand, val, cand_grad
    return best
