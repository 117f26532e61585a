"""Numerical self-checks for the GP stack.

Each check compares the production code against a slow, independent
computation and returns a :class:`CheckResult`. The CLI ``gp-selftest``
subcommand prints them as a table; the acceptance tests call them directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .confidence import BetaConfig, beta
from .gp.core import GpDataset, GpPosterior, log_marginal_likelihood, log_marginal_likelihood_grad
from .gp.kernels import KernelHyperparams, kernel_matrix


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} {self.value:<12.4g} (limit {self.threshold:g}) {self.detail}"


def _random_problem(rng: np.random.Generator, n: int, d: int, noise: float | None = None):
    hp = KernelHyperparams(signal_variance=float(rng.uniform(0.5, 2.0)),
                           lengthscales=tuple(rng.uniform(0.3, 2.0, d)),
                           noise_std=float(noise if noise is not None else rng.uniform(0.1, 0.5)))
    X = rng.uniform(-2.0, 2.0, (n, d))
    y = rng.normal(size=n)
    return GpDataset(X, y, capacity=max(n, 1)), hp


def _dense_posterior(data: GpDataset, hp: KernelHyperparams, Z: np.ndarray):
    """Posterior by explicit inversion, one query at a time."""
    nv = hp.noise_std**2 + hp.jitter
    if len(data) == 0:
        return np.zeros(len(Z)), np.full(len(Z), hp.signal_variance)
    inv = np.linalg.inv(kernel_matrix(data.inputs, data.inputs, hp) + nv * np.eye(len(data)))
    means, variances = [], []
    for z in Z:
        k = kernel_matrix(z[None, :], data.inputs, hp)[0]
        means.append(k @ inv @ data.targets)
        variances.append(hp.signal_variance - k @ inv @ k)
    return np.array(means), np.array(variances)


def check_oracle_equivalence(rng: np.random.Generator, trials: int = 50, tol: float = 1e-8,
                             fault: bool = False) -> CheckResult:
    """Cholesky posterior against explicit inversion on random datasets (n <= 50, d <= 5)."""
    worst = 0.0
    for _ in range(trials):
        data, hp = _random_problem(rng, int(rng.integers(0, 51)), int(rng.integers(1, 6)))
        Z = rng.uniform(-2.5, 2.5, (10, hp.dim))
        mean, var = GpPosterior(data, hp).predict(Z)
        if fault:
            mean = -mean
        m_ref, v_ref = _dense_posterior(data, hp, Z)
        worst = max(worst, float(np.max(np.abs(mean - m_ref))), float(np.max(np.abs(var - v_ref))))
    return CheckResult("posterior_vs_dense", worst, tol, worst <= tol, f"{trials} datasets")


def check_lml_gradient(rng: np.random.Generator, trials: int = 20, tol: float = 1e-4,
                       h: float = 1e-5) -> CheckResult:
    """Analytic log-likelihood gradient against central differences in log space."""
    worst = 0.0
    for _ in range(trials):
        data, hp = _random_problem(rng, int(rng.integers(2, 20)), int(rng.integers(1, 4)))
        _, grad = log_marginal_likelihood_grad(data, hp)
        theta = np.concatenate([hp.to_log_params(), [math.log(hp.noise_std)]])

        def f(t):
            return log_marginal_likelihood(data, KernelHyperparams(
                math.exp(t[0]), tuple(np.exp(t[1:-1])), math.exp(t[-1]), hp.jitter))

        fd = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (f(theta + e) - f(theta - e)) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-6)
        worst = max(worst, float(rel.max()))
    return CheckResult("lml_gradient_fd", worst, tol, worst < tol, f"{trials} instances")


def coverage_violation_rate(rng: np.random.Generator, functions: int = 200, n_train: int = 15,
                            n_test: int = 50, delta: float = 0.1, dim: int = 2,
                            noise_std: float = 0.1, fault: bool = False) -> float:
    """Fraction of test points where a prior-sampled function leaves the online-beta band.

    Each function is drawn jointly at training and test inputs from the GP
    prior; training targets get Gaussian noise of standard deviation
    ``noise_std``.
    """
    hp = KernelHyperparams.isotropic(dim, 1.0, signal_variance=1.0, noise_std=noise_std)
    cfg = BetaConfig("online", delta=delta)
    violations = 0
    for _ in range(functions):
        X = rng.uniform(-2.0, 2.0, (n_train + n_test, dim))
        K = kernel_matrix(X, X, hp) + 1e-9 * np.eye(len(X))
        f = np.linalg.cholesky(K) @ rng.standard_normal(len(X))
        y = f[:n_train] + noise_std * rng.standard_normal(n_train)
        data = GpDataset(X[:n_train], y, n_train)
        mean, var = GpPosterior(data, hp).predict(X[n_train:])
        if fault:
            mean = -mean
        b = beta(cfg, data, hp)
        violations += int(np.sum(np.abs(f[n_train:] - mean) > b * np.sqrt(var)))
    return violations / (functions * n_test)


def check_coverage(rng: np.random.Generator, functions: int = 200, delta: float = 0.1,
                   margin: float = 0.05, fault: bool = False) -> CheckResult:
    rate = coverage_violation_rate(rng, functions=functions, delta=delta, fault=fault)
    return CheckResult("coverage_online_beta", rate, delta + margin, rate <= delta + margin,
                       f"{functions} functions x 50 points")


def run_selftest(trials: int = 200, seed: int = 0, inject_fault: bool = False) -> list[CheckResult]:
    """Run every check; ``trials`` is the number of functions in the coverage check."""
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    return [check_oracle_equivalence(rngs[0], fault=inject_fault),
            check_lml_gradient(rngs[1]),
            check_coverage(rngs[2], functions=trials, fault=inject_fault)]
