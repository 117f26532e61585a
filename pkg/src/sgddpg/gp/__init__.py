from .core import (GpDataset, GpPosterior, PosteriorStats, fit_hyperparams, gram_matrix,
                   jittered_cholesky, log_marginal_likelihood, log_marginal_likelihood_grad,
                   posterior, posterior_grad)
from .estimator import SafetyGP
from .kernels import KernelHyperparams, kernel_eval, kernel_matrix
from .sparsify import evict_to_capacity, independence_scores, remove_correlated

__all__ = [
    "GpDataset", "GpPosterior", "PosteriorStats", "KernelHyperparams", "SafetyGP",
    "kernel_eval", "kernel_matrix", "gram_matrix", "jittered_cholesky", "posterior",
    "posterior_grad", "log_marginal_likelihood", "log_marginal_likelihood_grad",
    "fit_hyperparams", "independence_scores", "evict_to_capacity", "remove_correlated",
]
