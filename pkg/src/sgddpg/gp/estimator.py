"""Scikit-learn compatible wrapper around the exact GP routines."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import GpDataset, GpPosterior, fit_hyperparams, log_marginal_likelihood
from .kernels import KernelHyperparams


class SafetyGP(RegressorMixin, BaseEstimator):
    """Exact SE-ARD Gaussian process regressor.

    Parameters
    ----------
    signal_variance : float
        Prior variance of the latent function.
    lengthscales : float or array-like
        One lengthscale per input column; a scalar is broadcast at fit time.
    noise_std : float
        Observation noise bound. Held fixed during hyperparameter fitting.
    jitter : float
        Base diagonal jitter added before factorization.
    n_fit_steps : int
        Marginal-likelihood ascent steps run inside :meth:`fit`. Zero keeps
        the hyperparameters as given.
    capacity : int
        Dataset capacity recorded on the fitted :class:`GpDataset`.

    Attributes
    ----------
    hyperparams_ : KernelHyperparams
    dataset_ : GpDataset
    log_marginal_likelihood_ : float
    """

    def __init__(self, signal_variance=1.0, lengthscales=1.0, noise_std=0.1,
                 jitter=1e-10, n_fit_steps=0, capacity=2000):
        self.signal_variance = signal_variance
        self.lengthscales = lengthscales
        self.noise_std = noise_std
        self.jitter = jitter
        self.n_fit_steps = n_fit_steps
        self.capacity = capacity

    def _initial_hyperparams(self, n_features: int) -> KernelHyperparams:
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.size == 1:
            ls = np.repeat(ls, n_features)
        return KernelHyperparams(self.signal_variance, tuple(ls), self.noise_std, self.jitter)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, ensure_min_samples=0)
        hp = self._initial_hyperparams(X.shape[1])
        data = GpDataset(X, y, max(self.capacity, len(y), 1))
        if self.n_fit_steps and len(y):
            hp = fit_hyperparams(data, hp, self.n_fit_steps)
        self._set_state(data, hp)
        return self

    @classmethod
    def from_dataset(cls, data: GpDataset, hp: KernelHyperparams) -> "SafetyGP":
        """Wrap an existing dataset without refitting hyperparameters."""
        est = cls(hp.signal_variance, hp.lengthscales, hp.noise_std, hp.jitter,
                  capacity=data.capacity)
        est._set_state(data, hp)
        return est

    def _set_state(self, data, hp):
        self.dataset_ = data
        self.hyperparams_ = hp
        self.n_features_in_ = hp.dim
        self._post = GpPosterior(data, hp)
        self.log_marginal_likelihood_ = log_marginal_likelihood(data, hp)

    def predict(self, X, return_std=False):
        check_is_fitted(self, "hyperparams_")
        X = check_array(X)
        mean, var = self._post.predict(X)
        if return_std:
            return mean, np.sqrt(var)
        return mean

    def predict_var(self, X):
        """Latent posterior variance at each query row."""
        check_is_fitted(self, "hyperparams_")
        return self._post.predict(check_array(X))[1]

    def predict_grad(self, X):
        """Return ``(mean, var, dmean_dX, dvar_dX)`` for each query row."""
        check_is_fitted(self, "hyperparams_")
        return self._post.predict_grad(check_array(X))
