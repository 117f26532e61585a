"""Small feed-forward networks in numpy with exact reverse-mode gradients.

Inputs are row-stacked: a batch is ``(batch, in_dim)`` and a layer computes
``act(x @ W + b)``. A 1-D input is treated as a batch of one and the output
is returned 1-D.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DimensionMismatchError, NonFiniteError

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass(eq=False)
class MlpParams:
    weights: list
    biases: list
    activations: tuple

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise ValueError("weights, biases and activations must have equal nonzero length")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise DimensionMismatchError(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i and W.shape[0] != self.weights[i - 1].shape[1]:
                raise DimensionMismatchError(f"layer {i} input {W.shape[0]} does not chain "
                                             f"from output {self.weights[i - 1].shape[1]}")
        self.activations = tuple(self.activations)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def params(self) -> list:
        """Flat list ``[W0, b0, W1, b1, ...]``; gradients use the same order."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def shapes(self) -> list:
        return [p.shape for p in self.params]

    def with_params(self, flat: Sequence[np.ndarray]) -> "MlpParams":
        return MlpParams(list(flat[0::2]), list(flat[1::2]), self.activations)

    def copy(self) -> "MlpParams":
        return self.with_params([p.copy() for p in self.params])

    def same_architecture(self, other: "MlpParams") -> bool:
        return self.activations == other.activations and self.shapes == other.shapes


def init_mlp(sizes: Sequence[int], activations: Sequence[str], rng: np.random.Generator,
             final_scale: float | None = None) -> MlpParams:
    """Uniform fan-in initialisation; ``final_scale`` overrides the last layer's range."""
    if len(sizes) != len(activations) + 1:
        raise ValueError("need one activation per layer")
    weights, biases = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        lim = 1.0 / np.sqrt(n_in)
        if final_scale is not None and i == len(sizes) - 2:
            lim = final_scale
        weights.append(rng.uniform(-lim, lim, size=(n_in, n_out)))
        biases.append(rng.uniform(-lim, lim, size=n_out))
    return MlpParams(weights, biases, tuple(activations))


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _as_batch(net: MlpParams, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise DimensionMismatchError(f"input has shape {x.shape}, network expects {net.input_dim} features")
    return X, single


def forward_trace(net: MlpParams, X: np.ndarray):
    """Forward pass keeping every layer's input and output for :func:`backward_trace`."""
    inputs, outputs = [], []
    h = X
    for W, b, a in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        h = _act(a, h @ W + b)
        outputs.append(h)
    return h, (inputs, outputs)


def backward_trace(net: MlpParams, trace, upstream: np.ndarray):
    inputs, outputs = trace
    grads = [None] * (2 * len(net.weights))
    g = upstream
    for i in range(len(net.weights) - 1, -1, -1):
        a = net.activations[i]
        if a == "relu":
            # subgradient 0 at the kink
            g = g * (outputs[i] > 0.0)
        elif a == "tanh":
            g = g * (1.0 - outputs[i] ** 2)
        grads[2 * i] = inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return grads, g


def forward(net: MlpParams, x) -> np.ndarray:
    X, single = _as_batch(net, x)
    out, _ = forward_trace(net, X)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("network output is not finite")
    return out[0] if single else out


def backward(net: MlpParams, x, upstream):
    """Gradients of ``sum(upstream * forward(x))`` w.r.t. parameters and input."""
    X, single = _as_batch(net, x)
    out, trace = forward_trace(net, X)
    U = np.asarray(upstream, dtype=float).reshape(out.shape)
    grads, dx = backward_trace(net, trace, U)
    return grads, (dx[0] if single else dx)


@dataclass(eq=False)
class OptimizerState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped: int = field(default=0)

    @classmethod
    def for_net(cls, net: MlpParams, lr: float = 1e-3, **kwargs) -> "OptimizerState":
        zeros = [np.zeros_like(p) for p in net.params]
        return cls(zeros, [z.copy() for z in zeros], lr=lr, **kwargs)


def adam_step(net: MlpParams, grads: Sequence[np.ndarray], opt: OptimizerState):
    """One bias-corrected adaptive-moment descent step on ``grads``.

    Non-finite gradients skip the update and bump ``opt.skipped``.
    """
    if len(grads) != len(opt.m) or any(g.shape != m.shape for g, m in zip(grads, opt.m)):
        raise DimensionMismatchError("gradient shapes do not match the optimizer state")
    if not all(np.all(np.isfinite(g)) for g in grads):
        log.warning("non-finite gradient; skipping optimizer step %d", opt.t + 1)
        return net, OptimizerState(opt.m, opt.v, opt.t, opt.lr, opt.beta1, opt.beta2,
                                   opt.eps, opt.skipped + 1)
    t = opt.t + 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(net.params, grads, opt.m, opt.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps))
        new_m.append(m)
        new_v.append(v)
    return (net.with_params(new_p),
            OptimizerState(new_m, new_v, t, opt.lr, b1, b2, opt.eps, opt.skipped))


def soft_update(target: MlpParams, source: MlpParams, tau: float) -> MlpParams:
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if not target.same_architecture(source):
        raise DimensionMismatchError("target and source architectures differ")
    return target.with_params([(1.0 - tau) * t + tau * s
                               for t, s in zip(target.params, source.params)])
