"""Safety-guided DDPG learner.

The critic ``Q`` learns discounted reward, the guard ``G`` learns the
undiscounted cumulative safety cost. One-step guard differences are the GP's
measurements, and the actor ascends

    Q(s, pi(s)) - M * max(0, -l(s, pi(s))) + exp(-l(s, pi(s))**2)

where ``l = mean - beta * std`` is the GP lower confidence bound.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .gp.core import GpPosterior
from .nn import (MlpParams, OptimizerState, adam_step, backward_trace, forward, forward_trace,
                 init_mlp, soft_update)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    c: float
    s_next: np.ndarray
    done: bool


@dataclass(frozen=True)
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    c: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return self.s.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring buffer with its own seeded uniform sampler."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.c = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self._next = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        i = self._next
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = t.r
        self.c[i] = t.c
        self.s_next[i] = t.s_next
        self.done[i] = float(t.done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def batch(self, idx) -> Batch:
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.c[idx],
                     self.s_next[idx], self.done[idx])

    def sample(self, batch_size: int) -> Batch:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        return self.batch(self.rng.integers(0, self.size, size=batch_size))

    def transitions(self):
        for i in range(self.size):
            j = (self._next - self.size + i) % self.capacity
            yield Transition(self.s[j].copy(), self.a[j].copy(), float(self.r[j]),
                             float(self.c[j]), self.s_next[j].copy(), bool(self.done[j]))


@dataclass
class SafeActorConfig:
    M: float = 0.1
    discount: float = 0.99
    guard_discount: float = 1.0
    batch_size: int = 64
    action_noise_std: float = 0.3
    tau: float = 0.005
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    guard_lr: float = 1e-3
    safety_terms: bool = True

    def __post_init__(self):
        if self.M < 0:
            raise ValueError("M must be non-negative")
        if not 0.0 <= self.discount <= 1.0 or not 0.0 <= self.guard_discount <= 1.0:
            raise ValueError("discounts must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.action_noise_std < 0:
            raise ValueError("action_noise_std must be non-negative")


@dataclass(eq=False)
class AgentNets:
    actor: MlpParams
    critic: MlpParams
    guard: MlpParams
    actor_target: MlpParams
    critic_target: MlpParams
    guard_target: MlpParams
    actor_opt: OptimizerState
    critic_opt: OptimizerState
    guard_opt: OptimizerState
    action_low: np.ndarray
    action_high: np.ndarray
    features: str = "identity"

    @property
    def state_dim(self) -> int:
        return self.critic.input_dim - self.action_dim - feature_extra_dims(self.features)

    @property
    def action_dim(self) -> int:
        return self.actor.output_dim

    @property
    def action_center(self):
        return 0.5 * (self.action_high + self.action_low)

    @property
    def action_half(self):
        return 0.5 * (self.action_high - self.action_low)

    def networks(self) -> dict:
        return {"actor": self.actor, "critic": self.critic, "guard": self.guard,
                "actor_target": self.actor_target, "critic_target": self.critic_target,
                "guard_target": self.guard_target}


def _pendulum_features(S):
    # (theta, theta_dot) -> (cos, sin, theta_dot / 8): continuous across the +-pi wrap
    return np.stack([np.cos(S[..., 0]), np.sin(S[..., 0]), S[..., 1] / 8.0], axis=-1)


FEATURES = {"identity": lambda S: S, "pendulum": _pendulum_features}
_FEATURE_EXTRA = {"identity": 0, "pendulum": 1}


def feature_extra_dims(name: str) -> int:
    return _FEATURE_EXTRA[name]


def featurize(nets: AgentNets, S) -> np.ndarray:
    """Fixed input map applied to states before every network."""
    return FEATURES[nets.features](np.asarray(S, float))


def make_nets(state_dim: int, action_dim: int, action_low, action_high,
              rng: np.random.Generator, hidden=(64, 64), actor_hidden=(64, 64),
              cfg: SafeActorConfig | None = None, features: str = "identity") -> AgentNets:
    """Two-hidden-layer relu networks; the actor ends in a bound-scaled tanh."""
    cfg = cfg or SafeActorConfig()
    if features not in FEATURES:
        raise ValueError(f"unknown feature map {features!r}")
    in_dim = state_dim + _FEATURE_EXTRA[features]
    relus = ("relu",) * len(hidden)
    critic = init_mlp([in_dim + action_dim, *hidden, 1], relus + ("identity",), rng, 3e-3)
    guard = init_mlp([in_dim + action_dim, *hidden, 1], relus + ("identity",), rng, 3e-3)
    actor = init_mlp([in_dim, *actor_hidden, action_dim],
                     ("relu",) * len(actor_hidden) + ("tanh",), rng, 3e-3)
    return AgentNets(actor, critic, guard, actor.copy(), critic.copy(), guard.copy(),
                     OptimizerState.for_net(actor, cfg.actor_lr),
                     OptimizerState.for_net(critic, cfg.critic_lr),
                     OptimizerState.for_net(guard, cfg.guard_lr),
                     np.asarray(action_low, float).ravel(), np.asarray(action_high, float).ravel(),
                     features)


def policy(nets: AgentNets, s, target: bool = False) -> np.ndarray:
    net = nets.actor_target if target else nets.actor
    return nets.action_center + nets.action_half * forward(net, featurize(nets, s))


def _q(net: MlpParams, S, A, nets: AgentNets) -> np.ndarray:
    return forward(net, np.concatenate([featurize(nets, S), A], axis=-1))[..., 0]


def select_action(s, nets: AgentNets, cfg: SafeActorConfig, rng: np.random.Generator,
                  noise_std: float | None = None) -> np.ndarray:
    std = cfg.action_noise_std if noise_std is None else noise_std
    a = policy(nets, s)
    if std > 0:
        a = a + rng.normal(0.0, std, size=a.shape)
    return np.clip(a, nets.action_low, nets.action_high)


def guard_target(t, nets: AgentNets, guard_discount: float = 1.0):
    """``c + G'(s', pi'(s'))`` with target networks; the bootstrap is cut at ``done``.

    Accepts a single :class:`Transition` or a :class:`Batch`.
    """
    s_next = np.atleast_2d(t.s_next)
    boot = _q(nets.guard_target, s_next, policy(nets, s_next, target=True), nets)
    y = np.asarray(t.c, float) + guard_discount * (1.0 - np.asarray(t.done, float)) * boot
    return float(y[0]) if isinstance(t, Transition) else y


def critic_target(t, nets: AgentNets, discount: float):
    s_next = np.atleast_2d(t.s_next)
    boot = _q(nets.critic_target, s_next, policy(nets, s_next, target=True), nets)
    y = np.asarray(t.r, float) + discount * (1.0 - np.asarray(t.done, float)) * boot
    return float(y[0]) if isinstance(t, Transition) else y


def _regress(net: MlpParams, opt: OptimizerState, F, A, y):
    """One MSE step of ``net(F, A)`` towards fixed targets ``y``; ``F`` are state features."""
    X = np.concatenate([F, A], axis=1)
    out, trace = forward_trace(net, X)
    err = out[:, 0] - y
    loss = float(np.mean(err * err))
    grads, _ = backward_trace(net, trace, (2.0 / len(y)) * err[:, None])
    new_net, new_opt = adam_step(net, grads, opt)
    return loss, new_net, new_opt


def update_guard(buffer: ReplayBuffer, nets: AgentNets, cfg: SafeActorConfig,
                 batch: Batch | None = None) -> float | None:
    """One guard regression step; returns the pre-step batch loss or ``None`` if the buffer is short."""
    if batch is None:
        if len(buffer) < cfg.batch_size:
            return None
        batch = buffer.sample(cfg.batch_size)
    y = guard_target(batch, nets, cfg.guard_discount)
    loss, nets.guard, nets.guard_opt = _regress(nets.guard, nets.guard_opt, featurize(nets, batch.s), batch.a, y)
    nets.guard_target = soft_update(nets.guard_target, nets.guard, cfg.tau)
    return loss


def update_critic(buffer: ReplayBuffer, nets: AgentNets, cfg: SafeActorConfig,
                  batch: Batch | None = None) -> float | None:
    if batch is None:
        if len(buffer) < cfg.batch_size:
            return None
        batch = buffer.sample(cfg.batch_size)
    y = critic_target(batch, nets, cfg.discount)
    loss, nets.critic, nets.critic_opt = _regress(nets.critic, nets.critic_opt, featurize(nets, batch.s), batch.a, y)
    nets.critic_target = soft_update(nets.critic_target, nets.critic, cfg.tau)
    return loss


def measurement(t: Transition, nets: AgentNets) -> float:
    """Guard difference ``G(s', pi(s')) - G(s, a)`` with the online networks."""
    s_next = np.atleast_2d(t.s_next)
    g_next = _q(nets.guard, s_next, policy(nets, s_next), nets)
    g_now = _q(nets.guard, np.atleast_2d(t.s), np.atleast_2d(t.a), nets)
    return float(g_next[0] - g_now[0])


def filter_measurement(g_hat: float, c: float, sigma: float) -> bool:
    """Valid when ``g_hat`` lies within ``sigma`` of ``c`` or of ``-c``."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    return abs(g_hat - c) <= sigma or abs(g_hat + c) <= sigma


def storage_filter(g_hat: float, sigma: float) -> bool:
    """Store only measurements strictly outside the ``sigma`` ball of zero."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    return abs(g_hat) > sigma


def weighted_objective(q, lower, M: float, safety_terms: bool = True):
    """``q - M * max(0, -lower) + exp(-lower**2)``, element-wise."""
    q = np.asarray(q, float)
    if not safety_terms:
        return q
    lower = np.asarray(lower, float)
    return q - M * np.maximum(0.0, -lower) + np.exp(-lower * lower)


def weighted_objective_dlower(lower, M: float):
    """Derivative of the safety terms w.r.t. the lower bound; the kink at 0 takes subgradient 0."""
    lower = np.asarray(lower, float)
    return M * (lower < 0.0) - 2.0 * lower * np.exp(-lower * lower)


def _as_posterior(gp) -> GpPosterior:
    if isinstance(gp, GpPosterior):
        return gp
    data, hp = gp
    return GpPosterior(data, hp)


def _lower_and_grad(post: GpPosterior, Z: np.ndarray, beta_value: float):
    mean, var, dmean, dvar = post.predict_grad(Z)
    std = np.sqrt(var)
    safe = std > 1e-12
    dstd = np.where(safe[:, None], dvar / (2.0 * np.where(safe, std, 1.0))[:, None], 0.0)
    return mean - beta_value * std, dmean - beta_value * dstd


def actor_objective_batch(S, nets: AgentNets, gp, beta_value: float,
                          cfg: SafeActorConfig) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, float))
    A = policy(nets, S)
    q = _q(nets.critic, S, A, nets)
    if not cfg.safety_terms:
        return q
    mean, var = _as_posterior(gp).predict(np.concatenate([S, A], axis=1))
    lower = mean - beta_value * np.sqrt(var)
    return weighted_objective(q, lower, cfg.M)


def actor_objective(s, nets: AgentNets, gp, beta_value: float, cfg: SafeActorConfig) -> float:
    return float(actor_objective_batch(np.atleast_2d(s), nets, gp, beta_value, cfg)[0])


def actor_objective_grad(S, nets: AgentNets, gp, beta_value: float, cfg: SafeActorConfig):
    """Batch-mean objective and its gradient w.r.t. the actor parameters.

    GP data, ``beta`` and the critic are constants; the gradient flows through
    the critic's action input and the lower bound's action input.
    """
    S = np.atleast_2d(np.asarray(S, float))
    n = S.shape[0]
    ds = S.shape[1]
    F = featurize(nets, S)
    out, trace = forward_trace(nets.actor, F)
    A = nets.action_center + nets.action_half * out
    q_out, q_trace = forward_trace(nets.critic, np.concatenate([F, A], axis=1))
    q = q_out[:, 0]
    _, dX = backward_trace(nets.critic, q_trace, np.full((n, 1), 1.0 / n))
    dA = dX[:, F.shape[1]:]
    if cfg.safety_terms:
        # the GP sees raw (state, action) inputs
        lower, dlower = _lower_and_grad(_as_posterior(gp), np.concatenate([S, A], axis=1),
                                        beta_value)
        J = weighted_objective(q, lower, cfg.M)
        dA = dA + (weighted_objective_dlower(lower, cfg.M) / n)[:, None] * dlower[:, ds:]
    else:
        J = q
    grads, _ = backward_trace(nets.actor, trace, dA * nets.action_half)
    return float(np.mean(J)), grads


def update_actor(buffer: ReplayBuffer, nets: AgentNets, gp, beta_value: float,
                 cfg: SafeActorConfig, batch: Batch | None = None) -> float | None:
    """One ascent step on the batch-mean objective; returns the pre-step value."""
    if batch is None:
        if len(buffer) < cfg.batch_size:
            return None
        batch = buffer.sample(cfg.batch_size)
    value, grads = actor_objective_grad(batch.s, nets, gp, beta_value, cfg)
    if not all(np.all(np.isfinite(g)) for g in grads):
        log.warning("non-finite actor gradient; step skipped")
        nets.actor_opt.skipped += 1
        return value
    nets.actor, nets.actor_opt = adam_step(nets.actor, [-g for g in grads], nets.actor_opt)
    nets.actor_target = soft_update(nets.actor_target, nets.actor, cfg.tau)
    return value
