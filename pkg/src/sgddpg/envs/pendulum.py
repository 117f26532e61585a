"""Torque-limited inverted pendulum, swing-up variant.

Angle convention: ``theta = 0`` is upright, ``theta = +-pi`` hangs down.
Dynamics and reward constants follow the common gym pendulum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..exceptions import NonFiniteError


def wrap_angle(theta: float) -> float:
    """Map an angle into ``(-pi, pi]``."""
    w = math.pi - math.fmod(math.pi - theta, 2.0 * math.pi)
    if w > math.pi:
        w -= 2.0 * math.pi
    elif w <= -math.pi:
        w += 2.0 * math.pi
    return w


def crossed_bottom(theta_prev: float, theta_next: float) -> bool:
    """Whether the shorter arc from ``theta_prev`` to ``theta_next`` passes through ``pi``."""
    if theta_prev == math.pi or theta_next == math.pi:
        return True
    opposite = (theta_prev > 0.0 > theta_next) or (theta_prev < 0.0 < theta_next)
    return opposite and abs(theta_prev) + abs(theta_next) > math.pi


def episode_catastrophes(trajectory: Sequence) -> int:
    """Count bottom crossings between consecutive states ``(theta, theta_dot)``."""
    thetas = [float(np.asarray(s).ravel()[0]) for s in trajectory]
    return sum(crossed_bottom(a, b) for a, b in zip(thetas[:-1], thetas[1:]))


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    cost: float
    catastrophe: bool
    done: bool = False


@dataclass(frozen=True)
class PendulumParams:
    g: float = 10.0
    m: float = 1.0
    length: float = 1.0
    dt: float = 0.05
    max_speed: float = 8.0
    max_torque: float = 2.0
    # reward = theta^T P theta + a^T U a with P = -diag(w_theta, w_theta_dot), U = -w_action
    w_theta: float = 1.0
    w_theta_dot: float = 0.1
    w_action: float = 0.001
    reset_theta: float = math.pi / 2
    reset_theta_dot: float = 1.0
    episode_length: int = 200
    # cost = cost_sign * reward; +1 makes the cost equal the (non-positive) reward
    cost_sign: float = 1.0

    def __post_init__(self):
        if self.cost_sign not in (1.0, -1.0):
            raise ValueError("cost_sign must be +1 or -1")


def pendulum_reward(theta: float, theta_dot: float, torque: float,
                    p: PendulumParams = PendulumParams()) -> float:
    return -(p.w_theta * theta * theta + p.w_theta_dot * theta_dot * theta_dot
             + p.w_action * torque * torque)


def pendulum_step(state, action, p: PendulumParams = PendulumParams()) -> StepResult:
    """Semi-implicit Euler step; the reward is evaluated at the pre-step state."""
    theta, theta_dot = (float(v) for v in np.asarray(state, dtype=float).ravel())
    a = float(np.asarray(action, dtype=float).ravel()[0])
    if not (math.isfinite(theta) and math.isfinite(theta_dot) and math.isfinite(a)):
        raise NonFiniteError(f"non-finite pendulum input state={state!r} action={action!r}")
    a = min(max(a, -p.max_torque), p.max_torque)
    theta = wrap_angle(theta)
    reward = pendulum_reward(theta, theta_dot, a, p)
    acc = 3.0 * p.g / (2.0 * p.length) * math.sin(theta) + 3.0 / (p.m * p.length**2) * a
    new_dot = min(max(theta_dot + acc * p.dt, -p.max_speed), p.max_speed)
    new_theta = wrap_angle(theta + new_dot * p.dt)
    return StepResult(np.array([new_theta, new_dot]), reward, p.cost_sign * reward,
                      crossed_bottom(theta, new_theta))


class PendulumEnv:
    """Stateful episode wrapper: ``reset(rng)`` then ``step(action)`` until ``done``.

    Any environment exposing ``state_dim``, ``action_dim``, ``action_low``,
    ``action_high``, ``episode_length``, ``reset`` and ``step`` can be
    plugged into the trainer.
    """

    name = "pendulum"
    features = "pendulum"
    state_dim = 2
    action_dim = 1

    def __init__(self, params: PendulumParams | None = None):
        self.params = params or PendulumParams()
        self.action_low = np.array([-self.params.max_torque])
        self.action_high = np.array([self.params.max_torque])
        self.episode_length = self.params.episode_length
        self.state = None
        self.t = 0

    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        return np.array([rng.uniform(-p.reset_theta, p.reset_theta),
                         rng.uniform(-p.reset_theta_dot, p.reset_theta_dot)])

    def reset(self, rng: np.random.Generator, state=None) -> np.ndarray:
        self.state = self.sample_initial(rng) if state is None else np.asarray(state, float).copy()
        self.t = 0
        return self.state.copy()

    def step(self, action) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        res = pendulum_step(self.state, action, self.params)
        self.state = res.next_state
        self.t += 1
        done = self.t >= self.episode_length
        return StepResult(res.next_state.copy(), res.reward, res.cost, res.catastrophe, done)


def energy(theta: float, theta_dot: float, p: PendulumParams = PendulumParams()) -> float:
    """Mechanical energy per unit inertia, zero when balanced upright at rest."""
    return 0.5 * theta_dot**2 + 1.5 * p.g / p.length * (math.cos(theta) - 1.0)


def swing_up_controller(state, p: PendulumParams = PendulumParams(),
                        gain: float = 1.0, catch_angle: float = 0.5) -> float:
    """Energy-pumping swing-up with a PD catch near upright.

    ``gain`` scales the pumping torque; values below 1 give a weaker
    (lower-return) demonstrator.
    """
    theta, theta_dot = (float(v) for v in np.asarray(state).ravel())
    theta = wrap_angle(theta)
    if abs(theta) < catch_angle:
        u = -(10.0 * theta + 2.0 * theta_dot)
    else:
        e = energy(theta, theta_dot, p)
        u = gain * p.max_torque * math.copysign(1.0, theta_dot if theta_dot else 1.0) * (1.0 if e < 0 else -1.0)
    return min(max(u, -p.max_torque), p.max_torque)
