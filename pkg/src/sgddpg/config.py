"""Training configuration and its flat dotted-key representation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .confidence import BetaConfig
from .exceptions import ConfigError


def _key(name: str, default, help: str = ""):
    return field(default=default, metadata={"key": name, "help": help})


@dataclass(frozen=True)
class TrainConfig:
    env: str = _key("env.name", "pendulum", "environment name")
    reset_theta: float = _key("env.reset_theta", math.pi / 2, "initial |theta| bound")
    episode_length: int = _key("env.episode_length", 200, "steps per episode")
    cost_sign: float = _key("env.cost_sign", 1.0, "safety cost = cost_sign * reward (+1 or -1)")
    total_steps: int = _key("train.total_steps", 60_000, "environment steps")
    seed: int = _key("train.seed", 0, "master seed")
    updates_per_step: int = _key("train.updates_per_step", 1, "critic/guard updates per step")
    batch_size: int = _key("train.batch_size", 64, "minibatch size")
    replay_capacity: int = _key("train.replay_capacity", 1_000_000, "replay buffer size")
    eval_interval: int = _key("train.eval_interval", 1000, "steps between evaluations")
    eval_episodes: int = _key("train.eval_episodes", 5, "episodes per evaluation")
    vanilla: bool = _key("train.vanilla", False, "disable guard, GP and safety terms")
    discount: float = _key("agent.discount", 0.99, "critic discount")
    guard_discount: float = _key("agent.guard_discount", 1.0, "guard bootstrap discount")
    M: float = _key("agent.M", 0.1, "safety penalty weight")
    tau: float = _key("agent.tau", 0.005, "target soft-update rate")
    actor_lr: float = _key("agent.actor_lr", 1e-3, "actor learning rate")
    critic_lr: float = _key("agent.critic_lr", 1e-3, "critic and guard learning rate")
    action_noise_std: float = _key("agent.action_noise_std", 0.3, "initial exploration noise")
    noise_decay_fraction: float = _key("agent.noise_decay_fraction", 0.5,
                                       "fraction of training over which noise decays to 0")
    hidden: int = _key("agent.hidden", 64, "hidden width of Q, G and actor")
    gp_mode: str = _key("gp.mode", "online", "online or fixed")
    gp_capacity: int = _key("gp.capacity", 2000, "GP dataset capacity N")
    sigma: float = _key("gp.sigma", 0.5, "noise bound and validity-ball radius")
    gp_signal_variance: float = _key("gp.signal_variance", 10.0, "initial kernel variance")
    gp_lengthscale: float = _key("gp.lengthscale", 1.0, "initial kernel lengthscale")
    gp_fit_steps: int = _key("gp.fit_steps", 5, "likelihood ascent steps per episode")
    gp_qr_threshold: float = _key("gp.qr_threshold", 1e-8, "relative pivoted-QR threshold")
    beta: str = _key("gp.beta", "fixed:2", "fixed:<value> or online:<delta>")
    rkhs_floor: float = _key("gp.rkhs_floor", 1.0, "lower bound on the RKHS norm estimate")
    init_trajectory: str | None = _key("init.trajectory", None, "safe trajectory file")
    cost_threshold: float = _key("init.cost_threshold", 5.0, "keep rows with cost >= -threshold")

    def __post_init__(self):
        for name in ("episode_length", "updates_per_step", "batch_size", "replay_capacity",
                     "eval_interval", "eval_episodes", "gp_capacity", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.total_steps < 0 or self.gp_fit_steps < 0:
            raise ConfigError("total_steps and gp_fit_steps must be non-negative")
        if self.cost_sign not in (1.0, -1.0):
            raise ConfigError("env.cost_sign must be +1 or -1")
        if not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if self.gp_mode not in ("online", "fixed"):
            raise ConfigError(f"gp.mode must be online or fixed, got {self.gp_mode!r}")
        try:
            self.beta_config
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.vanilla and not self.M > 0:
            raise ConfigError("agent.M must be > 0 unless train.vanilla is set")

    @property
    def beta_config(self) -> BetaConfig:
        return BetaConfig.parse(self.beta, self.rkhs_floor)

    def to_flat(self) -> dict:
        return {f.metadata["key"]: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def key_fields(cls) -> dict:
        return {f.metadata["key"]: f for f in fields(cls)}

    @classmethod
    def from_flat(cls, flat: dict, base: "TrainConfig | None" = None) -> "TrainConfig":
        known = cls.key_fields()
        updates = {}
        for key, value in flat.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            updates[known[key].name] = coerce(known[key], value)
        return replace(base or cls(), **updates)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            flat = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(flat, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_flat(flat)


def coerce(f, value):
    default = f.default
    if value is None:
        return None
    if isinstance(default, bool):
        if isinstance(value, str):
            low = value.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ConfigError(f"{f.metadata['key']}: expected a boolean, got {value!r}")
            return low in ("1", "true", "yes")
        return bool(value)
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{f.metadata['key']}: cannot convert {value!r}") from None
    return str(value)
