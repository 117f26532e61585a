"""End-to-end safety-guided training loop, evaluation and trajectory recording."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from . import agent as ag
from .confidence import beta as compute_beta
from .config import TrainConfig
from .envs import PendulumParams, make_env, swing_up_controller
from .gp.core import GpDataset, GpPosterior, fit_hyperparams
from .gp.kernels import KernelHyperparams
from .gp.sparsify import evict_to_capacity, remove_correlated
from .io import read_trajectory, write_trajectory

log = logging.getLogger(__name__)


@dataclass
class MetricsRecord:
    kind: str
    step: int
    episode: int
    episode_return: float | None = None
    episode_catastrophes: int | None = None
    cumulative_catastrophes: int = 0
    catastrophe_episodes: int = 0
    gp_size: int = 0
    beta_value: float | None = None
    guard_loss: float | None = None
    critic_loss: float | None = None
    actor_objective: float | None = None
    eval_return: float | None = None
    eval_catastrophes: int | None = None
    wall_seconds: float = 0.0


class TrainingAborted(RuntimeError):
    pass


def build_env(cfg: TrainConfig):
    if cfg.env == "pendulum":
        return make_env("pendulum", params=PendulumParams(reset_theta=cfg.reset_theta,
                                                          episode_length=cfg.episode_length,
                                                          cost_sign=cfg.cost_sign))
    return make_env(cfg.env)


def load_init_trajectory(path, cost_threshold: float):
    """Filter a safe demonstration into replay transitions and GP seed pairs.

    Keeps rows with ``c >= -cost_threshold``; each kept row seeds the GP with
    input ``(s, a)`` and measurement ``-c``. A missing path yields nothing.
    """
    if path is None:
        return [], None
    rows = read_trajectory(path)
    kept = [t for t in rows if t.c >= -cost_threshold]
    if not kept:
        log.warning("no transition in %s satisfies the cost threshold %g", path, cost_threshold)
        return [], None
    Z = np.array([np.concatenate([t.s, t.a]) for t in kept])
    y = np.array([-t.c for t in kept])
    return kept, (Z, y)


def rollout(policy: Callable, env, rng, initial_state=None):
    """Run one noise-free episode; returns ``(return, catastrophes, states)``."""
    s = env.reset(rng, initial_state)
    states = [s]
    total, cats = 0.0, 0
    while True:
        res = env.step(policy(s))
        total += res.reward
        cats += res.catastrophe
        s = res.next_state
        states.append(s)
        if res.done:
            return total, cats, states


def evaluate(nets: ag.AgentNets, episodes: int, rng, env=None):
    """Mean undiscounted return and total catastrophes of the deterministic policy."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = env or make_env("pendulum")
    returns, cats = [], 0
    for _ in range(episodes):
        ret, c, _ = rollout(lambda s: ag.policy(nets, s), env, rng)
        returns.append(ret)
        cats += c
    return float(np.mean(returns)), int(cats)


class Trainer:
    """Owns every piece of mutable training state for one run."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.env = build_env(cfg)
        seeds = np.random.SeedSequence(cfg.seed).spawn(5)
        self.env_rng = np.random.default_rng(seeds[0])
        self.noise_rng = np.random.default_rng(seeds[1])
        self.eval_seed = seeds[3]
        net_rng = np.random.default_rng(seeds[2])
        self.agent_cfg = ag.SafeActorConfig(
            M=0.0 if cfg.vanilla else cfg.M, discount=cfg.discount,
            guard_discount=cfg.guard_discount, batch_size=cfg.batch_size,
            action_noise_std=cfg.action_noise_std, tau=cfg.tau, actor_lr=cfg.actor_lr,
            critic_lr=cfg.critic_lr, guard_lr=cfg.critic_lr, safety_terms=not cfg.vanilla)
        hidden = (cfg.hidden, cfg.hidden)
        self.nets = ag.make_nets(self.env.state_dim, self.env.action_dim, self.env.action_low,
                                 self.env.action_high, net_rng, hidden, hidden, self.agent_cfg,
                                 features=getattr(self.env, "features", "identity"))
        self.buffer = ag.ReplayBuffer(min(cfg.replay_capacity, max(cfg.total_steps, 1) + 10_000),
                                      self.env.state_dim, self.env.action_dim,
                                      seed=int(seeds[4].generate_state(1)[0]))
        dim = self.env.state_dim + self.env.action_dim
        self.hp = KernelHyperparams.isotropic(dim, cfg.gp_lengthscale,
                                              signal_variance=cfg.gp_signal_variance,
                                              noise_std=cfg.sigma)
        self.gp_data = GpDataset.empty(dim, cfg.gp_capacity)
        self.beta_config = cfg.beta_config
        self.audit: list[dict] = []
        self.step = 0
        self.episode = 0
        self.cum_catastrophes = 0
        self.catastrophe_episodes = 0
        self._init_from_trajectory()
        self.beta_value = compute_beta(self.beta_config, self.gp_data, self.hp)

    def _init_from_trajectory(self):
        kept, seed_pairs = load_init_trajectory(self.cfg.init_trajectory, self.cfg.cost_threshold)
        for t in kept:
            self.buffer.push(t)
        if seed_pairs is not None and not self.cfg.vanilla:
            Z, y = seed_pairs
            data = self.gp_data.concat(Z, y)
            data = remove_correlated(data, self.hp, self.cfg.gp_qr_threshold)
            self.gp_data = evict_to_capacity(data, self.hp)
        self.init_kept = len(kept)

    def noise_std(self) -> float:
        horizon = self.cfg.noise_decay_fraction * self.cfg.total_steps
        if horizon <= 0:
            return 0.0
        return self.cfg.action_noise_std * max(0.0, 1.0 - self.step / horizon)

    def run(self, on_record: Callable | None = None,
            on_checkpoint: Callable | None = None, checkpoint_interval: int = 0):
        """Train to ``cfg.total_steps`` and return every emitted record.

        ``on_record`` sees each record as it is produced. ``on_checkpoint`` is
        called with the trainer at the first episode boundary at or past each
        multiple of ``checkpoint_interval`` steps.
        """
        records = []
        start = time.perf_counter()
        next_checkpoint = checkpoint_interval if checkpoint_interval > 0 else None

        def emit(rec):
            rec.wall_seconds = time.perf_counter() - start
            records.append(rec)
            if on_record:
                on_record(rec)

        while self.step < self.cfg.total_steps:
            try:
                for rec in self._episode():
                    emit(rec)
            except Exception as exc:
                raise TrainingAborted(
                    f"training failed in episode {self.episode} at step {self.step}: {exc}") from exc
            if on_checkpoint and next_checkpoint is not None and self.step >= next_checkpoint:
                on_checkpoint(self)
                while next_checkpoint <= self.step:
                    next_checkpoint += checkpoint_interval
        return records

    def _episode(self):
        cfg, nets, acfg = self.cfg, self.nets, self.agent_cfg
        s = self.env.reset(self.env_rng)
        staged_z, staged_y = [], []
        ep_return, ep_cats, ep_steps = 0.0, 0, 0
        guard_losses, critic_losses = [], []
        eval_records = []
        while True:
            a = ag.select_action(s, nets, acfg, self.noise_rng, self.noise_std())
            res = self.env.step(a)
            tr = ag.Transition(s, a, res.reward, res.cost, res.next_state, res.done)
            self.buffer.push(tr)
            ep_return += res.reward
            ep_cats += res.catastrophe
            if not cfg.vanilla:
                g_hat = ag.measurement(tr, nets)
                valid = ag.filter_measurement(g_hat, tr.c, cfg.sigma)
                store = ag.storage_filter(g_hat, cfg.sigma)
                if valid and store:
                    staged_z.append(np.concatenate([s, a]))
                    staged_y.append(g_hat)
                    self.audit.append({"episode": self.episode, "z": staged_z[-1],
                                       "g_hat": g_hat, "c": tr.c, "valid": valid, "store": store})
            for _ in range(cfg.updates_per_step):
                if len(self.buffer) < acfg.batch_size:
                    break
                batch = self.buffer.sample(acfg.batch_size)
                critic_losses.append(ag.update_critic(self.buffer, nets, acfg, batch))
                if not cfg.vanilla:
                    guard_losses.append(ag.update_guard(self.buffer, nets, acfg, batch))
            self.step += 1
            ep_steps += 1
            s = res.next_state
            if self.step % cfg.eval_interval == 0:
                eval_records.append(self._eval_record())
            if res.done or self.step >= cfg.total_steps:
                break

        self.cum_catastrophes += ep_cats
        self.catastrophe_episodes += ep_cats > 0
        if not cfg.vanilla and cfg.gp_mode == "online":
            data = self.gp_data
            if staged_z:
                data = data.concat(np.array(staged_z), np.array(staged_y))
                data = remove_correlated(data, self.hp, cfg.gp_qr_threshold)
                data = evict_to_capacity(data, self.hp)
            self.gp_data = data
            self.hp = fit_hyperparams(self.gp_data, self.hp, cfg.gp_fit_steps)
            self.beta_value = compute_beta(self.beta_config, self.gp_data, self.hp)
        objectives = []
        if len(self.buffer) >= acfg.batch_size:
            post = None if cfg.vanilla else GpPosterior(self.gp_data, self.hp)
            for _ in range(ep_steps):
                objectives.append(ag.update_actor(self.buffer, nets, post, self.beta_value, acfg))
        self.episode += 1
        yield MetricsRecord(
            "train", self.step, self.episode, ep_return, ep_cats, self.cum_catastrophes,
            self.catastrophe_episodes, len(self.gp_data),
            None if cfg.vanilla else self.beta_value,
            _mean(guard_losses), _mean(critic_losses), _mean(objectives))
        yield from eval_records

    def _eval_record(self) -> MetricsRecord:
        ret, cats = evaluate(self.nets, self.cfg.eval_episodes,
                             np.random.default_rng(self.eval_seed), build_env(self.cfg))
        return MetricsRecord("eval", self.step, self.episode,
                             cumulative_catastrophes=self.cum_catastrophes,
                             catastrophe_episodes=self.catastrophe_episodes,
                             gp_size=len(self.gp_data), eval_return=ret, eval_catastrophes=cats)


def _mean(values):
    return float(np.mean(values)) if values else None


def train(cfg: TrainConfig, **kwargs) -> list[MetricsRecord]:
    """Run safety-guided training and return the metric records."""
    return Trainer(cfg).run(**kwargs)


# output -----------------------------------------------------------------------

CSV_COLUMNS = [f.name for f in fields(MetricsRecord) if f.name != "wall_seconds"]


def write_metrics_csv(path, records):
    """Metric rows without wall time, so identical runs give identical files."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow(["" if getattr(rec, c) is None else
                        repr(getattr(rec, c)) if isinstance(getattr(rec, c), float) else
                        getattr(rec, c) for c in CSV_COLUMNS])


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_summary(cfg: TrainConfig, records, wall_seconds: float | None = None) -> dict:
    train_recs = [r for r in records if r.kind == "train"]
    eval_recs = [r for r in records if r.kind == "eval"]
    return {
        "seed": cfg.seed,
        "steps": train_recs[-1].step if train_recs else 0,
        "episodes": len(train_recs),
        "final_eval_return": eval_recs[-1].eval_return if eval_recs else None,
        "best_eval_return": max((r.eval_return for r in eval_recs), default=None),
        "final_train_return": train_recs[-1].episode_return if train_recs else None,
        "total_catastrophes": train_recs[-1].cumulative_catastrophes if train_recs else 0,
        "catastrophe_episodes": train_recs[-1].catastrophe_episodes if train_recs else 0,
        "wall_seconds": wall_seconds,
        "config": cfg.to_flat(),
    }


# demonstrations -------------------------------------------------------------------

def record_trajectory(policy: Callable | None, steps: int, out_path, seed: int = 0,
                      cfg: TrainConfig | None = None, action_noise: float = 0.0):
    """Roll out ``policy`` (default: the scripted swing-up controller) for ``steps`` rows.

    Returns the summed reward of the written rows.
    """
    cfg = cfg or TrainConfig()
    env = build_env(cfg)
    rng = np.random.default_rng(seed)
    if policy is None:
        policy = lambda s: np.array([swing_up_controller(s, env.params)])
    rows = []
    s = env.reset(rng)
    while len(rows) < steps:
        a = np.asarray(policy(s), float).ravel()
        if action_noise > 0:
            a = a + rng.normal(0.0, action_noise, size=a.shape)
        a = np.clip(a, env.action_low, env.action_high)
        res = env.step(a)
        rows.append(ag.Transition(s, a, res.reward, res.cost, res.next_state, res.done))
        s = env.reset(rng) if res.done else res.next_state
    write_trajectory(out_path, rows, env.state_dim, env.action_dim)
    return float(sum(t.r for t in rows))
