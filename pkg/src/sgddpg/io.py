"""File formats: trajectory text files and checkpoints."""
from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .agent import AgentNets, Transition
from .gp.core import GpDataset
from .gp.kernels import KernelHyperparams
from .nn import MlpParams, OptimizerState

CHECKPOINT_FORMAT = "sgddpg-checkpoint"
CHECKPOINT_VERSION = 1
_NET_NAMES = ("actor", "critic", "guard", "actor_target", "critic_target", "guard_target")


class CheckpointError(ValueError):
    pass


class TrajectoryFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# trajectory files -----------------------------------------------------------

def trajectory_header(state_dim: int, action_dim: int) -> list[str]:
    return ([f"s{i}" for i in range(state_dim)] + [f"a{i}" for i in range(action_dim)]
            + ["r", "c"] + [f"s_next{i}" for i in range(state_dim)] + ["done"])


def write_trajectory(path, transitions: Iterable[Transition], state_dim: int, action_dim: int):
    with open(path, "w") as fh:
        fh.write(",".join(trajectory_header(state_dim, action_dim)) + "\n")
        for t in transitions:
            row = [*map(_fmt, np.ravel(t.s)), *map(_fmt, np.ravel(t.a)), _fmt(t.r), _fmt(t.c),
                   *map(_fmt, np.ravel(t.s_next)), "1" if t.done else "0"]
            fh.write(",".join(row) + "\n")


def read_trajectory(path) -> list[Transition]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise TrajectoryFormatError(f"{path}: empty file, header expected")
    header = lines[0].strip().split(",")
    ds = sum(h.startswith("s") and not h.startswith("s_next") for h in header)
    da = sum(h.startswith("a") for h in header)
    if header != trajectory_header(ds, da):
        raise TrajectoryFormatError(f"{path}: unexpected header {lines[0]!r}")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise TrajectoryFormatError(f"{path}:{lineno}: expected {len(header)} fields")
        try:
            v = [float(p) for p in parts[:-1]]
            done = int(parts[-1])
        except ValueError as exc:
            raise TrajectoryFormatError(f"{path}:{lineno}: {exc}") from None
        if done not in (0, 1) or not np.all(np.isfinite(v)):
            raise TrajectoryFormatError(f"{path}:{lineno}: invalid values")
        out.append(Transition(np.array(v[:ds]), np.array(v[ds:ds + da]), v[ds + da],
                              v[ds + da + 1], np.array(v[ds + da + 2:]), bool(done)))
    return out


# checkpoints ----------------------------------------------------------------

def _pack(arrays: dict) -> tuple[list, str]:
    index = [{"name": k, "shape": list(np.shape(a))} for k, a in arrays.items()]
    flat = [np.ascontiguousarray(a, dtype="<f8").ravel() for a in arrays.values()]
    blob = np.concatenate(flat) if flat else np.zeros(0)
    return index, base64.b64encode(blob.astype("<f8").tobytes()).decode("ascii")


def _unpack(index: list, blob: str) -> dict:
    data = np.frombuffer(base64.b64decode(blob, validate=True), dtype="<f8")
    out, pos = {}, 0
    for entry in index:
        size = int(np.prod(entry["shape"], dtype=int))
        if pos + size > data.size:
            raise CheckpointError("parameter blob shorter than its index")
        out[entry["name"]] = data[pos:pos + size].reshape(entry["shape"]).astype(float)
        pos += size
    if pos != data.size:
        raise CheckpointError("parameter blob longer than its index")
    return out


def save_checkpoint(path, nets: AgentNets, gp_data: GpDataset | None = None,
                    hp: KernelHyperparams | None = None, metadata: dict | None = None):
    arrays = {"action_low": nets.action_low, "action_high": nets.action_high}
    net_meta = {}
    for name in _NET_NAMES:
        net = getattr(nets, name)
        net_meta[name] = {"activations": list(net.activations)}
        for i, p in enumerate(net.params):
            arrays[f"{name}.{i}"] = p
    opt_meta = {}
    for name in ("actor", "critic", "guard"):
        opt = getattr(nets, f"{name}_opt")
        opt_meta[name] = {"t": opt.t, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2,
                          "eps": opt.eps, "skipped": opt.skipped}
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays[f"{name}_opt.m.{i}"] = m
            arrays[f"{name}_opt.v.{i}"] = v
    gp_meta = None
    if gp_data is not None:
        arrays["gp.inputs"] = gp_data.inputs
        arrays["gp.targets"] = gp_data.targets
        gp_meta = {"capacity": gp_data.capacity, "hyperparams": hp.to_dict() if hp else None}
    index, blob = _pack(arrays)
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "networks": net_meta, "optimizers": opt_meta, "gp": gp_meta,
           "features": nets.features, "metadata": metadata or {}, "arrays": index, "blob": blob}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_checkpoint(path):
    """Return ``(nets, gp_data, hyperparams, metadata)``; raises :class:`CheckpointError`."""
    try:
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
        arrays = _unpack(doc["arrays"], doc["blob"])
        nets = {}
        for name in _NET_NAMES:
            acts = tuple(doc["networks"][name]["activations"])
            flat = [arrays[f"{name}.{i}"] for i in range(2 * len(acts))]
            nets[name] = MlpParams(flat[0::2], flat[1::2], acts)
        opts = {}
        for name in ("actor", "critic", "guard"):
            meta = doc["optimizers"][name]
            n = len(nets[name].params)
            opts[name] = OptimizerState([arrays[f"{name}_opt.m.{i}"] for i in range(n)],
                                        [arrays[f"{name}_opt.v.{i}"] for i in range(n)],
                                        meta["t"], meta["lr"], meta["beta1"], meta["beta2"],
                                        meta["eps"], meta["skipped"])
        agent = AgentNets(nets["actor"], nets["critic"], nets["guard"], nets["actor_target"],
                          nets["critic_target"], nets["guard_target"], opts["actor"],
                          opts["critic"], opts["guard"], arrays["action_low"],
                          arrays["action_high"], doc.get("features", "identity"))
        gp_data = hp = None
        if doc.get("gp"):
            gp_data = GpDataset(arrays["gp.inputs"], arrays["gp.targets"], doc["gp"]["capacity"])
            if doc["gp"]["hyperparams"]:
                hp = KernelHyperparams.from_dict(doc["gp"]["hyperparams"])
        return agent, gp_data, hp, doc.get("metadata", {})
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None
