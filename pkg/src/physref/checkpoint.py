"""Binary policy checkpoints.

Layout: 6-byte magic, little-endian u32 header length, UTF-8 JSON header,
then the raw float64 array payloads back to back in header order. Every
array is written little-endian contiguous, so identical parameters always
serialize to identical bytes (checkpoints are diffable by hash).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rl.policy import PolicyParams, RunningNorm
from .rl.ppo import AdamState
from .stage import Stage

MAGIC = b"PHRC\x01\n"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    params: PolicyParams
    opt: AdamState | None
    stage: Stage
    model: str
    iteration: int


def save_checkpoint(path: str | Path, params: PolicyParams, *, stage,
                    model_name: str, iteration: int = 0,
                    opt: AdamState | None = None) -> None:
    stage = Stage.parse(stage)
    arrays: list[tuple[str, np.ndarray]] = []
    for i, a in enumerate(params.actor):
        arrays.append((f"actor.{i}", a))
    for i, a in enumerate(params.critic):
        arrays.append((f"critic.{i}", a))
    arrays.append(("log_std", params.log_std))
    arrays.append(("norm.mean", params.norm.mean))
    arrays.append(("norm.var", params.norm.var))
    if opt is not None:
        for i, a in enumerate(opt.m):
            arrays.append((f"adam.m.{i}", a))
        for i, a in enumerate(opt.v):
            arrays.append((f"adam.v.{i}", a))

    header = {
        "format_version": FORMAT_VERSION,
        "model": model_name,
        "stage": stage.value,
        "iteration": int(iteration),
        "obs_dim": params.obs_dim,
        "action_dim": params.action_dim,
        "n_actor": len(params.actor),
        "n_critic": len(params.critic),
        "norm_count": float(params.norm.count),
        "norm_clip": float(params.norm.clip),
        "adam_step": int(opt.step) if opt is not None else None,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    payload = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path, expect_model: str | None = None,
                    expect_stage=None) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a policy checkpoint")
    try:
        (hlen,) = struct.unpack_from("<I", blob, len(MAGIC))
        header = json.loads(blob[len(MAGIC) + 4:len(MAGIC) + 4 + hlen])
    except (struct.error, ValueError) as e:
        raise CheckpointError(f"corrupt checkpoint header in {path}") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {header.get('format_version')}")

    at = len(MAGIC) + 4 + hlen
    named: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = at + 8 * n
        if end > len(blob):
            raise CheckpointError(f"truncated checkpoint {path}")
        named[spec["name"]] = np.frombuffer(
            blob[at:end], dtype="<f8").reshape(shape).copy()
        at = end
    if at != len(blob):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")

    actor = [named[f"actor.{i}"] for i in range(header["n_actor"])]
    critic = [named[f"critic.{i}"] for i in range(header["n_critic"])]
    norm = RunningNorm(mean=named["norm.mean"], var=named["norm.var"],
                       count=header["norm_count"], clip=header["norm_clip"])
    params = PolicyParams(obs_dim=header["obs_dim"],
                          action_dim=header["action_dim"],
                          actor=actor, critic=critic,
                          log_std=named["log_std"], norm=norm)
    opt = None
    if header["adam_step"] is not None:
        n = len(actor) + len(critic) + 1
        opt = AdamState(m=[named[f"adam.m.{i}"] for i in range(n)],
                        v=[named[f"adam.v.{i}"] for i in range(n)],
                        step=header["adam_step"])

    stage = Stage.parse(header["stage"])
    if expect_model is not None and header["model"] != expect_model:
        raise CheckpointError(
            f"checkpoint is for model {header['model']!r}, "
            f"expected {expect_model!r}")
    if expect_stage is not None and stage is not Stage.parse(expect_stage):
        raise CheckpointError(
            f"checkpoint is a {stage.value} policy, "
            f"expected {Stage.parse(expect_stage).value}")
    return Checkpoint(params=params, opt=opt, stage=stage,
                      model=header["model"], iteration=header["iteration"])
