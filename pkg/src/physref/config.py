"""Run configuration: one YAML document drives a whole training stage.

Top-level keys: stage, model, seed, iterations, n_envs, checkpoint_every,
dataset, sim, reward, ppo, randomization (GMT), command_noise (PMG),
obs_noise (GMT), sampler. Every nested block maps onto the corresponding
dataclass and unknown keys are rejected with the offending key path, so
``--set`` typos fail loudly instead of silently training the wrong thing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .motion import ArtifactSpec, CommandNoise, GaitSpec
from .obs import ObsNoise
from .reward import RewardConfig
from .rl.ppo import PPOHyper
from .sim import RandomizationRanges, SimConfig
from .stage import Stage


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetEntry:
    """One dataset element: a clip file, or a synthesis recipe."""

    path: str | None = None
    gait: GaitSpec | None = None
    artifacts: ArtifactSpec | None = None
    name: str | None = None

    def __post_init__(self):
        if (self.path is None) == (self.gait is None):
            raise ConfigError(
                "dataset entry needs exactly one of 'path' or 'gait'")
        if self.path is not None and self.artifacts is not None:
            raise ConfigError(
                "artifact injection only applies to synthesized entries")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.path:
            return Path(self.path).stem
        return self.gait.type


@dataclass
class StageConfig:
    stage: Stage
    dataset: list[DatasetEntry]
    model: str = "planar-walker-7"
    seed: int = 0
    iterations: int = 500
    n_envs: int = 16
    checkpoint_every: int = 50
    sim: SimConfig = field(default_factory=SimConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    ppo: PPOHyper = field(default_factory=PPOHyper)
    randomization: RandomizationRanges | None = None
    command_noise: CommandNoise | None = None
    obs_noise: ObsNoise | None = None
    min_coeff: float | None = None    # sampler floor; None -> stage default

    def __post_init__(self):
        self.stage = Stage.parse(self.stage)
        if not self.dataset:
            raise ConfigError("dataset must not be empty")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.n_envs < 1:
            raise ConfigError("n_envs must be >= 1")
        if self.stage is Stage.PMG and self.randomization is not None:
            raise ConfigError(
                "the reference-filtering stage (pmg) trains in nominal "
                "physics: remove the 'randomization' block")
        if self.stage is Stage.GMT and self.command_noise is not None:
            raise ConfigError(
                "command-window noise belongs to the pmg stage only")
        if self.stage is Stage.PMG and self.obs_noise is not None:
            raise ConfigError(
                "observation noise belongs to the gmt stage only")


_BLOCKS = {
    "sim": SimConfig,
    "reward": RewardConfig,
    "ppo": PPOHyper,
    "randomization": RandomizationRanges,
    "command_noise": CommandNoise,
    "obs_noise": ObsNoise,
}
_SCALARS = ("stage", "model", "seed", "iterations", "n_envs",
            "checkpoint_every", "min_coeff")


def _build(cls, raw: dict, context: str):
    """Construct a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(raw).__name__}")
    allowed = {f.name for f in fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown key {sorted(unknown)[0]!r}")
    kwargs = {}
    for key, value in raw.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{context}: {e}") from e


def _build_entry(raw, index: int) -> DatasetEntry:
    context = f"dataset[{index}]"
    if isinstance(raw, str):
        return DatasetEntry(path=raw)
    if not isinstance(raw, dict):
        raise ConfigError(f"{context}: expected a path or mapping")
    out = dict(raw)
    if "gait" in out:
        out["gait"] = _build(GaitSpec, out["gait"], f"{context}.gait")
    if "artifacts" in out:
        out["artifacts"] = _build(ArtifactSpec, out["artifacts"],
                                  f"{context}.artifacts")
    return _build(DatasetEntry, out, context)


def build_stage_config(raw: dict) -> StageConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - set(_SCALARS) - set(_BLOCKS) - {"dataset"}
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    if "stage" not in raw:
        raise ConfigError("config needs a 'stage' (pmg or gmt)")
    if "dataset" not in raw or not isinstance(raw["dataset"], list):
        raise ConfigError("config needs a 'dataset' list")

    kwargs = {k: raw[k] for k in _SCALARS if k in raw}
    kwargs["dataset"] = [_build_entry(e, i)
                         for i, e in enumerate(raw["dataset"])]
    for key, cls in _BLOCKS.items():
        if key in raw:
            block = raw[key]
            if block in (None, {}):
                continue  # empty block == default/absent
            kwargs[key] = _build(cls, block, key)
    try:
        return StageConfig(**kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``--set dotted.key=value`` pairs onto the raw config mapping.

    Values parse as YAML scalars (so 1e-4, true, and strings all work).
    Intermediate mappings are created only for known block names; final
    unknown-key validation happens in build_stage_config.
    """
    out = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, text = item.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"override {item!r} has an empty key")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"override {key}: unparseable value {text!r}") from e
        if isinstance(value, str):
            # YAML leaves bare scientific notation like 3e-4 as a string;
            # treat numeric-looking overrides as numbers
            try:
                value = int(value)
            except ValueError:
                try:
                    value = float(value)
                except ValueError:
                    pass
        parts = key.split(".")
        node = out
        for i, part in enumerate(parts[:-1]):
            where = ".".join(parts[:i + 1])
            if isinstance(node, list):
                try:
                    idx = int(part)
                    child = node[idx]
                except (ValueError, IndexError) as e:
                    raise ConfigError(
                        f"override {key}: bad list index at {where}") from e
            else:
                idx = part
                child = node.get(part)
            if child is None:
                child = {}
            elif isinstance(child, dict):
                child = dict(child)
            elif isinstance(child, list):
                child = list(child)
            else:
                raise ConfigError(f"override {key}: {where} is not a block")
            node[idx] = child
            node = child
        leaf = parts[-1]
        if isinstance(node, list):
            try:
                node[int(leaf)] = value
            except (ValueError, IndexError) as e:
                raise ConfigError(f"override {key}: bad list index {leaf!r}") from e
        else:
            node[leaf] = value
    return out


def load_config(path: str | Path, overrides: list[str] = ()) -> StageConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    if raw is None:
        raw = {}
    raw = apply_overrides(raw, list(overrides))
    return build_stage_config(raw)
