"""Run configuration: a diff-able plain-text key = value document with an
explicit schema version, plus environment-variable overrides."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

from .grpo import TrainingConfig
from .reward import RewardConfig
from .types import TaskFamily

CONFIG_SCHEMA_VERSION = 1

ENV_OUT_DIR = "REAGENT_OUT_DIR"
ENV_JUDGE_ENDPOINT = "REAGENT_JUDGE_ENDPOINT"

VARIANTS = ("r", "u", "baseline", "c")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    variant: str = "r"
    seed: int = 0
    families: tuple[str, ...] = ("arithmetic", "lookup")
    train_tasks: int = 200
    eval_tasks: int = 50
    group_size: int = 8
    clip_eps: float = 0.2
    kl_beta: float = 0.001
    lam: float = 0.3
    learning_rate: float = 1e-2
    batch_size: int = 4
    steps: int = 100
    temperature_train: float = 0.7
    temperature_eval: float = 0.6
    max_steps_train: int = 13
    max_steps_eval: int = 30
    max_len: int = 24
    feature_dim: int = 256
    optimizer: str = "sgd"
    ref_policy: str = "init"
    backend: str = "oracle"
    judge_endpoint: str = ""
    eval_k: int = 1
    checkpoint_every: int = 25
    out_dir: str = "runs/run"
    corpus: str = ""

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant: {self.variant}")
        if self.lam < 0 or not math.isfinite(self.lam):
            raise ConfigError(f"lambda must be finite and >= 0: {self.lam}")
        for fam in self.families:
            try:
                TaskFamily(fam)
            except ValueError:
                raise ConfigError(f"unknown family: {fam}") from None
        try:
            self.training_config()
            self.reward_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            group_size=self.group_size,
            clip_eps=self.clip_eps,
            kl_beta=self.kl_beta,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            steps=self.steps,
            temperature=self.temperature_train,
            max_agent_steps=self.max_steps_train,
            max_len=self.max_len,
            seed=self.seed,
            optimizer=self.optimizer,
            ref_policy=self.ref_policy,
        )

    def reward_config(self) -> RewardConfig:
        lam = 0.0 if self.variant == "baseline" else self.lam
        return RewardConfig(lam=lam)

    def with_env_overrides(self) -> "RunConfig":
        updates = {}
        if os.environ.get(ENV_OUT_DIR):
            updates["out_dir"] = os.environ[ENV_OUT_DIR]
        if os.environ.get(ENV_JUDGE_ENDPOINT):
            updates["judge_endpoint"] = os.environ[ENV_JUDGE_ENDPOINT]
        return replace(self, **updates) if updates else self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def config_to_text(cfg: RunConfig) -> str:
    lines = [f"schema_version = {CONFIG_SCHEMA_VERSION}"]
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if f.name == "families":
            value = ",".join(value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> RunConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    version = values.pop("schema_version", None)
    if version is None:
        raise ConfigError("missing schema_version")
    if int(version) != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    kwargs: dict = {}
    for key, value in values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key: {key}")
        kwargs[key] = _parse_value(key, value)
    return RunConfig(**kwargs)


def _parse_value(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if key == "families":
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
