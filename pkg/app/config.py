"""
Run configuration shared by every command.

Values are layered: dataclass defaults, then an optional JSON file, then
`FRINGE_PROVER_<FIELD>` environment variables (a `.env` file in the working
directory is loaded first), then command-line flags.
"""
import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import find_dotenv, load_dotenv

from .env import EpisodeConfig
from .learner import LearnerConfig
from .policy import PolicyConfig
from .tactics import DEFAULT_FUEL

ENV_PREFIX = "FRINGE_PROVER_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    corpus: str = "corpus.jsonl"
    seed: int = 0
    budget: int = 50
    fuel: int = DEFAULT_FUEL
    gamma: float = 0.99
    lr: float = 5e-5
    dim: int = 64
    embedding_dim: int = 32
    hidden: int = 64
    max_args: int = 5
    iterations: int = 300
    checkpoint_every: int = 10
    workers: int = 1
    checkpoint: str = "checkpoint.npz"
    metrics: str = "metrics.jsonl"
    train_ratio: float = 0.8
    split_seed: int = 0
    baseline: bool = False
    record_wallclock: bool = False
    pretrain_epochs: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if self.fuel < 1:
            raise ConfigError("fuel must be at least 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if min(self.dim, self.embedding_dim, self.hidden, self.max_args) < 1:
            raise ConfigError("network sizes and max_args must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must not be negative")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not 0.0 < self.train_ratio < 1.0:
            raise ConfigError("train_ratio must be strictly between 0 and 1")

    @property
    def policy(self) -> PolicyConfig:
        return PolicyConfig(self.dim, self.embedding_dim, self.hidden, self.max_args)

    @property
    def episode(self) -> EpisodeConfig:
        return EpisodeConfig(budget=self.budget, fuel=self.fuel, max_args=self.max_args)

    @property
    def learner(self) -> LearnerConfig:
        return LearnerConfig(
            iterations=self.iterations,
            gamma=self.gamma,
            learning_rate=self.lr,
            seed=self.seed,
            workers=self.workers,
            checkpoint_every=self.checkpoint_every,
            baseline=self.baseline,
            record_wallclock=self.record_wallclock,
            pretrain_epochs=self.pretrain_epochs,
            episode=self.episode,
            policy=self.policy,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: Any, source: str) -> Any:
    kind = _TYPES[key]
    if kind in (bool, "bool"):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ConfigError(f"{source}: {key} expects a boolean, got {value!r}")
    try:
        if kind in (int, "int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind in (float, "float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{source}: {key} has invalid value {value!r}") from None


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Raises:
        ConfigError: on invalid JSON, a non-object document or unknown keys
        OSError: if the file cannot be read
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    unknown = sorted(set(data) - set(_TYPES))
    if unknown:
        raise ConfigError(f"{path}: unknown configuration keys: {', '.join(unknown)}")
    return {k: _coerce(k, v, str(path)) for k, v in data.items()}


def read_environment(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    values = {}
    for key in _TYPES:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            values[key] = _coerce(key, environ[name], name)
    return values


def load_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Merge all layers; `overrides` entries that are None are ignored."""
    if environ is None:
        load_dotenv(find_dotenv(usecwd=True))
    values: Dict[str, Any] = {}
    if config_file is not None:
        values.update(read_config_file(config_file))
    values.update(read_environment(environ))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _TYPES:
            raise ConfigError(f"unknown configuration key: {key}")
        values[key] = _coerce(key, value, "command line")
    return replace(RunConfig(), **values)
