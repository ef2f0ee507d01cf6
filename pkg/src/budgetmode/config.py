"""Run configuration: YAML in, validated dataclasses out."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field

import yaml

from .dapo import DapoConfig
from .errors import ParseError, ValidationError
from .rewards import ModeRewardConfig
from .sft import TruncationConfig
from .toy import EnvConfig

CONFIG_ENV_VAR = "BUDGETMODE_CONFIG"


@dataclass(frozen=True)
class ConstructConfig:
    tokenizer: str = "whitespace"
    balance_tolerance: float = 1.05
    keywords_file: typing.Optional[str] = None

    def __post_init__(self):
        if self.tokenizer not in ("whitespace", "unicode-word"):
            raise ValidationError(f"unknown tokenizer {self.tokenizer!r}", "construct.tokenizer")
        if self.balance_tolerance < 1:
            raise ValidationError("must be at least 1", "construct.balance_tolerance")


@dataclass(frozen=True)
class MetricsConfig:
    display_decimals: int = 1


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "out"
    threads: int = 1
    truncation: TruncationConfig = field(default_factory=TruncationConfig)
    construct: ConstructConfig = field(default_factory=ConstructConfig)
    reward: ModeRewardConfig = field(default_factory=ModeRewardConfig)
    dapo: DapoConfig = field(default_factory=DapoConfig)
    environment: EnvConfig = field(default_factory=EnvConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(value, hint, path):
    origin = typing.get_origin(hint)
    if hint is typing.Any:
        return value
    if origin is typing.Union:
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ValidationError(f"expected a boolean, got {value!r}", path)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"expected an integer, got {value!r}", path)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"expected a number, got {value!r}", path)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ValidationError(f"expected a string, got {value!r}", path)
        return value
    if hint is tuple or origin is tuple:
        if isinstance(value, (str, bytes)) or not isinstance(value, (list, tuple)):
            raise ValidationError(f"expected a list, got {value!r}", path)
        return tuple(value)
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path)
    return value


def _build(cls, data, path=""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError(f"expected a mapping, got {type(data).__name__}", path or "<root>")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else str(key)
        if key not in names:
            raise ValidationError("unknown key", sub)
        kwargs[key] = _coerce(value, hints[key], sub)
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        where = exc.path or ""
        if path and not where.startswith(path + "."):
            where = f"{path}.{where.split('.')[-1]}" if where else path
        raise ValidationError(exc.message, where) from None


def config_from_dict(data) -> RunConfig:
    return _build(RunConfig, data)


def load_config(path=None) -> RunConfig:
    """Load a YAML run config; ``None`` falls back to $BUDGETMODE_CONFIG, then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
        if not path:
            return RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return config_from_dict(data)
