"""Run configuration: every tunable in one place, plus file/env/flag merging.

Config files are flat ``key = value`` lines (full-line ``#`` comments
allowed); command-line flags win over the file, which wins over defaults.
The environment variable ``EXPLBENCH_CONFIG`` names the config file when
``--config`` is not given.  Values are coerced by the field's declared type;
list-valued fields split on commas.

The canonical tokenizer (lowercase, alphanumeric runs) is fixed repo-wide
and deliberately not configurable.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path

ENV_CONFIG = "EXPLBENCH_CONFIG"
ENV_PREFIX = "EXPLBENCH_"

# Fields that may also be set through EXPLBENCH_<NAME> environment variables.
ENV_FIELDS = ("port", "host", "state_dir", "ui_dir", "out_dir")


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass
class RunConfig:
    # corpus inputs
    kb_dir: str = ""
    questions: str = ""
    scores: tuple[str, ...] = ()
    ratings: str = ""
    generated: str = ""
    schemas: str = ""
    shortlists: str = ""
    explanations: tuple[str, ...] = ()
    overrides: str = ""
    out_dir: str = "out"

    # thresholds and sizes
    shortlist_k: int = 20
    top_k: int = 8
    rouge_threshold: float = 0.70
    clip_threshold: float = 0.0
    filter_threshold: float = 0.0
    n_schemas: int = 3

    # evaluation options
    gold_setting: str = "wt2"
    aggregation: str = "per-question"
    separator: str = "[AND]"
    ndcg_cutoff: int = 0  # 0 means no cutoff
    linear_gain: bool = False
    workers: int = 0  # 0 means use available cores

    # annotation service
    host: str = "127.0.0.1"
    port: int = 8337
    state_dir: str = "state"
    ui_dir: str = ""
    raters: str = ""  # "name:token,name:token"
    coverage: int = 2

    def validate(self, require_paths: tuple[str, ...] = ()) -> None:
        """Check value sanity plus existence of the named path fields."""
        for name in ("rouge_threshold", "filter_threshold"):
            value = getattr(self, name)
            if math.isnan(value):
                raise ConfigError(f"{name} is NaN")
        if math.isnan(self.clip_threshold):
            raise ConfigError("clip_threshold is NaN")
        if not math.isfinite(self.rouge_threshold):
            raise ConfigError("rouge_threshold must be finite")
        for name in ("shortlist_k", "top_k", "n_schemas", "coverage"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.ndcg_cutoff < 0 or self.workers < 0:
            raise ConfigError("ndcg_cutoff and workers must be >= 0")
        if self.gold_setting not in ("wt2", "tr1", "tr2"):
            raise ConfigError(f"unknown gold_setting {self.gold_setting!r}")
        if self.aggregation not in ("per-question", "corpus"):
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        for name in require_paths:
            value = getattr(self, name)
            values = value if isinstance(value, tuple) else (value,)
            if not values:
                raise ConfigError(f"{name} is required but not set")
            for item in values:
                if not item:
                    raise ConfigError(f"{name} is required but not set")
                if not Path(item).exists():
                    raise ConfigError(f"{name}: path {item!r} does not exist")

    def rater_tokens(self) -> dict[str, str]:
        """Parse the static rater-token table ("name:token,...")."""
        table = {}
        for chunk in self.raters.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            name, sep, token = chunk.partition(":")
            if not sep or not name or not token:
                raise ConfigError(f"raters entry {chunk!r} is not name:token")
            table[name] = token
        return table

    # Fields that do not influence report content: where outputs land, where
    # the service listens, and how many workers share the (deterministic) work.
    _NON_SEMANTIC = ("out_dir", "host", "port", "state_dir", "ui_dir", "workers")

    def canonical_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name in RunConfig._NON_SEMANTIC:
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]


def _coerce(field: dataclasses.Field, raw: str):
    if field.type in ("int", int):
        return int(raw)
    if field.type in ("float", float):
        return float(raw)
    if field.type in ("bool", bool):
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
    if field.type.startswith("tuple") or isinstance(field.default, tuple):
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    return raw


def parse_config_file(path: str | Path) -> dict[str, object]:
    """Read ``key = value`` lines into a dict of coerced config values."""
    by_name = {f.name: f for f in fields(RunConfig)}
    values: dict[str, object] = {}
    for line_num, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, raw = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path} line {line_num}: expected key = value")
        key = key.strip()
        if key not in by_name:
            raise ConfigError(f"{path} line {line_num}: unknown config key {key!r}")
        values[key] = _coerce(by_name[key], raw.strip())
    return values


def load_config(
    config_path: str | None = None,
    flag_values: dict[str, object] | None = None,
    env: dict[str, str] | None = None,
) -> RunConfig:
    """Layer defaults, the config file, env vars, and flags (flags win)."""
    env = os.environ if env is None else env
    path = config_path or env.get(ENV_CONFIG)
    values: dict[str, object] = {}
    if path:
        if not Path(path).exists():
            raise ConfigError(f"config file {path!r} does not exist")
        values.update(parse_config_file(path))
    by_name = {f.name: f for f in fields(RunConfig)}
    for name in ENV_FIELDS:
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            values[name] = _coerce(by_name[name], raw)
    for key, value in (flag_values or {}).items():
        if value is not None:
            values[key] = value
    return RunConfig(**values)
