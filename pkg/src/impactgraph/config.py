"""Run configuration: defaults, YAML loading and environment interpolation."""

from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

ABLATIONS = ("full", "no_temporal", "no_decay")
BASELINES = ("io", "cot")
MODES = ("crash", "macro")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    corpus: Path | None = None
    prices: Path | None = None
    ted: Path | None = None
    portfolio: str | None = None  # defaults by mode, see portfolio_name
    backend: str = ""
    model_name: str = "gpt-3.5-turbo"
    token_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0

    mode: str = "crash"
    ablation: str = "full"
    baseline: str | None = None

    lambda_: float = 1.0
    decay_unit: str = "trading"
    q: int = 6
    k: int = 3
    max_iterations: int = 4
    damping: float = 0.85
    tolerance: float = 1e-8
    rank_max_iter: int = 200
    repeats: int = 5

    body_char_cap: int = 2000
    memory_cap: int = 200
    token_budget: int = 3000
    crash_threshold: float = -0.02
    crash_percentile: float | None = None
    crisis_threshold: float = 0.48
    ted_context_days: int = 5
    max_abort_fraction: float = 0.2

    workers: int = 1
    max_in_flight: int = 4
    out: Path = Path("runs")
    run_name: str | None = None

    def validate(self) -> "RunConfig":
        if self.corpus is None:
            raise ConfigError("corpus", "a news corpus path is required")
        if not Path(self.corpus).is_file():
            raise ConfigError("corpus", f"file not found: {self.corpus}")
        if not self.backend:
            raise ConfigError("backend", "a backend is required (scripted:<path> or an http url)")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        if self.mode == "crash":
            if self.prices is None:
                raise ConfigError("prices", "crash mode needs a prices CSV")
            if not Path(self.prices).is_file():
                raise ConfigError("prices", f"file not found: {self.prices}")
        else:
            if self.ted is None:
                raise ConfigError("ted", "macro mode needs a TED spread CSV")
            if not Path(self.ted).is_file():
                raise ConfigError("ted", f"file not found: {self.ted}")
        if self.ablation not in ABLATIONS:
            raise ConfigError("ablation", f"must be one of {ABLATIONS}")
        if self.baseline is not None and self.baseline not in BASELINES:
            raise ConfigError("baseline", f"must be one of {BASELINES}")
        if self.baseline is not None and self.ablation != "full":
            raise ConfigError("baseline", "baselines cannot be combined with an ablation")
        for name in ("q", "k", "max_iterations", "repeats", "rank_max_iter", "workers", "max_in_flight"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        if not self.lambda_ > 0:
            raise ConfigError("lambda", "must be positive")
        if not 0 < self.damping < 1:
            raise ConfigError("damping", "must lie in (0, 1)")
        if not 0 <= self.temperature <= 2:
            raise ConfigError("temperature", "must lie in [0, 2]")
        return self

    @property
    def portfolio_name(self) -> str:
        if self.portfolio:
            return self.portfolio
        return "economies" if self.mode == "macro" else "country_neutral"

    @property
    def variant(self) -> str:
        return self.baseline or self.ablation

    def replace(self, **changes: Any) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def params(self) -> dict[str, Any]:
        """Parameters that shape results; paths and output locations excluded."""
        keys = (
            "portfolio", "model_name", "temperature", "mode", "ablation", "baseline", "lambda_",
            "decay_unit", "q", "k", "max_iterations", "damping", "tolerance", "rank_max_iter",
            "repeats", "body_char_cap", "memory_cap", "token_budget", "crash_threshold",
            "crash_percentile", "crisis_threshold", "ted_context_days",
        )
        out = {("lambda" if k == "lambda_" else k): getattr(self, k) for k in keys}
        out["portfolio"] = self.portfolio_name
        return out


_ENV = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def interpolate_env(value: Any) -> Any:
    """Expand ``${VAR}`` and ``${VAR:-default}`` inside strings, recursively."""
    if isinstance(value, str):
        def sub(m: re.Match) -> str:
            name, default = m.group(1), m.group(2)
            if name in os.environ:
                return os.environ[name]
            if default is not None:
                return default
            raise ConfigError(name, "environment variable is not set")
        return _ENV.sub(sub, value)
    if isinstance(value, dict):
        return {k: interpolate_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate_env(v) for v in value]
    return value


_PATH_FIELDS = {"corpus", "prices", "ted", "out"}
_ALIASES = {"lambda": "lambda_", "max_iter": "max_iterations", "ablate": "ablation"}
# numeric fields, so interpolated strings like "${LAMBDA:-1}" become numbers
_NUMERIC = {f.name: type(f.default) for f in dataclasses.fields(RunConfig) if type(f.default) in (int, float)}
_NUMERIC["crash_percentile"] = float


def _coerce(key: str, value: Any) -> Any:
    kind = _NUMERIC.get(key)
    if kind is None or value is None or isinstance(value, bool):
        return value
    try:
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise ValueError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {kind.__name__}, got {value!r}") from None


def config_from_mapping(doc: dict[str, Any], base: RunConfig | None = None, root: Path | None = None) -> RunConfig:
    cfg = base or RunConfig()
    names = {f.name for f in dataclasses.fields(RunConfig)}
    changes: dict[str, Any] = {}
    for raw_key, value in interpolate_env(doc).items():
        key = _ALIASES.get(raw_key.replace("-", "_"), raw_key.replace("-", "_"))
        if key not in names:
            raise ConfigError(raw_key, "unknown configuration key")
        value = _coerce(key, value)
        if key in _PATH_FIELDS and value is not None:
            value = Path(value)
            if root is not None and not value.is_absolute():
                value = root / value
        if key == "backend" and isinstance(value, str) and value.startswith("scripted:") and root is not None:
            fixture = Path(value.split(":", 1)[1])
            if not fixture.is_absolute():
                value = f"scripted:{root / fixture}"
        changes[key] = value
    return dataclasses.replace(cfg, **changes)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text("utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config", f"{path} must hold a mapping")
    return config_from_mapping(doc, root=path.parent)
