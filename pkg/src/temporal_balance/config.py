"""Configuration parsing: flat TOML documents, env overrides, defaults.

Every experiment knob has a documented default; unknown keys are rejected
so typos cannot silently fall back to defaults. Values can come from (in
increasing precedence) built-in defaults, a config file, environment
variables prefixed with ``TEMPORAL_BALANCE_``, and CLI flags.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import Variant
from .experiments import DEFAULT_TAU_GRID, EnsembleConfig
from .schedulers import SchedulerKind

__all__ = ["ConfigError", "ConfigFile", "parse_config", "serialize_config",
           "apply_env_overrides", "ENV_PREFIX"]

ENV_PREFIX = "TEMPORAL_BALANCE_"


class ConfigError(ValueError):
    """Malformed, unknown, or invalid configuration input."""


@dataclass(frozen=True)
class ConfigFile:
    """Effective configuration; defaults reproduce the reference protocol."""

    n: int = 200
    mu: float = 0.0
    sigma: float = 1.0
    r_bound: float = 10.0
    epsilon: float = 1e-6
    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID
    variant: str = "no_self_loops"
    scheduler: str = "with_replacement"
    runs: int = 1000
    t_max: float = 2e6
    sample_interval: float = 10.0
    master_seed: int = 0
    out_dir: str = "out"
    threads: int = 1
    emit_raw: bool = False
    emit_histograms: bool = True
    emit_timecourses: bool = True

    def ensemble_config(self) -> EnsembleConfig:
        try:
            return EnsembleConfig(
                n=self.n, mu=self.mu, sigma=self.sigma, r_bound=self.r_bound,
                epsilon=self.epsilon, tau_grid=tuple(self.tau_grid),
                variant=Variant(self.variant),
                scheduler=SchedulerKind(self.scheduler),
                runs=self.runs, t_max=self.t_max,
                sample_interval=self.sample_interval,
                master_seed=self.master_seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_FIELD_TYPES = {f.name: f.type for f in fields(ConfigFile)}

_INT_KEYS = {"n", "runs", "master_seed", "threads"}
_FLOAT_KEYS = {"mu", "sigma", "r_bound", "epsilon", "t_max", "sample_interval"}
_BOOL_KEYS = {"emit_raw", "emit_histograms", "emit_timecourses"}
_STR_KEYS = {"variant", "scheduler", "out_dir"}
_LIST_KEYS = {"tau_grid"}

_VARIANT_VALUES = tuple(v.value for v in Variant)
_SCHEDULER_VALUES = tuple(s.value for s in SchedulerKind)


def _coerce(key: str, value: Any) -> Any:
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if key in _BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if key in _LIST_KEYS:
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in value):
            raise ConfigError(f"{key}: expected a list of numbers, got {value!r}")
        return tuple(float(v) for v in value)
    raise ConfigError(f"unknown configuration key: {key!r}")


def _validate(cfg: ConfigFile) -> ConfigFile:
    if cfg.n < 3:
        raise ConfigError(f"n: need at least 3 nodes for triads, got {cfg.n}")
    if cfg.sigma <= 0:
        raise ConfigError(f"sigma: must be positive, got {cfg.sigma}")
    if cfg.r_bound <= 0:
        raise ConfigError(f"r_bound: must be positive, got {cfg.r_bound}")
    if cfg.epsilon <= 0:
        raise ConfigError(f"epsilon: must be positive, got {cfg.epsilon}")
    if not cfg.tau_grid or any(t <= 0 for t in cfg.tau_grid):
        raise ConfigError(f"tau_grid: entries must be positive, got {cfg.tau_grid}")
    if len(set(cfg.tau_grid)) != len(cfg.tau_grid):
        raise ConfigError(f"tau_grid: entries must be distinct, got {cfg.tau_grid}")
    if cfg.variant not in _VARIANT_VALUES:
        raise ConfigError(f"variant: must be one of {_VARIANT_VALUES}, "
                          f"got {cfg.variant!r}")
    if cfg.scheduler not in _SCHEDULER_VALUES:
        raise ConfigError(f"scheduler: must be one of {_SCHEDULER_VALUES}, "
                          f"got {cfg.scheduler!r}")
    if cfg.runs < 1:
        raise ConfigError(f"runs: must be >= 1, got {cfg.runs}")
    if cfg.t_max <= 0:
        raise ConfigError(f"t_max: must be positive, got {cfg.t_max}")
    if cfg.sample_interval <= 0:
        raise ConfigError(f"sample_interval: must be positive, got {cfg.sample_interval}")
    if cfg.master_seed < 0:
        raise ConfigError(f"master_seed: must be >= 0, got {cfg.master_seed}")
    if cfg.threads < 1:
        raise ConfigError(f"threads: must be >= 1, got {cfg.threads}")
    return cfg


def parse_config(text: str) -> ConfigFile:
    """Parse a flat TOML document into a fully-defaulted, validated config."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    overrides = {}
    for key, value in raw.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key: {key!r}")
        overrides[key] = _coerce(key, value)
    return _validate(ConfigFile(**overrides))


def apply_env_overrides(cfg: ConfigFile, environ: Mapping[str, str]) -> ConfigFile:
    """Apply TEMPORAL_BALANCE_<KEY> variables (values in TOML syntax).

    Bare strings are accepted for the string-valued keys, so
    ``TEMPORAL_BALANCE_VARIANT=self_loops`` works without quoting.
    """
    overrides: dict[str, Any] = {}
    for key in _FIELD_TYPES:
        env_key = ENV_PREFIX + key.upper()
        if env_key not in environ:
            continue
        raw = environ[env_key]
        try:
            value = tomllib.loads(f"x = {raw}")["x"]
        except tomllib.TOMLDecodeError:
            if key in _STR_KEYS:
                value = raw
            else:
                raise ConfigError(f"{env_key}: cannot parse value {raw!r}")
        overrides[key] = _coerce(key, value)
    if not overrides:
        return cfg
    return _validate(replace(cfg, **overrides))


def _toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def serialize_config(cfg: ConfigFile) -> str:
    """Render the effective config as TOML; parse_config round-trips it."""
    lines = [f"{f.name} = {_toml_value(getattr(cfg, f.name))}"
             for f in fields(ConfigFile)]
    return "\n".join(lines) + "\n"
