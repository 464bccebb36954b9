"""Flat key = value run configuration with lossless text round-tripping.

A config file is a sequence of ``key = value`` lines; blank lines and lines
starting with ``#`` are ignored, later assignments win, and the same
``key=value`` syntax doubles as the command-line override form. Optional
fields are unset with an empty value (``sigma_sq =``). Floats are written
with 17 significant digits so that parse(render(config)) reproduces every
field bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config_text",
    "load_config",
    "apply_overrides",
    "config_to_text",
]


class ConfigError(ValueError):
    """Unusable configuration: unknown key, bad value, or missing field."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a command run needs, as plain typed fields.

    Cross-field requirements (a data path for panel commands, an index
    column for CSV input) are checked by the command that needs them, not
    here, so a partial config is fine to construct and merge into.
    """

    # input data
    data: str | None = None
    format: str | None = None              # csv | orlib | charts
    index_column: str | None = None
    orlib_index_position: str = "first"
    orlib_layout: str = "period"
    # kernel and distance parameters
    kernel: str = "K1"
    p: float = 1.0
    dim: int = 2
    delay: int = 1
    homology_dim: int = 1
    subseries_length: int | None = None
    subseries_shift: int | None = None
    subseries_weights: tuple | None = None
    m: int = 7
    sigma_sq: float | None = None
    # clustering
    clustering: str = "APC"
    damping: float | None = None           # fixed damping; unset -> grid search
    damping_grid: tuple = (0.5, 0.6, 0.7, 0.8, 0.9)
    preference: float | str = "median"
    max_iterations: int = 500
    stable_iterations: int = 25
    cluster_counts: tuple | None = None
    k: int | None = None                   # fixed cluster count
    # strategy and rolling windows
    strategy: str = "IndexTracking"
    mode: str = "auto"
    in_len: int = 126
    out_len: int = 21
    step: int = 21
    gamma: float = 1.0
    max_similarity_m: int = 20
    cardinality_k: int = 20
    cardinality_budget: float = 60.0
    cardinality_max_evals: int | None = None
    # chart benchmark
    distances: tuple | None = None         # distance subset for casestudy
    # output
    outdir: str = "."
    prefix: str | None = None
    seed: int | None = None


def _parse_int(key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_pos_int(key, raw):
    value = _parse_int(key, raw)
    if value < 1:
        raise ConfigError(f"{key}: must be >= 1, got {value}")
    return value


def _parse_seed(key, raw):
    value = _parse_int(key, raw)
    if value < 0:
        raise ConfigError(f"{key}: must be >= 0, got {value}")
    return value


def _parse_float(key, raw):
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if math.isnan(value):
        raise ConfigError(f"{key}: must not be NaN")
    return value


def _parse_pos_float(key, raw):
    value = _parse_float(key, raw)
    if not value > 0.0:
        raise ConfigError(f"{key}: must be positive, got {raw!r}")
    return value


def _parse_str(key, raw):
    return raw


def _choice(*options):
    def parse(key, raw):
        if raw not in options:
            raise ConfigError(f"{key}: expected one of {options}, got {raw!r}")
        return raw
    return parse


def _comma_list(item_parser):
    def parse(key, raw):
        parts = [part.strip() for part in raw.split(",")]
        if any(not part for part in parts):
            raise ConfigError(f"{key}: empty entry in list {raw!r}")
        return tuple(item_parser(key, part) for part in parts)
    return parse


def _parse_preference(key, raw):
    if raw == "median":
        return raw
    return _parse_float(key, raw)


_PARSERS = {
    "data": _parse_str,
    "format": _choice("csv", "orlib", "charts"),
    "index_column": _parse_str,
    "orlib_index_position": _choice("first", "last"),
    "orlib_layout": _choice("period", "series"),
    "kernel": _parse_str,
    "p": _parse_pos_float,
    "dim": _parse_pos_int,
    "delay": _parse_pos_int,
    "homology_dim": _parse_int,
    "subseries_length": _parse_pos_int,
    "subseries_shift": _parse_pos_int,
    "subseries_weights": _comma_list(_parse_float),
    "m": _parse_pos_int,
    "sigma_sq": _parse_pos_float,
    "clustering": _parse_str,
    "damping": _parse_float,
    "damping_grid": _comma_list(_parse_float),
    "preference": _parse_preference,
    "max_iterations": _parse_pos_int,
    "stable_iterations": _parse_pos_int,
    "cluster_counts": _comma_list(_parse_pos_int),
    "k": _parse_pos_int,
    "strategy": _parse_str,
    "mode": _choice("auto", "strategy1", "strategy2", "benchmark"),
    "in_len": _parse_pos_int,
    "out_len": _parse_pos_int,
    "step": _parse_pos_int,
    "gamma": _parse_pos_float,
    "max_similarity_m": _parse_pos_int,
    "cardinality_k": _parse_pos_int,
    "cardinality_budget": _parse_pos_float,
    "cardinality_max_evals": _parse_pos_int,
    "distances": _comma_list(_parse_str),
    "outdir": _parse_str,
    "prefix": _parse_str,
    "seed": _parse_seed,
}

#: fields that may be unset with an empty value
_OPTIONAL = frozenset(
    f.name for f in fields(RunConfig)
    if f.default is None or f.name in ("subseries_weights", "cluster_counts",
                                       "distances")
)


def _assign(values: dict, key: str, raw: str, where: str):
    if key not in _PARSERS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    raw = raw.strip()
    if raw == "":
        if key not in _OPTIONAL:
            raise ConfigError(f"{where}: {key} needs a value")
        values[key] = None
        return
    values[key] = _PARSERS[key](key, raw)


def parse_config_text(text: str, where: str = "config") -> RunConfig:
    """Parse ``key = value`` lines into a RunConfig. Later keys win."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"{where} line {lineno}: expected 'key = value', got {stripped!r}"
            )
        key, _, raw = stripped.partition("=")
        _assign(values, key.strip(), raw, f"{where} line {lineno}")
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, where=str(path))


def apply_overrides(config: RunConfig, overrides) -> RunConfig:
    """A new config with ``key=value`` strings applied in order."""
    values = {f.name: getattr(config, f.name) for f in fields(RunConfig)}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, _, raw = item.partition("=")
        _assign(values, key.strip(), raw, f"override {item!r}")
    return RunConfig(**values)


def _render(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, tuple):
        return ",".join(_render(item) for item in value)
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def config_to_text(config: RunConfig) -> str:
    """The config as parseable text; unset optional fields are omitted."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {_render(value)}")
    return "\n".join(lines) + "\n"
