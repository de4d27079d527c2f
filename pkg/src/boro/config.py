"""Run configuration: a flat key=value file plus command-line overrides.

Unknown keys are rejected outright, and every run logs the fully resolved
configuration to stderr before doing any work.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Callable

from .errors import ConfigError


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str) -> list[int]:
    return [int(tok) for tok in s.replace(",", " ").split()]


def _float_list(s: str) -> list[float]:
    return [float(tok) for tok in s.replace(",", " ").split()]


def _str_list(s: str) -> list[str]:
    return [tok for tok in s.replace(",", " ").split()]


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    default: Any
    help: str
    choices: tuple | None = None


def _default_seed() -> int:
    env = os.environ.get("BORO_SEED")
    return int(env) if env else 0


KEYS: dict[str, _Key] = {
    "experiment": _Key(str, None, "experiment name", ("newsvendor", "portfolio")),
    "learner": _Key(str, "nw", "learner for prescribe/bootstrap", ("nw", "nn")),
    "learners": _Key(_str_list, ["nw", "nn"], "learners swept by experiments"),
    "smoother": _Key(str, None, "smoother name (default: gaussian for nw, naive for nn)",
                     ("uniform", "epanechnikov", "tricubic", "gaussian", "naive")),
    "bandwidth": _Key(float, None, "smoother bandwidth (default: rule of thumb)"),
    "k": _Key(int, None, "neighbor count (default: round(sqrt(n)))"),
    "distance": _Key(str, "bootstrap", "model distance", ("bootstrap", "pearson", "burg")),
    "radius": _Key(float, None, "ambiguity radius (0 = nominal)"),
    "target_disappointment": _Key(float, None, "derive the radius from this level"),
    "n_grid": _Key(_int_list, [50, 100], "training sizes swept by experiments"),
    "r_grid": _Key(_float_list, None, "radii swept by bootstrap/experiments"),
    "target_b": _Key(float, 0.1, "experiment disappointment target when r_grid unset"),
    "m": _Key(int, 2000, "bootstrap resamples"),
    "seeds": _Key(int, 2, "number of training seeds averaged by experiments"),
    "test_sets": _Key(int, 200, "out-of-sample test sets (portfolio)"),
    "test_size": _Key(int, 200, "samples per test set (portfolio)"),
    "variance_convention": _Key(str, "variance", "read Gaussian second parameters as",
                                ("variance", "std")),
    "seed": _Key(int, None, "base seed (default: BORO_SEED or 0)"),
    "threads": _Key(int, None, "worker threads for experiment cells"),
}


def parse_config_file(path: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            values[key] = _parse_one(key, val, where=f"{path}:{lineno}")
    return values


def _parse_one(key: str, val: str, where: str = "override") -> Any:
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown config key {key!r}")
    spec = KEYS[key]
    try:
        parsed = spec.parse(val)
    except ValueError as e:
        raise ConfigError(f"{where}: bad value for {key!r}: {e}") from None
    if spec.choices is not None:
        items = parsed if isinstance(parsed, list) else [parsed]
        for item in items:
            if item not in spec.choices:
                raise ConfigError(f"{where}: {key!r} must be one of {spec.choices}")
    return parsed


def resolve(file_values: dict[str, Any] | None, overrides: list[str] | None) -> dict[str, Any]:
    """Defaults, then file values, then 'key=value' overrides."""
    cfg = {k: spec.default for k, spec in KEYS.items()}
    for k, v in (file_values or {}).items():
        cfg[k] = v
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, _, val = item.partition("=")
        cfg[key.strip()] = _parse_one(key.strip(), val.strip())
    if cfg["seed"] is None:
        cfg["seed"] = _default_seed()
    return cfg


def format_resolved(cfg: dict[str, Any]) -> str:
    lines = ["resolved config:"]
    for k in sorted(cfg):
        lines.append(f"  {k} = {cfg[k]}")
    return "\n".join(lines)
