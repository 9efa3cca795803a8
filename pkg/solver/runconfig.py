"""
Run configuration: an INI file of flat ``key = value`` lines under
``[section]`` headers, overridden by command-line flags.

Sections only group keys for the reader; every key must be unique across
the file.
"""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .conditions import ProblemSpec
from .conf import setting
from .exceptions import ExpressionError, UsageError
from .exprlang import ExprFunction, compile_expr

logger = logging.getLogger(__name__)

MODES = ("check", "solve-bounded", "solve-compact", "solve-asymptotic", "construct", "verify", "region")
MODE_ALIASES = {"check-conditions": "check", "construct-piecewise": "construct"}

CONSTANT_KEYS = {"k": "K", "alpha": "alpha", "beta": "beta", "kappa_h": "kappa_h", "kappa_f": "kappa_f",
                 "kappa_g": "kappa_g"}
FLOAT_KEYS = ("window", "tol", "x1", "x2", "x_target", "x_target_neg", "l", "compare_l", "alpha_min", "alpha_max")
INT_KEYS = ("grid_n", "max_iter", "probes", "n")
TEXT_KEYS = ("mode", "h", "f", "g", "seed_phi0", "seed_phi1", "solution", "out", "interval", "k_values", "refine",
             "monotone_h", "monotone_f", "monotone_g")
KNOWN_KEYS = set(CONSTANT_KEYS) | set(FLOAT_KEYS) | set(INT_KEYS) | set(TEXT_KEYS)

REQUIRED = {
    "check": ("h", "f", "g"),
    "solve-bounded": ("h", "f", "g"),
    "solve-compact": ("h", "f", "g", "interval"),
    "solve-asymptotic": ("h", "f", "g"),
    "construct": ("h", "f", "g", "x1"),
    "verify": ("h", "f", "g", "solution"),
    "region": (),
}


@dataclass
class RunConfig:
    mode: str
    h: str | None = None
    f: str | None = None
    g: str | None = None
    constants: dict[str, float] = field(default_factory=dict)
    monotone: dict[str, str] = field(default_factory=dict)
    window: float = 20.0
    grid_n: int = 4001
    tol: float = 1e-8
    max_iter: int = 200
    interval: tuple[float, float] | None = None
    x1: float | None = None
    x2: float | None = None
    x_target: float | None = None
    x_target_neg: float | None = None
    seed_phi0: str | None = None
    seed_phi1: str | None = None
    L: float | None = None
    compare_l: float | None = None
    refine: bool = False
    probes: int | None = None
    solution: Path | None = None
    k_values: tuple[float, ...] = (1.5, 2.0, 3.0, 4.0)
    alpha_min: float = 0.1
    alpha_max: float = 4.0
    n: int = 40
    out: Path = Path("out")
    functions: dict[str, ExprFunction] = field(default_factory=dict, repr=False)

    def problem(self) -> ProblemSpec:
        return ProblemSpec(
            self.functions["h"],
            self.functions["f"],
            self.functions["g"],
            constants=dict(self.constants),
            sources={name: "certified" for name in self.constants},
            monotone=dict(self.monotone),
            window=self.window,
        )

    def seed_shape(self):
        if self.seed_phi0 is None and self.seed_phi1 is None:
            return None
        return self.functions["seed_phi0"], self.functions["seed_phi1"]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "functions": {name: fn.source for name, fn in sorted(self.functions.items())},
            "constants": dict(self.constants),
            "window": self.window,
            "grid_n": self.grid_n,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "interval": list(self.interval) if self.interval else None,
            "x1": self.x1,
            "x2": self.x2,
            "x_target": self.x_target,
            "x_target_neg": self.x_target_neg,
            "L": self.L,
        }


def _read_file(path: Path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except FileNotFoundError:
        raise UsageError(f"config file {str(path)!r} not found", field="config")
    except configparser.Error as exc:
        raise UsageError(f"cannot read {str(path)!r}: {exc}", field="config")

    values: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in values:
                raise UsageError(f"key {key!r} appears more than once", field=key)
            values[key] = value
    return values


def _number(key: str, raw, cast):
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{key} must be a number, got {raw!r}", field=key)


def _pair(key: str, raw) -> tuple[float, float]:
    if isinstance(raw, (list, tuple)):
        parts = list(raw)
    else:
        parts = str(raw).replace(",", " ").split()
    if len(parts) != 2:
        raise UsageError(f"{key} needs two numbers, got {raw!r}", field=key)
    a, b = (_number(key, p, float) for p in parts)
    if not a <= b:
        raise UsageError(f"{key} [{a}, {b}] is empty", field=key)
    return a, b


def _flag(key: str, raw) -> bool:
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{key} must be true or false, got {raw!r}", field=key)


def _compile(name: str, source: str) -> ExprFunction:
    try:
        return compile_expr(source)
    except ExpressionError as exc:
        exc.message = f"{name}: {exc.message}"
        exc.args = (exc.message,)
        exc.details["field"] = name
        raise


def load_config(path: Path | str | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge file values and ``overrides`` (flags win), validate, and compile the expressions."""
    raw = _read_file(Path(path)) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key.lower()] = value
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}", field=unknown[0])

    mode = raw.get("mode")
    if mode is None:
        raise UsageError("mode required", field="mode")
    mode = MODE_ALIASES.get(str(mode).strip(), str(mode).strip())
    if mode not in MODES:
        raise UsageError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}", field="mode")
    for name in REQUIRED[mode]:
        if raw.get(name) in (None, ""):
            raise UsageError(f"{name} required", field=name)

    config = RunConfig(
        mode=mode,
        window=float(setting("WINDOW")),
        grid_n=int(setting("GRID_N")),
        tol=float(setting("TOL")),
        max_iter=int(setting("MAX_ITER")),
    )
    for key, name in CONSTANT_KEYS.items():
        if key in raw:
            config.constants[name] = _number(key, raw[key], float)
    for key in FLOAT_KEYS:
        if key in raw:
            setattr(config, "L" if key == "l" else key, _number(key, raw[key], float))
    for key in INT_KEYS:
        if key in raw:
            setattr(config, key, _number(key, raw[key], int))
    for name in ("h", "f", "g", "seed_phi0", "seed_phi1"):
        if raw.get(name):
            setattr(config, name, str(raw[name]))
            config.functions[name] = _compile(name, str(raw[name]))
    for name in ("h", "f", "g"):
        declared = raw.get(f"monotone_{name}")
        if declared is not None:
            if declared not in ("increasing", "decreasing"):
                raise UsageError(f"monotone_{name} must be increasing or decreasing", field=f"monotone_{name}")
            config.monotone[name] = declared
    if "interval" in raw:
        config.interval = _pair("interval", raw["interval"])
    if "k_values" in raw:
        config.k_values = tuple(_number("k_values", p, float) for p in str(raw["k_values"]).replace(",", " ").split())
    if "refine" in raw:
        config.refine = _flag("refine", raw["refine"])
    if raw.get("solution"):
        config.solution = Path(raw["solution"])
    if raw.get("out"):
        config.out = Path(raw["out"])

    _validate(config)
    logger.info(f"Loaded {mode} run from {path or 'flags'}")
    return config


def _validate(config: RunConfig) -> None:
    if not config.window > 0:
        raise UsageError(f"window must be positive, got {config.window}", field="window")
    if config.grid_n < 3 or config.grid_n % 2 == 0:
        raise UsageError(f"grid_n must be odd and at least 3, got {config.grid_n}", field="grid_n")
    if not config.tol > 0:
        raise UsageError(f"tol must be positive, got {config.tol}", field="tol")
    if config.max_iter < 1:
        raise UsageError(f"max_iter must be at least 1, got {config.max_iter}", field="max_iter")
    if (config.seed_phi0 is None) != (config.seed_phi1 is None):
        raise UsageError("seed_phi0 and seed_phi1 must be given together", field="seed_phi0")
    if config.probes is not None and config.probes < 2:
        raise UsageError(f"probes must be at least 2, got {config.probes}", field="probes")
    if config.mode == "region":
        if not config.k_values or any(not k > 1 for k in config.k_values):
            raise UsageError("k_values must all exceed 1", field="k_values")
        if not 0 < config.alpha_min < config.alpha_max:
            raise UsageError("need 0 < alpha_min < alpha_max", field="alpha_min")
        if config.n < 2:
            raise UsageError("n must be at least 2", field="n")
