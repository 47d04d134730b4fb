"""Run configuration: flat ``key = value`` files with ``#`` comments.

Values from the file are overridden by command-line flags. Every value is
validated, and forcing expressions are parsed, before any solver state is
allocated.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .expr import ExpressionError, parse_vector_expression

COMMANDS = ("solve", "stokes-nonstd", "decompose", "study", "verify")
NAMED_FORCING = ("zero", "manufactured")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based file line when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if line is not None:
            where = f"{source or 'config'}:{line}: "
        super().__init__(where + message)
        self.line = line


@dataclass
class RunConfig:
    command: str = "solve"
    nu: float = 0.1
    alpha: float = 1.0
    mesh: tuple = (4, 4, 4)
    extent: tuple = (1.0, 1.0, 1.0)
    forcing: str = "manufactured"
    convection: str = "zero"  # coefficient a of the nonstandard problem
    tol: float = 1e-10
    max_iter: int = 50
    lambda_steps: int = 1
    damping: float = 1.0
    quad_degree: int = 4
    skew: bool = False
    solver: str = "direct"
    levels: int = 3
    probes: int = 5
    c_star: float | None = None
    threads: int = 1
    seed: int = 0
    out: str = "out"
    forcing_field: object = field(default=None, repr=False, compare=False)
    convection_field: object = field(default=None, repr=False, compare=False)

    def validate(self) -> "RunConfig":
        bad = []
        if self.command not in COMMANDS:
            bad.append(f"command must be one of {', '.join(COMMANDS)}, got {self.command!r}")
        if not (math.isfinite(self.nu) and self.nu > 0):
            bad.append(f"nu must be positive, got {self.nu}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            bad.append(f"alpha must be non-negative, got {self.alpha}")
        if len(self.mesh) != 3 or any(k < 2 for k in self.mesh):
            # one cell per direction leaves too few interior P2 nodes for the P1 pressure
            bad.append(f"mesh needs three integers >= 2, got {self.mesh}")
        if len(self.extent) != 3 or any(not (math.isfinite(e) and e > 0) for e in self.extent):
            bad.append(f"extent needs three positive lengths, got {self.extent}")
        if not (math.isfinite(self.tol) and self.tol > 0):
            bad.append(f"tol must be positive, got {self.tol}")
        for k in ("max_iter", "lambda_steps", "levels", "probes", "threads"):
            if getattr(self, k) < 1:
                bad.append(f"{k} must be at least 1, got {getattr(self, k)}")
        if not (0 < self.damping <= 1):
            bad.append(f"damping must lie in (0, 1], got {self.damping}")
        if self.quad_degree not in (4, 6):
            bad.append(f"quad_degree must be 4 or 6, got {self.quad_degree}")
        if self.solver not in ("direct", "krylov"):
            bad.append(f"solver must be direct or krylov, got {self.solver!r}")
        if self.c_star is not None and not (math.isfinite(self.c_star) and self.c_star > 0):
            bad.append(f"c_star must be positive, got {self.c_star}")
        if self.seed < 0:
            bad.append(f"seed must be non-negative, got {self.seed}")
        if bad:
            raise ConfigError("; ".join(bad))
        self.forcing_field = _parse_field("forcing", self.forcing, NAMED_FORCING)
        self.convection_field = _parse_field("convection", self.convection, ("zero",))
        return self

    def echo(self) -> dict:
        """Configured values in declaration order, without the parsed fields."""
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
                if not f.name.endswith("_field")}


def _parse_field(key, text, named):
    if text in named:
        return None
    try:
        return parse_vector_expression(text)
    except ExpressionError as e:
        raise ConfigError(f"{key}: expected {' | '.join(named)} or an expression triple: {e}") from e


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(n):
    def conv(s):
        parts = s.replace(",", " ").split()
        if len(parts) != n:
            raise ValueError(f"expected {n} integers, got {s!r}")
        return tuple(int(p) for p in parts)
    return conv


def _floats(n):
    def conv(s):
        parts = s.replace(",", " ").split()
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {s!r}")
        return tuple(float(p) for p in parts)
    return conv


def _optional_float(s):
    return None if s.strip().lower() in ("", "none", "measure") else float(s)


CONVERTERS = {
    "command": str, "nu": float, "alpha": float, "mesh": _ints(3), "extent": _floats(3),
    "forcing": str, "convection": str, "tol": float, "max_iter": int, "lambda_steps": int,
    "damping": float, "quad_degree": int, "skew": _bool, "solver": str, "levels": int,
    "probes": int, "c_star": _optional_float, "threads": int, "seed": int, "out": str,
}


def read_config_text(text: str, source: str = "config") -> dict:
    """Raw ``{key: (value, line)}`` pairs; later duplicates are an error."""
    raw, unknown = {}, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", lineno, source)
        key, value = (s.strip() for s in body.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise ConfigError("missing key before '='", lineno, source)
        if key not in CONVERTERS:
            unknown.append((key, lineno))
            continue
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {raw[key][1]})",
                              lineno, source)
        raw[key] = (value, lineno)
    if unknown:
        listed = ", ".join(f"{k} (line {n})" for k, n in unknown)
        raise ConfigError(f"unknown keys: {listed}; known keys: {', '.join(CONVERTERS)}")
    return raw


def build_config(raw: dict | None = None, overrides: dict | None = None,
                 source: str = "config") -> RunConfig:
    """Convert raw file values, apply overrides (already typed), validate."""
    values = {}
    for key, (text, lineno) in (raw or {}).items():
        try:
            values[key] = CONVERTERS[key](text)
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {e}", lineno, source) from e
    unknown = sorted(set(overrides or {}) - set(CONVERTERS))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values).validate()


def parse_config(path=None, overrides: dict | None = None, text: str | None = None) -> RunConfig:
    """RunConfig from a file (or ``text``) with flag overrides applied on top."""
    source = "config"
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
        source = str(path)
    raw = read_config_text(text, source) if text is not None else {}
    return build_config(raw, overrides, source)
