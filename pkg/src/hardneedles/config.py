"""Run configuration: schemas, a small ``key = value`` grammar, manifests and CSV output.

Config file grammar::

    # comment
    key = value        # trailing comments are allowed

Blank lines are ignored. Values are converted by the schema of the
subcommand; unknown keys are rejected. Command-line overrides use the same
``key=value`` form and win over file values.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__

PHI_C = 1.5 * math.pi


class ConfigError(ValueError):
    """Malformed configuration or an out-of-range value."""


@dataclass(frozen=True)
class Field:
    type: type
    default: Any
    check: Callable[[Any], bool] | None = None
    requirement: str = ""
    help: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _even(v):
    return v >= 4 and v % 2 == 0


def _times(v):
    try:
        t = [float(s) for s in v.split(",") if s.strip()]
    except ValueError:
        return False
    return all(x >= 0 for x in t)


POS = (_pos, "must be positive")
NONNEG = (_nonneg, "must be non-negative")
EVEN = (_even, "must be an even integer >= 4")


def _field(type_, default, rule=(None, ""), help=""):
    return Field(type_, default, rule[0], rule[1], help)


SCHEMAS: dict[str, dict[str, Field]] = {
    "tmatrix": {
        "n_points": _field(int, 200, POS, "angles in the emitted curves"),
        "theta_min": _field(float, 1e-3, POS, "first angle; the last is pi - theta_min"),
        "method": _field(str, "quadrature", (lambda v: v in ("quadrature", "closed"), "must be quadrature or closed")),
        "table_size": _field(int, 65, (lambda v: v >= 16, "must be at least 16"), "Chebyshev nodes of the interpolation table"),
    },
    "stability": {
        "phi": _field(float, 1.1 * PHI_C, NONNEG),
        "D_R": _field(float, 1.0, POS),
        "nmax": _field(int, 10, POS),
        "formula": _field(str, "linearized", (lambda v: v in ("linearized", "printed"), "must be linearized or printed")),
    },
    "mkv-evolve": {
        "phi": _field(float, 1.1 * PHI_C, NONNEG),
        "D_R": _field(float, 1.0, POS),
        "M": _field(int, 256, EVEN, "angular grid size"),
        "p0_cos2": _field(float, -0.01, help="initial profile 1/pi + p0_cos2 * cos(2 theta)"),
        "t_end": _field(float, 20.0, NONNEG),
        "save_times": _field(str, "0,4,6,8,10,12,20", (_times, "must be a comma-separated list of non-negative times")),
        "dt": _field(float, 0.0, NONNEG, "time step; 0 selects 0.01 / D_R"),
    },
    "mkv-stationary": {
        "phi": _field(float, 1.1 * PHI_C, NONNEG, "density for a single solve"),
        "M": _field(int, 256, EVEN),
        "sweep": _field(bool, False, help="solve at phi = 3 pi/2 + k/2 for k = 0..sweep_count-1"),
        "sweep_count": _field(int, 11, POS),
        "p0_cos2": _field(float, 0.01, help="initial guess 1/pi + p0_cos2 * cos(2 theta)"),
        "tol": _field(float, 1e-12, POS),
    },
    "simulate": {
        "N": _field(int, 200, POS),
        "eps": _field(float, math.sqrt(3 * math.pi / 199), POS),
        "D_T": _field(float, 1.0, NONNEG),
        "D_R": _field(float, 10.0, NONNEG),
        "dt": _field(float, 4e-4, POS),
        "Lx": _field(float, 1.0, POS),
        "Ly": _field(float, 1.0, POS),
        "t_end": _field(float, 1.0, NONNEG),
        "observe_every": _field(float, 0.1, POS),
        "drift_fx": _field(float, 0.0),
        "drift_fy": _field(float, 0.0),
        "drift_fR": _field(float, 0.0),
        "angle_bins": _field(int, 18, POS),
        "space_bins": _field(int, 10, POS),
    },
    "pde3d": {
        "Nx": _field(int, 32, EVEN),
        "Ny": _field(int, 32, EVEN),
        "Ntheta": _field(int, 32, EVEN),
        "Lx": _field(float, 2 * math.pi, POS),
        "Ly": _field(float, 2 * math.pi, POS),
        "D_T": _field(float, 1.0, POS),
        "D_R": _field(float, 1.0, POS),
        "phi": _field(float, 1.0, NONNEG),
        "t_end": _field(float, 1.0, NONNEG),
        "dt": _field(float, 0.0, NONNEG, "time step; 0 selects the stability default"),
        "n_snapshots": _field(int, 2, (lambda v: v >= 2, "must be at least 2")),
        "amplitude": _field(float, 0.2, (lambda v: 0 <= v < 1, "must lie in [0, 1)"), "size of the random initial perturbation"),
        "table_size": _field(int, 65, (lambda v: v >= 16, "must be at least 16")),
    },
    "hydro": {
        "N": _field(int, 100, POS),
        "eps": _field(float, 0.05, NONNEG),
        "Nx": _field(int, 32, (lambda v: v >= 3, "must be at least 3")),
        "Ny": _field(int, 32, (lambda v: v >= 3, "must be at least 3")),
        "Lx": _field(float, 1.0, POS),
        "Ly": _field(float, 1.0, POS),
        "t_end": _field(float, 0.01, NONNEG),
        "bump_amplitude": _field(float, 1.0, NONNEG),
        "bump_width": _field(float, 0.1, POS),
        "n_snapshots": _field(int, 5, (lambda v: v >= 2, "must be at least 2")),
    },
}

COMMON = {
    "seed": _field(int, 0, (lambda v: 0 <= v < 2**64, "must be a 64-bit unsigned integer")),
}


def schema(subcommand: str) -> dict[str, Field]:
    if subcommand not in SCHEMAS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    return {**SCHEMAS[subcommand], **COMMON}


def _convert(name: str, f: Field, raw: Any):
    if f.type is bool:
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if f.type is int:
            if isinstance(raw, str):
                s = raw.strip()
                try:
                    return int(s)
                except ValueError:
                    v = float(s)  # accepts forms such as 1e4
                    if v != int(v):
                        raise
                    return int(v)
            return int(raw)
        if f.type is float:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {f.type.__name__}, got {raw!r}") from None


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved parameters of one subcommand run."""

    subcommand: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "values": dict(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return resolve(d["subcommand"], d["values"])


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` strings from the config grammar."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def resolve(subcommand: str, raw: dict) -> RunConfig:
    """Apply defaults, convert and validate; error messages name the offending field."""
    sch = schema(subcommand)
    unknown = sorted(set(raw) - set(sch))
    if unknown:
        raise ConfigError(f"unknown key(s) for {subcommand}: {', '.join(unknown)}")
    vals = {}
    for name, f in sch.items():
        v = _convert(name, f, raw[name]) if name in raw else f.default
        if f.check is not None and not f.check(v):
            raise ConfigError(f"{name}: {f.requirement}, got {v!r}")
        vals[name] = v
    return RunConfig(subcommand, vals)


def parse_config(subcommand: str, path: str | Path | None = None, overrides=None) -> RunConfig:
    raw: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config file {p}: {e}") from None
        raw.update(parse_text(text, str(p)))
    if isinstance(overrides, dict):
        raw.update(overrides)
    else:
        raw.update(parse_overrides(overrides))
    return resolve(subcommand, raw)


def format_config(cfg: RunConfig) -> str:
    """Config text that parses back to ``cfg``."""
    lines = [f"# {cfg.subcommand}"]
    for k, v in cfg.values.items():
        lines.append(f"{k} = {repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def write_manifest(out_dir: Path, cfg: RunConfig, outputs: list[str], extra: dict | None = None,
                   wall_time: float | None = None) -> Path:
    man = {
        "tool": "hardneedles",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": cfg.to_dict(),
        "seed": cfg.values.get("seed"),
        "outputs": outputs,
        "wall_time_s": wall_time,
        "results": extra or {},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_csv(path: Path, header: list[str], columns) -> Path:
    """CSV with a header row and every number in 17-significant-digit form."""
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("columns must have equal length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    return Path(path)
