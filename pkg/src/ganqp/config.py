"""Flat ``key = value`` config files and distribution spec strings.

Values are typed by their spelling: ``true``/``false``, ``none``, integers,
floats, comma-separated tuples, otherwise bare strings.  Each key is then
coerced to the type of the matching dataclass field; unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
import re
from pathlib import Path

import numpy as np

from .harness import data as toy

__all__ = [
    "ConfigError",
    "parse_value",
    "parse_text",
    "read_config",
    "build",
    "format_value",
    "dump",
    "write_resolved",
    "parse_distribution",
    "format_distribution",
]

_INT = re.compile(r"[+-]?\d+$")
_FLOAT = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|[+-]?inf$|nan$")


class ConfigError(ValueError):
    """Malformed config text, unknown key or ill-typed value."""


def _scalar(tok: str):
    tok = tok.strip()
    low = tok.lower()
    if low in ("true", "false"):
        return low == "true"
    if low == "none":
        return None
    if _INT.match(tok):
        return int(tok)
    if _FLOAT.match(low):
        return float(tok)
    return tok


def parse_value(raw: str):
    raw = raw.strip()
    if raw in ("()", ""):
        return () if raw == "()" else ""
    if "," in raw:
        body = raw.strip("()")
        return tuple(_scalar(t) for t in body.split(",") if t.strip())
    return _scalar(raw)


def parse_text(text: str, source: str = "<config>", raw_keys=()) -> dict:
    """Parse key=value lines; keys in ``raw_keys`` keep their text verbatim."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = raw if key in raw_keys else parse_value(raw)
    return out


def read_config(path, raw_keys=()) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_text(text, str(p), raw_keys)


def _coerce(name: str, value, default, annotation: str = ""):
    if isinstance(default, bool):
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false, got {value!r}")
        return value
    if isinstance(default, tuple) or (default is None and name.endswith("hidden")):
        if value is None:
            return None
        items = value if isinstance(value, tuple) else (value,)
        if any(isinstance(v, (str, bool)) or v is None for v in items):
            raise ConfigError(f"{name}: expected numbers, got {value!r}")
        return tuple(items)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    numeric_auto = default == "auto" and "float" in str(annotation)
    if isinstance(default, float) or numeric_auto:
        if isinstance(value, bool):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if numeric_auto and value == "auto":
            return value
        raise ConfigError(f"{name}: expected a number{' or auto' if numeric_auto else ''}, got {value!r}")
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a word, got {value!r}")
        return value
    return value


def build(cls, values: dict, **overrides):
    """Instantiate dataclass ``cls`` from parsed values, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    merged = {**values, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = sorted(set(merged) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in merged.items():
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[key] = _coerce(key, value, default, f.type)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if isinstance(value, (tuple, list)):
        if not value:
            return "()"
        body = ", ".join(format_value(v) for v in value)
        return body if len(value) > 1 else body + ","
    return str(value)


def dump(obj) -> str:
    lines = [f"{f.name} = {format_value(getattr(obj, f.name))}" for f in dataclasses.fields(obj)]
    return "\n".join(lines) + "\n"


def write_resolved(path, obj, header: str | None = None) -> None:
    text = dump(obj)
    if header:
        text = "".join(f"# {line}\n" for line in header.splitlines()) + text
    Path(path).write_text(text, encoding="utf-8", newline="\n")


# -- distribution specs ---------------------------------------------------
#   dirac:0            dirac:0,1
#   gaussian:0,0       gaussian:0,0;1,0,0,1   (mean; row-major covariance)
#   ring8  ring8:2,0.02   grid25  grid25:1,0.01
#   discrete:0,0@0.2;1,0@0.8

def _floats(text: str) -> list[float]:
    try:
        out = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc
    if not out:
        raise ConfigError("empty number list")
    return out


def parse_distribution(spec: str) -> toy.ToyDistribution:
    kind, _, body = spec.strip().partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "dirac":
            return toy.dirac(_floats(body))
        if kind == "gaussian":
            mean, _, cov = body.partition(";")
            mu = _floats(mean)
            return toy.gaussian(mu, _floats(cov) if cov.strip() else None)
        if kind in ("ring8", "grid25"):
            args = _floats(body) if body.strip() else []
            return (toy.ring8 if kind == "ring8" else toy.grid25)(*args)
        if kind == "discrete":
            pts, probs = [], []
            for atom in body.split(";"):
                if not atom.strip():
                    continue
                where, sep, mass = atom.partition("@")
                if not sep:
                    raise ConfigError(f"discrete atom {atom!r} lacks '@probability'")
                pts.append(_floats(where))
                probs.append(float(mass))
            if len({len(p) for p in pts}) != 1:
                raise ConfigError("discrete support points differ in dimension")
            return toy.discrete(np.array(pts), probs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid distribution spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown distribution kind in {spec!r}")


def format_distribution(dist: toy.ToyDistribution) -> str:
    def nums(xs):
        return ",".join(repr(float(x)) for x in np.ravel(xs))

    if dist.kind == "dirac":
        return f"dirac:{nums(dist.centers[0])}"
    if dist.kind == "gaussian":
        return f"gaussian:{nums(dist.centers[0])};{nums(dist.cov)}"
    if dist.kind == "ring8":
        return f"ring8:{float(np.linalg.norm(dist.centers[0]))!r},{dist.sigma!r}"
    if dist.kind == "grid25":
        return f"grid25:{float(dist.centers[1, 1] - dist.centers[0, 1])!r},{dist.sigma!r}"
    atoms = ";".join(f"{nums(c)}@{float(p)!r}" for c, p in zip(dist.centers, dist.probs))
    return f"discrete:{atoms}"
