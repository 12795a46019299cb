"""Run configuration: JSON file validated against a JSON Schema plus semantic invariants."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from . import geometry as geo

SUITE_NAMES = ("check-clifford", "check-boundary", "evolve", "green", "moller", "state", "convergence")
BOUNDARY_NAMES = ("mit", "chiral+", "chiral-", "interpolated-mit")

_METRIC = {
    "type": "object",
    "oneOf": [
        {
            "required": ["preset"],
            "properties": {
                "preset": {"enum": sorted(geo.PRESETS)},
                "params": {"type": "object", "additionalProperties": {"type": "number"}},
            },
            "additionalProperties": False,
        },
        {
            "required": ["table"],
            "properties": {
                "table": {
                    "type": "object",
                    "required": ["t", "x", "beta", "h"],
                    "properties": {
                        "t": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                        "x": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                        "beta": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                        "h": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                    },
                    "additionalProperties": False,
                }
            },
            "additionalProperties": False,
        },
    ],
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "moller-dirac run configuration",
    "type": "object",
    "required": ["metrics", "chi", "grid"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "domain": {
            "type": "object",
            "properties": {
                "length": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "metrics": {
            "type": "object",
            "required": ["g0", "g1"],
            "properties": {"g0": _METRIC, "g1": _METRIC},
            "additionalProperties": False,
        },
        "chi": {
            "type": "object",
            "required": ["t_minus", "t_plus"],
            "properties": {
                "t_minus": {"type": "number"},
                "t_plus": {"type": "number"},
                "profile": {"enum": ["exp-smoothstep"]},
            },
            "additionalProperties": False,
        },
        "grid": {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 2},
        "boundary": {"type": "array", "items": {"enum": list(BOUNDARY_NAMES)}, "minItems": 1, "uniqueItems": True},
        "suites": {"type": "array", "items": {"enum": list(SUITE_NAMES)}, "minItems": 1, "uniqueItems": True},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "samples": {
            "type": "object",
            "properties": {
                key: {"type": "integer", "minimum": 1}
                for key in ("boundary_samples", "metric_pairs", "sources", "family", "test_pairs", "car_modes")
            },
            "additionalProperties": False,
        },
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` points into the source file when known."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    name: str
    length: float
    t_end: float
    g0: geo.SplitMetric
    g1: geo.SplitMetric
    t_minus: float
    t_plus: float
    grid: tuple[int, ...]
    boundary: tuple[str, ...]
    suites: tuple[str, ...]
    output: str
    seed: int
    samples: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


# keys that select what to run or where to write, not what is computed
_UNHASHED = ("output", "suites")


def config_hash(raw: dict) -> str:
    content = {k: v for k, v in raw.items() if k not in _UNHASHED}
    canonical = json.dumps(content, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _line_of(text: str, path) -> int | None:
    """Line of the JSON node at ``path`` (keys and list indices), found by scanning the text."""
    if not text:
        return None
    decoder = json.JSONDecoder()
    pos = 0
    for part in path:
        if isinstance(part, str):
            hit = text.find(json.dumps(part), pos)
            if hit < 0:
                break
            pos = hit
        else:
            # advance to the opening bracket and skip ``part`` items
            bracket = text.find("[", pos)
            if bracket < 0:
                break
            pos = bracket + 1
            for _ in range(part):
                while text[pos] in " \t\r\n":
                    pos += 1
                _, pos = decoder.raw_decode(text, pos)
                pos = text.find(",", pos) + 1
            while text[pos] in " \t\r\n":
                pos += 1
    return text.count("\n", 0, pos) + 1


def _semantic(raw: dict, text: str, source: str) -> None:
    grid = raw["grid"]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("grid ladder must be strictly increasing", source, _line_of(text, ["grid"]))
    t_end = raw.get("domain", {}).get("t_end", 1.0)
    tm, tp = raw["chi"]["t_minus"], raw["chi"]["t_plus"]
    if not 0 < tm < tp < t_end:
        raise ConfigError(
            f"need 0 < t_minus < t_plus < t_end, got t_minus={tm}, t_plus={tp}, t_end={t_end}",
            source,
            _line_of(text, ["chi"]),
        )


def parse_config(raw: dict, text: str = "", source: str = "<config>") -> RunConfig:
    """Validate a decoded configuration and build the metrics it names."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(raw))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}", source, _line_of(text, list(err.absolute_path)))
    _semantic(raw, text, source)
    dom = raw.get("domain", {})
    length = float(dom.get("length", 1.0))
    t_end = float(dom.get("t_end", 1.0))
    metrics = {}
    for key in ("g0", "g1"):
        try:
            g = geo.metric_from_entry(raw["metrics"][key], length, t_end)
            if not g.is_positive():
                raise ValueError("coefficients must stay positive")
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"metrics/{key}: {exc}", source, _line_of(text, ["metrics", key])) from exc
        metrics[key] = g
    for key in ("g0", "g1"):
        tab = raw["metrics"][key].get("table")
        if tab is not None and not (
            tab["t"][0] == 0 and tab["x"][0] == 0 and abs(tab["x"][-1] - length) <= 1e-12 and tab["t"][-1] >= t_end - 1e-12
        ):
            raise ConfigError(
                f"metrics/{key}: table must start at t = x = 0 and cover [0, {t_end}] x [0, {length}]",
                source,
                _line_of(text, ["metrics", key]),
            )
    return RunConfig(
        raw=raw,
        name=raw.get("name", Path(source).stem),
        length=length,
        t_end=t_end,
        g0=metrics["g0"],
        g1=metrics["g1"],
        t_minus=float(raw["chi"]["t_minus"]),
        t_plus=float(raw["chi"]["t_plus"]),
        grid=tuple(int(n) for n in raw["grid"]),
        boundary=tuple(raw.get("boundary", ["mit"])),
        suites=tuple(raw.get("suites", SUITE_NAMES)),
        output=raw.get("output", "reports"),
        seed=int(raw.get("seed", 0)),
        samples=dict(raw.get("samples", {})),
    )


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read, override and validate a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", str(path), exc.lineno) from exc
    if isinstance(raw, dict):
        raw.update(overrides or {})
    return parse_config(raw, text, str(path))
