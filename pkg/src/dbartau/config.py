"""Scenario configuration, overrides and report writing for the command line."""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .dbar import MatrixField
from .geometry import DomainSpec, GeometryError, disk, ellipse, union
from .kernel import KernelPair, constant_nilpotent_pair, m_from_pair, two_disk_pair
from .nls import NLSScenario, beta_from_spec, nls_pair

__all__ = [
    "ConfigError",
    "MAX_RADIAL",
    "MAX_ANGULAR",
    "load_config",
    "apply_overrides",
    "config_hash",
    "Scenario",
    "domain_from_spec",
    "parse_complex",
    "to_jsonable",
    "write_json",
    "write_csv",
]

MAX_RADIAL = 64
MAX_ANGULAR = 128


class ConfigError(ValueError):
    """Unreadable or inconsistent configuration."""


def load_config(path) -> dict:
    """Read a JSON file, or YAML when the suffix says so and PyYAML is installed."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    if p.suffix.lower() in (".yaml", ".yml"):
        try:
            import yaml
        except ImportError as exc:
            raise ConfigError("YAML configs need PyYAML; use JSON instead") from exc
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be a mapping")
    return data


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as JSON when possible."""
    out = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = out
        parts = key.strip().split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if nxt is None:
                nxt = node[part] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping")
            node = nxt
        node[parts[-1]] = val
    return out


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def parse_complex(v) -> complex:
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex value {v!r} needs two entries")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        try:
            return complex(v.replace(" ", "").replace("i", "j"))
        except ValueError as exc:
            raise ConfigError(f"bad complex literal {v!r}") from exc
    return complex(v)


def domain_from_spec(spec: dict) -> DomainSpec:
    if not isinstance(spec, dict):
        raise ConfigError("domain must be a mapping")
    kind = spec.get("kind", "disk")
    cc = bool(spec.get("conjugate_closed", False))
    try:
        if kind == "disk":
            return disk(parse_complex(spec.get("center", 0.0)), float(spec.get("radius", 1.0)), cc)
        if kind == "ellipse":
            return ellipse(float(spec["a"]), float(spec["b"]), parse_complex(spec.get("center", 0.0)),
                           float(spec.get("rotation", 0.0)), cc)
        if kind == "union":
            comps = spec.get("components", [])
            if len(comps) != 2:
                raise ConfigError("a union needs two components")
            return union(domain_from_spec(comps[0]), domain_from_spec(comps[1]))
    except KeyError as exc:
        raise ConfigError(f"domain is missing {exc.args[0]!r}") from None
    except GeometryError as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc
    raise ConfigError(f"unknown domain kind {kind!r}")


@dataclass
class Scenario:
    """Parsed view of a configuration mapping."""

    raw: dict

    @property
    def name(self) -> str:
        return str(self.raw.get("name", "scenario"))

    @property
    def domain(self) -> DomainSpec:
        if "domain" not in self.raw:
            raise ConfigError("config has no 'domain'")
        return domain_from_spec(self.raw["domain"])

    @property
    def solve_domain(self) -> DomainSpec:
        """Domain carrying the field (NLS fields live on ``D`` and its mirror image)."""
        if self.field_spec.get("kind") == "nls":
            return self.nls().domain
        return self.domain

    @property
    def resolution(self) -> tuple[int, int]:
        g = self.raw.get("grid", {})
        nr, nt = int(g.get("radial", 20)), int(g.get("angular", 40))
        if not (2 <= nr <= MAX_RADIAL and 4 <= nt <= MAX_ANGULAR):
            raise ConfigError(f"grid {nr}x{nt} outside the caps {MAX_RADIAL}x{MAX_ANGULAR}")
        return nr, nt

    def tol(self, key: str, default: float) -> float:
        v = float(self.raw.get("tolerances", {}).get(key, default))
        if not v > 0:
            raise ConfigError(f"tolerance {key!r} must be positive")
        return v

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def complex_value(self, key, default) -> complex:
        return parse_complex(self.raw.get(key, default))

    def times(self, key="times", default=(0.0,)):
        vals = self.raw.get(key, list(default))
        return tuple(parse_complex(v) for v in vals)

    @property
    def field_spec(self) -> dict:
        f = self.raw.get("field", {"kind": "zero"})
        if not isinstance(f, dict):
            raise ConfigError("field must be a mapping")
        return f

    def nls(self) -> NLSScenario:
        f = self.field_spec
        nr, nt = self.resolution
        try:
            return NLSScenario(self.domain, beta_from_spec(f.get("beta", 1.0)), float(self.raw.get("x", 0.0)),
                               float(self.raw.get("t", 0.0)), float(self.raw.get("t3", 0.0)), nr, nt,
                               parse_complex(f.get("mirror_scale", 1.0)))
        except GeometryError as exc:
            raise ConfigError(f"invalid NLS scenario: {exc}") from exc

    def pair(self) -> KernelPair | None:
        """Kernel pair behind the field, or ``None`` for fields without one."""
        f = self.field_spec
        kind = f.get("kind", "zero")
        if kind == "two-disk":
            return two_disk_pair(self.domain, parse_complex(f.get("beta1", 1.0)), parse_complex(f.get("beta2", 1.0)))
        if kind == "constant-nilpotent":
            return constant_nilpotent_pair(parse_complex(f.get("c1", 1.0)), parse_complex(f.get("c2", 1.0)), self.domain)
        if kind == "nls":
            return nls_pair(self.nls())
        if kind in ("zero", "constant"):
            return None
        raise ConfigError(f"unknown field kind {kind!r}")

    def field(self) -> MatrixField:
        f = self.field_spec
        kind = f.get("kind", "zero")
        if kind == "zero":
            return MatrixField.zero(2)
        if kind == "constant":
            try:
                C = np.array([[parse_complex(v) for v in row] for row in f["matrix"]])
            except (KeyError, TypeError) as exc:
                raise ConfigError("constant field needs a 'matrix'") from exc
            return MatrixField.constant(C, self.domain)
        p = self.pair()
        return m_from_pair(p)


def to_jsonable(obj: Any):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(np.real(obj)), "im": float(np.imag(obj))}
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, data: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=False) + "\n")
    os.replace(tmp, path)


def write_csv(path, columns: list[str], rows) -> None:
    """Write rows; complex cells expand into ``name_re, name_im`` column pairs."""
    rows = [list(r) for r in rows]
    is_c = [any(isinstance(r[i], (complex, np.complexfloating)) for r in rows) for i in range(len(columns))]
    header = []
    for name, c in zip(columns, is_c):
        header += [f"{name}_re", f"{name}_im"] if c else [name]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            out = []
            for v, c in zip(r, is_c):
                if c:
                    v = complex(v)
                    out += [repr(v.real), repr(v.imag)]
                else:
                    out.append(repr(float(v)) if isinstance(v, (float, np.floating)) else v)
            w.writerow(out)
