"""Run configuration: a flat key-value text file plus command-line overrides.

Format: one `section.key = value` per line, `#` comments.  Values are parsed
as int, float, complex (python syntax, e.g. 0.3j or 1+0.5j), comma-separated
number lists, or left as strings.  No environment variables.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .contour import GridConfig
from .model import ModelParams
from .nlie import IterConfig

_DEFAULTS = {
    "model.gamma": np.pi / 4,
    "model.J": 1.0,
    "model.T": 1.0,
    "model.h": 0.2,
    "model.kappa": None,
    "model.alpha": 0.2 + 0.0j,
    "grid.R": 12.0,
    "grid.R_work": 6.5,
    "grid.d_outer": 1.0 / 3.0,
    "grid.d_work": 0.25,
    "grid.n_horizontal": 0,
    "grid.n_vertical": 24,
    "grid.per_panel": 16,
    "solver.tol": 1e-12,
    "solver.max_iter": 500,
    "solver.damping": 0.5,
    "solver.delta_h": 1e-4,
    "solver.delta_kappa": 1e-5,
    "trotter.N": (4, 8, 16),
    "sweep.T": None,
    "sweep.h": None,
    "output.format": "json",
    "output.path": None,
}


def _parse_value(text: str):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if "," in text:
        return tuple(_parse_value(part) for part in text.split(","))
    for cast in (int, float, complex):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_value(value)
    return out


@dataclass(frozen=True)
class RunConfig:
    entries: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | None = None, overrides=()) -> "RunConfig":
        entries = dict(_DEFAULTS)
        if path is not None:
            with open(path) as fh:
                parsed = parse_config_text(fh.read())
            unknown = set(parsed) - set(_DEFAULTS)
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
            entries.update(parsed)
        for item in overrides:
            if "=" not in item:
                raise ValueError(f"override must be key=value, got {item!r}")
            key, value = item.split("=", 1)
            key = key.strip()
            if key not in _DEFAULTS:
                raise ValueError(f"unknown config key: {key}")
            entries[key] = _parse_value(value)
        cfg = cls(entries=entries)
        cfg.model_params()  # re-validate module-level preconditions at load
        cfg.grid_config()
        return cfg

    def __getitem__(self, key: str):
        return self.entries[key]

    def canonical_text(self) -> str:
        def fmt(v):
            if isinstance(v, tuple):
                return ",".join(fmt(x) for x in v)
            if isinstance(v, complex):
                return repr(v)
            return repr(v) if not isinstance(v, str) else v

        return "\n".join(f"{k} = {fmt(self.entries[k])}" for k in sorted(self.entries))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]

    # typed views ------------------------------------------------------------
    def model_params(self) -> ModelParams:
        kappa = self["model.kappa"]
        p = ModelParams(
            gamma=float(self["model.gamma"]),
            J=float(self["model.J"]),
            T=float(self["model.T"]),
            h=float(self["model.h"]),
            kappa=complex(kappa) if kappa is not None else None,
        )
        return p

    def grid_config(self) -> GridConfig:
        gc = GridConfig(
            R=float(self["grid.R"]),
            R_work=float(self["grid.R_work"]),
            d_outer=float(self["grid.d_outer"]),
            d_work=float(self["grid.d_work"]),
            n_horizontal=int(self["grid.n_horizontal"]),
            n_vertical=int(self["grid.n_vertical"]),
            per_panel=int(self["grid.per_panel"]),
        )
        if not (0.0 < gc.d_work < gc.d_outer < 0.5):
            raise ValueError("need 0 < grid.d_work < grid.d_outer < 0.5 (fractions of gamma)")
        return gc

    def iter_config(self) -> IterConfig:
        return IterConfig(
            tol=float(self["solver.tol"]),
            max_iter=int(self["solver.max_iter"]),
            damping=float(self["solver.damping"]),
        )

    @property
    def alpha(self) -> complex:
        return complex(self["model.alpha"])

    @property
    def trotter_list(self) -> tuple:
        n = self["trotter.N"]
        ns = (n,) if not isinstance(n, tuple) else n
        return tuple(int(x) for x in ns)

    @property
    def sweep_T(self) -> tuple:
        t = self["sweep.T"]
        if t is None:
            return (float(self["model.T"]),)
        return tuple(float(x) for x in (t if isinstance(t, tuple) else (t,)))

    @property
    def sweep_h(self) -> tuple:
        h = self["sweep.h"]
        if h is None:
            return (float(self["model.h"]),)
        return tuple(float(x) for x in (h if isinstance(h, tuple) else (h,)))

    @property
    def grid_summary(self) -> dict:
        return {k.split(".", 1)[1]: self.entries[k] for k in self.entries if k.startswith("grid.")}
