"""Run configuration: a YAML (or JSON) file with CLI overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .multiindex import DEFAULT_ALPHA, DEFAULT_LAMBDA, Window
from .torus import FourierField

DEFAULT_BASE_POINTS = ((0.3, 0.6), (0.77, 0.12), (0.5, 0.5), (0.1, 0.9), (0.62, 0.33))


def dyadic(spec) -> tuple:
    """{"dyadic": [a, b]} -> (2^-a, ..., 2^-b); explicit lists pass through."""
    if isinstance(spec, dict):
        a, b = spec["dyadic"]
        step = 1 if b >= a else -1
        return tuple(2.0 ** -j for j in range(int(a), int(b) + step, step))
    return tuple(float(v) for v in spec)


@dataclass(frozen=True)
class RunConfig:
    alpha: float = DEFAULT_ALPHA
    lam: float = DEFAULT_LAMBDA
    cutoff: float = 3 * DEFAULT_ALPHA + 2
    fourier_modes: int = 32
    noise_seed: int = 0
    max_mode: int = 2
    amplitude: float = 1.0
    base_points: tuple = DEFAULT_BASE_POINTS
    radii: tuple = dyadic({"dyadic": [1, 6]})
    t_grid: tuple = dyadic({"dyadic": [4, 20]})
    directions: int = 64
    rhs_directions: int = 16
    tol_slope: float = 0.15
    tol_vanish: float = 1e-8
    tol_residual: float = 1e-10
    tol_identity: float = 1e-9
    tol_reproduce: float = 1e-5
    tol_telescope: float = 1e-6
    tol_picard: float = 1e-14
    tol_order: float = 0.3
    rhs_variation: float = 4.0
    algebra_families: int = 100
    algebra_cutoff: float | None = 3 * DEFAULT_ALPHA + 1
    telescope_betas: int = 12
    telescope_t: tuple = (2.0 ** -12, 2.0 ** -8, 2.0 ** -4)
    schauder_betas: int = 12
    oracle_amplitude: float = 4.0

    def __post_init__(self):
        if not 1 < self.alpha < 2:
            raise ValueError("alpha must lie in (1, 2)")
        if not 0 < self.lam < 1:
            raise ValueError("lambda must lie in (0, 1)")
        if self.fourier_modes < 2 * self.max_mode:
            raise ValueError("fourier_modes too small for the noise")
        if len(self.base_points) < 1:
            raise ValueError("need at least one base point")
        if self.cutoff <= self.alpha:
            warnings.warn(f"cutoff {self.cutoff} <= alpha: the model has no index beyond polynomial ones"
                          + (" and is empty" if self.cutoff < 1 else ""), stacklevel=2)

    # -- derived ----------------------------------------------------------
    def window(self) -> Window:
        return Window(self.cutoff, self.lam, self.alpha)

    def algebra_window(self) -> Window:
        return Window(self.algebra_cutoff or self.cutoff, self.lam, self.alpha)

    def noise_field(self) -> FourierField:
        return FourierField.random_noise(self.noise_seed, self.max_mode, self.amplitude, self.fourier_modes)

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(p) if isinstance(p, tuple) else p for p in v]
        return d

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d or {})
        noise = d.pop("noise", None)
        if noise:
            for k, key in (("seed", "noise_seed"), ("max_mode", "max_mode"), ("amplitude", "amplitude")):
                if k in noise:
                    d[key] = noise[k]
        tols = d.pop("tolerances", None)
        if tols:
            for k, v in tols.items():
                d[f"tol_{k}"] = v
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("radii", "t_grid", "telescope_t"):
            if key in d:
                d[key] = dyadic(d[key])
        if "base_points" in d:
            d["base_points"] = tuple((float(p[0]), float(p[1])) for p in d["base_points"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict | None = None) -> "RunConfig":
        d = {}
        if path is not None:
            d = yaml.safe_load(Path(path).read_text()) or {}
        cfg = cls.from_dict(d)
        # command line overrides win over any key of the file, including nested ones
        kw = {k: v for k, v in (overrides or {}).items() if v is not None}
        return cls.from_dict({**cfg.to_dict(), **kw}) if kw else cfg
