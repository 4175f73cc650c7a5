"""TOML experiment configuration with strict key checking and cross-field validation.

Example::

    [model]
    n = 2
    rho_inf = 1.0
    mu = 1.0
    nu = 1.0
    kappa = 1.0
    pressure_a = 1.0        # P(rho) = pressure_a * rho**pressure_exponent
    pressure_exponent = 2.0

    [grid]
    points_per_dim = 32
    length = 6.283185307179586

    [forcing]
    kind = "symmetric"      # symmetric | modes | snapshots | zero
    period = 1.0
    samples = 32
    amplitude = 1e-3

    [solver]
    N = 4
    tol = 1e-10
    max_iter = 50
    d0 = 0.1
    d1 = 0.1

    [integrator]
    dt = 0.0078125
    periods = 10
    perturbation_amplitude = 1e-3
    seed = 0

    [decay]
    width = 1.0
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from .model import FluidParams, ModelError, PeriodicForcing, PressureLaw, derive_params
from .spectral import TorusGrid

__all__ = [
    "ConfigError",
    "ModelSection",
    "GridSection",
    "ForcingSection",
    "SolverSection",
    "IntegratorSection",
    "DecaySection",
    "ExperimentConfig",
    "load_config",
    "parse_config",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSection:
    n: int = 2
    rho_inf: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    kappa: float = 1.0
    pressure_a: float = 1.0
    pressure_exponent: float = 2.0
    literal_nu: bool = False


@dataclass(frozen=True)
class GridSection:
    points_per_dim: int = 32
    length: float = 2 * math.pi


@dataclass(frozen=True)
class ForcingSection:
    kind: str = "symmetric"
    period: float = 1.0
    samples: int = 32
    amplitude: float = 1e-3
    modes: tuple = ()
    snapshots: tuple = ()


@dataclass(frozen=True)
class SolverSection:
    N: int = 4
    tol: float = 1e-10
    max_iter: int = 50
    d0: float = 0.1
    d1: float = 0.1


@dataclass(frozen=True)
class IntegratorSection:
    dt: float = 1.0 / 256
    periods: int = 10
    perturbation_amplitude: float = 1e-3
    seed: int = 0
    scheme: int = 2
    stride: int = 8


@dataclass(frozen=True)
class DecaySection:
    width: float = 1.0
    n_times: int = 120
    # sampling range and fit window, as fractions of the floor time t*
    t_min_fraction: float = 1e-4
    t_max_fraction: float = 0.1
    window: tuple = (1.0 / 300, 1.0 / 30)


_SECTIONS = {
    "model": ModelSection,
    "grid": GridSection,
    "forcing": ForcingSection,
    "solver": SolverSection,
    "integrator": IntegratorSection,
    "decay": DecaySection,
}

_MODE_KEYS = {"component", "mode", "harmonic", "amplitude", "phase"}


def _coerce(cls, name, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    out = {}
    for key, val in raw.items():
        default = getattr(cls(), key)
        if isinstance(default, bool):
            if not isinstance(val, bool):
                raise ConfigError(f"[{name}] {key} must be a boolean")
        elif isinstance(default, int):
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"[{name}] {key} must be an integer")
        elif isinstance(default, float):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"[{name}] {key} must be a number")
            val = float(val)
        elif isinstance(default, str):
            if not isinstance(val, str):
                raise ConfigError(f"[{name}] {key} must be a string")
        elif isinstance(default, tuple):
            if not isinstance(val, list):
                raise ConfigError(f"[{name}] {key} must be an array")
            val = tuple(val)
        out[key] = val
    return cls(**out)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    grid: GridSection = field(default_factory=GridSection)
    forcing: ForcingSection = field(default_factory=ForcingSection)
    solver: SolverSection = field(default_factory=SolverSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    decay: DecaySection = field(default_factory=DecaySection)
    source: str = ""
    base_dir: str = "."

    # -- derived objects -----------------------------------------------------

    def fluid_params(self) -> FluidParams:
        m = self.model
        return FluidParams(m.rho_inf, m.mu, m.nu, m.kappa, PressureLaw(m.pressure_a, m.pressure_exponent))

    def reform_params(self):
        return derive_params(self.fluid_params(), self.model.n)

    def make_grid(self) -> TorusGrid:
        return TorusGrid(self.model.n, self.grid.points_per_dim, self.grid.length)

    def sha256(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()

    def make_forcing(self, grid: TorusGrid | None = None) -> PeriodicForcing:
        """Build the forcing; snapshot paths resolve against the config directory."""
        grid = grid or self.make_grid()
        f = self.forcing
        if f.kind == "zero":
            return PeriodicForcing.zero(grid, f.period, f.samples)
        if f.kind == "symmetric":
            return PeriodicForcing.symmetric(grid, f.period, f.samples, f.amplitude)
        if f.kind == "modes":
            return PeriodicForcing.from_modes(grid, f.period, f.samples, f.modes, f.amplitude)
        from .io import read_snapshot  # local import keeps config free of I/O at load time

        frames = []
        for ref in f.snapshots:
            g2, vals = read_snapshot(Path(self.base_dir) / ref)
            if g2 != grid or vals.shape[0] != grid.n:
                raise ConfigError(f"forcing snapshot {ref} does not match the grid or has wrong component count")
            frames.append(vals)
        return PeriodicForcing.project_mean(grid, f.period, f.amplitude * np.stack(frames))

    # -- validation ------------------------------------------------------------

    def validate(self) -> None:
        m, g, f, s, it, d = self.model, self.grid, self.forcing, self.solver, self.integrator, self.decay
        try:
            self.make_grid()
            derive_params(self.fluid_params(), m.n)
        except (ValueError, ModelError) as exc:
            raise ConfigError(str(exc)) from exc
        if not f.period > 0:
            raise ConfigError("forcing.period must be positive")
        if f.samples < 4 or f.samples % 2:
            raise ConfigError(f"forcing.samples (M) must be even and >= 4, got {f.samples}")
        if f.kind not in ("symmetric", "modes", "snapshots", "zero"):
            raise ConfigError(f"unknown forcing.kind {f.kind!r}")
        if f.kind == "modes":
            if not f.modes:
                raise ConfigError("forcing.kind = 'modes' needs a non-empty forcing.modes list")
            for entry in f.modes:
                if not isinstance(entry, dict):
                    raise ConfigError("each forcing.modes entry must be a table")
                extra = set(entry) - _MODE_KEYS
                if extra:
                    raise ConfigError(f"unknown key(s) in forcing.modes entry: {', '.join(sorted(extra))}")
                missing = {"component", "mode", "amplitude"} - set(entry)
                if missing:
                    raise ConfigError(f"forcing.modes entry missing {', '.join(sorted(missing))}")
                if len(entry["mode"]) != m.n or not 0 <= entry["component"] < m.n:
                    raise ConfigError(f"forcing.modes entry {entry} inconsistent with n={m.n}")
        if f.kind == "snapshots" and len(f.snapshots) != f.samples:
            raise ConfigError(f"forcing.snapshots lists {len(f.snapshots)} files, expected M={f.samples}")
        if s.N < 1:
            raise ConfigError("solver.N must be >= 1")
        if not s.tol > 0:
            raise ConfigError("solver.tol must be positive")
        if s.max_iter < 1:
            raise ConfigError("solver.max_iter must be >= 1")
        for name in ("d0", "d1"):
            if not 0 < getattr(s, name) <= 1:
                raise ConfigError(f"solver.{name} must lie in (0, 1]")
        if not it.dt > 0:
            raise ConfigError("integrator.dt must be positive")
        ratio = (f.period / f.samples) / it.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigError(f"integrator.dt={it.dt} must divide T/M={f.period / f.samples}")
        if it.periods < 1 or it.stride < 1 or it.scheme not in (1, 2):
            raise ConfigError("integrator.periods and stride must be >= 1 and scheme in {1, 2}")
        if not it.perturbation_amplitude >= 0:
            raise ConfigError("integrator.perturbation_amplitude must be >= 0")
        if not d.width > 0 or d.n_times < 3:
            raise ConfigError("decay.width must be positive and decay.n_times >= 3")
        if not 0 < d.t_min_fraction < d.t_max_fraction:
            raise ConfigError("decay fractions must satisfy 0 < t_min_fraction < t_max_fraction")
        if len(d.window) != 2 or not d.window[0] < d.window[1]:
            raise ConfigError("decay.window must be [lo, hi] with lo < hi")


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    unknown = sorted(set(raw) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    sections = {name: _coerce(cls, name, raw.get(name, {})) for name, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(**sections, source=text, base_dir=str(base_dir))
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    return parse_config(text, base_dir=path.parent)
