"""Time-periodic solutions of the compressible Navier-Stokes-Korteweg system on the torus.

Submodules: ``spectral`` (grid, transforms, norms), ``model`` (parameters,
nonlinear terms, forcing), ``semigroup`` (per-mode linear propagator),
``periodic`` (periodic solve and Picard iteration), ``integrator``
(exponential time differencing), ``diagnostics`` (energy monitors, fits),
``io``, ``config`` and ``cli``.
"""

__version__ = "0.1.0"

from .model import FluidParams, PeriodicForcing, PressureLaw, ReformParams, State, derive_params  # noqa: E402
from .spectral import TorusGrid, make_grid  # noqa: E402

__all__ = [
    "__version__",
    "FluidParams",
    "PeriodicForcing",
    "PressureLaw",
    "ReformParams",
    "State",
    "TorusGrid",
    "derive_params",
    "make_grid",
]
