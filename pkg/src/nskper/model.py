"""Navier-Stokes-Korteweg model: parameters, reformulated variables, nonlinear terms.

The unknown is ``U = (sigma, v)`` with ``sigma = rho - rho_inf`` and
``v = lambda2 * u``.  In these variables the system reads::

    sigma_t + gamma div v = G1(sigma, v)
    v_t - mu' lap v - nu' grad div v + gamma grad sigma - kappa' grad lap sigma
        = G2(sigma, v) + lambda2 f

All arrays here are spectral coefficients on a :class:`~nskper.spectral.TorusGrid`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectral import TorusGrid

__all__ = [
    "ModelError",
    "VacuumError",
    "PressureLaw",
    "FluidParams",
    "ReformParams",
    "State",
    "PeriodicForcing",
    "derive_params",
    "to_reformed",
    "from_reformed",
    "g1",
    "g2",
    "nonlinear_terms",
    "trig_coefficients",
    "trig_evaluate",
    "time_derivative",
    "pde_residual",
]


class ModelError(ValueError):
    """Invalid model parameters or inputs."""


class VacuumError(ArithmeticError):
    """Density reached zero or became negative on the grid."""


@dataclass(frozen=True)
class PressureLaw:
    """Gamma law ``P(rho) = a * rho**g``."""

    a: float = 1.0
    g: float = 2.0

    def __post_init__(self):
        if not self.a > 0:
            raise ModelError(f"(H2) violated: pressure coefficient a must be positive, got {self.a}")
        if not self.g >= 1:
            raise ModelError(f"pressure exponent g must be >= 1, got {self.g}")

    def __call__(self, rho):
        return self.a * np.power(rho, self.g)

    def derivative(self, rho):
        return self.a * self.g * np.power(rho, self.g - 1.0)


@dataclass(frozen=True)
class FluidParams:
    rho_inf: float = 1.0
    mu: float = 1.0
    nu: float = 1.0
    kappa: float = 1.0
    pressure: PressureLaw = field(default_factory=PressureLaw)

    def validate(self, n: int) -> None:
        """Check (H1) for dimension ``n`` and (H2); raise :class:`ModelError` naming the failure."""
        if not self.rho_inf > 0:
            raise ModelError(f"rho_inf must be positive, got {self.rho_inf}")
        for name in ("mu", "nu", "kappa"):
            if not getattr(self, name) > 0:
                raise ModelError(f"(H1) violated: {name} must be positive, got {getattr(self, name)}")
        if self.nu + 2.0 * self.mu / n < 0:
            raise ModelError(f"(H1) violated: nu + (2/n) mu = {self.nu + 2.0 * self.mu / n} < 0 for n={n}")
        if not self.pressure.derivative(self.rho_inf) > 0:
            raise ModelError("(H2) violated: P'(rho_inf) must be positive")


@dataclass(frozen=True)
class ReformParams:
    gamma: float
    kappa_p: float
    mu_p: float
    nu_p: float
    lambda1: float
    lambda2: float
    rho_inf: float


def derive_params(fp: FluidParams, n: int) -> ReformParams:
    fp.validate(n)
    gamma = math.sqrt(fp.pressure.derivative(fp.rho_inf))
    return ReformParams(
        gamma=gamma,
        kappa_p=fp.rho_inf * fp.kappa / gamma,
        mu_p=fp.mu / fp.rho_inf,
        nu_p=(fp.nu + fp.mu) / fp.rho_inf,
        lambda1=gamma / fp.rho_inf,
        lambda2=fp.rho_inf / gamma,
        rho_inf=fp.rho_inf,
    )


@dataclass(frozen=True, eq=False)
class State:
    """Spectral coefficients of ``sigma`` (shape grid) and ``v`` (shape ``(n,)+grid``)."""

    grid: TorusGrid
    sigma: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "State":
        return cls(grid, np.zeros(grid.shape, complex), np.zeros((grid.n,) + grid.shape, complex))

    @classmethod
    def from_physical(cls, grid: TorusGrid, sigma: np.ndarray, v: np.ndarray) -> "State":
        """Transform physical ``(sigma, v)``; the Nyquist planes are removed."""
        return cls(grid, grid.strip_nyquist(grid.forward(sigma)), grid.strip_nyquist(grid.forward(v)))

    def physical(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.inverse(self.sigma), self.grid.inverse(self.v)

    def __add__(self, other: "State") -> "State":
        return State(self.grid, self.sigma + other.sigma, self.v + other.v)

    def __sub__(self, other: "State") -> "State":
        return State(self.grid, self.sigma - other.sigma, self.v - other.v)

    def __mul__(self, c: float) -> "State":
        return State(self.grid, c * self.sigma, c * self.v)

    __rmul__ = __mul__

    def l2_norm(self) -> float:
        g = self.grid
        return float(np.sqrt(g.weighted_sq(self.sigma, 1.0) + g.weighted_sq_vector(self.v, 1.0)))

    def hermitian_defect(self) -> float:
        g = self.grid
        return max(g.hermitian_defect(self.sigma), max(g.hermitian_defect(c) for c in self.v))


def to_reformed(rho: np.ndarray, u: np.ndarray, grid: TorusGrid, rp: ReformParams) -> State:
    """Physical ``(rho, u)`` to the reformulated state ``(rho - rho_inf, lambda2 u)``."""
    if np.any(rho <= 0):
        raise ModelError("density must be positive")
    sigma = rho - rp.rho_inf
    return State(grid, grid.forward(sigma), grid.forward(rp.lambda2 * u))


def from_reformed(state: State, rp: ReformParams) -> tuple[np.ndarray, np.ndarray]:
    sigma, v = state.physical()
    return sigma + rp.rho_inf, v / rp.lambda2


# -- nonlinear terms ------------------------------------------------------


def _check_density(rho: np.ndarray) -> None:
    if not np.all(rho > 0):
        bad = float(np.min(rho))
        raise VacuumError(f"vacuum: min density {bad:.3e} <= 0")


def nonlinear_terms(
    grid: TorusGrid,
    sigma_hat: np.ndarray,
    v_hat: np.ndarray,
    rp: ReformParams,
    fp: FluidParams,
    literal_nu: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Return dealiased spectral ``(G1, G2)``; leading batch axes are allowed.

    Products and the rational factors are formed pointwise in physical space.
    ``literal_nu`` switches the viscous correction coefficient from ``nu + mu``
    (consistent with the primitive equations) to ``nu``.
    """
    n = grid.n
    sig = grid.inverse(sigma_hat)
    rho = sig + rp.rho_inf
    _check_density(rho)
    v = grid.inverse(v_hat)

    # G1 = -lambda1 div(sigma v)
    flux_hat = grid.forward(np.expand_dims(sig, -n - 1) * v)
    G1 = grid.dealias(-rp.lambda1 * grid.divergence(flux_hat))

    # viscous correction
    div_hat = grid.divergence(v_hat)
    coef = fp.nu if literal_nu else fp.nu + fp.mu
    visc = fp.mu * grid.inverse(-grid.xi_sq * v_hat) + coef * grid.inverse(grid.gradient(div_hat))
    factor = -sig / (rp.rho_inf * rho)
    G2_phys = np.expand_dims(factor, -n - 1) * visc

    # convection -lambda1 (v . grad) v
    for k in range(n):
        dk_v = grid.inverse(1j * grid.odd_xi[k] * v_hat)
        G2_phys -= rp.lambda1 * np.expand_dims(np.take(v, k, axis=-n - 1), -n - 1) * dk_v

    # pressure bracket
    dp = fp.pressure.derivative
    bracket = dp(rho) / rho - dp(rp.rho_inf) / rp.rho_inf
    grad_sig = grid.inverse(grid.gradient(sigma_hat))
    G2_phys -= rp.lambda2 * np.expand_dims(bracket, -n - 1) * grad_sig

    G2 = grid.dealias(grid.forward(G2_phys))
    return G1, G2


def g1(state: State, rp: ReformParams) -> np.ndarray:
    """``G1 = -lambda1 div(sigma v)`` evaluated pseudospectrally."""
    grid = state.grid
    sig = grid.inverse(state.sigma)
    v = grid.inverse(state.v)
    flux_hat = grid.forward(np.expand_dims(sig, -grid.n - 1) * v)
    return grid.dealias(-rp.lambda1 * grid.divergence(flux_hat))


def g2(state: State, rp: ReformParams, fp: FluidParams, literal_nu: bool = False) -> np.ndarray:
    return nonlinear_terms(state.grid, state.sigma, state.v, rp, fp, literal_nu)[1]


# -- time-periodic sample handling ----------------------------------------


def trig_coefficients(samples: np.ndarray) -> np.ndarray:
    """Discrete Fourier coefficients in time along axis 0 (divided by M)."""
    return np.fft.fft(samples, axis=0) / samples.shape[0]


def trig_evaluate(coeffs: np.ndarray, period: float, t: float) -> np.ndarray:
    """Evaluate the trigonometric interpolant at time ``t``.

    The Nyquist harmonic (M even) enters as a cosine so real-representing
    samples interpolate to real-representing values.
    """
    m = coeffs.shape[0]
    h = np.fft.fftfreq(m, d=1.0 / m)
    phase = np.exp(2j * np.pi * h * t / period)
    if m % 2 == 0:
        phase[m // 2] = math.cos(2 * math.pi * (m // 2) * t / period)
    return np.tensordot(phase, coeffs, axes=(0, 0))


@dataclass(frozen=True, eq=False)
class PeriodicForcing:
    """``M`` uniform samples ``f(t_j, .)``, ``t_j = j T / M``, of an n-vector field.

    ``samples`` holds physical values with shape ``(M, n) + grid.shape``.
    """

    grid: TorusGrid
    period: float
    samples: np.ndarray

    def __post_init__(self):
        m = self.samples.shape[0]
        if m < 4:
            raise ModelError(f"forcing needs at least 4 time samples, got {m}")
        if not self.period > 0:
            raise ModelError("forcing period must be positive")
        if self.samples.shape[1:] != (self.grid.n,) + self.grid.shape:
            raise ModelError(f"forcing samples have shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ModelError("forcing samples must be finite")
        means = np.abs(np.mean(self.samples, axis=self.grid.axes))
        scale = max(1.0, float(np.max(np.abs(self.samples), initial=0.0)))
        if np.max(means, initial=0.0) > 1e-12 * scale:
            raise ModelError(
                "forcing must have zero spatial mean in every component; "
                "use PeriodicForcing.project_mean()"
            )

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.period / self.n_samples

    @classmethod
    def project_mean(cls, grid: TorusGrid, period: float, samples: np.ndarray, warn: bool = True):
        """Build a forcing after removing the spatial mean of each component."""
        means = np.mean(samples, axis=grid.axes, keepdims=True)
        scale = max(1.0, float(np.max(np.abs(samples), initial=0.0)))
        if warn and np.max(np.abs(means), initial=0.0) > 1e-12 * scale:
            warnings.warn("forcing had nonzero spatial mean; projected out", stacklevel=2)
        return cls(grid, period, samples - means)

    @classmethod
    def zero(cls, grid: TorusGrid, period: float, n_samples: int) -> "PeriodicForcing":
        return cls(grid, period, np.zeros((n_samples, grid.n) + grid.shape))

    @classmethod
    def from_function(cls, grid: TorusGrid, period: float, n_samples: int,
                      func: Callable[[float, np.ndarray], np.ndarray]) -> "PeriodicForcing":
        """Sample ``func(t, x)`` (``x`` of shape ``(n,)+grid``) at the uniform times."""
        ts = np.arange(n_samples) * period / n_samples
        samples = np.stack([np.asarray(func(t, grid.coordinates), float) for t in ts])
        return cls.project_mean(grid, period, samples, warn=False)

    @classmethod
    def from_modes(cls, grid: TorusGrid, period: float, n_samples: int, modes, amplitude: float = 1.0):
        """Sum of ``a cos(2 pi m.x / L + h omega t + phase)`` terms on chosen components.

        ``modes`` is an iterable of mappings with keys ``component``, ``mode``
        (n integers), ``harmonic``, ``amplitude`` and optional ``phase``.
        """
        omega = 2 * np.pi / period
        ts = np.arange(n_samples) * period / n_samples
        samples = np.zeros((n_samples, grid.n) + grid.shape)
        x = grid.coordinates
        for entry in modes:
            comp = int(entry["component"])
            m = np.asarray(entry["mode"], float)
            if not 0 <= comp < grid.n or m.shape != (grid.n,):
                raise ModelError(f"bad forcing mode entry {entry!r}")
            arg = (2 * np.pi / grid.length) * np.tensordot(m, x, axes=(0, 0))
            a = float(entry["amplitude"])
            ph = float(entry.get("phase", 0.0))
            hmn = float(entry.get("harmonic", 0))
            for j, t in enumerate(ts):
                samples[j, comp] += a * np.cos(arg + hmn * omega * t + ph)
        return cls.project_mean(grid, period, amplitude * samples)

    @classmethod
    def symmetric(cls, grid: TorusGrid, period: float, n_samples: int, amplitude: float) -> "PeriodicForcing":
        """Single-harmonic forcing invariant under every reflection ``x_j -> -x_j``.

        A gradient part ``-sin(x_j) cos(omega t)`` in each component plus, for
        n >= 2, a divergence-free cell ``(sin x1 cos x2, -cos x1 sin x2) sin(omega t)``.
        The reflection symmetry keeps the mean velocity of the response at zero.
        """
        k = 2 * np.pi / grid.length
        omega = 2 * np.pi / period

        def f(t, x):
            out = np.zeros((grid.n,) + grid.shape)
            for j in range(grid.n):
                out[j] = -np.sin(k * x[j]) * np.cos(omega * t)
            if grid.n >= 2:
                out[0] += np.sin(k * x[0]) * np.cos(k * x[1]) * np.sin(omega * t)
                out[1] -= np.cos(k * x[0]) * np.sin(k * x[1]) * np.sin(omega * t)
            return amplitude * out

        return cls.from_function(grid, period, n_samples, f)

    def spectral(self) -> np.ndarray:
        """Dealiased spectral samples, shape ``(M, n) + grid``."""
        return self.grid.dealias(self.grid.forward(self.samples))

    def coefficients(self) -> np.ndarray:
        return trig_coefficients(self.spectral())

    def at(self, t: float, coeffs: np.ndarray | None = None) -> np.ndarray:
        """Spectral forcing at arbitrary ``t`` by trigonometric interpolation."""
        if coeffs is None:
            coeffs = self.coefficients()
        return trig_evaluate(coeffs, self.period, t)

    def norm_h_l1(self, s: int) -> np.ndarray:
        """Per-sample ``||f||_{H^s} + ||f||_{L^1}``."""
        g = self.grid
        hs = np.sqrt(g.sobolev_norm_sq(self.spectral(), s, vector=True))
        l1 = np.array([g.l1_norm(x) for x in self.samples])
        return hs + l1

    def shifted(self, k: int) -> "PeriodicForcing":
        """Forcing delayed by ``k T / M`` (samples rolled)."""
        return PeriodicForcing(self.grid, self.period, np.roll(self.samples, k, axis=0))

    def scaled(self, c: float) -> "PeriodicForcing":
        return PeriodicForcing(self.grid, self.period, c * self.samples)


# -- residuals --------------------------------------------------------------


def time_derivative(values: np.ndarray, dt: float, periodic: bool) -> np.ndarray:
    """Fourth-order finite difference along axis 0 on uniform samples.

    Periodic data use the centred stencil with wrap-around; otherwise the two
    first and last samples use one-sided five-point stencils.
    """
    m = values.shape[0]
    if periodic:
        if m < 4:
            raise ModelError("need at least 4 periodic samples for the time derivative")
        r = lambda k: np.roll(values, -k, axis=0)  # noqa: E731
        return (-r(2) + 8 * r(1) - 8 * r(-1) + r(-2)) / (12 * dt)
    if m < 5:
        raise ModelError("need at least 5 samples for the one-sided time derivative")
    out = np.empty_like(values)
    out[2:-2] = (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12 * dt)
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * dt)
    sec = np.array([-3, -10, 18, -6, 1]) / (12 * dt)
    out[0] = np.tensordot(fwd, values[:5], axes=(0, 0))
    out[1] = np.tensordot(sec, values[:5], axes=(0, 0))
    out[-1] = -np.tensordot(fwd, values[::-1][:5], axes=(0, 0))
    out[-2] = -np.tensordot(sec, values[::-1][:5], axes=(0, 0))
    return out


def pde_residual(
    grid: TorusGrid,
    times: np.ndarray,
    sigma: np.ndarray,
    v: np.ndarray,
    rp: ReformParams,
    fp: FluidParams,
    forcing: PeriodicForcing | None = None,
    periodic: bool = True,
    nonlinear: bool = True,
    literal_nu: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample L2 norms of the residuals of both equations.

    ``sigma`` and ``v`` are spectral stacks over uniformly spaced ``times``.
    """
    times = np.asarray(times, float)
    if times.size < 3:
        raise ModelError("pde_residual needs at least 3 time samples")
    dt = float(times[1] - times[0])
    s_t = time_derivative(sigma, dt, periodic)
    v_t = time_derivative(v, dt, periodic)
    if nonlinear:
        G1, G2 = nonlinear_terms(grid, sigma, v, rp, fp, literal_nu)
    else:
        G1, G2 = np.zeros_like(sigma), np.zeros_like(v)
    r1 = s_t + rp.gamma * grid.divergence(v) - G1
    lin_v = (
        rp.mu_p * grid.xi_sq * v
        - rp.nu_p * grid.gradient(grid.divergence(v))
        + grid.gradient((rp.gamma + rp.kappa_p * grid.xi_sq) * sigma)
    )
    r2 = v_t + lin_v - G2
    if forcing is not None:
        coeffs = forcing.coefficients()
        f_hat = np.stack([forcing.at(t, coeffs) for t in times])
        r2 = r2 - rp.lambda2 * f_hat
    return np.sqrt(grid.weighted_sq(r1, 1.0)), np.sqrt(grid.weighted_sq_vector(r2, 1.0))
