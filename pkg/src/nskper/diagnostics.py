"""Energy functionals, dissipation, inequality monitors and decay-exponent fits.

Cross terms ``sum_{|alpha|=k} <d^alpha v, d^alpha grad sigma>`` count each
multi-index once, which in Fourier space is the weight
``h_k(xi_1^2, ..., xi_n^2)`` (complete homogeneous symmetric polynomial).
Sobolev norms follow :mod:`nskper.spectral`: ``||u||_s^2 = sum_{k<=s} |xi|^{2k}``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .model import State, time_derivative, trig_evaluate

__all__ = [
    "EnergyCouplings",
    "EnergyReport",
    "energy_low",
    "energy_full",
    "dissipation_full",
    "perturbation_functional",
    "perturbation_dissipation",
    "inequality_monitor",
    "perturbation_monitor",
    "decay_fit",
    "interpolation_probe",
    "UPTICK_TOL",
    "R_FLOOR",
]

UPTICK_TOL = 1e-10
R_FLOOR = 1e-30


@dataclass(frozen=True)
class EnergyCouplings:
    """Cross-term couplings; ``d1`` also serves the high-order perturbation term."""

    d0: float = 0.1
    d1: float = 0.1

    def __post_init__(self):
        for name in ("d0", "d1"):
            d = getattr(self, name)
            if not 0 < d <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {d}")


def _cross(grid, sigma, v, weight=None):
    """``<v, grad sigma>`` with an optional spectral weight."""
    return grid.inner(v, grid.gradient(sigma), weight=weight).sum(axis=-1)


def _functional(grid, sigma, v, s_sig, s_v, d_low, d_high, k_high):
    val = grid.sobolev_norm_sq(sigma, s_sig) + grid.sobolev_norm_sq(v, s_v, vector=True)
    val = val + d_low * _cross(grid, sigma, v)
    if k_high >= 1:
        w = sum(grid.multiindex_weight(k) for k in range(1, k_high + 1))
        val = val + d_high * _cross(grid, sigma, v, weight=w)
    return val


def _grad_sq(grid, u, s, vector=False):
    # ||grad u||_s^2 = sum_{k=1}^{s+1} |xi|^{2k} |u_hat|^2
    w = grid.xi_sq * grid.sobolev_weight(s)
    return grid.weighted_sq_vector(u, w) if vector else grid.weighted_sq(u, w)


def energy_low(U: State, ec: EnergyCouplings = EnergyCouplings()):
    """``||U||^2 + ||grad sigma||^2 + d0 <v, grad sigma>``."""
    g = U.grid
    return (
        g.sobolev_norm_sq(U.sigma, 1)
        + g.sobolev_norm_sq(U.v, 0, vector=True)
        + ec.d0 * _cross(g, U.sigma, U.v)
    )


def energy_full(U: State, ec: EnergyCouplings = EnergyCouplings(), N: int = 4):
    """``||sigma||_{N+1}^2 + ||v||_N^2 + d0 <v, grad sigma> + d1 sum_{1<=|a|<=N} <d^a v, d^a grad sigma>``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return _functional(U.grid, U.sigma, U.v, N + 1, N, ec.d0, ec.d1, N)


def dissipation_full(U: State, N: int = 4):
    """``||grad sigma||_{N+1}^2 + ||grad v||_N^2``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    g = U.grid
    return _grad_sq(g, U.sigma, N + 1) + _grad_sq(g, U.v, N, vector=True)


def perturbation_functional(U: State, ec: EnergyCouplings = EnergyCouplings(), N: int = 4):
    """Lyapunov value for perturbations: ``||s||_{N-1}^2 + ||v||_{N-2}^2`` plus cross terms up to order N-2."""
    if N < 2:
        raise ValueError("N must be >= 2")
    return _functional(U.grid, U.sigma, U.v, N - 1, N - 2, ec.d0, ec.d1, N - 2)


def perturbation_dissipation(U: State, N: int = 4):
    g = U.grid
    return _grad_sq(g, U.sigma, N - 1) + _grad_sq(g, U.v, N - 2, vector=True)


@dataclass
class EnergyReport:
    functional: str
    couplings: EnergyCouplings
    N: int
    times: np.ndarray
    E: np.ndarray
    D: np.ndarray
    R: np.ndarray | None = None
    margin: np.ndarray | None = None
    C_hat: float = float("nan")
    C5_hat: float = float("nan")
    dissipation_integral: np.ndarray | None = None
    violations: int = 0
    worst_violation: float = 0.0
    exponents: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def col(a, i):
            return None if a is None else float(a[i])

        series = [
            {"t": float(t), "E": float(self.E[i]), "D": float(self.D[i]),
             "R": col(self.R, i), "margin": col(self.margin, i)}
            for i, t in enumerate(self.times)
        ]
        return {
            "functional": self.functional,
            "couplings": {"d0": self.couplings.d0, "d1": self.couplings.d1, "N": self.N},
            "series": series,
            "fitted": {"C_hat": _num(self.C_hat), "C5_hat": _num(self.C5_hat),
                       "exponents": {k: _num(v) for k, v in self.exponents.items()}},
            "violations": {"count": int(self.violations), "worst": float(self.worst_violation)},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _samples(traj):
    """``(times, sigma, v, periodic)`` for periodic and Cauchy trajectories alike."""
    periodic = hasattr(traj, "n_samples") and hasattr(traj, "period")
    return np.asarray(traj.times, float), traj.sigma, traj.v, periodic


def _forcing_norm_sq(forcing, times, s):
    g = forcing.grid
    coeffs = forcing.coefficients()
    out = np.empty(len(times))
    for i, t in enumerate(times):
        fh = trig_evaluate(coeffs, forcing.period, t)
        hs = math.sqrt(float(g.sobolev_norm_sq(fh, s, vector=True)))
        out[i] = (hs + g.l1_norm(g.inverse(fh))) ** 2
    return out


def inequality_monitor(traj, forcing, ec: EnergyCouplings = EnergyCouplings(), N: int = 4) -> EnergyReport:
    """Track ``dE/dt + D`` against the drive ``R`` along a sampled trajectory.

    ``R = ||U||_{N-1}^2 ||grad U||_N^2 + ||f||_{H^{N-1} cap L^1}^2``.  The fitted
    constant is the max of ``(dE/dt + D) / R`` over samples whose drive is
    above ``R_FLOOR``.
    """
    times, sig, v, periodic = _samples(traj)
    if times.size < 5:
        raise ValueError("inequality_monitor needs at least 5 samples")
    g = traj.grid
    E = _functional(g, sig, v, N + 1, N, ec.d0, ec.d1, N)
    D = _grad_sq(g, sig, N + 1) + _grad_sq(g, v, N, vector=True)
    dt = float(times[1] - times[0])
    margin = time_derivative(E, dt, periodic) + D
    u_sq = g.sobolev_norm_sq(sig, N - 1) + g.sobolev_norm_sq(v, N - 1, vector=True)
    gu_sq = _grad_sq(g, sig, N) + _grad_sq(g, v, N, vector=True)
    R = u_sq * gu_sq
    if forcing is not None:
        R = R + _forcing_norm_sq(forcing, times, N - 1)
    ok = R > R_FLOOR
    c_hat = float(np.max(margin[ok] / R[ok])) if np.any(ok) else float("nan")
    return EnergyReport("full", ec, N, times, E, D, R, margin, C_hat=c_hat)


def perturbation_monitor(traj, ec: EnergyCouplings = EnergyCouplings(), N: int = 4) -> EnergyReport:
    """Monotonicity of the perturbation Lyapunov value along a Cauchy trajectory.

    An uptick counts as a violation when ``E[k+1] - E[k] > UPTICK_TOL * E[k]``.
    ``C5_hat`` is the max over time of ``(E(t) + int_0^t D) / E(0)``.
    """
    times, sig, v, _ = _samples(traj)
    g = traj.grid
    E = _functional(g, sig, v, N - 1, N - 2, ec.d0, ec.d1, N - 2)
    D = _grad_sq(g, sig, N - 1) + _grad_sq(g, v, N - 2, vector=True)
    integral = cumulative_trapezoid(D, times, initial=0.0) if times.size > 1 else np.zeros(1)
    rep = EnergyReport("perturbation", ec, N, times, E, D, dissipation_integral=integral)
    if times.size >= 5:
        rep.margin = time_derivative(E, float(times[1] - times[0]), periodic=False) + D
    up = np.diff(E) - UPTICK_TOL * E[:-1]
    bad = up > 0
    rep.violations = int(np.sum(bad))
    rel = np.diff(E) / np.where(E[:-1] > 0, E[:-1], 1.0)
    rep.worst_violation = float(np.max(rel[bad])) if rep.violations else 0.0
    if E[0] > 0:
        rep.C5_hat = float(np.max((E + integral) / E[0]))
    return rep


def decay_fit(t, values, window=None) -> tuple[float, float]:
    """Least-squares exponent ``p`` in ``value ~ C (1 + t)^{-p}``.

    Returns ``(p, rms residual of log(value))`` over samples with
    ``window[0] <= t <= window[1]``.
    """
    t = np.asarray(t, float)
    y = np.asarray(values, float)
    sel = np.ones(t.shape, bool) if window is None else (t >= window[0]) & (t <= window[1])
    t, y = t[sel], y[sel]
    if t.size < 2:
        raise ValueError("decay_fit needs at least two samples in the window")
    if np.any(y <= 0):
        raise ValueError("decay_fit needs positive values in the window")
    x = np.log1p(t)
    slope, icpt = np.polyfit(x, np.log(y), 1)
    res = np.log(y) - (slope * x + icpt)
    return float(-slope), float(np.sqrt(np.mean(res**2)))


def interpolation_probe(grid, u: np.ndarray) -> float:
    """``||u||_inf^2 / (||grad^{m+1} u|| ||grad^{m-1} u||)`` for ``n = 2m``.

    For odd ``n = 2m + 1`` the denominator is ``||grad^{m+1} u|| ||grad^m u||``.
    The sup is the grid maximum.  A field with vanishing denominator (constant
    field) yields ``nan`` with a warning.
    """
    m = grid.n // 2
    lo = m - 1 if grid.n % 2 == 0 else m
    u_hat = grid.forward(u)
    a = math.sqrt(float(grid.grad_norm_sq(u_hat, m + 1)))
    b = math.sqrt(float(grid.grad_norm_sq(u_hat, lo)))
    if a * b <= 1e-300 or a <= 1e-14 * max(b, 1e-300):
        warnings.warn("interpolation probe: zero denominator (constant field)", stacklevel=2)
        return float("nan")
    return grid.linf_norm(u) ** 2 / (a * b)
