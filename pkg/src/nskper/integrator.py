"""Exponential time differencing for the reformulated system and its perturbations.

The linear part is propagated exactly per mode; only the quadratic remainder
``G`` and the forcing are treated explicitly.  Scheme 1 is exponential Euler,
scheme 2 the two-stage Cox-Matthews method::

    a      = E U + h phi1(hL) N(U, t)
    U_next = a + h phi2(hL) (N(a, t + h) - N(U, t))
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import (
    FluidParams,
    PeriodicForcing,
    ReformParams,
    State,
    VacuumError,
    nonlinear_terms,
    trig_coefficients,
    trig_evaluate,
)
from .semigroup import ETDTable

__all__ = [
    "IntegratorConfig",
    "CauchyTrajectory",
    "IntegrationError",
    "step",
    "integrate",
    "perturbation_evolution",
    "symmetrize",
    "forcing_hash",
]


class IntegrationError(RuntimeError):
    """Non-finite state encountered; ``last_states`` holds the final good snapshots."""

    def __init__(self, message: str, time: float, last_states: list):
        super().__init__(message)
        self.time = time
        self.last_states = last_states


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    scheme: int = 2
    stride: int = 1
    nonlinear: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError("t_end must be >= 0")
        if self.scheme not in (1, 2):
            raise ValueError(f"scheme must be 1 or 2, got {self.scheme}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError("stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        k = self.t_end / self.dt
        n = int(round(k))
        if abs(k - n) > 1e-9 * max(1.0, k):
            raise ValueError(f"t_end={self.t_end} is not an integer multiple of dt={self.dt}")
        return n


@dataclass
class CauchyTrajectory:
    grid: object
    times: np.ndarray
    sigma: np.ndarray  # (K,) + grid.shape, spectral
    v: np.ndarray  # (K, n) + grid.shape, spectral
    provenance: dict = field(default_factory=dict)

    def state(self, i: int) -> State:
        return State(self.grid, self.sigma[i], self.v[i])

    @property
    def final(self) -> State:
        return self.state(-1)

    def __len__(self) -> int:
        return self.times.size


def forcing_hash(forcing: PeriodicForcing | None) -> str:
    if forcing is None:
        return "none"
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(forcing.samples, dtype="<f8").tobytes())
    h.update(np.float64(forcing.period).tobytes())
    return h.hexdigest()


class _Rhs:
    """Explicit part ``N(U, t)`` with small caches for repeated times."""

    def __init__(self, grid, rp, fp, forcing, nonlinear, base=None):
        self.grid, self.rp, self.fp = grid, rp, fp
        self.nonlinear = nonlinear
        self.f_coeffs = forcing.coefficients() if forcing is not None else None
        self.period = forcing.period if forcing is not None else None
        # perturbation mode: base trajectory coefficients and period
        self.base = None
        if base is not None:
            self.base = (trig_coefficients(base.sigma), trig_coefficients(base.v), base.period)
        self._cache = {}

    def _base_terms(self, t):
        if t not in self._cache:
            cs, cv, per = self.base
            s0, v0 = trig_evaluate(cs, per, t), trig_evaluate(cv, per, t)
            self._cache = {k: val for k, val in self._cache.items() if k >= t - 1e-300}
            self._cache[t] = (s0, v0, nonlinear_terms(self.grid, s0, v0, self.rp, self.fp))
        return self._cache[t]

    def __call__(self, sigma, v, t):
        if self.base is not None:
            s0, v0, (b1, b2) = self._base_terms(t)
            G1, G2 = nonlinear_terms(self.grid, s0 + sigma, v0 + v, self.rp, self.fp)
            return G1 - b1, G2 - b2
        if self.nonlinear:
            G1, G2 = nonlinear_terms(self.grid, sigma, v, self.rp, self.fp)
        else:
            G1, G2 = np.zeros_like(sigma), np.zeros_like(v)
        if self.f_coeffs is not None:
            G2 = G2 + self.rp.lambda2 * trig_evaluate(self.f_coeffs, self.period, t)
        return G1, G2


def _step(table: ETDTable, rhs: _Rhs, sigma, v, t, h, scheme):
    n0 = rhs(sigma, v, t)
    es, ev = table.apply(sigma, v)
    ps, pv = table.apply_phi(1, *n0)
    a_s, a_v = es + h * ps, ev + h * pv
    if scheme == 1:
        return a_s, a_v
    n1 = rhs(a_s, a_v, t + h)
    qs, qv = table.apply_phi(2, n1[0] - n0[0], n1[1] - n0[1])
    return a_s + h * qs, a_v + h * qv


def step(U: State, t: float, cfg: IntegratorConfig, forcing, rp: ReformParams, fp: FluidParams,
         table: ETDTable | None = None) -> State:
    """Advance ``U`` from ``t`` to ``t + cfg.dt``."""
    table = table or ETDTable(U.grid, rp, cfg.dt)
    rhs = _Rhs(U.grid, rp, fp, forcing, cfg.nonlinear)
    s, v = _step(table, rhs, U.sigma, U.v, t, cfg.dt, cfg.scheme)
    return State(U.grid, s, v)


def _run(U0: State, cfg: IntegratorConfig, rhs: _Rhs, rp, t0: float, provenance: dict) -> CauchyTrajectory:
    grid = U0.grid
    n_steps = cfg.n_steps
    table = ETDTable(grid, rp, cfg.dt)
    times, sig_out, v_out = [t0], [U0.sigma.copy()], [U0.v.copy()]
    s, v = U0.sigma, U0.v
    recent = [U0]
    for i in range(1, n_steps + 1):
        t = t0 + (i - 1) * cfg.dt
        try:
            s, v = _step(table, rhs, s, v, t, cfg.dt, cfg.scheme)
        except VacuumError as exc:
            exc.time = t
            exc.last_states = recent[-2:]
            raise
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(v))):
            raise IntegrationError(f"non-finite state at t={t + cfg.dt:.6g}", t + cfg.dt, recent[-2:])
        recent = recent[-1:] + [State(grid, s, v)]
        if i % cfg.stride == 0 or i == n_steps:
            times.append(t0 + i * cfg.dt)
            sig_out.append(s)
            v_out.append(v)
    return CauchyTrajectory(grid, np.array(times), np.stack(sig_out), np.stack(v_out), provenance)


def integrate(U0: State, cfg: IntegratorConfig, forcing: PeriodicForcing | None, rp: ReformParams,
              fp: FluidParams, t0: float = 0.0) -> CauchyTrajectory:
    """Integrate the full system from ``U0`` at ``t0`` to ``t0 + cfg.t_end``.

    The forcing is evaluated between its samples by trigonometric interpolation.
    """
    if forcing is not None and forcing.grid != U0.grid:
        raise ValueError("forcing and state live on different grids")
    rhs = _Rhs(U0.grid, rp, fp, forcing, cfg.nonlinear)
    prov = {"config": asdict(cfg), "params": asdict(rp), "forcing_sha256": forcing_hash(forcing), "mode": "full"}
    return _run(U0, cfg, rhs, rp, t0, prov)


def perturbation_evolution(W0: State, base, cfg: IntegratorConfig, rp: ReformParams, fp: FluidParams,
                           t0: float = 0.0) -> CauchyTrajectory:
    """Evolve ``W = U - U_per`` in difference form around the periodic trajectory ``base``.

    The explicit part is ``G(U_per + W) - G(U_per)``; the forcing cancels.
    """
    if cfg.dt > base.period / base.n_samples * (1 + 1e-12):
        warnings.warn("dt exceeds the sample spacing of the periodic trajectory", stacklevel=2)
    rhs = _Rhs(W0.grid, rp, fp, None, True, base=base)
    prov = {"config": asdict(cfg), "params": asdict(rp), "mode": "perturbation",
            "base_period": base.period, "base_samples": base.n_samples}
    return _run(W0, cfg, rhs, rp, t0, prov)


def symmetrize(grid, sigma: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project physical fields onto the reflection-symmetric class.

    ``sigma`` becomes even in every coordinate and ``v_j`` odd in ``x_j`` and
    even in the others (reflections about ``x = 0`` on the periodic grid).
    Fields in this class keep zero mean velocity under the dynamics.
    """
    def reflect(a, axis):
        return np.roll(np.flip(a, axis=axis), 1, axis=axis)

    s = sigma.copy()
    out_v = v.copy()
    n = grid.n
    for ax in range(n):
        s = 0.5 * (s + reflect(s, ax))
        for j in range(n):
            sign = -1.0 if j == ax else 1.0
            out_v[j] = 0.5 * (out_v[j] + sign * reflect(out_v[j], ax))
    s = s - s.mean()
    return s, out_v
