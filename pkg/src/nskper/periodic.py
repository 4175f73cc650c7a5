"""Time-periodic solutions: triple norm, periodic linear solve, the map Psi, Picard iteration.

A periodic trajectory is stored as ``M`` uniform samples over one period.  The
periodic linear solve integrates the trigonometric interpolant of the sampled
right-hand side exactly: for each spatial mode and time harmonic ``h`` the
unique periodic response is ``(i omega_h - B)^{-1} W_h``.  This is the closed
form of ``(I - E(T))^{-1} int_0^T E(T - s) W(s) ds`` followed by Duhamel on
``[0, t_j]`` for a trigonometric ``W``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import (
    FluidParams,
    PeriodicForcing,
    ReformParams,
    State,
    VacuumError,
    nonlinear_terms,
    pde_residual,
    trig_coefficients,
    trig_evaluate,
)
from .semigroup import merge_velocity, split_velocity, _shells
from .spectral import TorusGrid

__all__ = [
    "PeriodicTrajectory",
    "TripleNormSpec",
    "ConvergenceTrace",
    "SingularResolventError",
    "DivergenceError",
    "triple_norm",
    "triple_norm_sq",
    "periodic_linear_solve",
    "psi_map",
    "fixed_point_solve",
    "uniqueness_probe",
    "contraction_window",
    "trajectory_residual",
    "AmplitudeScan",
    "critical_amplitude",
]


class SingularResolventError(ArithmeticError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, trace: "ConvergenceTrace"):
        super().__init__(f"fixed-point iteration diverged (last ratio {trace.last_ratio:.3g})")
        self.trace = trace


@dataclass(frozen=True, eq=False)
class PeriodicTrajectory:
    """``M`` spectral samples ``U(t_j)``, ``t_j = j T / M``.

    ``sigma`` has shape ``(M,) + grid.shape`` and ``v`` ``(M, n) + grid.shape``.
    """

    grid: TorusGrid
    period: float
    sigma: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.sigma.shape[0] < 4:
            raise ValueError("a periodic trajectory needs at least 4 samples")

    @property
    def n_samples(self) -> int:
        return self.sigma.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.period / self.n_samples

    @classmethod
    def zeros(cls, grid: TorusGrid, period: float, n_samples: int) -> "PeriodicTrajectory":
        return cls(
            grid,
            period,
            np.zeros((n_samples,) + grid.shape, complex),
            np.zeros((n_samples, grid.n) + grid.shape, complex),
        )

    @classmethod
    def constant(cls, state: State, period: float, n_samples: int) -> "PeriodicTrajectory":
        return cls(
            state.grid,
            period,
            np.repeat(state.sigma[None], n_samples, axis=0),
            np.repeat(state.v[None], n_samples, axis=0),
        )

    def state(self, j: int) -> State:
        return State(self.grid, self.sigma[j], self.v[j])

    def __add__(self, other):
        return PeriodicTrajectory(self.grid, self.period, self.sigma + other.sigma, self.v + other.v)

    def __sub__(self, other):
        return PeriodicTrajectory(self.grid, self.period, self.sigma - other.sigma, self.v - other.v)

    def __mul__(self, c: float):
        return PeriodicTrajectory(self.grid, self.period, c * self.sigma, c * self.v)

    __rmul__ = __mul__

    def interpolator(self):
        """Callable ``t -> State`` using trigonometric interpolation in time."""
        cs, cv = trig_coefficients(self.sigma), trig_coefficients(self.v)

        def at(t: float) -> State:
            return State(self.grid, trig_evaluate(cs, self.period, t), trig_evaluate(cv, self.period, t))

        return at

    def roll(self, k: int) -> "PeriodicTrajectory":
        return PeriodicTrajectory(self.grid, self.period, np.roll(self.sigma, k, axis=0), np.roll(self.v, k, axis=0))

    def hermitian_defect(self) -> float:
        return max(self.state(j).hermitian_defect() for j in range(self.n_samples))


@dataclass(frozen=True)
class TripleNormSpec:
    """Regularity index ``N`` of the triple norm."""

    N: int = 4

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.N}")

    def warnings_for(self, n: int) -> list[str]:
        out = []
        if self.N < n + 2:
            out.append(f"N={self.N} < n+2={n + 2}: outside the regularity assumed by the theory")
        if n < 5:
            out.append(f"n={n} < 5: convergence of the infinite-past integral is not guaranteed by the theory")
        return out


def _triple_parts(grid: TorusGrid, sigma: np.ndarray, v: np.ndarray, N: int):
    sup_w_s = grid.sobolev_weight(N)
    sup_w_v = grid.sobolev_weight(N - 1)
    # ||grad u||_s^2 = sum_{k=1}^{s+1} |xi|^{2k} |u_hat|^2
    dis_w_s = grid.xi_sq * grid.sobolev_weight(N + 1)
    dis_w_v = grid.xi_sq * grid.sobolev_weight(N)
    sup_terms = grid.weighted_sq(sigma, sup_w_s) + grid.weighted_sq_vector(v, sup_w_v)
    dis_terms = grid.weighted_sq(sigma, dis_w_s) + grid.weighted_sq_vector(v, dis_w_v)
    return sup_terms, dis_terms


def triple_norm_sq(traj: PeriodicTrajectory, spec: TripleNormSpec) -> float:
    """Discrete ``|||U|||^2``: sample sup of ``||sigma||_N^2 + ||v||_{N-1}^2`` plus the
    periodic trapezoid integral of ``||grad sigma||_{N+1}^2 + ||grad v||_N^2``."""
    sup_terms, dis_terms = _triple_parts(traj.grid, traj.sigma, traj.v, spec.N)
    dt = traj.period / traj.n_samples
    return float(np.max(sup_terms) + dt * np.sum(dis_terms))


def triple_norm(traj: PeriodicTrajectory, spec: TripleNormSpec) -> float:
    return math.sqrt(triple_norm_sq(traj, spec))


def periodic_linear_solve(
    grid: TorusGrid,
    period: float,
    w_sigma: np.ndarray,
    w_v: np.ndarray,
    rp: ReformParams,
) -> PeriodicTrajectory:
    """Unique periodic solution of ``U_t + A U = W`` for sampled periodic ``W``.

    The zero spatial mode is set to zero.  The time Nyquist harmonic is
    resolved as a cosine (average of the resolvents at ``+-omega``).
    """
    m = w_sigma.shape[0]
    if m % 2:
        raise ValueError("number of time samples must be even")
    omega0 = 2 * np.pi / period
    harm = np.fft.fftfreq(m, d=1.0 / m)

    b_w, t_w = split_velocity(grid, w_v)
    ws_h = np.fft.fft(w_sigma, axis=0)
    wb_h = np.fft.fft(b_w, axis=0)
    wt_h = np.fft.fft(t_w, axis=0)

    k, inv = _shells(grid)
    b12 = rp.gamma * k
    b21 = -(rp.gamma + rp.kappa_p * k**2) * k
    b22 = -(rp.mu_p + rp.nu_p) * k**2
    sol_rate = rp.mu_p * k**2
    nonzero = (k > 0)[inv]

    us_h = np.zeros_like(ws_h)
    ub_h = np.zeros_like(wb_h)
    ut_h = np.zeros_like(wt_h)

    def resolvent(om):
        # (i om I - B)^{-1} = [[i om - b22, b12], [b21, i om]] / det
        det = (1j * om) * (1j * om - b22) - b12 * b21
        scale = np.abs(1j * om) ** 2 + np.abs(b12 * b21) + np.abs(b22) ** 2
        bad = (k > 0) & (np.abs(det) < 1e-14 * np.maximum(scale, 1e-300))
        if np.any(bad):
            raise SingularResolventError(f"singular periodic resolvent at |xi|={k[bad][0]:g}, omega={om:g}")
        det = np.where(k > 0, det, 1.0)
        r = ((1j * om - b22) / det, b12 / det, b21 / det, (1j * om) / det)
        den_t = 1j * om + sol_rate
        if grid.n >= 2 and np.any((k > 0) & (np.abs(den_t) < 1e-14 * np.maximum(np.abs(om) + sol_rate, 1e-300))):
            raise SingularResolventError(f"singular transverse resolvent at omega={om:g}")
        rt = np.where(k > 0, 1.0 / np.where(k > 0, den_t, 1.0), 0.0)
        return r, rt

    for j, h in enumerate(harm):
        if m % 2 == 0 and j == m // 2:
            (ra, rta), (rb, rtb) = resolvent(h * omega0), resolvent(-h * omega0)
            r = tuple(0.5 * (x + y) for x, y in zip(ra, rb))
            rt = 0.5 * (rta + rtb)
        else:
            r, rt = resolvent(h * omega0)
        r11, r12, r21, r22 = (x[inv] for x in r)
        us_h[j] = np.where(nonzero, r11 * ws_h[j] + r12 * wb_h[j], 0.0)
        ub_h[j] = np.where(nonzero, r21 * ws_h[j] + r22 * wb_h[j], 0.0)
        ut_h[j] = rt[inv] * wt_h[j]

    us = np.fft.ifft(us_h, axis=0)
    ub = np.fft.ifft(ub_h, axis=0)
    ut = np.fft.ifft(ut_h, axis=0)
    v = merge_velocity(grid, ub, ut)
    # zero spatial mode of v
    v[(slice(None), slice(None)) + (0,) * grid.n] = 0.0
    return PeriodicTrajectory(grid, period, us, v)


def _nonlinear_stack(traj: PeriodicTrajectory, rp, fp, literal_nu, chunk_elems=1 << 21):
    grid = traj.grid
    m = traj.n_samples
    per = max(1, chunk_elems // (grid.size * (grid.n + 1)))
    g1s, g2s = [], []
    for a in range(0, m, per):
        G1, G2 = nonlinear_terms(grid, traj.sigma[a : a + per], traj.v[a : a + per], rp, fp, literal_nu)
        g1s.append(G1)
        g2s.append(G2)
    return np.concatenate(g1s), np.concatenate(g2s)


def psi_map(
    traj: PeriodicTrajectory,
    forcing: PeriodicForcing,
    rp: ReformParams,
    fp: FluidParams,
    literal_nu: bool = False,
    return_dropped: bool = False,
):
    """``Psi[U] = periodic_linear_solve(G(U) + (0, lambda2 f))``.

    With ``return_dropped`` also return the largest zero-mode velocity
    magnitude of the right-hand side that the torus solve discards.
    """
    if traj.n_samples != forcing.n_samples or not math.isclose(traj.period, forcing.period):
        raise ValueError("trajectory and forcing must share period and sample count")
    G1, G2 = _nonlinear_stack(traj, rp, fp, literal_nu)
    w_v = G2 + rp.lambda2 * forcing.spectral()
    out = periodic_linear_solve(traj.grid, traj.period, G1, w_v, rp)
    if return_dropped:
        dropped = float(np.max(np.abs(w_v[(slice(None), slice(None)) + (0,) * traj.grid.n])))
        return out, dropped
    return out


@dataclass
class ConvergenceTrace:
    norms: list = field(default_factory=list)  # |||U^(k)||| for k = 1, 2, ...
    increments: list = field(default_factory=list)  # |||U^(k+1) - U^(k)|||
    ratios: list = field(default_factory=list)
    converged: bool = False
    divergent: bool = False
    vacuum: bool = False
    iterations: int = 0
    delta: float = 0.0  # sup_t ||f||_{H^{N-1} cap L^1}
    C1_hat: float = float("nan")
    C2_hat: float = float("nan")
    C3_hat: float = float("nan")
    dropped_mean: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def last_ratio(self) -> float:
        return self.ratios[-1] if self.ratios else float("nan")

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "divergent": self.divergent,
            "vacuum": self.vacuum,
            "iterations": self.iterations,
            "triple_norms": list(map(float, self.norms)),
            "increments": list(map(float, self.increments)),
            "ratios": list(map(float, self.ratios)),
            "delta": float(self.delta),
            "C1_hat": float(self.C1_hat),
            "C2_hat": float(self.C2_hat),
            "C3_hat": float(self.C3_hat),
            "dropped_mean_velocity_rhs": float(self.dropped_mean),
            "warnings": list(self.warnings),
        }


def fixed_point_solve(
    forcing: PeriodicForcing,
    rp: ReformParams,
    fp: FluidParams,
    spec: TripleNormSpec,
    tol: float = 1e-10,
    max_iter: int = 50,
    initial: PeriodicTrajectory | None = None,
    literal_nu: bool = False,
) -> tuple[PeriodicTrajectory, ConvergenceTrace]:
    """Picard iteration ``U^(k+1) = Psi[U^(k)]`` from ``U^(0) = 0`` (or ``initial``).

    Stops when ``|||U^(k+1) - U^(k)||| <= tol * max(1, |||U^(k+1)|||)``.  Three
    consecutive non-contracting increments flag divergence.  A vacuum raises
    :class:`~nskper.model.VacuumError` with ``trace`` attached.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    grid = forcing.grid
    trace = ConvergenceTrace()
    trace.warnings = spec.warnings_for(grid.n)
    for w in trace.warnings:
        warnings.warn(w, stacklevel=2)
    trace.delta = float(np.max(forcing.norm_h_l1(spec.N - 1)))

    u = initial if initial is not None else PeriodicTrajectory.zeros(grid, forcing.period, forcing.n_samples)
    norm_prev = triple_norm(u, spec)
    first = None
    c1, c3 = [], []
    streak = 0
    norm_prev_prev = norm_prev
    for it in range(1, max_iter + 1):
        try:
            u_next, dropped = psi_map(u, forcing, rp, fp, literal_nu, return_dropped=True)
        except VacuumError as exc:
            trace.vacuum = True
            trace.iterations = it
            exc.trace = trace
            raise
        trace.dropped_mean = max(trace.dropped_mean, dropped)
        norm_next = triple_norm(u_next, spec)
        inc = triple_norm(u_next - u, spec)
        if not np.isfinite(norm_next):
            trace.divergent = True
            trace.iterations = it
            break
        trace.norms.append(norm_next)
        if trace.increments:
            prev_inc = trace.increments[-1]
            if prev_inc > 0:
                ratio = inc / prev_inc
                trace.ratios.append(ratio)
                pair = norm_prev + norm_prev_prev
                # skip increments already at the roundoff floor
                if pair > 0 and prev_inc > 1e-13 * max(norm_prev, 1e-300):
                    c3.append(inc / (pair * prev_inc))
                streak = streak + 1 if ratio >= 1 else 0
        trace.increments.append(inc)
        if initial is None:
            if it == 1:
                first = u_next
            elif norm_prev > 0:
                c1.append(triple_norm(u_next - first, spec) / norm_prev**2)
        trace.iterations = it
        norm_prev_prev, norm_prev = norm_prev, norm_next
        u = u_next
        if inc <= tol * max(1.0, norm_next):
            trace.converged = True
            break
        if streak >= 3:
            trace.divergent = True
            break

    if initial is None and trace.norms:
        trace.C2_hat = trace.norms[0] / trace.delta if trace.delta > 0 else float("nan")
        trace.C1_hat = max(c1) if c1 else 0.0
        trace.C3_hat = max(c3) if c3 else 0.0
    return u, trace


def contraction_window(trace: ConvergenceTrace) -> dict:
    """Empirical version of the admissible radius window built from the fitted constants."""
    c1, c2, c3, d = trace.C1_hat, trace.C2_hat, trace.C3_hat, trace.delta
    disc = 1 - 4 * c1 * c2 * d
    out = {"discriminant": disc, "lower": float("nan"), "upper": float("nan"), "contraction_bound": float("inf")}
    if c3 > 0:
        out["contraction_bound"] = 1 / (2 * c3)
    if c1 > 0 and disc >= 0:
        out["lower"] = (1 - math.sqrt(disc)) / (2 * c1)
        out["upper"] = min((1 + math.sqrt(disc)) / (2 * c1), out["contraction_bound"])
    elif c1 == 0:
        out["lower"] = c2 * d
        out["upper"] = out["contraction_bound"]
    return out


def uniqueness_probe(
    forcing: PeriodicForcing,
    rp: ReformParams,
    fp: FluidParams,
    spec: TripleNormSpec,
    guesses: list,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> float:
    """Largest pairwise triple-norm distance between limits started from ``guesses``."""
    limits = []
    for g in guesses:
        u, trace = fixed_point_solve(forcing, rp, fp, spec, tol, max_iter, initial=g)
        if not trace.converged:
            raise DivergenceError(trace)
        limits.append(u)
    dist = 0.0
    for a, b in itertools.combinations(limits, 2):
        dist = max(dist, triple_norm(a - b, spec))
    return dist


def trajectory_residual(traj: PeriodicTrajectory, forcing, rp, fp, literal_nu=False):
    """PDE residual norms per sample with the periodic time stencil."""
    return pde_residual(
        traj.grid, traj.times, traj.sigma, traj.v, rp, fp, forcing, periodic=True, literal_nu=literal_nu
    )


@dataclass
class AmplitudeScan:
    """Bracket ``[lower, upper]`` of forcing scales around the loss of convergence."""

    lower: float
    upper: float
    lower_trace: ConvergenceTrace
    upper_trace: ConvergenceTrace
    history: list = field(default_factory=list)  # (scale, converged, last ratio)

    @property
    def estimate(self) -> float:
        return math.sqrt(self.lower * self.upper)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "estimate": self.estimate,
            "lower_last_ratio": self.lower_trace.last_ratio,
            "upper_last_ratio": self.upper_trace.last_ratio,
            "history": [list(h) for h in self.history],
        }


def critical_amplitude(
    forcing: PeriodicForcing,
    rp: ReformParams,
    fp: FluidParams,
    spec: TripleNormSpec,
    lower: float,
    upper: float,
    rel_width: float = 0.05,
    tol: float = 1e-10,
    max_iter: int = 60,
) -> AmplitudeScan:
    """Bisect (in log scale) the factor ``c`` applied to ``forcing`` between a
    convergent ``lower`` and a non-convergent ``upper``.

    A run that hits a vacuum counts as non-convergent.
    """

    def attempt(c):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                _, tr = fixed_point_solve(forcing.scaled(c), rp, fp, spec, tol, max_iter)
            except VacuumError as exc:
                tr = exc.trace
        return tr.converged, tr

    ok_lo, tr_lo = attempt(lower)
    ok_hi, tr_hi = attempt(upper)
    history = [(lower, ok_lo, tr_lo.last_ratio), (upper, ok_hi, tr_hi.last_ratio)]
    if not ok_lo or ok_hi:
        raise ValueError("critical_amplitude needs a convergent lower and a non-convergent upper scale")
    while upper / lower > 1 + rel_width:
        mid = math.sqrt(lower * upper)
        ok, tr = attempt(mid)
        history.append((mid, ok, tr.last_ratio))
        if ok:
            lower, tr_lo = mid, tr
        else:
            upper, tr_hi = mid, tr
    return AmplitudeScan(lower, upper, tr_lo, tr_hi, history)
