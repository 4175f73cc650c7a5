"""Exact per-mode linear propagator of the reformulated system.

For a wavevector ``xi`` with ``k = |xi| > 0`` split the velocity coefficient as
``v_hat = l * xi/k + w`` with ``w . xi = 0`` and set ``b = -i l``.  Then the
linear part decouples into a scalar heat equation for ``w``::

    w_t = -mu' k^2 w

and a real 2x2 system for ``(sigma_hat, b)``::

    d/dt (sigma_hat, b) = B (sigma_hat, b),
    B = [[0, gamma k], [-(gamma + kappa' k^2) k, -(mu' + nu') k^2]]

Both pieces respect the Hermitian pairing ``xi -> -xi`` because ``b(-xi)`` is
the conjugate of ``b(xi)`` and ``B`` only depends on ``k``.  The zero mode
has a zero symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ReformParams, State
from .spectral import TorusGrid

__all__ = [
    "FloorTimeError",
    "spectral_gap",
    "ModeSymbol",
    "ModePropagator",
    "symbol",
    "mode_propagator",
    "block_matrix",
    "block_eigenvalues",
    "block_exp",
    "sinhc",
    "split_velocity",
    "merge_velocity",
    "PropagatorTable",
    "ETDTable",
    "apply_semigroup",
    "slowest_rate",
    "floor_time",
    "gaussian_bump",
    "DecayResult",
    "decay_experiment",
]

# relative discriminant below which the series branch is used
DEGENERACY_TOL = 1e-12
SERIES_TOL = 1e-4


class FloorTimeError(ValueError):
    def __init__(self, t_star: float, t_max: float):
        super().__init__(f"requested time {t_max:g} is beyond the floor time t* = {t_star:g}")
        self.t_star = t_star
        self.t_max = t_max


def block_matrix(k, rp: ReformParams) -> np.ndarray:
    """The real block ``B`` for magnitudes ``k`` (any shape); returns ``k.shape + (2, 2)``."""
    k = np.asarray(k, float)
    out = np.zeros(k.shape + (2, 2))
    out[..., 0, 1] = rp.gamma * k
    out[..., 1, 0] = -(rp.gamma + rp.kappa_p * k**2) * k
    out[..., 1, 1] = -(rp.mu_p + rp.nu_p) * k**2
    return out


def block_eigenvalues(k, rp: ReformParams) -> np.ndarray:
    """Closed-form eigenvalues ``(tr +- sqrt(D)) / 2`` of ``B``; shape ``k.shape + (2,)``."""
    k = np.asarray(k, float)
    tr = -(rp.mu_p + rp.nu_p) * k**2
    det = rp.gamma * (rp.gamma + rp.kappa_p * k**2) * k**2
    root = np.sqrt((tr**2 - 4 * det).astype(complex))
    return np.stack([(tr + root) / 2, (tr - root) / 2], axis=-1)


def sinhc(z):
    """``sinh(z)/z`` for real or complex ``z``, Taylor series near zero."""
    z = np.asarray(z)
    small = np.abs(z) < SERIES_TOL
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1 + z2 / 6 + z2 * z2 / 120, np.sinh(zs) / zs)


def block_exp(k, t: float, rp: ReformParams):
    """Entries ``(e11, e12, e21, e22)`` of ``exp(t B)``.

    Uses ``exp(tB) = exp(tau t) [C I + S (B - tau I)]`` with ``tau = tr/2``,
    ``C = cosh(s t)``, ``S = sinh(s t)/s`` and ``s^2 = D/4``.  The overdamped
    branch is written with ``expm1`` so no factor overflows; near ``D = 0`` a
    Taylor series in ``s^2 t^2`` replaces both functions.
    """
    k = np.asarray(k, float)
    t = float(t)
    b12 = rp.gamma * k
    b21 = -(rp.gamma + rp.kappa_p * k**2) * k
    b22 = -(rp.mu_p + rp.nu_p) * k**2
    tau = b22 / 2
    det = -b12 * b21
    d4 = tau**2 - det  # D / 4
    scale = ((rp.mu_p + rp.nu_p) * k**2 + rp.gamma * k) ** 2
    z2 = d4 * t * t

    series = (np.abs(4 * d4) < DEGENERACY_TOL * np.where(scale > 0, scale, 1.0)) | (np.abs(z2) < SERIES_TOL**2)
    over = (~series) & (d4 > 0)
    under = (~series) & (d4 < 0)

    c_full = np.empty_like(k)
    s_full = np.empty_like(k)

    ets = np.exp(tau * t)
    # near-degenerate: cosh and sinh(z)/z as series in z^2
    c_full = np.where(series, ets * (1 + z2 / 2 + z2 * z2 / 24), c_full)
    s_full = np.where(series, ets * t * (1 + z2 / 6 + z2 * z2 / 120), s_full)

    s = np.sqrt(np.where(over, d4, 1.0))
    # masked-out entries get a zero exponent so nothing overflows there
    lp = np.where(over, tau + s, 0.0)
    lm = np.where(over, tau - s, 0.0)
    if t >= 0:
        ep = np.exp(lp * t)
        c_o = 0.5 * ep * (1 + np.exp(-2 * s * t))
        s_o = ep * (-np.expm1(-2 * s * t)) / (2 * s)
    else:
        em = np.exp(lm * t)
        c_o = 0.5 * em * (1 + np.exp(2 * s * t))
        s_o = em * np.expm1(2 * s * t) / (2 * s)
    c_full = np.where(over, c_o, c_full)
    s_full = np.where(over, s_o, s_full)

    q = np.sqrt(np.where(under, -d4, 1.0))
    c_u = ets * np.cos(q * t)
    s_u = ets * t * np.sinc(q * t / np.pi)
    c_full = np.where(under, c_u, c_full)
    s_full = np.where(under, s_u, s_full)

    e11 = c_full - tau * s_full
    e12 = s_full * b12
    e21 = s_full * b21
    e22 = c_full + s_full * (b22 - tau)
    return e11, e12, e21, e22


@dataclass(frozen=True)
class ModeSymbol:
    xi: np.ndarray
    solenoidal_rate: float
    acoustic_block: np.ndarray
    rp: ReformParams

    @property
    def k(self) -> float:
        return float(np.linalg.norm(self.xi))

    @property
    def full_matrix(self) -> np.ndarray:
        """Complex ``(n+1)x(n+1)`` matrix ``M`` with ``d/dt (sigma_hat, v_hat) = M (sigma_hat, v_hat)``."""
        xi = np.asarray(self.xi, float)
        n = xi.size
        rp = self.rp
        k2 = float(xi @ xi)
        m = np.zeros((n + 1, n + 1), complex)
        m[0, 1:] = -1j * rp.gamma * xi
        m[1:, 0] = -1j * (rp.gamma + rp.kappa_p * k2) * xi
        m[1:, 1:] = -rp.mu_p * k2 * np.eye(n) - rp.nu_p * np.outer(xi, xi)
        return m


@dataclass(frozen=True)
class ModePropagator:
    xi: np.ndarray
    t: float
    solenoidal_factor: float
    acoustic_exp: np.ndarray


def symbol(xi, rp: ReformParams) -> ModeSymbol:
    xi = np.atleast_1d(np.asarray(xi, float))
    k = float(np.linalg.norm(xi))
    return ModeSymbol(xi, rp.mu_p * k**2, block_matrix(k, rp), rp)


def mode_propagator(sym: ModeSymbol, t: float) -> ModePropagator:
    e11, e12, e21, e22 = block_exp(sym.k, t, sym.rp)
    mat = np.array([[e11, e12], [e21, e22]], float)
    return ModePropagator(sym.xi, float(t), float(np.exp(-sym.solenoidal_rate * t)), mat)


# -- modal coordinates on a grid -------------------------------------------


def split_velocity(grid: TorusGrid, v_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(b, w)`` with ``b = -i xi_hat . v_hat`` and ``w`` the transverse part.

    At the zero mode ``b = 0`` and ``w = v_hat``.
    """
    e = grid.xi_unit
    ax = -grid.n - 1
    ell = np.sum(e * v_hat, axis=ax)
    w = v_hat - e * np.expand_dims(ell, ax)
    return -1j * ell, w


def merge_velocity(grid: TorusGrid, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    return w + grid.xi_unit * np.expand_dims(1j * b, -grid.n - 1)


def _shells(grid: TorusGrid):
    m2 = np.sum(grid.mode_index.astype(np.int64) ** 2, axis=0)
    uniq, inv = np.unique(m2, return_inverse=True)
    k = (2 * np.pi / grid.length) * np.sqrt(uniq.astype(float))
    return k, inv.reshape(grid.shape)


class PropagatorTable:
    """``exp(t A)`` tabulated on every mode of a grid."""

    def __init__(self, grid: TorusGrid, rp: ReformParams, t: float):
        self.grid, self.rp, self.t = grid, rp, float(t)
        k, inv = _shells(grid)
        entries = block_exp(k, t, rp)
        self.e11, self.e12, self.e21, self.e22 = (e[inv] for e in entries)
        self.sol = np.exp(-rp.mu_p * k**2 * t)[inv]

    def apply(self, sigma: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        b, w = split_velocity(self.grid, v)
        s_new = self.e11 * sigma + self.e12 * b
        b_new = self.e21 * sigma + self.e22 * b
        return s_new, merge_velocity(self.grid, b_new, self.sol * w)


def _phi_blocks(k: np.ndarray, h: float, rp: ReformParams):
    """``phi1(hB)``, ``phi2(hB)`` per shell from the exponential of an augmented 6x6 matrix."""
    z = h * block_matrix(k, rp)
    aug = np.zeros(k.shape + (6, 6))
    aug[..., 0:2, 0:2] = z
    aug[..., 0:2, 2:4] = np.eye(2)
    aug[..., 2:4, 4:6] = np.eye(2)
    ex = scipy.linalg.expm(aug)
    return ex[..., 0:2, 2:4], ex[..., 0:2, 4:6]


def _phi_scalar(z: np.ndarray):
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24, np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z**2 / 24 + z**3 / 120, (np.expm1(zs) - zs) / zs**2)
    return phi1, phi2


class ETDTable(PropagatorTable):
    """Propagator plus ``phi1``/``phi2`` tables for a fixed step ``h``."""

    def __init__(self, grid: TorusGrid, rp: ReformParams, h: float):
        super().__init__(grid, rp, h)
        k, inv = _shells(grid)
        p1, p2 = _phi_blocks(k, h, rp)
        self.p1 = tuple(p1[:, i, j][inv] for i in range(2) for j in range(2))
        self.p2 = tuple(p2[:, i, j][inv] for i in range(2) for j in range(2))
        s1, s2 = _phi_scalar(-rp.mu_p * k**2 * h)
        self.s1, self.s2 = s1[inv], s2[inv]

    def apply_phi(self, which: int, sigma: np.ndarray, v: np.ndarray):
        m11, m12, m21, m22 = self.p1 if which == 1 else self.p2
        sc = self.s1 if which == 1 else self.s2
        b, w = split_velocity(self.grid, v)
        s_new = m11 * sigma + m12 * b
        b_new = m21 * sigma + m22 * b
        return s_new, merge_velocity(self.grid, b_new, sc * w)


def apply_semigroup(state: State, t: float, rp: ReformParams) -> State:
    """``S(t) U`` for ``t >= 0``."""
    if t < 0:
        raise ValueError("apply_semigroup only supports forward time t >= 0")
    s, v = PropagatorTable(state.grid, rp, t).apply(state.sigma, state.v)
    return State(state.grid, s, v)


# -- decay harness ------------------------------------------------------------


def slowest_rate(grid: TorusGrid, rp: ReformParams) -> float:
    """Smallest decay rate over all nonzero modes (block and, for n >= 2, transverse)."""
    k, _ = _shells(grid)
    k = k[k > 0]
    rates = -np.max(block_eigenvalues(k, rp).real, axis=-1)
    if grid.n >= 2:
        rates = np.minimum(rates, rp.mu_p * k**2)
    return float(np.min(rates))


def spectral_gap(grid: TorusGrid, rp: ReformParams) -> float:
    """Largest ``theta`` with ``Re lambda <= -theta min(1, |xi|^2)`` on every nonzero grid mode."""
    k, _ = _shells(grid)
    k = k[k > 0]
    rates = -np.max(block_eigenvalues(k, rp).real, axis=-1)
    if grid.n >= 2:
        rates = np.minimum(rates, rp.mu_p * k**2)
    return float(np.min(rates / np.minimum(1.0, k**2)))


def floor_time(grid: TorusGrid, rp: ReformParams) -> float:
    """``t* = 1 / slowest rate``: past it the lowest torus mode dominates."""
    return 1.0 / slowest_rate(grid, rp)


def gaussian_bump(grid: TorusGrid, width: float, amplitude: float = 1.0) -> State:
    """Centred Gaussian density bump with zero velocity and the mean removed."""
    x = grid.coordinates - grid.length / 2
    r2 = np.sum(x**2, axis=0)
    sig = amplitude * np.exp(-r2 / (2 * width**2))
    s_hat = grid.strip_nyquist(grid.forward(sig))
    s_hat.flat[0] = 0.0
    return State(grid, s_hat, np.zeros((grid.n,) + grid.shape, complex))


@dataclass
class DecayResult:
    times: np.ndarray
    norms: dict  # column name -> array
    t_star: float
    theory: dict  # column name -> theoretical algebraic exponent


DECAY_COLUMNS = ("sigma", "grad_sigma", "grad2_sigma", "v", "grad_v")


def decay_experiment(init: State, times, rp: ReformParams) -> DecayResult:
    """Homogeneous norms of ``S(t) init`` along ``times`` (all below ``t*``)."""
    grid = init.grid
    times = np.asarray(times, float)
    t_star = floor_time(grid, rp)
    if times.size and times.max() > t_star:
        raise FloorTimeError(t_star, float(times.max()))
    if abs(init.sigma.flat[0]) > 1e-14 * max(1.0, float(np.max(np.abs(init.sigma)))):
        raise ValueError("decay experiment needs zero-mean initial density")
    cols = {c: np.empty(times.size) for c in DECAY_COLUMNS}
    for i, t in enumerate(times):
        s, v = PropagatorTable(grid, rp, t).apply(init.sigma, init.v)
        cols["sigma"][i] = np.sqrt(grid.grad_norm_sq(s, 0))
        cols["grad_sigma"][i] = np.sqrt(grid.grad_norm_sq(s, 1))
        cols["grad2_sigma"][i] = np.sqrt(grid.grad_norm_sq(s, 2))
        cols["v"][i] = np.sqrt(grid.grad_norm_sq(v, 0, vector=True))
        cols["grad_v"][i] = np.sqrt(grid.grad_norm_sq(v, 1, vector=True))
    q = grid.n / 4
    theory = {"sigma": q, "grad_sigma": q + 0.5, "grad2_sigma": q + 1.0, "v": q, "grad_v": q + 0.5}
    return DecayResult(times, cols, t_star, theory)
