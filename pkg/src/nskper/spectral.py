"""Periodic n-torus grid, Fourier transforms, spectral derivatives and norms.

Conventions
-----------
Grid points are ``x_j = j * L / P`` for ``j = 0..P-1`` in every direction.
Spectral arrays use the standard FFT ordering along each axis, i.e. integer
frequencies ``0, 1, ..., P/2, -P/2+1, ..., -1``.  The index ``P/2`` is read as
the frequency ``+P/2`` so the retained set is ``{-P/2+1, ..., P/2}``.

The transform pair is normalised so that a constant field ``c`` has zero-mode
coefficient ``c``::

    u_hat[m] = P**-n * sum_x u(x) exp(-i xi_m . x),    xi_m = 2*pi*m / L

With this choice Parseval reads
``sum_x |u|^2 (L/P)^n == L^n * sum_m |u_hat|^2`` and every norm below carries
the volume factor ``L^n``.

Scalar fields have shape ``(P,)*n``; vector fields carry the component axis
immediately before the ``n`` spatial axes.  Any number of leading batch axes
is allowed, so stacks of time samples go through the same functions.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

__all__ = ["TorusGrid", "make_grid", "fft_workers"]


def fft_workers() -> int:
    """Worker count for scipy.fft, read from ``NSK_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("NSK_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the torus ``[0, L]^n`` with ``P`` points per direction."""

    n: int
    points_per_dim: int
    length: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or not 1 <= self.n <= 5:
            raise ValueError(f"dimension n must be an integer in 1..5, got {self.n!r}")
        p = self.points_per_dim
        if not isinstance(p, (int, np.integer)) or p < 4 or p % 2:
            raise ValueError(f"points_per_dim must be an even integer >= 4, got {p!r}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValueError(f"length must be positive, got {self.length!r}")

    # -- geometry ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.n

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.n, 0))

    @property
    def size(self) -> int:
        return self.points_per_dim**self.n

    @property
    def dx(self) -> float:
        return self.length / self.points_per_dim

    @property
    def volume(self) -> float:
        return self.length**self.n

    @cached_property
    def frequencies(self) -> np.ndarray:
        """Integer frequencies along one axis, FFT order, Nyquist read as +P/2."""
        p = self.points_per_dim
        m = np.fft.fftfreq(p, d=1.0 / p)
        m[p // 2] = p // 2
        return m.astype(np.int64)

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer multi-indices ``m``, shape ``(n, P, ..., P)``."""
        return np.stack(np.meshgrid(*([self.frequencies] * self.n), indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Wavevectors ``2 pi m / L``, shape ``(n, P, ..., P)``."""
        return (2.0 * np.pi / self.length) * self.mode_index

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def xi_unit(self) -> np.ndarray:
        """``xi / |xi|`` with the zero mode mapped to the zero vector."""
        k = self.xi_abs
        safe = np.where(k > 0, k, 1.0)
        return np.where(k > 0, self.xi / safe, 0.0)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Physical grid coordinates, shape ``(n, P, ..., P)``."""
        x = np.arange(self.points_per_dim) * self.dx
        return np.stack(np.meshgrid(*([x] * self.n), indexing="ij"))

    @property
    def dealias_cutoff(self) -> int:
        return self.points_per_dim // 3

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True on modes kept by the 2/3 rule (every ``|m_j| <= floor(P/3)``)."""
        return np.all(np.abs(self.mode_index) <= self.dealias_cutoff, axis=0)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes with any component at the Nyquist frequency ``P/2``."""
        return np.any(self.mode_index == self.points_per_dim // 2, axis=0)

    @cached_property
    def odd_xi(self) -> np.ndarray:
        # Odd-order derivatives drop the Nyquist plane of their own direction so
        # the output stays Hermitian-symmetric.
        xi = self.xi.copy()
        for j in range(self.n):
            xi[j][self.mode_index[j] == self.points_per_dim // 2] = 0.0
        return xi

    # -- transforms -------------------------------------------------------

    def _check(self, a: np.ndarray, vector: bool = False) -> None:
        tail = ((self.n,) if vector else ()) + self.shape
        if a.shape[a.ndim - len(tail):] != tail:
            raise ValueError(f"array shape {a.shape} does not end with {tail}")

    def forward(self, u: np.ndarray) -> np.ndarray:
        """Physical values to Fourier coefficients over the trailing n axes."""
        self._check(u)
        return scipy.fft.fftn(u, axes=self.axes, norm="forward", workers=fft_workers())

    def inverse(self, u_hat: np.ndarray) -> np.ndarray:
        """Fourier coefficients to real physical values over the trailing n axes."""
        self._check(u_hat)
        out = scipy.fft.ifftn(u_hat, axes=self.axes, norm="forward", workers=fft_workers())
        return out.real

    # -- derivatives ------------------------------------------------------

    def gradient(self, s_hat: np.ndarray) -> np.ndarray:
        """``i xi_j s_hat`` stacked on a new component axis before the spatial axes."""
        self._check(s_hat)
        return 1j * self.odd_xi * np.expand_dims(s_hat, axis=-self.n - 1)

    def divergence(self, v_hat: np.ndarray) -> np.ndarray:
        self._check(v_hat, vector=True)
        return np.sum(1j * self.odd_xi * v_hat, axis=-self.n - 1)

    def laplacian(self, s_hat: np.ndarray) -> np.ndarray:
        self._check(s_hat)
        return -self.xi_sq * s_hat

    def dealias(self, s_hat: np.ndarray) -> np.ndarray:
        return np.where(self.dealias_mask, s_hat, 0.0)

    def strip_nyquist(self, s_hat: np.ndarray) -> np.ndarray:
        return np.where(self.nyquist_mask, 0.0, s_hat)

    def hermitian_defect(self, s_hat: np.ndarray) -> float:
        """Max of ``|c(-m) - conj(c(m))|`` over modes (0 for a real field)."""
        flipped = s_hat
        for ax in self.axes:
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        return float(np.max(np.abs(flipped - np.conj(s_hat)), initial=0.0))

    # -- norms ------------------------------------------------------------

    def sobolev_weight(self, s: int) -> np.ndarray:
        """``sum_{k=0}^{s} |xi|^{2k}`` per mode."""
        if s < 0:
            raise ValueError(f"Sobolev order must be >= 0, got {s}")
        w = np.ones(self.shape)
        term = np.ones(self.shape)
        for _ in range(s):
            term = term * self.xi_sq
            w = w + term
        return w

    def homogeneous_weight(self, k: int) -> np.ndarray:
        """``|xi|^{2k}``, the weight of ``||nabla^k u||^2`` summed over ordered derivatives."""
        return self.xi_sq**k

    def multiindex_weight(self, k: int) -> np.ndarray:
        """``sum_{|alpha|=k} xi^{2 alpha}`` (each multi-index counted once)."""
        # complete homogeneous symmetric polynomial h_k(xi_1^2, ..., xi_n^2)
        h = [np.ones(self.shape)] + [np.zeros(self.shape) for _ in range(k)]
        for j in range(self.n):
            x = self.xi[j] ** 2
            for deg in range(1, k + 1):
                h[deg] = h[deg] + x * h[deg - 1]
        return h[k]

    def weighted_sq(self, u_hat: np.ndarray, weight: np.ndarray) -> np.ndarray:
        """``L^n sum_m weight |u_hat|^2`` over spatial and component axes.

        Leading batch axes are kept.  A vector field must be passed with its
        component axis; use :meth:`weighted_sq_vector` for that case.
        """
        return self.volume * np.sum(weight * np.abs(u_hat) ** 2, axis=self.axes)

    def weighted_sq_vector(self, v_hat: np.ndarray, weight: np.ndarray) -> np.ndarray:
        return np.sum(self.weighted_sq(v_hat, weight), axis=-1)

    def sobolev_norm_sq(self, u_hat: np.ndarray, s: int, vector: bool = False):
        w = self.sobolev_weight(s)
        if vector:
            return self.weighted_sq_vector(u_hat, w)
        return self.weighted_sq(u_hat, w)

    def sobolev_norm(self, u_hat: np.ndarray, s: int, vector: bool = False):
        """``||u||_s`` with ``||u||_s^2 = sum_{k<=s} ||nabla^k u||^2`` (Parseval)."""
        return np.sqrt(self.sobolev_norm_sq(u_hat, s, vector=vector))

    def grad_norm_sq(self, u_hat: np.ndarray, k: int, vector: bool = False):
        """``||nabla^k u||^2``."""
        w = self.homogeneous_weight(k)
        if vector:
            return self.weighted_sq_vector(u_hat, w)
        return self.weighted_sq(u_hat, w)

    def inner(self, a_hat: np.ndarray, b_hat: np.ndarray, weight=None):
        """Real L2 inner product ``<a, b>`` over trailing spatial axes."""
        prod = (a_hat * np.conj(b_hat)).real
        if weight is not None:
            prod = weight * prod
        return self.volume * np.sum(prod, axis=self.axes)

    def l2_norm(self, u: np.ndarray) -> float:
        """L2 norm of physical values (no component axis)."""
        return float(np.sqrt(np.sum(u**2) * self.dx**self.n))

    def linf_norm(self, u: np.ndarray) -> float:
        """Grid maximum of ``|u|`` (collocation value, not the continuum sup)."""
        return float(np.max(np.abs(u)))

    def l1_norm(self, u: np.ndarray) -> float:
        """``sum |u| (L/P)^n`` over all entries (components summed)."""
        return float(np.sum(np.abs(u)) * self.dx**self.n)


def make_grid(n: int, points_per_dim: int, length: float) -> TorusGrid:
    return TorusGrid(int(n), int(points_per_dim), float(length))
