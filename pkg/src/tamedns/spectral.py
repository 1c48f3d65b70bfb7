"""Spectral representation of periodic divergence-free fields on the unit torus.

Coefficients are stored in the real-FFT half-spectrum layout, shape
``(3, n, n, n // 2 + 1)``, normalised so that

    u(x) = sum_k coeff(k) exp(2 pi i k . x),

which makes Parseval read ``int |u|^2 dx = sum_k |coeff(k)|^2`` over the full
spectrum. Nyquist planes are never populated: their wavevector sign is
ambiguous, so projection zeroes them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

from . import kernels

TWO_PI = 2.0 * np.pi
FOUR_PI_SQ = 4.0 * np.pi**2
FFT_AXES = (1, 2, 3)


class GridMismatchError(ValueError):
    """Operands live on different grids."""


class UnsupportedOrderError(ValueError):
    """Sobolev order outside the supported set."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``n^3`` grid on the torus of period 1."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n <= 0 or self.n % 2:
            raise ValueError(f"resolution must be a positive even integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @property
    def spectral_shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    @cached_property
    def axes(self):
        """Integer wavenumber axes (k1, k2, k3) of the half-spectrum layout, as floats.

        Components lie in (-n/2, n/2]; the Nyquist index carries +n/2.
        """
        n = self.n
        full = np.fft.fftfreq(n, d=1.0 / n)
        full[n // 2] = n // 2
        half = np.arange(n // 2 + 1, dtype=float)
        return (np.ascontiguousarray(full), full.copy(), half)

    @cached_property
    def ksq(self):
        k1, k2, k3 = self.axes
        return k1[:, None, None] ** 2 + k2[None, :, None] ** 2 + k3[None, None, :] ** 2

    @cached_property
    def eigenvalues(self):
        """Stokes eigenvalue |2 pi k|^2 per half-spectrum slot."""
        return FOUR_PI_SQ * self.ksq

    @cached_property
    def nyquist_free(self):
        k1, k2, k3 = self.axes
        h = self.n // 2
        return (np.abs(k1)[:, None, None] < h) & (np.abs(k2)[None, :, None] < h) & (k3[None, None, :] < h)

    @cached_property
    def dealias_mask(self):
        """Two-thirds rule: keep k with every |k_j| <= n/3."""
        k1, k2, k3 = self.axes
        cut = self.n / 3.0
        return (np.abs(k1)[:, None, None] <= cut) & (np.abs(k2)[None, :, None] <= cut) & (k3[None, None, :] <= cut)

    @cached_property
    def state_mask(self):
        """Dealiased, nonzero wavevectors: the solver's spectral state space."""
        m = self.dealias_mask.copy()
        m[0, 0, 0] = False
        return m

    @cached_property
    def multiplicity(self):
        """How many full-spectrum modes each half-spectrum slot stands for."""
        w = np.full(self.spectral_shape, 2.0)
        w[:, :, 0] = 1.0
        w[:, :, self.n // 2] = 1.0
        return w

    @cached_property
    def wavevectors(self):
        """All integer wavevectors of the full spectrum, shape (n, n, n, 3)."""
        k = self.axes[0]
        return np.stack(np.meshgrid(k, k, k, indexing="ij"), axis=-1).astype(int)

    def physical_coords(self):
        x = np.arange(self.n) / self.n
        return np.meshgrid(x, x, x, indexing="ij")


def _check_same(a: TorusGrid, b: TorusGrid):
    if a != b:
        raise GridMismatchError(f"grid mismatch: n={a.n} vs n={b.n}")


def to_physical(coeffs: np.ndarray, grid: TorusGrid) -> np.ndarray:
    return sfft.irfftn(coeffs, s=grid.shape, axes=FFT_AXES, norm="forward")


def from_physical(values: np.ndarray) -> np.ndarray:
    return sfft.rfftn(values, axes=FFT_AXES, norm="forward")


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Truncated Fourier coefficients of a real 3-component field."""

    coeffs: np.ndarray
    grid: TorusGrid

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.shape != (3,) + self.grid.spectral_shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid n={self.grid.n}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "SpectralField":
        return cls(np.zeros((3,) + grid.spectral_shape, dtype=np.complex128), grid)

    @classmethod
    def from_physical(cls, grid: TorusGrid, values) -> "SpectralField":
        """Raw (unprojected) field from real samples of shape (3, n, n, n)."""
        values = np.asarray(values, dtype=float)
        if values.shape != (3,) + grid.shape:
            raise ValueError(f"expected physical shape {(3,) + grid.shape}, got {values.shape}")
        return cls(from_physical(values), grid)

    def to_physical(self) -> np.ndarray:
        return to_physical(self.coeffs, self.grid)

    def full_coeffs(self) -> np.ndarray:
        """Expand to the full spectrum, shape (3, n, n, n), in FFT index order."""
        n = self.grid.n
        h = n // 2
        full = np.zeros((3, n, n, n), dtype=np.complex128)
        full[..., : h + 1] = self.coeffs
        # k3 < 0 slots are conjugates of the stored -k
        neg = (-np.arange(n)) % n
        mirror = np.conj(self.coeffs[:, neg][:, :, neg])
        full[..., h + 1:] = mirror[..., 1:h][..., ::-1]
        return full

    @classmethod
    def from_full_coeffs(cls, grid: TorusGrid, full: np.ndarray) -> "SpectralField":
        return cls(np.ascontiguousarray(full[..., : grid.n // 2 + 1]), grid)

    def hermitian_defect(self) -> float:
        """Max |coeff(-k) - conj coeff(k)| over the self-paired planes k3 in {0, n/2}."""
        n = self.grid.n
        neg = (-np.arange(n)) % n
        worst = 0.0
        for p in (0, n // 2):
            plane = self.coeffs[..., p]
            worst = max(worst, float(np.max(np.abs(plane[:, neg][:, :, neg] - np.conj(plane)), initial=0.0)))
        return worst

    def divergence_defect(self) -> float:
        """max_k |sum_j k_j coeff_j(k)| relative to max |k||coeff(k)|."""
        k1, k2, k3 = self.grid.axes
        div = k1[:, None, None] * self.coeffs[0] + k2[None, :, None] * self.coeffs[1] + k3[None, None, :] * self.coeffs[2]
        scale = np.max(np.sqrt(self.grid.ksq) * np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0)), initial=0.0)
        top = float(np.max(np.abs(div), initial=0.0))
        return top / scale if scale > 0 else top

    def is_valid(self, tol: float = 1e-12) -> bool:
        mean = float(np.max(np.abs(self.coeffs[:, 0, 0, 0])))
        scale = float(np.max(np.abs(self.coeffs), initial=0.0))
        return (
            mean <= tol * max(scale, 1.0)
            and self.divergence_defect() <= tol
            and self.hermitian_defect() <= tol * max(scale, 1.0)
        )

    def copy(self) -> "SpectralField":
        return SpectralField(self.coeffs.copy(), self.grid)

    def _other(self, other) -> np.ndarray:
        if isinstance(other, SpectralField):
            _check_same(self.grid, other.grid)
            return other.coeffs
        return NotImplemented

    def __add__(self, other):
        c = self._other(other)
        if c is NotImplemented:
            return c
        return SpectralField(self.coeffs + c, self.grid)

    def __sub__(self, other):
        c = self._other(other)
        if c is NotImplemented:
            return c
        return SpectralField(self.coeffs - c, self.grid)

    def __neg__(self):
        return SpectralField(-self.coeffs, self.grid)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        return SpectralField(self.coeffs * scalar, self.grid)

    __rmul__ = __mul__


def _coeffs_of(f, grid: TorusGrid | None = None):
    if isinstance(f, SpectralField):
        if grid is not None:
            _check_same(grid, f.grid)
        return f.coeffs, f.grid
    if grid is None:
        raise TypeError("raw coefficient arrays need an explicit grid")
    arr = np.asarray(f, dtype=np.complex128)
    if arr.shape != (3,) + grid.spectral_shape:
        raise GridMismatchError(f"coefficient shape {arr.shape} does not fit grid n={grid.n}")
    return arr, grid


# ---------------------------------------------------------------- array kernels

def project_coeffs(c: np.ndarray, grid: TorusGrid, out: np.ndarray | None = None) -> np.ndarray:
    masked = np.ascontiguousarray(c * grid.nyquist_free)
    if out is None:
        out = np.empty_like(masked)
    k1, k2, k3 = grid.axes
    return kernels.leray(masked, k1, k2, k3, out)


def weighted_dot(a: np.ndarray, b: np.ndarray, grid: TorusGrid, m: int) -> float:
    w = grid.multiplicity
    if m:
        w = w * (1.0 + grid.eigenvalues) ** m
    return float(np.sum(w * np.real(np.sum(a * np.conj(b), axis=0))))


def norm_sq_coeffs(c: np.ndarray, grid: TorusGrid, m: int) -> float:
    w = grid.multiplicity
    if m:
        w = w * (1.0 + grid.eigenvalues) ** m
    return float(np.sum(w * (c.real**2 + c.imag**2).sum(axis=0)))


def gradient_norm_sq_coeffs(c: np.ndarray, grid: TorusGrid) -> float:
    return float(np.sum(grid.multiplicity * grid.eigenvalues * (c.real**2 + c.imag**2).sum(axis=0)))


class DriftWorkspace:
    """Preallocated buffers for repeated evaluation of the nonlinear drift.

    ``mask`` selects which modes survive (dealias set, optionally intersected
    with a Galerkin truncation).
    """

    def __init__(self, grid: TorusGrid, N: float, mask: np.ndarray | None = None):
        self.grid = grid
        self.N = float(N)
        m = grid.state_mask if mask is None else (mask & grid.state_mask)
        self.mask = np.ascontiguousarray(m, dtype=float)
        self.flux = np.empty((9,) + grid.shape)
        self.out = np.empty((3,) + grid.spectral_shape, dtype=np.complex128)

    def nonlinear(self, c: np.ndarray) -> np.ndarray:
        """-B(u,u) - P(g_N(|u|^2) u), masked; returns a fresh array."""
        u = np.ascontiguousarray(to_physical(c, self.grid))
        kernels.tamed_flux(u, self.N, self.flux)
        fh = np.ascontiguousarray(from_physical(self.flux))
        k1, k2, k3 = self.grid.axes
        kernels.assemble_drift(fh, k1, k2, k3, self.mask, self.out)
        return self.out.copy()


# ------------------------------------------------------------------- operators

def leray_project(f, grid: TorusGrid | None = None) -> SpectralField:
    """Orthogonal projection onto divergence-free, mean-zero fields.

    Per mode k != 0: coeff <- coeff - k (k . coeff) / |k|^2; mode 0 and
    Nyquist planes are zeroed.
    """
    c, g = _coeffs_of(f, grid)
    return SpectralField(project_coeffs(c, g), g)


def apply_stokes(u: SpectralField) -> SpectralField:
    """A u = -P Delta u, i.e. multiplication by |2 pi k|^2 per mode."""
    return SpectralField(u.coeffs * u.grid.eigenvalues, u.grid)


def sobolev_norm_sq(u: SpectralField, m: int) -> float:
    """sum_k (1 + |2 pi k|^2)^m |coeff(k)|^2 over the full spectrum."""
    if m not in (0, 1, 2):
        raise UnsupportedOrderError(f"Sobolev order must be 0, 1 or 2, got {m!r}")
    return norm_sq_coeffs(u.coeffs, u.grid, m)


def inner_product(u: SpectralField, v: SpectralField, m: int) -> float:
    """Generalised pairing <u, (I - Delta)^m v>_{L^2}."""
    if m not in (0, 1, 2):
        raise UnsupportedOrderError(f"Sobolev order must be 0, 1 or 2, got {m!r}")
    _check_same(u.grid, v.grid)
    return weighted_dot(u.coeffs, v.coeffs, u.grid, m)


def gradient(c: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Physical-space Jacobian, grad[3*i + j] = d_j u_i, shape (9, n, n, n)."""
    k1, k2, k3 = grid.axes
    ks = (k1[:, None, None], k2[None, :, None], k3[None, None, :])
    spec = np.empty((9,) + grid.spectral_shape, dtype=np.complex128)
    for i in range(3):
        for j in range(3):
            spec[3 * i + j] = (1j * TWO_PI) * ks[j] * c[i]
    return np.ascontiguousarray(to_physical(spec, grid))


def nonlinear_term(u: SpectralField, v: SpectralField) -> SpectralField:
    """B(u, v) = P((u . grad) v), pseudospectral with two-thirds dealiasing."""
    _check_same(u.grid, v.grid)
    grid = u.grid
    mask = grid.dealias_mask
    up = np.ascontiguousarray(to_physical(u.coeffs * mask, grid))
    grad = gradient(v.coeffs * mask, grid)
    prod = np.empty((3,) + grid.shape)
    kernels.advect(up, grad, prod)
    return SpectralField(project_coeffs(from_physical(prod) * mask, grid), grid)


def pointwise_sq_grad_norm(u: SpectralField) -> float:
    """|| |u| |grad u| ||_{L^2}^2 evaluated on the physical grid."""
    up = u.to_physical()
    grad = gradient(u.coeffs, u.grid)
    return float(np.mean(np.sum(up**2, axis=0) * np.sum(grad**2, axis=0)))


@dataclass(frozen=True)
class TamingSpec:
    """Taming function g_N with viscosity fixed to 1.

    On (N, N + 1) the function is the quintic 6s^3 - 8s^4 + 3s^5 in
    s = r - N: the unique polynomial matching value, slope and curvature of 0
    at s = 0 and of s at s = 1. Its slope peaks at s = 3/5.
    """

    N: float = 1.0
    # max_s (18 s^2 - 32 s^3 + 15 s^4) on [0, 1], attained at s = 3/5
    derivative_cap: float = field(default=189.0 / 125.0, init=False)
    blend: tuple = field(default=(0.0, 0.0, 0.0, 6.0, -8.0, 3.0), init=False)

    def __post_init__(self):
        if not np.isfinite(self.N) or self.N < 0:
            raise ValueError(f"taming threshold must be a finite nonnegative real, got {self.N!r}")

    def value(self, r):
        return taming_value(r, self)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        s = np.clip(r - self.N, 0.0, 1.0)
        inner = s * s * (18.0 + s * (-32.0 + 15.0 * s))
        return np.where(r >= self.N + 1.0, 1.0, np.where(r <= self.N, 0.0, inner))

    def second_derivative(self, r):
        r = np.asarray(r, dtype=float)
        s = np.clip(r - self.N, 0.0, 1.0)
        inner = 12.0 * s * (3.0 + s * (-8.0 + 5.0 * s))
        return np.where((r > self.N) & (r < self.N + 1.0), inner, 0.0)


def taming_value(r, spec: TamingSpec):
    """g_N(r); scalar in, float out; arrays evaluated elementwise."""
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("taming function is defined for r >= 0 only")
    out = kernels.taming(arr, spec.N)
    return float(out) if np.ndim(r) == 0 else out


def tamed_drift(u: SpectralField, spec: TamingSpec) -> SpectralField:
    """F(u) = -A u - B(u, u) - P(g_N(|u|^2) u), restricted to dealiased modes."""
    ws = _workspace(u.grid, spec.N)
    c = u.coeffs * u.grid.dealias_mask
    return SpectralField(ws.nonlinear(c) - u.grid.eigenvalues * c * u.grid.state_mask, u.grid)


@lru_cache(maxsize=16)
def _workspace(grid: TorusGrid, N: float) -> DriftWorkspace:
    return DriftWorkspace(grid, N)
