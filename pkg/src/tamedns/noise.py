"""Finite mark space, jump coefficient, Poisson sampling and the LDP cost."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .seeding import as_generator
from .spectral import (
    SpectralField,
    TorusGrid,
    _check_same,
    leray_project,
    norm_sq_coeffs,
)


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


@dataclass(frozen=True)
class MarkSpace:
    """Marks z_1..z_K carrying point masses w_k of the intensity measure."""

    weights: tuple
    marks: tuple = None

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if not w:
            raise ValueError("mark space needs at least one mark")
        if any(not np.isfinite(x) or x <= 0 for x in w):
            raise ValueError(f"mark weights must be positive and finite, got {w}")
        object.__setattr__(self, "weights", w)
        if self.marks is None:
            object.__setattr__(self, "marks", tuple(f"z{k + 1}" for k in range(len(w))))
        elif len(self.marks) != len(w):
            raise ValueError("marks and weights differ in length")

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(sum(self.weights))

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)


@dataclass(frozen=True, eq=False)
class NoiseCoefficient:
    """sigma(t, u, z_k) = c_k S_rho u + phi_k, time independent.

    ``S_rho`` zeroes every Fourier mode with |k| > rho. The additive fields
    ``phi_k`` are Leray-projected on construction; ``None`` means zero.
    """

    scales: tuple
    fields: tuple
    cutoff: int
    grid: TorusGrid

    def __post_init__(self):
        scales = tuple(float(c) for c in self.scales)
        fields = tuple(self.fields) if self.fields is not None else (None,) * len(scales)
        if len(fields) != len(scales):
            raise ValueError("one additive field per mark is required")
        for f in fields:
            if f is not None:
                _check_same(self.grid, f.grid)
        fields = tuple(None if f is None else leray_project(f) for f in fields)
        if int(self.cutoff) < 1:
            raise ValueError("smoothing cutoff must be a positive integer")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "cutoff", int(self.cutoff))
        object.__setattr__(self, "_smoother", self.grid.ksq <= self.cutoff**2)
        zero = np.zeros((3,) + self.grid.spectral_shape, dtype=np.complex128)
        object.__setattr__(self, "_phi", [zero if f is None else f.coeffs for f in fields])

    @classmethod
    def zero(cls, grid: TorusGrid, K: int = 1, cutoff: int = 1) -> "NoiseCoefficient":
        return cls((0.0,) * K, None, cutoff, grid)

    @property
    def K(self) -> int:
        return len(self.scales)

    @property
    def state_independent(self) -> bool:
        return all(c == 0.0 for c in self.scales)

    @property
    def is_zero(self) -> bool:
        return self.state_independent and all(not np.any(p) for p in self._phi)

    def apply_coeffs(self, c: np.ndarray, k: int) -> np.ndarray:
        """Coefficient array of sigma(u, z_k) for a state given as coefficients."""
        out = self._phi[k].copy()
        if self.scales[k] != 0.0:
            out += self.scales[k] * (c * self._smoother)
        return out

    def weighted_sum(self, c: np.ndarray, weights) -> np.ndarray:
        """sum_k weights[k] sigma(u, z_k); ``weights`` may contain zeros."""
        out = np.zeros_like(c)
        lin = 0.0
        for k, wk in enumerate(weights):
            if wk == 0.0:
                continue
            lin += wk * self.scales[k]
            if np.any(self._phi[k]):
                out += wk * self._phi[k]
        if lin != 0.0:
            out += lin * (c * self._smoother)
        return out

    def __call__(self, t: float, u: SpectralField, k: int) -> SpectralField:
        _check_same(self.grid, u.grid)
        return SpectralField(self.apply_coeffs(u.coeffs, k), self.grid)

    def phi_norm_sq(self, k: int, m: int) -> float:
        return norm_sq_coeffs(self._phi[k], self.grid, m)


@dataclass(frozen=True)
class H0Constants:
    K1: float
    K2: float
    L1: float
    L2: float
    L3: float

    def as_dict(self):
        return {"K1": self.K1, "K2": self.K2, "L1": self.L1, "L2": self.L2, "L3": self.L3}


def hypothesis_constants(sigma: NoiseCoefficient, marks: MarkSpace) -> H0Constants:
    """Closed-form linear-growth and Lipschitz constants of the jump coefficient.

    Uses ||S_rho|| <= 1 in H^0 and H^1, ||a + b||^2 <= 2(||a||^2 + ||b||^2) and
    ||a + b||^6 <= 32(||a||^6 + ||b||^6).
    """
    if sigma.K != marks.K:
        raise ValueError("coefficient and mark space disagree on K")
    w = marks.w
    c = np.asarray(sigma.scales)
    phi0 = np.array([sigma.phi_norm_sq(k, 0) for k in range(sigma.K)])
    phi1 = np.array([sigma.phi_norm_sq(k, 1) for k in range(sigma.K)])
    lip = float(np.sum(w * c**2))
    return H0Constants(
        K1=float(2.0 * np.sum(w * (c**2 + phi0))),
        K2=lip,
        L1=float(2.0 * np.sum(w * (c**2 + phi1))),
        L2=float(32.0 * np.sum(w * (np.abs(c) ** 6 + phi1**3))),
        L3=lip,
    )


def mark_bounds(sigma: NoiseCoefficient):
    """Mark-wise growth (i=0) and Lipschitz (i=1) suprema in H^0 (j=0) and H^1 (j=1).

    The growth bound max(|c_k|, ||phi_k||) is exact when phi_k lies in the range
    of the smoother and an upper bound otherwise.
    """
    out = {}
    c = np.abs(np.asarray(sigma.scales))
    for j in (0, 1):
        phi = np.sqrt([sigma.phi_norm_sq(k, j) for k in range(sigma.K)])
        out[(0, j)] = np.maximum(c, phi)
        out[(1, j)] = c.copy()
    return out


def check_H1(sigma: NoiseCoefficient, marks: MarkSpace, delta: float, T: float = 1.0) -> dict:
    """sum_k w_k T exp(delta * bound_k^2) for each (i, j) norm pair; always finite."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    w = marks.w
    return {
        f"{i},{j}": float(np.sum(w * T * np.exp(delta * b**2)))
        for (i, j), b in mark_bounds(sigma).items()
    }


@dataclass(frozen=True, eq=False)
class Control:
    """Piecewise-constant control g(t, z_k) = values[j, k] on [t_j, t_{j+1})."""

    time_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        tg = np.asarray(self.time_grid, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if tg.ndim != 1 or tg.size < 2 or tg[0] != 0.0 or np.any(np.diff(tg) <= 0):
            raise ValueError("time grid must start at 0 and increase strictly")
        if vals.ndim != 2 or vals.shape[0] != tg.size - 1:
            raise ValueError(f"values must be a {tg.size - 1} x K array, got shape {vals.shape}")
        bad = np.argwhere(~(vals >= 0) | ~np.isfinite(vals))
        if bad.size:
            j, k = (int(x) for x in bad[0])
            raise DomainError(f"control value at cell (interval {j}, mark {k}) is {vals[j, k]!r}; must be finite and >= 0")
        tg.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "time_grid", tg)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, T: float, K: int, value: float, intervals: int = 1) -> "Control":
        return cls(np.linspace(0.0, T, intervals + 1), np.full((intervals, K), float(value)))

    @property
    def T(self) -> float:
        return float(self.time_grid[-1])

    @property
    def K(self) -> int:
        return self.values.shape[1]

    def cell(self, t: float) -> int:
        j = int(np.searchsorted(self.time_grid, t, side="right")) - 1
        return min(max(j, 0), self.values.shape[0] - 1)

    def at(self, t: float) -> np.ndarray:
        return self.values[self.cell(t)]

    @property
    def max_value(self) -> float:
        return float(self.values.max())


def entropy_cost(r):
    """l(r) = r log r - r + 1 with l(0) = 1."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rlogr = np.where(r > 0, r * np.log(np.where(r > 0, r, 1.0)), 0.0)
    return rlogr - r + 1.0


def cost(g: Control, marks: MarkSpace, T: float | None = None) -> float:
    """L_T(g) = sum_j sum_k (t_{j+1} - t_j) w_k l(g(j, k))."""
    if g.K != marks.K:
        raise ValueError("control and mark space disagree on K")
    if T is not None and not np.isclose(T, g.T, rtol=0, atol=1e-12):
        raise ValueError(f"control horizon {g.T} differs from T={T}")
    dt = np.diff(g.time_grid)
    return float(np.sum(dt[:, None] * marks.w[None, :] * entropy_cost(g.values)))


@dataclass(frozen=True, eq=False)
class PoissonSample:
    times: np.ndarray
    marks: np.ndarray
    T: float
    seed: object = field(default=None, compare=False)

    def __len__(self):
        return int(self.times.size)

    def counts(self, time_grid, K: int) -> np.ndarray:
        """Event counts per (interval, mark) cell of ``time_grid``."""
        tg = np.asarray(time_grid, dtype=float)
        j = np.clip(np.searchsorted(tg, self.times, side="right") - 1, 0, tg.size - 2)
        out = np.zeros((tg.size - 1, K), dtype=np.int64)
        np.add.at(out, (j, self.marks), 1)
        return out


def _strictly_increasing_times(rng, count, T):
    while True:
        t = np.sort(rng.uniform(0.0, T, size=count))
        if count < 2 or np.all(np.diff(t) > 0):
            if count == 0 or t[0] > 0:
                return t


def sample_prm(theta: float, marks: MarkSpace, T: float, seed=None) -> PoissonSample:
    """Poisson random measure with intensity theta * Lebesgue x weights on [0, T] x Z."""
    if not theta > 0:
        raise ValueError("rate scale must be positive")
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    rng = as_generator(seed)
    count = int(rng.poisson(theta * marks.total_mass * T)) if T > 0 else 0
    times = _strictly_increasing_times(rng, count, T)
    p = marks.w / marks.total_mass
    labels = rng.choice(marks.K, size=count, p=p) if count else np.zeros(0, dtype=np.int64)
    return PoissonSample(times, np.asarray(labels, dtype=np.int64), float(T), seed)


def sample_controlled_prm(phi: Control, eps: float, marks: MarkSpace, seed=None) -> PoissonSample:
    """Controlled measure with rate eps^-1 phi(t, z_k) w_k, built by thinning.

    A dominating measure of rate eps^-1 * max(phi) * w_k is sampled, each point
    receives a level r ~ U[0, max(phi)], and it is kept when r <= phi at its cell.
    """
    if not eps > 0:
        raise ValueError("noise scale must be positive")
    if phi.K != marks.K:
        raise ValueError("control and mark space disagree on K")
    if np.any(phi.values < 0):
        raise DomainError("control must be nonnegative")
    top = phi.max_value
    rng = as_generator(seed)
    if top == 0.0:
        return PoissonSample(np.zeros(0), np.zeros(0, dtype=np.int64), phi.T, seed)
    base = sample_prm(top / eps, marks, phi.T, rng)
    levels = rng.uniform(0.0, top, size=len(base))
    j = np.clip(np.searchsorted(phi.time_grid, base.times, side="right") - 1, 0, phi.values.shape[0] - 1)
    keep = levels <= phi.values[j, base.marks]
    return PoissonSample(base.times[keep], base.marks[keep], phi.T, seed)


def control_drift(t: float, u: SpectralField, g: Control, sigma: NoiseCoefficient, marks: MarkSpace) -> SpectralField:
    """sum_k w_k (g(t, z_k) - 1) sigma(t, u, z_k)."""
    weights = marks.w * (g.at(t) - 1.0)
    return SpectralField(sigma.weighted_sum(u.coeffs, weights), u.grid)


def compensator_drift(t: float, u: SpectralField, sigma: NoiseCoefficient, marks: MarkSpace) -> SpectralField:
    """-sum_k w_k sigma(t, u, z_k)."""
    return SpectralField(sigma.weighted_sum(u.coeffs, -marks.w), u.grid)
