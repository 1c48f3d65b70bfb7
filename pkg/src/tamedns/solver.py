"""Galerkin time integration: skeleton, noisy and controlled equations.

All runs share one stepper: the Stokes part is integrated exactly mode by
mode (integrating factor exp(-|2 pi k|^2 h)), the remaining drift by the
explicit midpoint rule through the same factor. Jumps are applied exactly at
their event times by splitting the step; snapshots at a jump time hold the
post-jump state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .noise import (
    Control,
    MarkSpace,
    NoiseCoefficient,
    PoissonSample,
    sample_controlled_prm,
    sample_prm,
)
from .spectral import (
    DriftWorkspace,
    SpectralField,
    TamingSpec,
    TorusGrid,
    _check_same,
    norm_sq_coeffs,
    project_coeffs,
)

log = logging.getLogger(__name__)


class BlowupError(RuntimeError):
    """State became non-finite."""

    def __init__(self, message, last_good_time):
        super().__init__(message)
        self.last_good_time = last_good_time


class IterationError(RuntimeError):
    """Fixed-point iteration did not reach the tolerance."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = list(residuals)


@dataclass(frozen=True, eq=False)
class Truncation:
    """Span of the first ``n`` Stokes eigenmodes of the dealiased state space.

    Wavevectors are ordered by |2 pi k|^2, then by the pair {k, -k}; the retained
    set is then closed under k -> -k, so it may hold one more mode than ``n``.
    """

    grid: TorusGrid
    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("truncation needs at least one mode")
        object.__setattr__(self, "n", int(self.n))
        g = self.grid
        kv = g.wavevectors.reshape(-1, 3)
        cut = g.n / 3.0
        keep = np.all(np.abs(kv) <= cut, axis=1) & np.any(kv != 0, axis=1)
        kv = kv[keep]
        # keep +k and -k adjacent: sort on the lexicographically positive representative
        first = kv[np.arange(len(kv)), np.argmax(kv != 0, axis=1)]
        rep = np.where((first > 0)[:, None], kv, -kv)
        order = np.lexsort((first < 0, rep[:, 2], rep[:, 1], rep[:, 0], np.sum(kv**2, axis=1)))
        ordered = kv[order]
        chosen = ordered[: self.n]
        chosen = np.unique(np.concatenate([chosen, -chosen]), axis=0)
        mask = np.zeros(g.spectral_shape, dtype=bool)
        pos = chosen[chosen[:, 2] >= 0]
        mask[pos[:, 0] % g.n, pos[:, 1] % g.n, pos[:, 2]] = True
        object.__setattr__(self, "ordered_modes", ordered)
        object.__setattr__(self, "modes", chosen)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def full(cls, grid: TorusGrid) -> "Truncation":
        cut = grid.n // 3
        return cls(grid, (2 * cut + 1) ** 3 - 1)

    @property
    def size(self) -> int:
        return int(len(self.modes))


def project_truncation(u: SpectralField, trunc: Truncation) -> SpectralField:
    """Zero every coefficient outside the retained mode set."""
    _check_same(u.grid, trunc.grid)
    return SpectralField(u.coeffs * trunc.mask, u.grid)


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    truncation: Truncation | None = None
    taming: TamingSpec = field(default_factory=TamingSpec)
    eps: float = 0.0
    snapshot_stride: int = 1
    seed: object = 0

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0 and self.dt <= self.T * (1 + 1e-12)):
            raise ValueError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ValueError(f"T={self.T} is not a whole number of steps of dt={self.dt}")
        if int(self.snapshot_stride) < 1:
            raise ValueError("snapshot stride must be a positive integer")
        if self.eps < 0:
            raise ValueError("noise scale must be nonnegative")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def replace(self, **kw) -> "SolverConfig":
        vals = {f: getattr(self, f) for f in self.__dataclass_fields__}
        vals.update(kw)
        return SolverConfig(**vals)


@dataclass
class JumpEvent:
    time: float
    mark: int
    pre_h1: float
    post_h1: float
    pre: np.ndarray | None = None
    post: np.ndarray | None = None


@dataclass
class Trajectory:
    """Record of one solution path (càdlàg)."""

    grid: TorusGrid
    times: list
    fields: list
    events: list
    energy_t: np.ndarray
    h1_sq: np.ndarray
    h2_sq: np.ndarray
    cum_h2_sq: np.ndarray
    jump_flag: np.ndarray
    step_residuals: np.ndarray
    final: SpectralField
    sample: PoissonSample | None = None
    iterations: int | None = None
    residuals: list | None = None

    @property
    def sup_h1_sq(self) -> float:
        return float(np.max(self.h1_sq)) if self.h1_sq.size else 0.0

    @property
    def int_h2_sq(self) -> float:
        return float(self.cum_h2_sq[-1]) if self.cum_h2_sq.size else 0.0

    def energy_rows(self):
        return zip(self.energy_t, self.h1_sq, self.cum_h2_sq, self.jump_flag)


class _Stepper:
    def __init__(self, grid, mask, taming, extra):
        self.grid = grid
        self.ws = DriftWorkspace(grid, taming.N, mask)
        self.maskf = self.ws.mask
        self.lam = grid.eigenvalues * self.maskf
        self.extra = extra
        self._factors = {}

    def factors(self, h):
        f = self._factors.get(h)
        if f is None:
            f = (np.exp(-self.lam * h), np.exp(-self.lam * (0.5 * h)))
            if len(self._factors) < 4:
                self._factors[h] = f
        return f

    def drift(self, t, c, key):
        d = self.ws.nonlinear(c)
        if self.extra is not None:
            e = self.extra(t, c, key)
            if e is not None:
                d += e * self.maskf
        return d

    def step(self, t, c, h, key):
        full, half = self.factors(h)
        n0 = self.drift(t, c, (key, 0))
        mid = half * (c + (0.5 * h) * n0)
        n1 = self.drift(t + 0.5 * h, mid, (key, 1))
        new = full * c + (h * half) * n1
        # energy identity in the integrating-factor frame: dissipation exact,
        # nonlinear power by the midpoint rule
        g = self.grid
        w1 = g.multiplicity * (1.0 + g.eigenvalues)
        c2 = (c.real**2 + c.imag**2).sum(axis=0)
        cross = np.real(np.sum(np.conj(mid) * n1, axis=0))
        predicted = float(np.sum(w1 * (full**2 * c2 + (2.0 * h) * full * cross)))
        return new, mid, predicted


def _prepare_initial(u0: SpectralField, mask: np.ndarray) -> np.ndarray:
    c = project_coeffs(u0.coeffs, u0.grid) * mask
    defect = float(np.max(np.abs(c - u0.coeffs), initial=0.0))
    if defect > 1e-12 * max(1.0, float(np.max(np.abs(u0.coeffs), initial=0.0))):
        log.warning("initial field projected onto the retained divergence-free modes (max change %.3e)", defect)
    return c


def _integrate(u0, cfg, extra, *, sample=None, kick=None, observer=None, record=None,
               keep_jump_states=False):
    grid = u0.grid
    trunc = cfg.truncation
    if trunc is not None:
        _check_same(grid, trunc.grid)
    mask = grid.state_mask if trunc is None else (trunc.mask & grid.state_mask)
    stepper = _Stepper(grid, mask, cfg.taming, extra)
    c = _prepare_initial(u0, mask)

    dt, steps = cfg.dt, cfg.steps
    times = sample.times if (sample is not None and kick is not None) else np.zeros(0)
    marks = sample.marks if sample is not None else None
    n_ev = times.size
    ev = 0
    t = 0.0

    rows_t, rows_e, rows_h2, rows_flag = [], [], [], []
    residuals = []
    events = []
    snap_t, snap_f = [0.0], [SpectralField(c.copy(), grid)]

    def norms(x):
        return norm_sq_coeffs(x, grid, 1), norm_sq_coeffs(x, grid, 2)

    e1, e2 = norms(c)

    def push(tt, a, b, flag):
        rows_t.append(tt)
        rows_e.append(a)
        rows_h2.append(b)
        rows_flag.append(flag)

    push(0.0, e1, e2, 0)

    def advance(t, c, h, key, e1):
        new, mid, predicted = stepper.step(t, c, h, key)
        if record is not None:
            record.append((c, mid))
        a, b = norms(new)
        if not np.isfinite(a):
            raise BlowupError(f"non-finite state after step at t={t:.6g}", last_good_time=t)
        residuals.append(a - predicted)
        return new, a, b

    for i in range(steps):
        t_end = (i + 1) * dt
        while ev < n_ev and times[ev] <= t_end:
            te = float(times[ev])
            if te > t:
                c, e1, e2 = advance(t, c, te - t, (i, ev), e1)
                t = te
                push(t, e1, e2, 0)
            k = int(marks[ev])
            pre = c
            c = pre + kick(t, pre, k) * stepper.maskf
            post_e1, post_e2 = norms(c)
            events.append(JumpEvent(
                t, k, float(np.sqrt(e1)), float(np.sqrt(post_e1)),
                pre.copy() if keep_jump_states else None,
                c.copy() if keep_jump_states else None,
            ))
            e1, e2 = post_e1, post_e2
            push(t, e1, e2, 1)
            ev += 1
        if t_end > t:
            c, e1, e2 = advance(t, c, t_end - t, i, e1)
            t = t_end
            push(t, e1, e2, 0)
        if observer is not None:
            observer(t, c)
        if (i + 1) % cfg.snapshot_stride == 0 or i + 1 == steps:
            snap_t.append(t)
            snap_f.append(SpectralField(c.copy(), grid))

    if kick is None and sample is not None:
        # zero-size jumps: recorded, state untouched
        for te, k in zip(sample.times, sample.marks):
            events.append(JumpEvent(float(te), int(k), float("nan"), float("nan")))

    rows_t = np.asarray(rows_t)
    rows_h2 = np.asarray(rows_h2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(rows_t) * (rows_h2[1:] + rows_h2[:-1]))])
    return Trajectory(
        grid=grid,
        times=snap_t,
        fields=snap_f,
        events=events,
        energy_t=rows_t,
        h1_sq=np.asarray(rows_e),
        h2_sq=rows_h2,
        cum_h2_sq=cum,
        jump_flag=np.asarray(rows_flag, dtype=int),
        step_residuals=np.asarray(residuals),
        final=SpectralField(c, grid),
        sample=sample,
    )


def _check_noise(sigma, marks, grid):
    if sigma.K != marks.K:
        raise ValueError("coefficient and mark space disagree on K")
    _check_same(sigma.grid, grid)


def _control_extra(g: Control, sigma: NoiseCoefficient, marks: MarkSpace):
    if sigma.is_zero or np.all(g.values == 1.0):
        return None
    w = marks.w

    def extra(t, c, key):
        return sigma.weighted_sum(c, w * (g.at(t) - 1.0))

    return extra


def _compensator_extra(sigma: NoiseCoefficient, marks: MarkSpace):
    if sigma.is_zero:
        return None
    w = -marks.w

    def extra(t, c, key):
        return sigma.weighted_sum(c, w)

    return extra


def solve_skeleton(u0: SpectralField, g: Control, sigma: NoiseCoefficient, marks: MarkSpace,
                   cfg: SolverConfig, observer=None) -> Trajectory:
    """Deterministic controlled equation du/dt = F(u) + sum_k w_k (g - 1) sigma(u, z_k)."""
    _check_noise(sigma, marks, u0.grid)
    if g.K != marks.K:
        raise ValueError("control and mark space disagree on K")
    return _integrate(u0, cfg, _control_extra(g, sigma, marks), observer=observer)


def _kick(eps, sigma):
    def kick(t, c, k):
        return eps * sigma.apply_coeffs(c, k)

    return kick


def solve_sde(u0: SpectralField, eps: float, sigma: NoiseCoefficient, marks: MarkSpace,
              cfg: SolverConfig, seed=None, observer=None, keep_jump_states=False) -> Trajectory:
    """Small-noise equation driven by eps * compensated PRM of intensity eps^-1 w.

    Between events the drift is F(u) - sum_k w_k sigma(u, z_k); at an event
    (t, z_k) the state jumps by eps * sigma(u(t-), z_k).
    """
    if not eps > 0:
        raise ValueError("noise scale must be positive")
    _check_noise(sigma, marks, u0.grid)
    seed = cfg.seed if seed is None else seed
    sample = sample_prm(1.0 / eps, marks, cfg.T, seed)
    kick = None if sigma.is_zero else _kick(eps, sigma)
    return _integrate(u0, cfg, _compensator_extra(sigma, marks), sample=sample, kick=kick,
                      observer=observer, keep_jump_states=keep_jump_states)


def solve_controlled(u0: SpectralField, eps: float, phi: Control, sigma: NoiseCoefficient,
                     marks: MarkSpace, cfg: SolverConfig, seed=None, observer=None,
                     keep_jump_states=False) -> Trajectory:
    """Controlled small-noise equation with jumps from the thinned measure eps^-1 phi.

    The control drift sum w (phi - 1) sigma and the phi-compensator cancel in
    the phi terms, leaving F(u) - sum_k w_k sigma(u, z_k) between jumps.
    """
    if not eps > 0:
        raise ValueError("noise scale must be positive")
    _check_noise(sigma, marks, u0.grid)
    if not np.isclose(phi.T, cfg.T):
        raise ValueError(f"control horizon {phi.T} differs from solver horizon {cfg.T}")
    seed = cfg.seed if seed is None else seed
    sample = sample_controlled_prm(phi, eps, marks, seed)
    kick = None if sigma.is_zero else _kick(eps, sigma)
    return _integrate(u0, cfg, _compensator_extra(sigma, marks), sample=sample, kick=kick,
                      observer=observer, keep_jump_states=keep_jump_states)


def solve_skeleton_picard(u0: SpectralField, g: Control, sigma: NoiseCoefficient,
                          marks: MarkSpace, cfg: SolverConfig, max_iter: int = 50,
                          tol: float = 1e-8) -> Trajectory:
    """Skeleton solve by freezing the control coefficient at the previous iterate.

    Iterate m integrates the tamed drift plus sum_k w_k (g - 1) sigma(Y_{m-1}, z_k),
    with Y_{m-1} read at the same stage states the stepper visits, starting from
    the constant path Y_0 = u0. Stops once sup_t ||Y_m - Y_{m-1}||_{H^1} <= tol.
    """
    _check_noise(sigma, marks, u0.grid)
    w = marks.w
    grid = u0.grid

    if _control_extra(g, sigma, marks) is None:
        traj = _integrate(u0, cfg, None)
        traj.iterations, traj.residuals = 1, [0.0]
        return traj

    mask = grid.state_mask if cfg.truncation is None else (cfg.truncation.mask & grid.state_mask)
    c0 = _prepare_initial(u0, mask)
    prev = prev_final = None
    history = []
    for m in range(1, max_iter + 1):
        if prev is None:
            def frozen(t, c, key):
                return sigma.weighted_sum(c0, w * (g.at(t) - 1.0))
        else:
            states = prev

            def frozen(t, c, key, states=states):
                step, stage = key
                return sigma.weighted_sum(states[step][stage], w * (g.at(t) - 1.0))

        record = []
        traj = _integrate(u0, cfg, frozen, record=record)
        if prev is None:
            res = max(np.sqrt(norm_sq_coeffs(s[0] - c0, grid, 1)) for s in record)
            res = max(res, np.sqrt(norm_sq_coeffs(traj.final.coeffs - c0, grid, 1)))
        else:
            res = max(np.sqrt(norm_sq_coeffs(a[0] - b[0], grid, 1)) for a, b in zip(record, prev))
            res = max(res, np.sqrt(norm_sq_coeffs(traj.final.coeffs - prev_final, grid, 1)))
        history.append(float(res))
        if res <= tol:
            traj.iterations, traj.residuals = m, history
            return traj
        prev, prev_final = record, traj.final.coeffs
    raise IterationError(f"no convergence to tol={tol} in {max_iter} iterations", history)
