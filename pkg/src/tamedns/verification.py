"""Executable checks of the drift estimates, noise identities and convergence.

Estimate checks follow a fit-then-assert protocol: the constant is fitted on a
calibration batch (largest observed ratio times a safety factor), frozen, and
then asserted on a fresh batch drawn from an independent stream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .noise import (
    Control,
    MarkSpace,
    NoiseCoefficient,
    sample_prm,
)
from .seeding import as_generator, replica_seed
from .solver import (
    SolverConfig,
    Trajectory,
    Truncation,
    solve_controlled,
    solve_skeleton,
)
from .spectral import (
    SpectralField,
    TamingSpec,
    TorusGrid,
    apply_stokes,
    inner_product,
    leray_project,
    nonlinear_term,
    norm_sq_coeffs,
    pointwise_sq_grad_norm,
    sobolev_norm_sq,
    tamed_drift,
)

ESTIMATES = ("skew", "leray", "equ-7", "equ-11", "equ-18", "equ-55")
FIT_FACTOR = 1.05
SKEW_TOL = 1e-10
LERAY_TOL = 1e-10


@dataclass
class EstimateReport:
    estimate: str
    samples: int
    constant: float | None
    worst_residual: float
    seed: int
    passed: bool
    calibration_max: float | None = None
    violations: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class ConvergenceReport:
    parameter: str
    ladder: list
    errors: list
    order: float | None
    monotone: bool
    stderr: list | None = None
    passed: bool = True
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass
class FieldSampler:
    """Random divergence-free fields with spectral decay (1 + |2 pi k|^2)^-s.

    White noise is filtered in Fourier space, restricted to the dealiased
    modes, Leray-projected and rescaled to an H^1 norm drawn log-uniformly
    from ``h1_range``.
    """

    grid: TorusGrid
    s: float = 2.0
    h1_range: tuple = (0.1, 10.0)

    def sample(self, rng) -> SpectralField:
        g = self.grid
        noise = SpectralField.from_physical(g, rng.standard_normal((3,) + g.shape))
        filt = g.dealias_mask / (1.0 + g.eigenvalues) ** self.s
        u = leray_project(SpectralField(noise.coeffs * filt, g))
        lo, hi = self.h1_range
        target = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        return u * (target / math.sqrt(sobolev_norm_sq(u, 1)))


# ------------------------------------------------------------------ estimates

def _ratio_equ11(u, spec):
    lhs = inner_product(tamed_drift(u, spec), u, 0)
    den = sobolev_norm_sq(u, 0)
    return lhs, den


def _ratio_equ7(u, spec):
    F = tamed_drift(u, spec)
    lhs = inner_product(F, u, 1)
    lhs += 0.5 * sobolev_norm_sq(u, 2) + 0.5 * pointwise_sq_grad_norm(u) - sobolev_norm_sq(u, 0)
    grad_sq = inner_product(apply_stokes(u), u, 0)
    return lhs, grad_sq


def _ratio_equ18(u1, u2, spec):
    w = u1 - u2
    dF = tamed_drift(u1, spec) - tamed_drift(u2, spec)
    lhs = inner_product(dF, w, 0) + 0.5 * sobolev_norm_sq(w, 1)
    den = (math.sqrt(sobolev_norm_sq(u2, 1) * sobolev_norm_sq(u2, 2)) + 1.0) * sobolev_norm_sq(w, 0)
    return lhs, den


def _ratio_equ55(u1, u2, spec):
    w = u1 - u2
    dF = tamed_drift(u1, spec) - tamed_drift(u2, spec)
    lhs = inner_product(dF, w, 1) + 0.25 * sobolev_norm_sq(w, 2)
    den = (1.0 + sobolev_norm_sq(u1, 1) ** 2 + sobolev_norm_sq(u2, 1) ** 2 + sobolev_norm_sq(u2, 2)) * sobolev_norm_sq(w, 1)
    return lhs, den


def _pair_terms(estimate, sampler, rng, spec):
    if estimate == "equ-11":
        return _ratio_equ11(sampler.sample(rng), spec)
    if estimate == "equ-7":
        return _ratio_equ7(sampler.sample(rng), spec)
    u2 = sampler.sample(rng)
    u1 = u2 + sampler.sample(rng)
    if estimate == "equ-18":
        return _ratio_equ18(u1, u2, spec)
    return _ratio_equ55(u1, u2, spec)


def _exactness_residual(estimate, sampler, rng):
    u = sampler.sample(rng)
    if estimate == "skew":
        v = sampler.sample(rng)
        val = abs(inner_product(nonlinear_term(u, v), v, 0))
        scale = math.sqrt(sobolev_norm_sq(u, 1)) * sobolev_norm_sq(v, 1)
        return val / scale - SKEW_TOL
    # leray: idempotence and divergence of a raw, unprojected field
    g = sampler.grid
    raw = SpectralField.from_physical(g, rng.standard_normal((3,) + g.shape))
    p1 = leray_project(raw)
    p2 = leray_project(p1)
    base = math.sqrt(sobolev_norm_sq(raw, 0))
    idem = math.sqrt(sobolev_norm_sq(p2 - p1, 0)) / base
    return max(idem, p1.divergence_defect()) - LERAY_TOL


def check_estimate(estimate: str, sampler: FieldSampler, trials=(500, 500), seed: int = 0,
                   taming: TamingSpec | None = None, factor: float = FIT_FACTOR) -> EstimateReport:
    """Run one estimate check.

    ``trials`` is (calibration, assertion) or a single count used for both.
    The exactness checks ("skew", "leray") have nothing to fit and run
    ``sum(trials)`` (or the single count) assertion trials.
    ``worst_residual`` is the largest lhs - rhs seen on the assertion batch
    (<= 0 means satisfied).
    """
    if estimate not in ESTIMATES:
        raise ValueError(f"unknown estimate {estimate!r}; choose from {ESTIMATES}")
    spec = taming or TamingSpec(1.0)
    exact = estimate in ("skew", "leray")
    if isinstance(trials, int):
        trials = (0, trials) if exact else (trials, trials)
    n_cal, n_chk = (int(x) for x in trials)

    if exact:
        rng = as_generator(replica_seed(seed, 0, stream=1))
        total = n_cal + n_chk
        res = [_exactness_residual(estimate, sampler, rng) for _ in range(total)]
        worst = max(res)
        return EstimateReport(estimate, total, None, float(worst), seed, bool(worst <= 0.0),
                              violations=int(sum(r > 0 for r in res)))

    cal_rng = as_generator(replica_seed(seed, 0, stream=2))
    chk_rng = as_generator(replica_seed(seed, 1, stream=2))
    ratios = []
    for _ in range(n_cal):
        lhs, den = _pair_terms(estimate, sampler, cal_rng, spec)
        if den > 0:
            ratios.append(lhs / den)
    top = max(ratios) if ratios else 0.0
    const = factor * top if top > 0 else 0.0
    if estimate == "equ-18":
        # the constant must exceed 1
        const = max(const, factor)
    worst = -math.inf
    violations = 0
    for _ in range(n_chk):
        lhs, den = _pair_terms(estimate, sampler, chk_rng, spec)
        r = lhs - const * den
        worst = max(worst, r)
        violations += r > 0
    return EstimateReport(estimate, n_cal + n_chk, float(const), float(worst), seed, bool(violations == 0),
                          calibration_max=top, violations=int(violations))


# ------------------------------------------------------------------- isometry

@dataclass(frozen=True, eq=False)
class IsometryIntegrand:
    """Deterministic step integrand X(t, z_k) = vectors[j, k] on [t_j, t_{j+1})."""

    time_grid: np.ndarray
    vectors: np.ndarray
    marks: MarkSpace

    @property
    def T(self):
        return float(self.time_grid[-1])

    def exact_second_moment(self) -> float:
        dt = np.diff(self.time_grid)
        sq = np.sum(np.abs(self.vectors) ** 2, axis=-1)
        return float(np.sum(dt[:, None] * self.marks.w[None, :] * sq))


def isometry_preset(name: str, seed: int = 0) -> IsometryIntegrand:
    """Built-in integrands: 'constant', 'two-mark', 'fields'."""
    if name == "constant":
        return IsometryIntegrand(np.array([0.0, 1.0]), np.array([[[1.0]]]), MarkSpace((1.0,)))
    if name == "two-mark":
        v = np.array([[[1.0, 0.0], [0.5, 0.5]], [[0.0, -2.0], [1.0, 1.0]]])
        return IsometryIntegrand(np.array([0.0, 0.4, 1.0]), v, MarkSpace((0.5, 1.5)))
    if name == "fields":
        # H^0 coordinates of random divergence-free fields, weighted so the
        # Euclidean norm equals the H^0 norm
        g = TorusGrid(8)
        rng = as_generator(seed)
        sampler = FieldSampler(g, s=1.0, h1_range=(1.0, 3.0))
        marks = MarkSpace((0.3, 1.0, 0.7))
        w = np.sqrt(g.multiplicity)
        vecs = np.empty((3, marks.K, 3 * w.size * 2))
        for j in range(3):
            for k in range(marks.K):
                c = sampler.sample(rng).coeffs * w
                vecs[j, k] = np.concatenate([c.real.ravel(), c.imag.ravel()])
        return IsometryIntegrand(np.array([0.0, 0.2, 0.5, 0.8]), vecs, marks)
    raise ValueError(f"unknown isometry preset {name!r}")


@dataclass
class IsometryReport:
    preset: str
    replicas: int
    mc_mean: float
    exact: float
    stderr: float
    z: float
    passed: bool
    seed: int

    def to_dict(self):
        return asdict(self)


def check_isometry(X: IsometryIntegrand, replicas: int = 10_000, seed: int = 0, name: str = "custom",
                   n_se: float = 4.0) -> IsometryReport:
    """Monte Carlo E||int X d(eta - theta_T)||^2 against int int ||X||^2 dtheta ds."""
    exact = X.exact_second_moment()
    dt = np.diff(X.time_grid)
    mean_counts = dt[:, None] * X.marks.w[None, :]
    comp = np.einsum("jk,jkd->d", mean_counts, X.vectors)
    vals = np.empty(replicas)
    for r in range(replicas):
        s = sample_prm(1.0, X.marks, X.T, replica_seed(seed, r, stream=3))
        counts = s.counts(X.time_grid, X.marks.K)
        m = np.einsum("jk,jkd->d", counts, X.vectors) - comp
        vals[r] = float(m @ m)
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
    if se == 0.0:
        z = 0.0 if mean == exact else math.inf
    else:
        z = (mean - exact) / se
    return IsometryReport(name, replicas, mean, exact, se, z, abs(z) <= n_se, seed)


# ------------------------------------------------------------------ eps sweep

def _sup_distance_run(args):
    u0, eps, g, sigma, marks, cfg, seed, reference = args
    worst = [0.0]
    grid = u0.grid
    idx = [0]

    def observer(t, c):
        idx[0] += 1
        d = norm_sq_coeffs(c - reference[idx[0]], grid, 1)
        if d > worst[0]:
            worst[0] = d

    solve_controlled(u0, eps, g, sigma, marks, cfg, seed=seed, observer=observer)
    return worst[0]


def skeleton_reference(u0, g, sigma, marks, cfg):
    """Skeleton states at t = 0, dt, 2 dt, ..., T."""
    states = [None]

    def observer(t, c):
        states.append(c.copy())

    traj = solve_skeleton(u0, g, sigma, marks, cfg, observer=observer)
    states[0] = traj.fields[0].coeffs
    return states, traj


def eps_sweep(u0: SpectralField, g: Control, sigma: NoiseCoefficient, marks: MarkSpace,
              cfg: SolverConfig, eps_ladder=(0.2, 0.1, 0.05), replicas: int = 200, seed: int = 0,
              executor=None) -> ConvergenceReport:
    """Mean over replicas of sup_t ||u_controlled^eps - u^g||_{H^1}^2 per rung.

    The sup is taken over the time grid t = i * dt. Replica r of rung i uses
    the counter-derived seed (seed, stream=10 + i, index=r), so results do not
    depend on how ``executor`` schedules the work.
    """
    ladder = [float(e) for e in eps_ladder]
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps ladder must decrease strictly")
    reference, _ = skeleton_reference(u0, g, sigma, marks, cfg)
    means, ses = [], []
    mapper = map if executor is None else executor.map
    for i, eps in enumerate(ladder):
        jobs = [(u0, eps, g, sigma, marks, cfg, replica_seed(seed, r, stream=10 + i), reference)
                for r in range(replicas)]
        vals = np.fromiter(mapper(_sup_distance_run, jobs), dtype=float, count=replicas)
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0)
    monotone = all(b < a for a, b in zip(means, means[1:])) or all(m == 0.0 for m in means)
    order = _fit_order(ladder, means)
    return ConvergenceReport("eps", ladder, means, order, monotone, stderr=ses, passed=monotone)


def _fit_order(params, errors):
    p = np.asarray(params, dtype=float)
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0) or len(e) < 2:
        return None
    slope = np.polyfit(np.log(p), np.log(e), 1)[0]
    return float(slope)


# ----------------------------------------------------------------- refinement

@dataclass(frozen=True, eq=False)
class RefinementProblem:
    u0: SpectralField
    g: Control
    sigma: NoiseCoefficient
    marks: MarkSpace
    cfg: SolverConfig


def refinement_study(axis: str, ladder, problem: RefinementProblem, norm_order: int = 1) -> ConvergenceReport:
    """Self-convergence along a dt ladder (halving) or a mode-count ladder.

    Errors are ||u_i(T) - u_{i+1}(T)|| between successive rungs. For dt the
    order is log(e_i / e_{i+1}) / log(dt_i / dt_{i+1}) from the last pair.
    """
    ladder = list(ladder)
    if len(ladder) < 3:
        raise ValueError("refinement ladder needs at least three rungs")
    finals = []
    for rung in ladder:
        if axis == "dt":
            cfg = problem.cfg.replace(dt=float(rung), snapshot_stride=10**9)
        elif axis == "n":
            cfg = problem.cfg.replace(truncation=Truncation(problem.u0.grid, int(rung)), snapshot_stride=10**9)
        else:
            raise ValueError(f"refinement axis must be 'dt' or 'n', got {axis!r}")
        finals.append(solve_skeleton(problem.u0, problem.g, problem.sigma, problem.marks, cfg).final)
    grid = problem.u0.grid
    errors = [math.sqrt(norm_sq_coeffs(a.coeffs - b.coeffs, grid, norm_order)) for a, b in zip(finals, finals[1:])]
    monotone = all(b < a for a, b in zip(errors, errors[1:])) or all(e == 0.0 for e in errors)
    order = None
    if axis == "dt" and errors[-1] > 0 and errors[-2] > 0:
        order = math.log(errors[-2] / errors[-1]) / math.log(ladder[-3] / ladder[-2])
    return ConvergenceReport(axis, ladder, errors, order, monotone, passed=monotone)


# ---------------------------------------------------------------- energy audit

@dataclass
class EnergyAudit:
    sup_h1_sq: float
    int_h2_sq: float
    sup_h1_6: float
    residual_sum: float
    jump_residual: float
    finite: bool
    passed: bool
    bound: float | None = None

    def to_dict(self):
        return asdict(self)


def energy_audit(traj: Trajectory, M: float | None = None, constants=None,
                 threshold: float = 1e-4, bound: float | None = None) -> EnergyAudit:
    """Finiteness of sup ||u||_{H^1}^2 and int ||u||_{H^2}^2, plus the H^1 energy identity.

    The per-step residual is the recorded ||u_{n+1}||_{H^1}^2 minus its
    prediction from the exactly damped previous energy and the midpoint
    nonlinear power; across jumps the change must equal post^2 - pre^2 from
    the event log. ``bound``, when given, caps sup + integral.
    """
    sup = traj.sup_h1_sq
    integral = traj.int_h2_sq
    finite = bool(np.isfinite(sup) and np.isfinite(integral) and np.all(np.isfinite(traj.h1_sq)))
    res = float(np.sum(np.abs(traj.step_residuals))) if traj.step_residuals.size else 0.0
    jump_res = 0.0
    flags = np.flatnonzero(traj.jump_flag)
    for ev, row in zip([e for e in traj.events if np.isfinite(e.pre_h1)], flags):
        change = traj.h1_sq[row] - traj.h1_sq[row - 1]
        jump_res = max(jump_res, abs(change - (ev.post_h1**2 - ev.pre_h1**2)))
    ok = finite and res <= threshold and jump_res <= 1e-9 * max(1.0, sup)
    if bound is not None:
        ok = ok and sup + integral <= bound
    return EnergyAudit(sup, integral, float(np.max(traj.h1_sq) ** 3) if traj.h1_sq.size else 0.0,
                       res, jump_res, finite, bool(ok), bound)


# ------------------------------------------------------------------ stability

def stability_study(u0: SpectralField, direction: SpectralField, deltas, g: Control,
                    sigma: NoiseCoefficient, marks: MarkSpace, cfg: SolverConfig,
                    C0: float | None = None) -> ConvergenceReport:
    """Amplification K(delta) = sup_t ||u - v||_{H^0} / delta for v0 = u0 + delta * e.

    ``direction`` is normalised in H^0. With ``C0`` given, the Gronwall weight
    int (2 C0 (||u||_{H^1} ||u||_{H^2} + 1) + K2) ds along the reference path is
    reported in ``extra``.
    """
    e = direction * (1.0 / math.sqrt(sobolev_norm_sq(direction, 0)))
    ref_states, ref = skeleton_reference(u0, g, sigma, marks, cfg)
    grid = u0.grid
    ks = []
    for d in deltas:
        worst = [norm_sq_coeffs(ref_states[0] - (u0 + e * d).coeffs, grid, 0)]
        idx = [0]

        def observer(t, c):
            idx[0] += 1
            worst[0] = max(worst[0], norm_sq_coeffs(c - ref_states[idx[0]], grid, 0))

        solve_skeleton(u0 + e * d, g, sigma, marks, cfg, observer=observer)
        ks.append(math.sqrt(worst[0]) / d)
    ratio = max(ks) / min(ks) if min(ks) > 0 else math.inf
    extra = {"spread": ratio}
    if C0 is not None:
        from .noise import hypothesis_constants
        k2 = hypothesis_constants(sigma, marks).K2
        h1 = np.sqrt(ref.h1_sq)
        h2 = np.sqrt(ref.h2_sq)
        rho = 2.0 * C0 * (h1 * h2 + 1.0) + k2
        extra["gronwall_weight"] = float(np.sum(0.5 * (rho[1:] + rho[:-1]) * np.diff(ref.energy_t)))
    return ConvergenceReport("delta", list(deltas), ks, None, True, passed=ratio <= 2.0, extra=extra)
