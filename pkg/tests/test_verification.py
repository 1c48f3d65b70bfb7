import math

import numpy as np
import pytest

from tamedns.noise import Control, MarkSpace, NoiseCoefficient
from tamedns.solver import SolverConfig, solve_controlled, solve_skeleton
from tamedns.spectral import SpectralField, sobolev_norm_sq
from tamedns.suites import energy_suite, linear_refinement, taming_contract, thinning_law
from tamedns.verification import (
    ESTIMATES,
    FieldSampler,
    IsometryIntegrand,
    RefinementProblem,
    check_estimate,
    check_isometry,
    energy_audit,
    eps_sweep,
    isometry_preset,
    refinement_study,
    stability_study,
)

from conftest import shear, smooth_field


class ConstantSampler:
    """Sampler stub that always returns the same field."""

    def __init__(self, field):
        self.grid = field.grid
        self.field = field

    def sample(self, rng):
        return self.field


class TestFieldSampler:
    def test_magnitude_range(self, grid16, rng):
        s = FieldSampler(grid16, h1_range=(0.5, 2.0))
        for _ in range(20):
            u = s.sample(rng)
            assert 0.5 - 1e-12 <= math.sqrt(sobolev_norm_sq(u, 1)) <= 2.0 + 1e-12
            assert u.is_valid()
            assert np.all(u.coeffs[:, ~grid16.dealias_mask] == 0)


class TestCheckEstimate:
    @pytest.mark.parametrize("name", ESTIMATES)
    def test_small_batches_pass(self, grid8, name):
        rep = check_estimate(name, FieldSampler(grid8), (20, 20), seed=3)
        assert rep.passed and rep.worst_residual <= 0
        if name not in ("skew", "leray"):
            assert rep.constant >= 0
        if name == "equ-18":
            assert rep.constant > 1

    def test_zero_field_equ11(self, grid8):
        rep = check_estimate("equ-11", ConstantSampler(SpectralField.zeros(grid8)), (5, 5))
        assert rep.worst_residual == 0.0 and rep.passed

    def test_equal_arguments_equ18(self, grid8):
        # the stub makes u1 = u2 + 0
        rep = check_estimate("equ-18", ConstantSampler(SpectralField.zeros(grid8)), (5, 5))
        assert rep.worst_residual == 0.0 and rep.constant > 1

    def test_unknown(self, grid8):
        with pytest.raises(ValueError):
            check_estimate("equ-99", FieldSampler(grid8))

    def test_reproducible(self, grid8):
        a = check_estimate("equ-55", FieldSampler(grid8), (10, 10), seed=4)
        b = check_estimate("equ-55", FieldSampler(grid8), (10, 10), seed=4)
        assert a == b


class TestIsometry:
    def test_zero_integrand(self):
        X = IsometryIntegrand(np.array([0.0, 1.0]), np.zeros((1, 1, 2)), MarkSpace((1.0,)))
        rep = check_isometry(X, 200, seed=1)
        assert rep.exact == 0.0 and rep.mc_mean == 0.0 and rep.passed

    def test_unit_vector(self):
        X = IsometryIntegrand(np.array([0.0, 1.0]), np.array([[[0.6, 0.8]]]), MarkSpace((1.0,)))
        assert X.exact_second_moment() == pytest.approx(1.0)
        assert check_isometry(X, 10_000, seed=2).passed

    def test_doubling_weight(self):
        v = np.array([[[0.6, 0.8]]])
        a = IsometryIntegrand(np.array([0.0, 1.0]), v, MarkSpace((1.0,)))
        b = IsometryIntegrand(np.array([0.0, 1.0]), v, MarkSpace((2.0,)))
        assert b.exact_second_moment() == 2 * a.exact_second_moment()

    def test_fields_preset_is_h0_norm(self):
        X = isometry_preset("fields", seed=0)
        assert X.vectors.shape[:2] == (3, 3)

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            isometry_preset("nope")


class TestEpsSweep:
    def test_zero_noise_exactly_zero(self, grid8):
        u0 = smooth_field(grid8, seed=1)
        rep = eps_sweep(u0, Control.constant(0.05, 1, 2.0), NoiseCoefficient.zero(grid8), MarkSpace((1.0,)),
                        SolverConfig(dt=1e-2, T=0.05), (0.2, 0.1), replicas=3)
        assert rep.errors == [0.0, 0.0] and rep.monotone

    def test_single_replica_reproducible(self, grid8):
        args = (smooth_field(grid8, seed=1), Control.constant(0.05, 1, 1.5),
                NoiseCoefficient((0.5,), (smooth_field(grid8, seed=2),), 2, grid8), MarkSpace((1.0,)),
                SolverConfig(dt=1e-2, T=0.05), (0.2, 0.1, 0.05))
        a, b = eps_sweep(*args, replicas=1, seed=7), eps_sweep(*args, replicas=1, seed=7)
        assert a == b

    def test_sup_is_over_grid_times(self, grid8):
        u0 = smooth_field(grid8, seed=1)
        g = Control.constant(0.05, 1, 1.5)
        sigma = NoiseCoefficient((0.5,), (smooth_field(grid8, seed=2),), 2, grid8)
        marks = MarkSpace((1.0,))
        cfg = SolverConfig(dt=1e-2, T=0.05, snapshot_stride=1)
        rep = eps_sweep(u0, g, sigma, marks, cfg, (0.1,), replicas=1, seed=5)
        from tamedns.seeding import replica_seed

        sk = solve_skeleton(u0, g, sigma, marks, cfg)
        ct = solve_controlled(u0, 0.1, g, sigma, marks, cfg, seed=replica_seed(5, 0, stream=10))
        direct = max(sobolev_norm_sq(a - b, 1) for a, b in zip(sk.fields, ct.fields))
        assert rep.errors[0] == pytest.approx(direct, rel=1e-12)

    def test_ladder_must_decrease(self, grid8):
        with pytest.raises(ValueError):
            eps_sweep(SpectralField.zeros(grid8), Control.constant(0.05, 1, 1.0), NoiseCoefficient.zero(grid8),
                      MarkSpace((1.0,)), SolverConfig(dt=1e-2, T=0.05), (0.1, 0.2), replicas=1)


class TestRefinement:
    def test_linear_dt_order(self):
        rep = linear_refinement()
        assert rep["passed"], rep
        assert abs(rep["order"] - 2.0) <= 0.3

    def test_trivial_problem(self, grid8):
        prob = RefinementProblem(SpectralField.zeros(grid8), Control.constant(0.05, 1, 1.0),
                                 NoiseCoefficient.zero(grid8), MarkSpace((1.0,)), SolverConfig(dt=1e-2, T=0.05))
        for axis, ladder in (("dt", (1e-2, 5e-3, 2.5e-3)), ("n", (6, 18, 50))):
            rep = refinement_study(axis, ladder, prob)
            assert rep.errors == [0.0, 0.0] and rep.monotone

    def test_mode_ladder_monotone(self, grid16):
        u0 = smooth_field(grid16, 1.0, seed=3, s=1.0)
        prob = RefinementProblem(u0, Control.constant(0.02, 1, 1.0), NoiseCoefficient.zero(grid16),
                                 MarkSpace((1.0,)), SolverConfig(dt=1e-3, T=0.02))
        rep = refinement_study("n", (50, 100, 200, 400), prob)
        assert rep.monotone and all(e > 0 for e in rep.errors)

    def test_short_ladder(self, grid8):
        prob = RefinementProblem(SpectralField.zeros(grid8), Control.constant(0.05, 1, 1.0),
                                 NoiseCoefficient.zero(grid8), MarkSpace((1.0,)), SolverConfig(dt=1e-2, T=0.05))
        with pytest.raises(ValueError):
            refinement_study("dt", (1e-2, 5e-3), prob)


class TestEnergyAudit:
    def test_zero_trajectory(self, grid8):
        tr = solve_skeleton(SpectralField.zeros(grid8), Control.constant(0.05, 1, 1.0), NoiseCoefficient.zero(grid8),
                            MarkSpace((1.0,)), SolverConfig(dt=1e-2, T=0.05))
        rep = energy_audit(tr)
        assert rep.sup_h1_sq == 0 and rep.int_h2_sq == 0 and rep.residual_sum == 0 and rep.passed

    def test_single_mode_decay(self, grid16):
        u0 = shear(grid16, 0.5)
        tr = solve_skeleton(u0, Control.constant(0.1, 1, 1.0), NoiseCoefficient.zero(grid16), MarkSpace((1.0,)),
                            SolverConfig(dt=1e-3, T=0.1))
        expect = sobolev_norm_sq(u0, 1) * np.exp(-8 * math.pi**2 * tr.energy_t)
        assert np.max(np.abs(tr.h1_sq - expect)) <= 1e-6
        assert energy_audit(tr).residual_sum <= 1e-12

    def test_reference_skeleton(self, reference_cfg):
        rep = energy_suite(reference_cfg)
        assert rep["passed"], rep
        assert rep["residual_sum"] <= 1e-4
        # second-order: halving dt quarters the summed residual
        assert rep["residual_sum"] / rep["residual_sum_dt_half"] == pytest.approx(4.0, rel=0.1)

    def test_jumps_accounted(self, grid8):
        sigma = NoiseCoefficient((0.5,), (smooth_field(grid8, seed=2),), 2, grid8)
        from tamedns.solver import solve_sde

        tr = solve_sde(smooth_field(grid8, seed=1), 0.05, sigma, MarkSpace((1.0,)), SolverConfig(dt=1e-2, T=0.1), seed=2)
        rep = energy_audit(tr, threshold=1e-2)
        assert rep.jump_residual <= 1e-12 and rep.finite


class TestStability:
    def test_amplification_stable(self, reference_problem):
        p = reference_problem
        direction = smooth_field(p.grid, 1.0, seed=8)
        rep = stability_study(p.u0, direction, (1e-3, 1e-4, 1e-5), p.control, p.sigma, p.marks,
                              p.solver.replace(T=0.1), C0=1.05)
        assert rep.passed and rep.extra["spread"] <= 2.0
        assert rep.extra["gronwall_weight"] > 0


class TestSuites:
    def test_taming_contract(self):
        rep = taming_contract(1.0)
        assert rep["passed"] and rep["max_fd_deviation"] <= 1e-6

    def test_thinning_small(self):
        rep = thinning_law(2000, seed=3)
        assert rep["passed"] and len(rep["cells"]) == 4
