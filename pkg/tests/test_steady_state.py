"""Tests for the steady-state constants, maps, and structural verifiers."""

import numpy as np
import pytest

from thermoptic import (
    DataCenterParams,
    DegenerateParamsError,
    SystemState,
    compute_constants,
    rack_power,
    steady_supply_temperature,
    steady_workload_distribution,
    system_matrix_A,
    thermal_derivative,
    verify_a_hurwitz,
    verify_c3_structure,
    verify_identities,
    synthesize_gamma,
)

from conftest import WIDE_COP, random_params, simple_params


class TestComputeConstants:
    def test_single_rack_degenerates_to_identity_maps(self):
        k = compute_constants(simple_params(1))
        assert k.c1 == pytest.approx(np.array([1.0]))
        assert k.c3 == pytest.approx(np.array([[0.0]]), abs=1e-15)
        assert k.c4(37.0) == pytest.approx(np.array([37.0]))

    def test_identities_hold_on_homogeneous_pair(self):
        rng = np.random.default_rng(2)
        p = random_params(rng, 2, homogeneous=True)
        rep = verify_identities(compute_constants(p), dstar=12.0, tol=1e-10)
        assert rep.passed

    def test_sign_pattern_over_random_homogeneous_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            k = compute_constants(random_params(rng, n, homogeneous=True))
            assert verify_c3_structure(k).passed

    def test_normalizing_scalar_is_strictly_negative(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            p = random_params(rng, int(rng.integers(1, 8)), homogeneous=bool(rng.integers(0, 2)))
            assert compute_constants(p).c2_den < 0.0

    def test_degenerate_denominator_raises(self):
        # One rack receives more recirculated air than its own throughflow
        # (negative supply share); per-CPU powers are tuned to cancel the sum.
        gamma = np.array([[0.05, 0.9], [0.05, 0.9]])
        p = simple_params(2, gamma=gamma, w=[1.0, 0.8 / 0.9])
        with pytest.raises(DegenerateParamsError):
            compute_constants(p)


class TestSupplyTemperatureMap:
    def test_single_rack_hand_formula(self):
        p = simple_params(1, gamma=np.array([[0.3]]), flow=2.0, mass=1.5, rho=1.2, cp=4.0, v=8.0, w=2.0)
        k = compute_constants(p)
        dstar = 5.0
        tout = np.array([25.0])
        expected = 25.0 - (8.0 + 2.0 * dstar) / (1.2 * 4.0 * 2.0 * (1.0 - 0.3))
        assert steady_supply_temperature(k, tout, dstar) == pytest.approx(expected, rel=1e-12)

    def test_uniform_shift_moves_supply_by_same_amount(self):
        rng = np.random.default_rng(8)
        p = random_params(rng, 5)
        k = compute_constants(p)
        tout = rng.uniform(25.0, 32.0, 5)
        base = steady_supply_temperature(k, tout, 20.0)
        shifted = steady_supply_temperature(k, tout + 1.7, 20.0)
        assert shifted - base == pytest.approx(1.7, abs=1e-10)

    def test_case_study_supply_below_outlets(self, case_params):
        k = compute_constants(case_params)
        tsup = steady_supply_temperature(k, case_params.tsafe, 240.0)
        assert tsup < case_params.tsafe.min()


class TestWorkloadMap:
    def test_single_rack_gets_everything(self):
        k = compute_constants(simple_params(1))
        assert steady_workload_distribution(k, np.array([29.0]), 7.5) == pytest.approx(np.array([7.5]))

    def test_uniform_shift_leaves_distribution_unchanged(self):
        rng = np.random.default_rng(10)
        p = random_params(rng, 4)
        k = compute_constants(p)
        tout = rng.uniform(26.0, 31.0, 4)
        base = steady_workload_distribution(k, tout, 18.0)
        shifted = steady_workload_distribution(k, tout + 3.0, 18.0)
        assert np.allclose(base, shifted, atol=1e-9)

    def test_matches_direct_linear_solve(self):
        rng = np.random.default_rng(12)
        p = random_params(rng, 3, homogeneous=False)
        k = compute_constants(p)
        tout = rng.uniform(26.0, 31.0, 3)
        dstar = 22.0
        # Solve the equilibrium system directly for (d, tsup):
        #   B d - (A 1) tsup = -A tout - v/(cp m),  1' d = dstar
        a = system_matrix_A(p)
        lhs = np.zeros((4, 4))
        lhs[:3, :3] = np.diag(p.w / (p.cp * p.mass))
        lhs[:3, 3] = -a @ np.ones(3)
        lhs[3, :3] = 1.0
        rhs = np.concatenate([-a @ tout - p.v / (p.cp * p.mass), [dstar]])
        direct = np.linalg.solve(lhs, rhs)
        assert steady_workload_distribution(k, tout, dstar) == pytest.approx(direct[:3], rel=1e-9)
        assert steady_supply_temperature(k, tout, dstar) == pytest.approx(direct[3], rel=1e-9)

    def test_total_always_matches_demand(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            p = random_params(rng, int(rng.integers(1, 9)), homogeneous=bool(rng.integers(0, 2)))
            k = compute_constants(p)
            tout = rng.uniform(20.0, 35.0, p.n)
            dstar = float(rng.uniform(0.0, p.capacity))
            d = steady_workload_distribution(k, tout, dstar)
            assert float(d.sum()) == pytest.approx(dstar, abs=1e-9 * max(1.0, dstar))


class TestRoundTrip:
    def test_maps_produce_equilibria(self):
        rng = np.random.default_rng(16)
        for _ in range(30):
            n = int(rng.integers(1, 9))
            p = random_params(rng, n, homogeneous=bool(rng.integers(0, 2)))
            k = compute_constants(p)
            tout = rng.uniform(24.0, 33.0, n)
            dstar = float(rng.uniform(0.0, 0.8 * p.capacity))
            s = SystemState(
                tout=tout,
                tsup=steady_supply_temperature(k, tout, dstar),
                d=steady_workload_distribution(k, tout, dstar),
            )
            scale = max(1.0, float(np.abs(rack_power(p, s.d) / (p.cp * p.mass)).max()))
            assert np.abs(thermal_derivative(p, s)).max() < 1e-9 * scale


class TestC3Structure:
    def test_single_rack_reported_degenerate(self):
        rep = verify_c3_structure(compute_constants(simple_params(1)))
        assert rep.passed
        assert "degenerate" in rep.note
        assert rep.max_off_diagonal is None

    def test_homogeneous_pair_passes(self):
        rng = np.random.default_rng(18)
        rep = verify_c3_structure(compute_constants(random_params(rng, 2, homogeneous=True)))
        assert rep.passed
        assert rep.within_proved_regime

    def test_heterogeneous_labeled_outside_regime(self):
        rng = np.random.default_rng(20)
        p = random_params(rng, 3, homogeneous=False)
        rep = verify_c3_structure(compute_constants(p))
        assert not rep.within_proved_regime
        assert "outside" in rep.note


class TestHurwitz:
    def test_single_rack_margin_is_negated_diagonal(self):
        p = simple_params(1)
        rep = verify_a_hurwitz(p)
        assert rep.passed
        assert rep.dominance_margin == pytest.approx(0.8)

    def test_case_study_matrix_passes(self, case_params):
        rep = verify_a_hurwitz(case_params)
        assert rep.passed
        assert rep.eig_converged
        assert rep.max_eig_real < 0.0

    def test_margin_stays_positive_as_row_sums_approach_one(self):
        for level in (0.3, 0.6, 0.8, 0.9):
            gamma = synthesize_gamma(8, level, seed=3)
            p = simple_params(8, gamma=gamma)
            rep = verify_a_hurwitz(p)
            assert rep.passed, f"level {level}"
            assert rep.dominance_margin > 0.0

    def test_column_heavy_gamma_fails_dominance(self):
        # Valid row sums but one rack starved of supply air.
        gamma = np.array([[0.05, 0.9], [0.05, 0.9]])
        rep = verify_a_hurwitz(simple_params(2, gamma=gamma))
        assert rep.dominance_margin < 0.0
        assert not rep.passed

    def test_random_instances_pass_all_three_checks(self):
        rng = np.random.default_rng(22)
        for _ in range(25):
            p = random_params(rng, int(rng.integers(1, 9)), homogeneous=False)
            rep = verify_a_hurwitz(p)
            assert rep.passed
            assert rep.max_diagonal < 0.0
