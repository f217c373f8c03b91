"""Tests for the physical model: power, thermal coupling, CRAC cost."""

import numpy as np
import pytest

from thermoptic import (
    CopCurve,
    CopRangeError,
    DataCenterParams,
    SystemState,
    compute_constants,
    crac_power,
    heat_removed,
    input_matrix_B,
    rack_power,
    steady_supply_temperature,
    steady_workload_distribution,
    system_matrix_A,
    thermal_derivative,
    total_cost,
    validate_params,
)

from conftest import WIDE_COP, random_params, simple_params


def steady_state_for(p, tout, dstar):
    """Build the equilibrium state implied by an outlet profile and demand."""
    k = compute_constants(p)
    tsup = steady_supply_temperature(k, tout, dstar)
    d = steady_workload_distribution(k, tout, dstar)
    return SystemState(tout=tout, tsup=tsup, d=d)


class TestValidateParams:
    def test_single_rack_all_bounds_satisfied(self):
        p = simple_params(1)
        assert validate_params(p) == []

    def test_gamma_row_sum_at_one_rejected(self):
        p = simple_params(2, gamma=np.array([[0.5, 0.5], [0.1, 0.1]]))
        violations = validate_params(p)
        assert any("row 0 sum" in v for v in violations)

    def test_zero_per_cpu_power_rejected(self):
        p = simple_params(2, w=[2.0, 0.0])
        violations = validate_params(p)
        assert any("w not strictly positive" in v for v in violations)

    def test_gamma_entry_outside_open_interval_rejected(self):
        gamma = np.full((2, 2), 0.2)
        gamma[0, 1] = 0.0
        violations = validate_params(simple_params(2, gamma=gamma))
        assert any("gamma entries" in v for v in violations)


class TestRackPower:
    def test_full_rack_draw(self):
        p = simple_params(1, v=1728.0, w=145.5)
        assert rack_power(p, np.array([20.0]))[0] == pytest.approx(4638.0)

    def test_idle_power(self):
        p = simple_params(3)
        assert np.array_equal(rack_power(p, np.zeros(3)), p.v)

    def test_matches_elementwise_formula(self):
        rng = np.random.default_rng(1)
        p = random_params(rng, 3, homogeneous=False)
        d = rng.uniform(0.0, 10.0, 3)
        expected = np.array([p.v[i] + p.w[i] * d[i] for i in range(3)])
        assert np.allclose(rack_power(p, d), expected, rtol=0, atol=1e-12)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            rack_power(simple_params(2), np.zeros(3))


class TestSystemMatrix:
    def test_scalar_instance(self):
        p = simple_params(1)  # gamma 0.2, flow 1, mass 1, rho 1
        assert system_matrix_A(p) == pytest.approx(np.array([[-0.8]]))

    def test_two_rack_entrywise_formula(self):
        gamma = np.array([[0.1, 0.3], [0.2, 0.15]])
        p = simple_params(2, gamma=gamma, flow=[1.0, 2.0], mass=[0.5, 1.5], rho=1.2)
        a = system_matrix_A(p)
        for i in range(2):
            for j in range(2):
                expected = 1.2 * (gamma[j, i] - (i == j)) * p.flow[j] / p.mass[i]
                assert a[i, j] == pytest.approx(expected)

    def test_gershgorin_discs_in_left_half_plane(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_params(rng, int(rng.integers(1, 7)))
            a = system_matrix_A(p)
            centers = np.diag(a)
            radii = np.abs(a).sum(axis=1) - np.abs(centers)
            assert np.all(centers + radii < 0.0)


class TestInputMatrix:
    def test_scalar_instance(self):
        p = simple_params(1, w=2.0, mass=1.0, cp=2.0)
        assert input_matrix_B(p) == pytest.approx(np.array([[1.0]]))

    def test_off_diagonal_exactly_zero(self):
        p = simple_params(3)
        b = input_matrix_B(p)
        assert np.array_equal(b[~np.eye(3, dtype=bool)], np.zeros(6))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        p = random_params(rng, 4, homogeneous=False)
        b = input_matrix_B(p)
        expected = np.array([p.w[i] / (p.cp * p.mass[i]) for i in range(4)])
        assert np.allclose(b @ np.ones(4), expected, rtol=1e-14)


class TestThermalDerivative:
    def test_vanishes_at_steady_state(self):
        rng = np.random.default_rng(5)
        p = random_params(rng, 4)
        s = steady_state_for(p, rng.uniform(25.0, 32.0, 4), 30.0)
        scale = float(np.abs(rack_power(p, s.d) / (p.cp * p.mass)).max())
        assert np.abs(thermal_derivative(p, s)).max() < 1e-9 * max(scale, 1.0)

    def test_idle_heating_from_uniform_profile(self):
        p = simple_params(3)
        s = SystemState(tout=np.full(3, 22.0), tsup=22.0, d=np.zeros(3))
        deriv = thermal_derivative(p, s)
        assert np.allclose(deriv, p.v / (p.cp * p.mass))
        assert np.all(deriv > 0.0)

    def test_single_rack_closed_form(self):
        p = simple_params(1, gamma=np.array([[0.25]]), flow=2.0, mass=0.5, rho=1.1, cp=3.0, v=6.0, w=1.5)
        s = SystemState(tout=np.array([28.0]), tsup=18.0, d=np.array([4.0]))
        expected = 1.1 * (0.25 - 1.0) * 2.0 / 0.5 * (28.0 - 18.0) + (6.0 + 1.5 * 4.0) / (3.0 * 0.5)
        assert thermal_derivative(p, s)[0] == pytest.approx(expected, rel=1e-12)

    def test_affine_superposition(self):
        rng = np.random.default_rng(11)
        p = random_params(rng, 5)

        def f(tout, tsup, d):
            return thermal_derivative(p, SystemState(tout=tout, tsup=tsup, d=d))

        x = (rng.normal(size=5), rng.normal(), rng.normal(size=5))
        y = (rng.normal(size=5), rng.normal(), rng.normal(size=5))
        xy = tuple(a + b for a, b in zip(x, y))
        zero = (np.zeros(5), 0.0, np.zeros(5))
        residual = f(*xy) - f(*x) - f(*y) + f(*zero)
        assert np.abs(residual).max() < 1e-10


class TestHeatRemoved:
    def test_zero_at_uniform_temperature(self):
        p = simple_params(3)
        s = SystemState(tout=np.full(3, 21.0), tsup=21.0, d=np.zeros(3))
        assert heat_removed(p, s) == pytest.approx(0.0, abs=1e-12)

    def test_equals_total_rack_power_at_steady_state(self):
        rng = np.random.default_rng(13)
        p = random_params(rng, 4)
        s = steady_state_for(p, rng.uniform(26.0, 31.0, 4), 25.0)
        total_p = float(rack_power(p, s.d).sum())
        assert heat_removed(p, s) == pytest.approx(total_p, rel=1e-9)

    def test_matches_return_flow_summation(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            p = random_params(rng, int(rng.integers(1, 6)), homogeneous=False)
            s = SystemState(
                tout=rng.uniform(20.0, 35.0, p.n), tsup=rng.uniform(10.0, 20.0), d=rng.uniform(0, 5, p.n)
            )
            by_sum = p.rho * p.cp * sum(
                (1.0 - p.gamma[i].sum()) * p.flow[i] * (s.tout[i] - s.tsup) for i in range(p.n)
            )
            assert heat_removed(p, s) == pytest.approx(by_sum, rel=1e-9)


class TestCracPower:
    # Curve through COP(20) = 3.19 and COP(25) = 4.73 exactly.
    EXACT_COP = CopCurve(a=0.0068, b=0.002, c=0.43, tlo=10.0, thi=35.0)

    def _state_with_qrem_100(self, tsup):
        # Single rack, rho*cp*(1-gamma)*flow = 0.5, so tout - tsup = 200 gives 100 W.
        p = simple_params(1, gamma=np.array([[0.5]]), cop=self.EXACT_COP)
        return p, SystemState(tout=np.array([tsup + 200.0]), tsup=tsup, d=np.zeros(1))

    def test_hundred_watts_at_20_degrees(self):
        p, s = self._state_with_qrem_100(20.0)
        assert heat_removed(p, s) == pytest.approx(100.0, rel=1e-12)
        assert crac_power(p, s) == pytest.approx(31.34, abs=0.01)

    def test_hundred_watts_at_25_degrees(self):
        p, s = self._state_with_qrem_100(25.0)
        assert crac_power(p, s) == pytest.approx(21.14, abs=0.01)

    def test_zero_heat_zero_power(self):
        p = simple_params(1)
        s = SystemState(tout=np.array([15.0]), tsup=15.0, d=np.zeros(1))
        assert crac_power(p, s) == 0.0

    def test_out_of_range_supply_raises(self):
        p = simple_params(1, cop=CopCurve.default())
        s = SystemState(tout=np.array([20.0]), tsup=5.0, d=np.zeros(1))
        with pytest.raises(CopRangeError):
            crac_power(p, s)


class TestTotalCost:
    def test_reduced_form_at_homogeneous_steady_state(self):
        rng = np.random.default_rng(19)
        p = random_params(rng, 5, homogeneous=True)
        dstar = 40.0
        s = steady_state_for(p, rng.uniform(27.0, 32.0, 5), dstar)
        reduced = (1.0 + 1.0 / p.cop.value(s.tsup)) * (p.n * p.v[0] + p.w[0] * dstar)
        assert total_cost(p, s) == pytest.approx(reduced, rel=1e-9)

    def test_idle_uniform_state_costs_idle_power(self):
        p = simple_params(3, cop=WIDE_COP)
        s = SystemState(tout=np.full(3, 20.0), tsup=20.0, d=np.zeros(3))
        assert total_cost(p, s) == pytest.approx(3 * p.v[0], rel=1e-12)

    def test_warmer_supply_steady_state_is_cheaper(self):
        rng = np.random.default_rng(23)
        p = random_params(rng, 4)
        dstar = 30.0
        hot = steady_state_for(p, np.full(4, 32.0), dstar)
        cold = steady_state_for(p, np.full(4, 27.0), dstar)
        assert hot.tsup > cold.tsup
        assert total_cost(p, hot) < total_cost(p, cold)


class TestCopCurve:
    def test_default_reproduces_reference_points(self):
        cop = CopCurve.default()
        assert cop.value(20.0) == pytest.approx(3.19, abs=0.01)
        assert cop.value(25.0) == pytest.approx(4.73, abs=0.01)

    def test_monotone_on_validity_interval(self):
        cop = CopCurve.default()
        grid = np.linspace(cop.tlo, cop.thi, 50)
        values = [cop.value(t) for t in grid]
        assert np.all(np.diff(values) > 0.0)

    def test_decreasing_curve_rejected_at_construction(self):
        with pytest.raises(ValueError):
            CopCurve(a=-0.01, b=0.0, c=5.0, tlo=10.0, thi=35.0)

    def test_nonpositive_curve_rejected_at_construction(self):
        with pytest.raises(ValueError):
            CopCurve(a=0.0068, b=0.0008, c=-5.0, tlo=10.0, thi=35.0)
