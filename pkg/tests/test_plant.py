import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import droopsync as ds
from droopsync.plant import PlantArrays

NOMINAL = 314.1592653589793


def _params(k_P=6e-5):
    return ds.DgParams(k_P=k_P, k_Q=4.2e-4, k_v=1e-2, tau_P=0.016,
                       tau_Q=0.016)


def two_dg_edges(G=0.0, B=10.0):
    return ds.ElectricalGraph(2, ((1, 2, G, B),)).directed_arrays()


class TestPowerFlow:
    def test_identical_states_no_exchange(self):
        P, Q = ds.power_flow(np.zeros(2), np.full(2, 220.0),
                             np.array([100.0, 50.0]), np.array([10.0, 5.0]),
                             two_dg_edges())
        np.testing.assert_allclose(P, [100.0, 50.0], atol=1e-12)
        np.testing.assert_allclose(Q, [10.0, 5.0], atol=1e-12)

    def test_hand_evaluated_line_power(self):
        delta = np.array([0.01, 0.0])
        v = np.full(2, 220.0)
        P, Q = ds.power_flow(delta, v, np.zeros(2), np.zeros(2),
                             two_dg_edges())
        expected = 10.0 * 220.0 * 220.0 * math.sin(0.01)
        assert abs(P[0] - expected) < 1e-9
        assert abs(expected - 4839.919) < 1e-2
        # lossless antisymmetry with G = 0
        assert abs(P[0] + P[1]) < 1e-9

    def test_conductance_term(self):
        # pure conductance, voltage difference drives P; bypass the graph
        # type since a B = 0 line cannot form a valid electrical graph
        src = np.array([0, 1])
        dst = np.array([1, 0])
        G = np.array([2.0, 2.0])
        B = np.array([0.0, 0.0])
        inc = np.eye(2)
        edges = (src, dst, G, B, inc)
        v = np.array([221.0, 219.0])
        P, Q = ds.power_flow(np.zeros(2), v, np.zeros(2), np.zeros(2), edges)
        np.testing.assert_allclose(P[0], 2.0 * 221.0 * (221.0 - 219.0))

    def test_non_finite_state_raises(self):
        with pytest.raises(FloatingPointError):
            ds.power_flow(np.array([np.nan, 0.0]), np.full(2, 220.0),
                          np.zeros(2), np.zeros(2), two_dg_edges())

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_lossless_sum_invariant(self, seed):
        rng = np.random.default_rng(seed)
        g = ds.ElectricalGraph(4, ((1, 2, 0.0, 10.0), (2, 3, 0.0, 10.67),
                                   (3, 4, 0.0, 9.82)))
        delta = rng.uniform(-0.3, 0.3, 4)
        v = rng.uniform(210.0, 230.0, 4)
        load_p = rng.uniform(0, 1e4, 4)
        load_q = rng.uniform(0, 1e4, 4)
        P, Q = ds.power_flow(delta, v, load_p, load_q, g.directed_arrays())
        line_total = np.sum(P - load_p)
        scale = max(1.0, np.abs(P - load_p).max())
        assert abs(line_total) / scale < 1e-9


class TestPlantDerivatives:
    def test_angle_rate_is_nominal_without_load(self):
        arrays = PlantArrays.pack([_params()])
        omega, dv, dpm, dqm = ds.plant_derivatives(
            np.zeros(1), np.full(1, 220.0), np.zeros(1), np.zeros(1),
            np.full(1, NOMINAL), np.full(1, 220.0), np.zeros(1), np.zeros(1),
            arrays)
        np.testing.assert_allclose(omega, [NOMINAL])

    def test_voltage_equilibrium(self):
        arrays = PlantArrays.pack([_params()])
        q_meas = np.array([500.0])
        v = 220.0 - 4.2e-4 * 500.0
        _, dv, _, _ = ds.plant_derivatives(
            np.zeros(1), np.array([v]), np.zeros(1), q_meas,
            np.full(1, NOMINAL), np.full(1, 220.0), np.zeros(1), np.zeros(1),
            arrays)
        np.testing.assert_allclose(dv, [0.0], atol=1e-12)

    def test_droop_depression(self):
        arrays = PlantArrays.pack([_params(k_P=6e-5)])
        omega, *_ = ds.plant_derivatives(
            np.zeros(1), np.full(1, 220.0), np.array([1e4]), np.zeros(1),
            np.full(1, NOMINAL), np.full(1, 220.0), np.zeros(1), np.zeros(1),
            arrays)
        np.testing.assert_allclose(NOMINAL - omega, [0.6])

    def test_filter_step_response(self):
        # first-order convergence of the measurement filter, 1% tolerance
        p = _params()
        arrays = PlantArrays.pack([p])
        h = 1e-4
        pm = np.zeros(1)
        target = np.array([1000.0])
        steps = int(round(3 * p.tau_P / h))
        for _ in range(steps):
            pm = pm + h * (target - pm) / arrays.tau_P
        expected = 1000.0 * (1 - math.exp(-3.0))
        assert abs(pm[0] - expected) / expected < 0.01


class TestDroopSteadyState:
    def test_zero_power(self):
        assert ds.droop_steady_state([_params()], 0.0, NOMINAL) == NOMINAL

    def test_single_unit(self):
        p = ds.DgParams(k_P=1.0, k_Q=1.0, k_v=1.0, tau_P=1.0, tau_Q=1.0)
        assert ds.droop_steady_state([p], 1.0, NOMINAL) == NOMINAL - 1.0

    def test_table_values(self):
        # oracle: sum(1/k_P) = 1/6e-5 + 1/3e-5 + 1/2e-5 + 1/1.5e-5
        params = [_params(k) for k in (6e-5, 3e-5, 2e-5, 1.5e-5)]
        inv_sum = 1 / 6e-5 + 1 / 3e-5 + 1 / 2e-5 + 1 / 1.5e-5
        assert abs(inv_sum - 166666.6666667) < 1e-4
        got = ds.droop_steady_state(params, 4e4, NOMINAL)
        np.testing.assert_allclose(NOMINAL - got, 4e4 / inv_sum)
        np.testing.assert_allclose(NOMINAL - got, 0.24, rtol=1e-9)


class TestSharingRatio:
    def test_equal_products(self):
        params = [_params(6e-5), _params(3e-5)]
        ratios = ds.sharing_ratio(np.array([1000.0, 2000.0]), params)
        np.testing.assert_allclose(ratios, np.ones((2, 2)))

    def test_zero_power_flagged_undefined(self):
        params = [_params(6e-5), _params(3e-5)]
        ratios = ds.sharing_ratio(np.array([1000.0, 0.0]), params)
        assert np.isnan(ratios[0, 1])
        assert not np.isnan(ratios[1, 0])


class TestDisturbanceRate:
    def test_constant_series_zero(self):
        pm = np.ones((50, 2)) * 1234.0
        rate = ds.disturbance_rate(pm, np.array([6e-5, 3e-5]), 1e-3)
        np.testing.assert_array_equal(rate, [0.0, 0.0])

    def test_single_step_rate(self):
        pm = np.zeros((10, 1))
        pm[5:] = 100.0
        rate = ds.disturbance_rate(pm, np.array([6e-5]), 1e-3)
        np.testing.assert_allclose(rate, [6e-5 * 100.0 / 1e-3])

    def test_exclusion_windows(self):
        pm = np.zeros((10, 1))
        pm[5:] = 100.0
        rate = ds.disturbance_rate(pm, np.array([6e-5]), 1e-3,
                                   exclude=[(0.004, 0.006)])
        np.testing.assert_array_equal(rate, [0.0])


class TestDroopEquilibrium:
    def test_matches_long_simulation(self):
        from conftest import four_dg_doc, make_scenario
        scn = make_scenario(four_dg_doc(duration=15.0, loads=(2500.0,) * 4,
                                        B=(0.1, 0.1, 0.1), tau_star=0.0))
        delta, v, P, Q = ds.droop_equilibrium(
            scn.electrical, scn.dg_params, *scn.load_profile().at(0.0),
            scn.nominal_omega, scn.nominal_vbar)
        # droop-weighted products equal across DGs
        kp = np.array([p.k_P for p in scn.dg_params])
        np.testing.assert_allclose(kp * P, kp[0] * P[0], rtol=1e-9)
        # voltages satisfy the droop voltage relation
        np.testing.assert_allclose(v, 220.0 - 4.2e-4 * Q, rtol=1e-9)
        # simulation started at the equilibrium stays there
        init = ds.InitialState(delta=delta, v=v, p_meas=P.copy(),
                               q_meas=Q.copy())
        traj = ds.run(scn, initial=init)
        np.testing.assert_allclose(traj.omega[-1], traj.omega[0], atol=1e-7)
        np.testing.assert_allclose(traj.P[-1], P, rtol=1e-6)
