import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adrc.analysis import (
    char_poly_exact,
    check_b_ratio,
    error_metrics,
    literal_controller_gains,
    metrics,
    peak_overshoot,
    ramp_disturbance_steady_state,
    ramp_steady_state_closed_form,
    simulate_ramp_eso,
    steady_std,
    verify_controller_poles,
    verify_observer_poles,
)
from adrc.core import controller_gains, observer_gains
from adrc.engine import run
from adrc.errors import ConfigError
from adrc.scenario_io import builtin


class TestPoles:
    @pytest.mark.parametrize("n,omega", [(2, 10), (4, 50)])
    def test_observer_pass(self, n, omega):
        res = verify_observer_poles(n, omega, 1e-6)
        assert res.passed and res.max_deviation == 0.0
        assert all(abs(lam + omega) <= 1e-6 * omega for lam in res.eigenvalues)

    def test_observer_perturbed_fails(self):
        l = observer_gains(2, 10.0)
        l[0] *= 1.1
        res = verify_observer_poles(2, 10.0, 1e-6, gains=l)
        assert not res.passed and res.max_deviation > 0.1

    @pytest.mark.parametrize("n,omega", [(2, 5), (1, 40)])
    def test_controller_pass(self, n, omega):
        assert verify_controller_poles(n, omega, 1e-6).passed

    def test_literal_ordering_fails(self):
        k = literal_controller_gains(2, 5.0)
        assert k.tolist() == [10.0, 25.0]
        res = verify_controller_poles(2, 5.0, 1e-6, gains=k)
        assert not res.passed and res.max_deviation > 1.0

    def test_float_gains_accepted(self):
        assert verify_observer_poles(3, 7.0, gains=observer_gains(3, 7.0)).passed
        assert verify_controller_poles(3, 7.0, gains=controller_gains(3, 7.0)).passed

    def test_float_eigensolver_would_not_resolve(self):
        # Motivates the exact check: a 5-fold pole splits far beyond 1e-6 under float64.
        from adrc.analysis import observer_error_matrix

        M = np.array(observer_error_matrix(4, observer_gains(4, 50.0)), dtype=float)
        assert np.max(np.abs(np.linalg.eigvals(M) + 50.0)) / 50.0 > 1e-6

    def test_bad_arguments(self):
        with pytest.raises(ConfigError):
            verify_observer_poles(2, 10.0, 0.0)
        with pytest.raises(ValueError):
            verify_controller_poles(2, 5.0, gains=[1.0])

    def test_char_poly(self):
        # [[0, 1], [-2, -3]] -> s^2 + 3 s + 2
        assert char_poly_exact([[0, 1], [-2, -3]]) == [1, 3, 2]

    @given(st.integers(1, 6), st.sampled_from([1, 5, 10, 40, 50, 3000, 0.3]))
    def test_identities_hold(self, n, omega):
        assert verify_observer_poles(n, omega).passed and verify_controller_poles(n, omega).passed


class TestRampOracle:
    def test_hand_solved(self):
        e1, d = ramp_disturbance_steady_state(1, 10.0, 1.0)
        assert e1 == pytest.approx(0.01, rel=1e-12) and d == pytest.approx(0.2, rel=1e-12)

    def test_no_excitation(self):
        assert ramp_disturbance_steady_state(3, 10.0, 0.0) == (0.0, 0.0)

    def test_n2(self):
        assert ramp_disturbance_steady_state(2, 20.0, 5.0)[1] == pytest.approx(0.75, rel=1e-12)

    @given(st.integers(1, 6), st.floats(0.5, 200), st.floats(-10, 10))
    def test_halving_doubles(self, n, omega, alpha):
        d1 = ramp_disturbance_steady_state(n, omega, alpha)[1]
        d2 = ramp_disturbance_steady_state(n, omega / 2, alpha)[1]
        assert d2 == pytest.approx(2 * d1, rel=1e-9, abs=1e-300)

    @given(st.integers(1, 6), st.floats(0.5, 200), st.floats(-10, 10))
    def test_solve_matches_closed_form(self, n, omega, alpha):
        got = ramp_disturbance_steady_state(n, omega, alpha)
        want = ramp_steady_state_closed_form(n, omega, alpha)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-300)

    @pytest.mark.parametrize("n", [1, 2])
    def test_simulated(self, n):
        _, d = simulate_ramp_eso(n, 10.0, 1.0)
        assert d == pytest.approx((n + 1) / 10.0, rel=0.01)

    def test_invalid(self):
        with pytest.raises(ConfigError):
            ramp_disturbance_steady_state(2, 0.0, 1.0)
        with pytest.raises(ConfigError):
            ramp_disturbance_steady_state(2, 1.0, math.inf)


class TestBRatio:
    def test_examples(self):
        assert check_b_ratio(1.0, 0.8, 4)
        assert not check_b_ratio(-1.0, 1.0, 2)
        assert not check_b_ratio(3.1, 1.0, 2)

    def test_bounds_are_open(self):
        assert not check_b_ratio(2.5, 1.0, 4) and check_b_ratio(2.4999, 1.0, 4)
        assert not check_b_ratio(0.0, 1.0, 1)

    def test_zero_estimate(self):
        with pytest.raises(ConfigError):
            check_b_ratio(1.0, 0.0, 2)


class TestMetrics:
    def test_zero_error(self):
        t = np.linspace(0, 1, 11)
        m = error_metrics(t, np.zeros(11), np.zeros(11), 0.0, 0.01)
        assert m.iae == m.ise == m.max_abs_error_after == 0.0
        assert m.settle_time == 0.0 and m.settled and m.practically_stabilized

    def test_exponential_iae(self):
        t = np.arange(0, 10.0 + 1e-9, 0.01)
        e = np.exp(-t)
        m = error_metrics(t, e, np.zeros_like(t), 7.5, 1e-3)
        assert m.iae == pytest.approx(1.0, abs=1e-3)
        assert m.ise == pytest.approx(0.5, abs=1e-3)
        assert m.settle_time == pytest.approx(-math.log(1e-3), abs=0.011)
        assert m.practically_stabilized and m.max_abs_error_after == pytest.approx(math.exp(-7.5))

    def test_noise_floor_unsettled(self):
        t = np.linspace(0, 1, 101)
        e = 0.1 * np.sin(50 * t) + 0.2
        m = error_metrics(t, e, np.ones_like(t), 0.5, 0.01)
        assert m.settle_time is None and not m.settled and not m.practically_stabilized

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        t = np.linspace(0, 3, 301)
        m = error_metrics(t, rng.normal(size=301), rng.normal(size=301), 1.0, 0.5)
        for v in (m.iae, m.ise, m.max_abs_error_after, m.peak_control, m.steady_state_error_band, m.control_std_after):
            assert v >= 0
        assert m.settle_time is None or m.settle_time <= 3.0

    def test_empty(self):
        with pytest.raises(ValueError):
            error_metrics([], [], [])

    def test_trace_helpers(self):
        tr = run(builtin("example1").replace(duration=2.0))
        m = metrics(tr, T=1.0, epsilon=0.01)
        assert m.peak_control <= 100.0 and m.T == 1.0
        assert peak_overshoot(tr) >= 0.0
        assert steady_std(tr, "u", 1.0) == pytest.approx(m.control_std_after)


def test_overshoot_trend_in_controller_bandwidth():
    # Unconstrained loop (the scaling argument ignores saturation), noiseless, step reference, t < 10 s.
    sc = builtin("example1").replace(duration=10.0)
    peaks = []
    for wc in (2.0, 5.0, 10.0):
        tr = run(sc.with_controllers(omega_c=wc, omega_o=10 * wc, saturation=None))
        peaks.append(peak_overshoot(tr))
    assert peaks[0] <= peaks[1] <= peaks[2]
