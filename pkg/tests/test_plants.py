import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adrc.errors import ConfigError, UnsupportedPlantError
from adrc.plants import (
    BuckConverter,
    CoupledTanks,
    DcMotor,
    GenericLinearPlant,
    LinearPlant,
    TcLabThermal,
    buck_load_disturbance,
    linearized_matrix,
    make_plant,
    plant_to_dict,
    require_phase_form,
)
from adrc.engine import rk4_plant_step

finite = st.floats(-1e3, 1e3)


class TestDerivative:
    def test_generic_linear_equilibrium(self):
        assert GenericLinearPlant().derivative(np.zeros(4), [0.0], [0.0], 0.0).tolist() == [0, 0, 0, 0]

    def test_generic_linear_rows(self):
        out = GenericLinearPlant().derivative([1.0, 2.0, 3.0, 4.0], [2.0], [70.0], 0.0)
        assert out.tolist() == [2.0, 3.0, 4.0, -(1 + 8 + 18 + 16) + 2.0 + 70.0]

    @given(st.lists(finite, min_size=4, max_size=4), st.lists(finite, min_size=4, max_size=4),
           finite, finite, finite, finite, st.floats(-5, 5))
    def test_linear_superposition(self, x1, x2, u1, u2, d1, d2, a):
        p = GenericLinearPlant()
        f = lambda x, u, d: p.derivative(x, [u], [d], 0.0)  # noqa: E731
        lhs = f(np.add(x1, np.multiply(a, x2)), u1 + a * u2, d1 + a * d2)
        rhs = f(x1, u1, d1) + a * f(x2, u2, d2)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)

    @given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2), finite, finite)
    def test_motor_superposition(self, x1, x2, u1, u2):
        p = DcMotor()
        lhs = p.derivative(np.add(x1, x2), [u1 + u2], [0.0], 0.0)
        rhs = p.derivative(x1, [u1], [0.0], 0.0) + p.derivative(x2, [u2], [0.0], 0.0)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            GenericLinearPlant().derivative(np.zeros(3), [0.0], [0.0], 0.0)
        with pytest.raises(ValueError):
            CoupledTanks().derivative([0.1, 0.1], [0.0], [0.0, 0.0], 0.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            GenericLinearPlant().derivative([math.nan, 0, 0, 0], [0.0], [0.0], 0.0)
        with pytest.raises(ValueError):
            BuckConverter().derivative([0, 0], [math.inf], [0.0], 0.0)


class TestOutput:
    def test_noiseless(self):
        x = np.array([0.5, 1.0, 2.0, 3.0])
        assert GenericLinearPlant().output(x).tolist() == [0.5]
        assert GenericLinearPlant().output(x, [0.0]).tolist() == [0.5]

    def test_additive_noise(self):
        assert GenericLinearPlant().output([0.5, 0, 0, 0], [0.01]).tolist() == [pytest.approx(0.51, abs=1e-15)]

    def test_tanks_two_outputs(self):
        assert CoupledTanks().output([0.1, 0.07], [0.001, -0.002]).tolist() == pytest.approx([0.101, 0.068])


class TestCoupledTanks:
    @given(st.floats(1e-6, 2.0))
    def test_symmetric_levels(self, h):
        p = CoupledTanks()
        out = p.derivative([h, h], [0.0, 0.0], [0.0, 0.0], 0.0)
        expected = -(p.a / p.c) * math.sqrt(2 * p.g * h)
        assert out[0] == out[1] == pytest.approx(expected, rel=1e-14)

    @given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0, 1e-3), st.floats(0, 1e-3))
    def test_channel_flow_conservation(self, h1, h2, u1, u2):
        p = CoupledTanks()
        q = p.channel_flow_rate(h1, h2)
        out = p.rhs(np.array([h1, h2]), np.array([u1, u2]), np.zeros(2), 0.0)
        own = np.array([-p.outflow_rate(h1) + u1 / p.c, -p.outflow_rate(h2) + u2 / p.c])
        if h1 > 0 and h2 > 0:
            np.testing.assert_allclose(out - own, [-q, q], rtol=1e-12, atol=1e-15)
        assert p.channel_flow_rate(h2, h1) == -q

    def test_empty_tank_does_not_drain(self):
        p = CoupledTanks()
        out = p.derivative([0.0, 0.1], [0.0, 0.0], [0.0, 0.0], 0.0)
        assert out[0] > 0  # fed from tank 2 through the channel
        out = p.derivative([0.0, 0.0], [0.0, 0.0], [-1.0, -1.0], 0.0)
        assert out.tolist() == [0.0, 0.0]

    def test_clip(self):
        assert CoupledTanks().clip_state(np.array([-1e-9, 0.2])).tolist() == [0.0, 0.2]

    def test_invalid(self):
        with pytest.raises(ConfigError):
            CoupledTanks(a=0.0)


class TestBuck:
    def test_input_gain(self):
        assert BuckConverter().input_gain() == pytest.approx(2e6, rel=1e-15)

    def test_load_current_examples(self):
        p = BuckConverter()
        assert buck_load_disturbance(p, 10.0, 0.0) == pytest.approx(0.1, rel=1e-12)
        assert buck_load_disturbance(p, 0.0, 0.013) == 0.0
        t_min = 3.0 / 80.0  # 40 pi t = 3 pi / 2
        assert buck_load_disturbance(p, 15.0, t_min) == pytest.approx(1.0, rel=1e-12)

    def test_nonpositive_load_rejected(self):
        from adrc.signals import Constant

        p = BuckConverter(load_resistance=Constant(-1.0))
        with pytest.raises(ValueError):
            buck_load_disturbance(p, 1.0, 0.0)

    def test_natural_frequency(self):
        p = BuckConverter(load_resistance=None)
        assert p.natural_frequency == pytest.approx(316.227766, rel=1e-8)
        lam = np.linalg.eigvals(linearized_matrix(p, np.zeros(2)))
        # |lambda|^2 = 1/(LC) for the second-order pair
        assert np.abs(lam).tolist() == pytest.approx([p.natural_frequency] * 2, rel=1e-6)

    def test_disturbance_matches_physical_model(self):
        # v_o'' from the physical two-state model equals the phase-form derivative.
        p = BuckConverter()
        v, dv, t, d = 9.0, 30.0, 0.0123, 0.4
        i_l = p.inductor_current([v, dv], t)
        di_l = (p.V_in * d - v) / p.L
        r_l = p.load_resistance(t)
        dr_l = p.load_resistance.derivative(t)
        ddv_physical = (di_l - dv / p.R - (dv / r_l - v * dr_l / r_l**2)) / p.C
        assert p.derivative([v, dv], [d], [0.0], t)[1] == pytest.approx(ddv_physical, rel=1e-12)
        assert i_l == pytest.approx(p.C * dv + v / p.R + v / r_l)

    def test_without_load_is_nominal(self):
        p = BuckConverter(load_resistance=None)
        LC = p.L * p.C
        out = p.derivative([5.0, 10.0], [0.3], [0.0], 0.0)
        assert out[1] == pytest.approx(-10.0 / (p.C * p.R) - 5.0 / LC + p.V_in / LC * 0.3)


class TestMotor:
    def test_default_ratio_admissible(self):
        from adrc.analysis import check_b_ratio

        assert DcMotor().input_gain() == pytest.approx(720.0)
        assert check_b_ratio(DcMotor().input_gain(), 600.0, 2)

    def test_dc_gain(self):
        p = DcMotor()
        a0, _ = p.coefficients
        # steady speed for 1 V: k_phi / (R_a b_f + k_phi^2)
        assert p.input_gain() / a0 == pytest.approx(p.k_phi / (p.R_a * p.b_f + p.k_phi**2))

    def test_invalid(self):
        with pytest.raises(ConfigError):
            DcMotor(J=0.0)
        DcMotor(b_f=0.0)


class TestTcLab:
    def test_equilibrium(self):
        p = TcLabThermal()
        x = p.initial_state()
        assert x.tolist() == [p.T_inf, p.T_inf]
        assert np.abs(p.derivative(x, [0.0, 0.0], [0.0, 0.0], 0.0)).max() < 1e-15

    @given(st.floats(0, 100), st.floats(0, 100))
    def test_coupling_antisymmetry(self, T1, T2):
        p = TcLabThermal()
        mc = p.m * p.C_p
        out = p.derivative([T1, T2], [0.0, 0.0], [0.0, 0.0], 0.0)
        q = p.heat_exchange(T1, T2)
        np.testing.assert_allclose(out[0] - p._ambient_exchange(T1) / mc, q / mc, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(out[1] - p._ambient_exchange(T2) / mc, -q / mc, rtol=1e-9, atol=1e-12)
        assert p.heat_exchange(T2, T1) == pytest.approx(-q, rel=1e-12, abs=1e-15)

    def test_heats_up(self):
        out = TcLabThermal().derivative([23.0, 23.0], [50.0, 0.0], [0.0, 0.0], 0.0)
        assert out[0] > 0 and out[1] == pytest.approx(0.0, abs=1e-15)


class TestGenericLinear:
    def test_step_response_dc_gain(self):
        p = GenericLinearPlant()
        x = np.zeros(4)
        dt = 1e-3
        for k in range(20000):
            x = rk4_plant_step(p, x, [1.0], [0.0], k * dt, dt)
        assert abs(x[0] - 1.0) < 1e-4


class TestRegistry:
    def test_make_plant(self):
        p = make_plant("coupled_tanks", {"a": 1e-4})
        assert isinstance(p, CoupledTanks) and p.a == 1e-4

    def test_unknown(self):
        with pytest.raises(ConfigError, match="plant.type"):
            make_plant("nope")
        with pytest.raises(ConfigError, match="plant.params"):
            make_plant("dc_motor", {"inertia": 1.0})

    @pytest.mark.parametrize("cls", [GenericLinearPlant, CoupledTanks, BuckConverter, DcMotor, TcLabThermal])
    def test_dict_round_trip(self, cls):
        p = cls()
        d = plant_to_dict(p)
        assert make_plant(d["type"], d["params"]) == p

    def test_phase_form(self):
        assert require_phase_form(LinearPlant((0.0, 0.0, 0.0))) == 3
        assert require_phase_form(BuckConverter()) == 2
        with pytest.raises(UnsupportedPlantError):
            require_phase_form(CoupledTanks())
