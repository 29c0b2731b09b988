"""Continuous-time plant models for closed-loop simulation.

All plants share the :class:`PlantModel` interface. States, inputs and
disturbances are 1-D arrays; the external disturbance ``d_star`` enters
additively in the highest-derivative equation of each output channel.

Plants are registered by name so scenario files can select them; parameters
are the dataclass fields of each plant.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
from typing import ClassVar, Dict, Optional, Tuple, Type

import numpy as np

from .errors import ConfigError, UnsupportedPlantError
from .signals import Harmonic, Signal, signal_from_dict

PLANTS: Dict[str, Type["PlantModel"]] = {}

KELVIN_OFFSET = 273.15


class PlantModel(ABC):
    """Interface of a plant ``x' = f(x, u, d*, t)``, ``y* = h(x) + w``.

    ``phase_order`` is set for single-output plants whose state is the
    phase-variable vector ``[x, x', ..., x^(n-1)]`` of the controlled
    variable; those plants expose the true total disturbance.
    """

    name: ClassVar[str] = ""
    state_dim: ClassVar[int] = 1
    input_dim: ClassVar[int] = 1
    output_dim: ClassVar[int] = 1
    phase_order: ClassVar[Optional[int]] = None

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.name:
            PLANTS[cls.name] = cls

    def derivative(self, x, u, d_star, t) -> np.ndarray:
        """State derivative; validates shapes and finiteness first."""
        x, u, d_star = self._check(x, u, d_star)
        return self.rhs(x, u, d_star, t)

    @abstractmethod
    def rhs(self, x, u, d_star, t) -> np.ndarray:
        """Unchecked right-hand side on float arrays of the right shape."""

    def controlled(self, x) -> np.ndarray:
        """Noise-free controlled variables (one per output channel)."""
        return np.asarray(x, dtype=float)[: self.output_dim].copy()

    def output(self, x, w=None) -> np.ndarray:
        y = self.controlled(x)
        if w is not None:
            y = y + np.asarray(w, dtype=float)
        return y

    def clip_state(self, x) -> np.ndarray:
        """Project a state back onto the physical domain after an integration step."""
        return x

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def phase_coefficients(self):
        """``(a, gain)`` if the plant is ``x^(n) = -a . x + gain * u + d*`` exactly, else None."""
        return None

    def params(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Signal):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def _check(self, x, u, d_star):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float).reshape(-1)
        d_star = np.asarray(d_star, dtype=float).reshape(-1)
        if x.shape != (self.state_dim,) or u.shape != (self.input_dim,) or d_star.shape != (self.output_dim,):
            raise ValueError(
                f"{self.name}: expected x{(self.state_dim,)}, u{(self.input_dim,)}, d*{(self.output_dim,)}; "
                f"got {x.shape}, {u.shape}, {d_star.shape}"
            )
        if not (np.isfinite(x).all() and np.isfinite(u).all() and np.isfinite(d_star).all()):
            raise ValueError(f"{self.name}: non-finite state or input")
        return x, u, d_star


def make_plant(name: str, params: Optional[dict] = None) -> PlantModel:
    """Instantiate a registered plant, rejecting unknown parameters."""
    if name not in PLANTS:
        raise ConfigError(f"unknown plant {name!r}; known: {sorted(PLANTS)}", "plant.type")
    cls = PLANTS[name]
    params = dict(params or {})
    known = {f.name for f in fields(cls)}
    unknown = set(params) - known
    if unknown:
        raise ConfigError(f"unknown parameters {sorted(unknown)} for plant {name!r}", "plant.params")
    for f in fields(cls):
        if f.name in params and f.metadata.get("signal"):
            params[f.name] = None if params[f.name] is None else signal_from_dict(params[f.name], f"plant.params.{f.name}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(str(exc), "plant.params") from None


def _phase_derivative(x, coefficients, gain, u, d):
    out = np.empty_like(x)
    out[:-1] = x[1:]
    out[-1] = -np.dot(coefficients, x) + gain * u + d
    return out


@dataclass(frozen=True)
class LinearPlant(PlantModel):
    """``x^(n) = -sum(a_i x^(i)) + gain * u + d*`` in phase variables.

    ``coefficients`` lists ``a_0 .. a_{n-1}``; the transfer function is
    ``gain / (s^n + a_{n-1} s^{n-1} + ... + a_0)``. All-zero coefficients give
    a pure integrator chain.
    """

    name: ClassVar[str] = "linear"
    coefficients: Tuple[float, ...] = (0.0,)
    gain: float = 1.0

    def __post_init__(self):
        coefficients = tuple(float(c) for c in self.coefficients)
        if not coefficients:
            raise ConfigError("at least one coefficient required", "plant.params.coefficients")
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "gain", float(self.gain))
        object.__setattr__(self, "_coeff_array", np.array(coefficients))

    @property
    def state_dim(self):
        return len(self.coefficients)

    @property
    def phase_order(self):
        return len(self.coefficients)

    def rhs(self, x, u, d_star, t):
        return _phase_derivative(x, self._coeff_array, self.gain, u[0], d_star[0])

    def phase_coefficients(self):
        return self._coeff_array.copy(), self.gain

    def input_gain(self, x=None, t=0.0):
        return self.gain


@dataclass(frozen=True)
class GenericLinearPlant(LinearPlant):
    """Fourth-order benchmark ``1 / (s^4 + 4 s^3 + 6 s^2 + 4 s + 1)``."""

    name: ClassVar[str] = "generic_linear"
    coefficients: Tuple[float, ...] = (1.0, 4.0, 6.0, 4.0)
    gain: float = 1.0


@dataclass(frozen=True)
class CoupledTanks(PlantModel):
    """Two tanks joined by a channel; inputs are inlet flows [m^3/s], outputs levels [m].

    Levels are clamped at zero: an empty tank has no outflow and cannot drain.
    The disturbances ``d_star`` are in m/s and add to the level rates.
    """

    name: ClassVar[str] = "coupled_tanks"
    state_dim: ClassVar[int] = 2
    input_dim: ClassVar[int] = 2
    output_dim: ClassVar[int] = 2
    a: float = 7.5e-5  # pipe cross-section [m^2]
    c: float = 1.2e-2  # tank cross-section [m^2]
    g: float = 9.81

    def __post_init__(self):
        for f in fields(self):
            if not float(getattr(self, f.name)) > 0:
                raise ConfigError("must be > 0", f"plant.params.{f.name}")
            object.__setattr__(self, f.name, float(getattr(self, f.name)))

    def outflow_rate(self, h):
        return self.a / self.c * math.sqrt(2.0 * self.g * max(h, 0.0))

    def channel_flow_rate(self, h1, h2):
        """Level rate carried from tank 1 to tank 2 through the channel."""
        eps = max(h1, 0.0) - max(h2, 0.0)
        return math.copysign(self.a / self.c * math.sqrt(2.0 * self.g * abs(eps)), eps) if eps else 0.0

    def rhs(self, x, u, d_star, t):
        h1, h2 = x
        q = self.channel_flow_rate(h1, h2)
        dh = np.array(
            [
                -self.outflow_rate(h1) - q + u[0] / self.c + d_star[0],
                -self.outflow_rate(h2) + q + u[1] / self.c + d_star[1],
            ]
        )
        dh[(x <= 0.0) & (dh < 0.0)] = 0.0
        return dh

    def clip_state(self, x):
        return np.maximum(x, 0.0)

    def input_gain(self, x=None, t=0.0):
        return 1.0 / self.c


def _default_load():
    return Harmonic(amplitude=85.0, angular_frequency=40.0 * math.pi, offset=100.0)


@dataclass(frozen=True)
class BuckConverter(PlantModel):
    """Averaged DC-DC buck converter with a time-varying parallel load.

    State is ``[v_o, v_o']`` where ``v_o' = (i_L - v_o/R - v_o/R_L(t)) / C``.
    The load current through ``R_L(t)`` acts as a matched disturbance in the
    second-order voltage equation; ``load_resistance=None`` removes it.
    Input is the duty ratio.
    """

    name: ClassVar[str] = "buck_converter"
    state_dim: ClassVar[int] = 2
    phase_order: ClassVar[int] = 2
    V_in: float = 20.0
    L: float = 0.01
    C: float = 0.001
    R: float = 50.0
    load_resistance: Optional[Signal] = field(default_factory=_default_load, metadata={"signal": True})

    def __post_init__(self):
        for name in ("V_in", "L", "C", "R"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError("must be > 0", f"plant.params.{name}")
            object.__setattr__(self, name, float(getattr(self, name)))

    def load_current(self, v_o, t):
        if self.load_resistance is None:
            return 0.0
        r_l = self.load_resistance(t)
        if not r_l > 0:
            raise ValueError(f"load resistance must be > 0, got {r_l!r} at t={t!r}")
        return v_o / r_l

    def load_disturbance(self, x, t):
        """Acceleration term induced by the load current: ``-(1/C) d/dt(v_o / R_L)``."""
        if self.load_resistance is None:
            return 0.0
        v, dv = x
        r_l = self.load_resistance(t)
        if not r_l > 0:
            raise ValueError(f"load resistance must be > 0, got {r_l!r} at t={t!r}")
        dr_l = self.load_resistance.derivative(t, 1)
        return -(dv / r_l - v * dr_l / r_l**2) / self.C

    def inductor_current(self, x, t):
        v, dv = x
        return self.C * dv + v / self.R + self.load_current(v, t)

    def rhs(self, x, u, d_star, t):
        v, dv = x
        LC = self.L * self.C
        ddv = -dv / (self.C * self.R) - v / LC + self.V_in / LC * u[0] + self.load_disturbance(x, t) + d_star[0]
        return np.array([dv, ddv])

    def input_gain(self, x=None, t=0.0):
        return self.V_in / (self.C * self.L)

    @property
    def natural_frequency(self):
        return 1.0 / math.sqrt(self.L * self.C)


def buck_load_disturbance(plant: BuckConverter, v_o, t):
    """Load current [A] drawn by the time-varying resistance at voltage ``v_o``."""
    return plant.load_current(v_o, t)


@dataclass(frozen=True)
class DcMotor(PlantModel):
    """Armature-controlled DC motor, velocity output, state ``[omega, omega']``.

    The default parameters are placeholders for a small gearmotor, not
    measured values; override them in the scenario.
    """

    name: ClassVar[str] = "dc_motor"
    state_dim: ClassVar[int] = 2
    phase_order: ClassVar[int] = 2
    R_a: float = 2.4  # armature resistance [ohm]
    L_a: float = 0.05  # armature inductance [H]
    J: float = 0.02  # rotor inertia [kg m^2]
    b_f: float = 0.01  # viscous friction [Nm s/rad]
    k_phi: float = 0.72  # motor constant [Vs/rad]

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not value > 0 and not (f.name == "b_f" and value == 0):
                raise ConfigError("must be > 0", f"plant.params.{f.name}")
            object.__setattr__(self, f.name, value)

    @property
    def coefficients(self):
        LJ = self.L_a * self.J
        return ((self.R_a * self.b_f + self.k_phi**2) / LJ, (self.R_a * self.J + self.L_a * self.b_f) / LJ)

    def rhs(self, x, u, d_star, t):
        return _phase_derivative(x, np.array(self.coefficients), self.input_gain(), u[0], d_star[0])

    def phase_coefficients(self):
        return np.array(self.coefficients), self.input_gain()

    def input_gain(self, x=None, t=0.0):
        return self.k_phi / (self.L_a * self.J)


@dataclass(frozen=True)
class TcLabThermal(PlantModel):
    """Two-heater thermal lab, temperatures in degC, heater inputs in percent.

    Radiative terms use absolute temperature. The default parameters are
    typical values for the kit and should be treated as placeholders.
    """

    name: ClassVar[str] = "tclab"
    state_dim: ClassVar[int] = 2
    input_dim: ClassVar[int] = 2
    output_dim: ClassVar[int] = 2
    C_p: float = 500.0  # heat capacity [J/(kg K)]
    U: float = 10.0  # heat transfer coefficient [W/(m^2 K)]
    A: float = 1.2e-3  # area not between heaters [m^2]
    A_s: float = 2.0e-4  # area between heaters [m^2]
    emissivity: float = 0.9
    m: float = 0.004  # mass [kg]
    sigma: float = 5.67e-8  # Stefan-Boltzmann [W/(m^2 K^4)]
    alpha_1: float = 0.01  # heater 1 factor [W/%]
    alpha_2: float = 0.0075  # heater 2 factor [W/%]
    T_inf: float = 23.0  # ambient [degC]

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if f.name != "T_inf" and not value > 0:
                raise ConfigError("must be > 0", f"plant.params.{f.name}")
            object.__setattr__(self, f.name, value)

    def heat_exchange(self, T1, T2):
        """``Q_12 = Q_C12 + Q_R12``, heat flow [W] from heater 2 into heater 1."""
        k1, k2 = T1 + KELVIN_OFFSET, T2 + KELVIN_OFFSET
        convective = self.U * self.A_s * (T2 - T1)
        radiative = self.emissivity * self.sigma * self.A * (k2**4 - k1**4)
        return convective + radiative

    def _ambient_exchange(self, T):
        k, k_inf = T + KELVIN_OFFSET, self.T_inf + KELVIN_OFFSET
        return self.U * self.A * (self.T_inf - T) + self.emissivity * self.sigma * self.A * (k_inf**4 - k**4)

    def rhs(self, x, u, d_star, t):
        T1, T2 = x
        q12 = self.heat_exchange(T1, T2)
        mc = self.m * self.C_p
        return np.array(
            [
                (self._ambient_exchange(T1) + q12 + self.alpha_1 * u[0]) / mc + d_star[0],
                (self._ambient_exchange(T2) - q12 + self.alpha_2 * u[1]) / mc + d_star[1],
            ]
        )

    def initial_state(self):
        return np.full(2, self.T_inf)

    def input_gain(self, x=None, t=0.0):
        mc = self.m * self.C_p
        return np.array([self.alpha_1 / mc, self.alpha_2 / mc])


def plant_to_dict(plant: PlantModel) -> dict:
    return {"type": plant.name, "params": plant.params()}


def linearized_matrix(plant: PlantModel, x=None, t=0.0, eps=1e-6) -> np.ndarray:
    """Central-difference Jacobian of the state derivative at ``x`` with zero input."""
    x = plant.initial_state() if x is None else np.asarray(x, dtype=float)
    u = np.zeros(plant.input_dim)
    d = np.zeros(plant.output_dim)
    J = np.empty((plant.state_dim, plant.state_dim))
    for j in range(plant.state_dim):
        dx = np.zeros_like(x)
        h = eps * max(1.0, abs(x[j]))
        dx[j] = h
        J[:, j] = (plant.derivative(x + dx, u, d, t) - plant.derivative(x - dx, u, d, t)) / (2 * h)
    return J


def require_phase_form(plant: PlantModel) -> int:
    if plant.phase_order is None or plant.output_dim != 1:
        raise UnsupportedPlantError(f"plant {plant.name!r} does not expose a phase-variable SISO model")
    return plant.phase_order
