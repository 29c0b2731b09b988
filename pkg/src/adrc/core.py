"""Continuous-time ADRC function block.

The block works in the control-error domain: its input is the measured
control error ``e = x_d - y*`` and its output is the plant input ``u``.
Internally an extended state observer (ESO) of order ``n + 1`` estimates
the error derivatives and the lumped total disturbance, and a
bandwidth-parametrized state feedback cancels the disturbance estimate.

Sign convention: the user-facing ``b_hat`` estimates the *plant* input gain
``b*``. In the error domain the input gain is ``-b*``, so the observer is
driven with ``-b_hat`` and the control law reads
``u = (k . e_hat + d_hat) / b_hat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, DivergenceError

ParamSource = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class CanonicalMatrices:
    """Shift matrix and unit vectors of dimension ``m``.

    ``d`` has its single one in position ``m - 1`` (1-based). It is not
    defined for ``m = 1``; in that case ``d = [0]`` and ``d_defined`` is
    False.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    d_defined: bool = True


def canonical_matrices(m: int) -> CanonicalMatrices:
    if int(m) != m or m < 1:
        raise ConfigError(f"dimension must be a positive integer, got {m!r}", "m")
    m = int(m)
    A = np.eye(m, k=1)
    b = np.zeros(m)
    b[-1] = 1.0
    c = np.zeros(m)
    c[0] = 1.0
    d = np.zeros(m)
    if m >= 2:
        d[-2] = 1.0
    return CanonicalMatrices(A=A, b=b, c=c, d=d, d_defined=m >= 2)


def _check_order(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ConfigError(f"order must be an integer >= 1, got {n!r}", "n")
    return int(n)


def _check_bandwidth(omega, key):
    if not omega > 0 or not math.isfinite(omega):
        raise ConfigError(f"bandwidth must be finite and > 0, got {omega!r}", key)


def observer_gains(n: int, omega_o) -> np.ndarray:
    """Observer gains ``l_i = C(n+1, i) * omega_o**i`` for ``i = 1..n+1``.

    These are the coefficients of ``(s + omega_o)**(n+1)``, which places
    every eigenvalue of ``A - l c^T`` at ``-omega_o``. Exact rational
    bandwidths (``fractions.Fraction``) give an object array of exact gains.
    """
    n = _check_order(n)
    _check_bandwidth(omega_o, "omega_o")
    return np.array([math.comb(n + 1, i) * omega_o**i for i in range(1, n + 2)])


def controller_gains(n: int, omega_c) -> np.ndarray:
    """Controller gains ``k_i = C(n, i-1) * omega_c**(n-i+1)``.

    The ordering matches the state vector ``[e, e', ..., e^(n-1)]``, so
    ``A_n - b_n k`` has characteristic polynomial ``(s + omega_c)**n``.
    """
    n = _check_order(n)
    _check_bandwidth(omega_c, "omega_c")
    return np.array([math.comb(n, i - 1) * omega_c ** (n - i + 1) for i in range(1, n + 1)])


@dataclass(frozen=True)
class GainVectors:
    l: np.ndarray
    k: np.ndarray

    @classmethod
    def from_bandwidths(cls, n, omega_o, omega_c):
        return cls(l=observer_gains(n, omega_o), k=controller_gains(n, omega_c))


def eso_derivative(z_hat, y, u_applied, b_hat, l):
    """Right-hand side of the extended state observer.

    ``b_hat`` is the error-domain input gain here. ``z_hat`` holds
    ``[e_1 .. e_n, d]``.
    """
    z_hat = np.asarray(z_hat, dtype=float)
    l = np.asarray(l, dtype=float)
    if z_hat.ndim != 1 or z_hat.shape != l.shape or z_hat.size < 2:
        raise ValueError(f"dimension mismatch: z_hat {z_hat.shape}, l {l.shape}")
    return _eso_rhs(z_hat, y, b_hat * u_applied, l)


def _eso_rhs(z_hat, y, bu, l):
    z_dot = l * (y - z_hat[0])
    z_dot[:-1] += z_hat[1:]
    z_dot[-2] += bu
    return z_dot


@dataclass(frozen=True)
class EsoState:
    z_hat: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, n, t=0.0):
        return cls(np.zeros(_check_order(n) + 1), t)

    @property
    def d_hat(self):
        return float(self.z_hat[-1])


def eso_step(eso: EsoState, y, u_applied, b_hat, l, dt) -> EsoState:
    """Advance the observer by one RK4 step with ``y`` and ``u`` held."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    z = np.asarray(eso.z_hat, dtype=float)
    l = np.asarray(l, dtype=float)
    if z.ndim != 1 or z.shape != l.shape or z.size < 2:
        raise ValueError(f"dimension mismatch: z_hat {z.shape}, l {l.shape}")
    bu = b_hat * u_applied
    k1 = _eso_rhs(z, y, bu, l)
    k2 = _eso_rhs(z + 0.5 * dt * k1, y, bu, l)
    k3 = _eso_rhs(z + 0.5 * dt * k2, y, bu, l)
    k4 = _eso_rhs(z + dt * k3, y, bu, l)
    z_next = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    t_next = eso.t + dt
    if not np.isfinite(z_next).all():
        raise DivergenceError(t_next, "z_hat")
    return EsoState(z_next, t_next)


def rk4_propagator(l, b_hat, dt):
    """Matrices ``(P, q_y, q_u)`` with ``z_next = P z + q_y y + q_u u`` for one RK4 step.

    With ``y`` and ``u`` held the observer is linear time-invariant, so a
    classical RK4 step collapses to a fixed affine map. ``b_hat`` is the
    error-domain gain.
    """
    l = np.asarray(l, dtype=float)
    m = l.size
    H = np.eye(m, k=1) - np.outer(l, np.eye(m)[0])
    hH = dt * H
    I = np.eye(m)
    hH2 = hH @ hH
    hH3 = hH2 @ hH
    P = I + hH + hH2 / 2.0 + hH3 / 6.0 + hH3 @ hH / 24.0
    Q = dt * (I + hH / 2.0 + hH2 / 6.0 + hH3 / 24.0)
    return P, Q @ l, Q[:, m - 2] * b_hat


def raw_control(z_hat, k, b_hat_user) -> float:
    """Unconstrained control ``u* = (k . e_hat + d_hat) / b_hat``."""
    if b_hat_user == 0:
        raise ConfigError("input gain estimate must be nonzero", "b_hat")
    z_hat = np.asarray(z_hat, dtype=float)
    return float((np.dot(k, z_hat[:-1]) + z_hat[-1]) / b_hat_user)


def apply_saturation(u_star, limits: Optional[Tuple[float, float]] = None) -> float:
    if limits is None:
        return u_star
    u_min, u_max = limits
    return min(max(u_star, u_min), u_max)


def apply_anti_peaking(u_sat, t, T_d: Optional[float] = None) -> float:
    if T_d is None or t > T_d:
        return u_sat
    return 0.0


def admissible_gain_ratio_bounds(n: int) -> Tuple[float, float]:
    """Open interval containing every admissible ratio ``b / b_hat``."""
    n = _check_order(n)
    return (0.0, 2.0 + 2.0 / n)


def _is_constant(source):
    return not callable(source)


@dataclass(frozen=True)
class AdrcConfig:
    """Parameters of one ADRC block.

    ``b_hat``, ``omega_o`` and ``omega_c`` are either constants or callables
    of time evaluated once per controller step (external sources).
    """

    n: int
    b_hat: ParamSource
    omega_o: ParamSource
    omega_c: ParamSource
    sample_time: float
    saturation: Optional[Tuple[float, float]] = None
    anti_peaking: Optional[float] = None

    def __post_init__(self):
        _check_order(self.n)
        if _is_constant(self.b_hat):
            _check_b_hat(self.b_hat)
        for key in ("omega_o", "omega_c"):
            value = getattr(self, key)
            if _is_constant(value):
                _check_bandwidth(value, key)
        if not (self.sample_time > 0 and math.isfinite(self.sample_time)):
            raise ConfigError(f"must be > 0, got {self.sample_time!r}", "sample_time")
        if self.saturation is not None:
            if len(self.saturation) != 2:
                raise ConfigError("expected a (u_min, u_max) pair", "saturation")
            u_min, u_max = (float(v) for v in self.saturation)
            if not u_min < u_max:
                raise ConfigError(
                    f"admissible limits require u_min < u_max, got ({u_min}, {u_max})",
                    "saturation",
                )
            object.__setattr__(self, "saturation", (u_min, u_max))
        if self.anti_peaking is not None and not self.anti_peaking > 0:
            raise ConfigError(f"T_d must be > 0, got {self.anti_peaking!r}", "anti_peaking")

    def evaluate(self, t):
        """Return ``(b_hat, omega_o, omega_c)`` at time ``t``."""
        b_hat = _evaluate(self.b_hat, t)
        omega_o = _evaluate(self.omega_o, t)
        omega_c = _evaluate(self.omega_c, t)
        _check_b_hat(b_hat)
        _check_bandwidth(omega_o, "omega_o")
        _check_bandwidth(omega_c, "omega_c")
        return b_hat, omega_o, omega_c

    def replace(self, **changes):
        return replace(self, **changes)


def _evaluate(source, t):
    return float(source(t)) if callable(source) else float(source)


def _check_b_hat(b_hat):
    if b_hat == 0 or not math.isfinite(b_hat):
        raise ConfigError(f"must be finite and nonzero, got {b_hat!r}", "b_hat")


@dataclass
class AdrcBlock:
    """Sample-by-sample ADRC controller: ESO, control law, saturation, anti-peaking.

    Not thread-safe; use one block per control channel.
    """

    config: AdrcConfig
    eso: EsoState = None
    matrices: CanonicalMatrices = field(init=False)
    gains: GainVectors = field(init=False)
    u_star: float = field(init=False, default=0.0)

    def __post_init__(self):
        n = self.config.n
        if self.eso is None:
            self.eso = EsoState.zeros(n)
        elif self.eso.z_hat.shape != (n + 1,):
            raise ConfigError(f"ESO state must have length {n + 1}", "eso")
        self.matrices = canonical_matrices(n + 1)
        self._b_hat, self._omega_o, self._omega_c = self.config.evaluate(self.eso.t)
        self.gains = GainVectors.from_bandwidths(n, self._omega_o, self._omega_c)
        self._propagator = None
        self._constant = all(_is_constant(getattr(self.config, k)) for k in ("b_hat", "omega_o", "omega_c"))

    @property
    def b_hat(self):
        return self._b_hat

    @property
    def omega_o(self):
        return self._omega_o

    @property
    def omega_c(self):
        return self._omega_c

    def _refresh(self, t):
        if self._constant:
            return
        b_hat, omega_o, omega_c = self.config.evaluate(t)
        n = self.config.n
        if omega_o != self._omega_o:
            self.gains = GainVectors(observer_gains(n, omega_o), self.gains.k)
            self._propagator = None
        if b_hat != self._b_hat:
            self._propagator = None
        if omega_c != self._omega_c:
            self.gains = GainVectors(self.gains.l, controller_gains(n, omega_c))
        self._b_hat, self._omega_o, self._omega_c = b_hat, omega_o, omega_c

    def update(self, e_measured, t) -> float:
        """Compute the control for time ``t`` and advance the observer one sample."""
        if not math.isfinite(e_measured):
            raise DivergenceError(t, "e")
        self._refresh(t)
        cfg = self.config
        self.u_star = raw_control(self.eso.z_hat, self.gains.k, self._b_hat)
        if not math.isfinite(self.u_star):
            raise DivergenceError(t, "u")
        u_sat = apply_saturation(self.u_star, cfg.saturation)
        u_out = apply_anti_peaking(u_sat, t, cfg.anti_peaking)
        # ESO sees the signal actually applied to the plant.
        if self._propagator is None:
            self._propagator = rk4_propagator(self.gains.l, -self._b_hat, cfg.sample_time)
        P, q_y, q_u = self._propagator
        z_next = P @ self.eso.z_hat + q_y * e_measured + q_u * u_out
        if not np.isfinite(z_next).all():
            raise DivergenceError(t + cfg.sample_time, "z_hat")
        self.eso = EsoState(z_next, t + cfg.sample_time)
        return u_out


def adrc_update(block: AdrcBlock, e_measured, t) -> float:
    return block.update(e_measured, t)
