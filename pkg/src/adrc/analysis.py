"""Verification oracles and control-performance metrics.

Pole checks work in exact rational arithmetic: the characteristic polynomial
of the closed-loop matrix is built from ``Fraction`` entries and shifted to
``s = omega * (r - 1)``, so a correctly placed multiple pole shows up as the
exact polynomial ``r**m``. Floating-point eigenvalue solvers cannot resolve a
pole of multiplicity ``m`` better than about ``eps**(1/m)``, which is far
coarser than the 1e-6 tolerance used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    EsoState,
    admissible_gain_ratio_bounds,
    canonical_matrices,
    controller_gains,
    eso_step,
    observer_gains,
)
from .engine import Trace
from .errors import ConfigError


@dataclass(frozen=True)
class PoleCheck:
    passed: bool
    max_deviation: float  # max |lambda + omega| / omega
    eigenvalues: Tuple[complex, ...]


def _exact(value):
    return value if isinstance(value, Fraction) else Fraction(value)


def char_poly_exact(M) -> List[Fraction]:
    """Monic characteristic polynomial coefficients, highest power first (Faddeev-LeVerrier)."""
    m = len(M)
    M = [[_exact(v) for v in row] for row in M]
    coeffs = [Fraction(1)]
    N = [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    for k in range(1, m + 1):
        MN = [[sum(M[i][p] * N[p][j] for p in range(m)) for j in range(m)] for i in range(m)]
        c = -sum(MN[i][i] for i in range(m)) / k
        coeffs.append(c)
        N = [[MN[i][j] + (c if i == j else 0) for j in range(m)] for i in range(m)]
    return coeffs


def _shift_scale(coeffs, omega):
    """Coefficients of ``q(r) = p(omega * (r - 1)) / omega**m``; roots are ``(lambda + omega) / omega``."""
    m = len(coeffs) - 1
    q = [Fraction(0)] * (m + 1)  # highest power first
    for i, a in enumerate(coeffs):
        power = m - i
        scale = a * omega ** power / omega**m
        for j in range(power + 1):
            # (r - 1)**power = sum C(power, j) r**j (-1)**(power - j)
            q[m - j] += scale * math.comb(power, j) * (-1) ** (power - j)
    return q


def _pole_check(M, omega, tol, m) -> PoleCheck:
    omega = _exact(omega)
    q = _shift_scale(char_poly_exact(M), omega)
    if all(c == 0 for c in q[1:]):
        deviation = 0.0
        rel_roots = np.zeros(m, dtype=complex)
    else:
        rel_roots = np.roots([float(c) for c in q]).astype(complex)
        deviation = float(np.max(np.abs(rel_roots)))
    eig = tuple(complex(float(omega) * (r - 1.0)) for r in rel_roots)
    return PoleCheck(deviation <= tol, deviation, eig)


def observer_error_matrix(n, l):
    """``A_{n+1} - l c^T`` with exact entries."""
    mats = canonical_matrices(n + 1)
    l = [_exact(v) for v in l]
    return [[_exact(mats.A[i, j]) - l[i] * _exact(mats.c[j]) for j in range(n + 1)] for i in range(n + 1)]


def controller_loop_matrix(n, k):
    """``A_n - b_n k^T`` with exact entries."""
    mats = canonical_matrices(n)
    k = [_exact(v) for v in k]
    return [[_exact(mats.A[i, j]) - _exact(mats.b[i]) * k[j] for j in range(n)] for i in range(n)]


def verify_observer_poles(n, omega_o, tol=1e-6, gains=None) -> PoleCheck:
    """Check that every eigenvalue of ``A_{n+1} - l c^T`` lies within ``tol * omega_o`` of ``-omega_o``."""
    if not tol > 0:
        raise ConfigError("must be > 0", "tol")
    l = observer_gains(n, _exact(omega_o)) if gains is None else gains
    if len(l) != n + 1:
        raise ValueError(f"expected {n + 1} observer gains, got {len(l)}")
    return _pole_check(observer_error_matrix(n, l), omega_o, tol, n + 1)


def verify_controller_poles(n, omega_c, tol=1e-6, gains=None) -> PoleCheck:
    """Check that every eigenvalue of ``A_n - b_n k^T`` lies within ``tol * omega_c`` of ``-omega_c``."""
    if not tol > 0:
        raise ConfigError("must be > 0", "tol")
    k = controller_gains(n, _exact(omega_c)) if gains is None else gains
    if len(k) != n:
        raise ValueError(f"expected {n} controller gains, got {len(k)}")
    return _pole_check(controller_loop_matrix(n, k), omega_c, tol, n)


def literal_controller_gains(n, omega_c):
    """``k_i = C(n, i) * omega_c**i``: the coefficient set indexed low-to-high instead of by state."""
    return np.array([math.comb(n, i) * omega_c**i for i in range(1, n + 1)])


def ramp_disturbance_steady_state(n, omega_o, alpha) -> Tuple[float, float]:
    """Steady observation error ``(e1_tilde, d_tilde)`` under a total disturbance of constant slope ``alpha``.

    Solved numerically from ``0 = (A - l c^T) z + b alpha``.
    """
    if not (omega_o > 0 and math.isfinite(omega_o)):
        raise ConfigError("must be finite and > 0", "omega_o")
    if not math.isfinite(alpha):
        raise ConfigError("must be finite", "alpha")
    mats = canonical_matrices(n + 1)
    H = mats.A - np.outer(observer_gains(n, float(omega_o)), mats.c)
    try:
        z = np.linalg.solve(H, -mats.b * alpha)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"singular observation error matrix: {exc}") from None
    return float(z[0]), float(z[-1])


def ramp_steady_state_closed_form(n, omega_o, alpha) -> Tuple[float, float]:
    return alpha / omega_o ** (n + 1), (n + 1) * alpha / omega_o


def simulate_ramp_eso(n, omega_o, alpha, duration=None, dt=None) -> Tuple[float, float]:
    """Run the ESO against a noiseless integrator chain driven by ``d(t) = alpha t``.

    The true error signal is ``alpha t**(n+1) / (n+1)!`` (zero initial state, zero
    input). Returns the observation error ``(e1 - e1_hat, d - d_hat)`` at ``duration``
    (default ``20 / omega_o``).
    """
    duration = 20.0 / omega_o if duration is None else duration
    # The held sample is amplified by l_{n+1} = omega_o**(n+1); keep omega_o * dt small.
    dt = 0.002 / omega_o if dt is None else dt
    steps = int(round(duration / dt))
    l = observer_gains(n, omega_o)
    fact = math.factorial(n + 1)
    eso = EsoState.zeros(n)
    for k in range(steps):
        t = k * dt
        # Mid-interval sample keeps the zero-order hold from adding a half-step lag.
        t_mid = t + 0.5 * dt
        y = alpha * t_mid ** (n + 1) / fact
        eso = eso_step(EsoState(eso.z_hat, t), y, 0.0, 1.0, l, dt)
    t = steps * dt
    return alpha * t ** (n + 1) / fact - eso.z_hat[0], alpha * t - eso.z_hat[-1]


def check_b_ratio(b_true, b_hat, n) -> bool:
    """True iff ``b_true / b_hat`` lies in the open admissible interval ``(0, 2 + 2/n)``."""
    if b_hat == 0:
        raise ConfigError("must be nonzero", "b_hat")
    lo, hi = admissible_gain_ratio_bounds(n)
    return lo < b_true / b_hat < hi


@dataclass(frozen=True)
class MetricsReport:
    """Control-error statistics of one channel.

    ``settle_time`` is the earliest recorded time after which ``|e| < epsilon``
    holds for the rest of the run, or None if the run ends outside the band.
    ``practically_stabilized`` means ``|e| < epsilon`` for every ``t >= T``.
    ``steady_state_error_band`` is ``max |e|`` over the last tenth of the run.
    """

    iae: float
    ise: float
    max_abs_error_after: float
    mean_abs_error_after: float
    settle_time: Optional[float]
    settled: bool
    practically_stabilized: bool
    peak_control: float
    control_std_after: float
    steady_state_error_band: float
    T: float
    epsilon: float

    def as_row(self) -> dict:
        return {
            "iae": self.iae,
            "ise": self.ise,
            "max_abs_error_after": self.max_abs_error_after,
            "mean_abs_error_after": self.mean_abs_error_after,
            "settle_time": "" if self.settle_time is None else self.settle_time,
            "practically_stabilized": int(self.practically_stabilized),
            "peak_control": self.peak_control,
            "control_std_after": self.control_std_after,
            "steady_state_error_band": self.steady_state_error_band,
        }


def error_metrics(t, e, u, T=0.0, epsilon=1e-2) -> MetricsReport:
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    u = np.asarray(u, dtype=float)
    if t.size == 0:
        raise ValueError("empty trace")
    if not epsilon > 0:
        raise ConfigError("must be > 0", "epsilon")
    abs_e = np.abs(e)
    iae = float(np.trapezoid(abs_e, t)) if t.size > 1 else 0.0
    ise = float(np.trapezoid(e * e, t)) if t.size > 1 else 0.0
    after = t >= T
    outside = np.nonzero(abs_e >= epsilon)[0]
    if outside.size == 0:
        settle_time = float(t[0])
    elif outside[-1] == t.size - 1:
        settle_time = None
    else:
        settle_time = float(t[outside[-1] + 1])
    tail = abs_e[int(0.9 * t.size):] if t.size >= 10 else abs_e
    return MetricsReport(
        iae=iae,
        ise=ise,
        max_abs_error_after=float(abs_e[after].max()) if after.any() else 0.0,
        mean_abs_error_after=float(abs_e[after].mean()) if after.any() else 0.0,
        settle_time=settle_time,
        settled=settle_time is not None,
        practically_stabilized=bool(after.any() and abs_e[after].max() < epsilon),
        peak_control=float(np.abs(u).max()),
        control_std_after=float(u[after].std()) if after.any() else 0.0,
        steady_state_error_band=float(tail.max()),
        T=float(T),
        epsilon=float(epsilon),
    )


def metrics(trace: Trace, T=0.0, epsilon=1e-2, channel=0) -> MetricsReport:
    """Metrics of one channel; ``epsilon`` is the practical-stabilization band."""
    ch = trace.channels[channel]
    return error_metrics(trace.t, ch.e, ch.u, T, epsilon)


def all_metrics(trace: Trace, T=0.0, epsilon: Sequence[float] | float = 1e-2) -> List[MetricsReport]:
    eps = [epsilon] * len(trace.channels) if np.isscalar(epsilon) else list(epsilon)
    return [metrics(trace, T, eps[i], i) for i in range(len(trace.channels))]


def peak_overshoot(trace: Trace, channel=0) -> float:
    """Largest excursion of ``y`` beyond the final reference value, relative to that value."""
    ch = trace.channels[channel]
    target = ch.x_d[-1]
    if target == 0:
        return float(np.max(np.abs(ch.y)))
    return float(max(0.0, np.max(np.sign(target) * (ch.y - target)) / abs(target)))


def steady_std(trace: Trace, signal="d_hat", t_from=0.0, channel=0) -> float:
    """Standard deviation of a recorded channel signal over ``t >= t_from``."""
    ch = trace.channels[channel]
    values = ch.d_hat if signal == "d_hat" else getattr(ch, signal)
    return float(np.std(values[trace.t >= t_from]))
