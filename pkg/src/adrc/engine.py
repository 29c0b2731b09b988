"""Fixed-step closed-loop simulation of ADRC blocks driving a plant.

One controller step: sample noise, form ``y* = h(x) + w``, compute
``e = x_d - y*`` per channel, update every ADRC block, then integrate the
plant with RK4 at ``integrator_dt`` while holding ``u`` (zero-order hold)
until the next controller sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import AdrcBlock, AdrcConfig, EsoState
from .errors import ConfigError, DivergenceError
from .plants import PlantModel, require_phase_form
from .signals import Signal

_TWO_POW_53 = float(2**53)


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian measurement noise, one variance per output channel.

    Samples are a pure function of ``(seed, channel, step_index)``: each one
    is drawn by Box-Muller from the Philox block at counter ``step_index``
    under a key derived from ``(seed, channel)``.
    """

    variance: Tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        variance = tuple(float(v) for v in self.variance)
        if any(not (v >= 0 and math.isfinite(v)) for v in variance):
            raise ConfigError(f"variances must be finite and >= 0, got {variance}", "noise_variance")
        object.__setattr__(self, "variance", variance)
        object.__setattr__(self, "seed", int(self.seed))

    def key(self, channel):
        return np.random.SeedSequence([self.seed, channel]).generate_state(2, dtype=np.uint64)

    def samples(self, channel, n_steps, start=0) -> np.ndarray:
        """Noise samples for step indices ``start .. start + n_steps - 1``."""
        var = self.variance[channel]
        if var == 0.0 or n_steps == 0:
            return np.zeros(n_steps)
        bits = np.random.Philox(key=self.key(channel), counter=[start, 0, 0, 0])
        raw = bits.random_raw(4 * n_steps).reshape(n_steps, 4)
        return math.sqrt(var) * _box_muller(raw[:, 0], raw[:, 1])


def _box_muller(w0, w1):
    u1 = ((w0 >> np.uint64(11)).astype(float) + 1.0) / _TWO_POW_53
    u2 = (w1 >> np.uint64(11)).astype(float) / _TWO_POW_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def gaussian_sample(noise: NoiseModel, channel: int, step_index: int) -> float:
    return float(noise.samples(channel, 1, start=step_index)[0])


def rk4_plant_step(plant: PlantModel, x, u_held, d_star, t, dt) -> np.ndarray:
    """One RK4 step of the plant with ``u`` held and ``d_star(t)`` sampled at stage times.

    ``d_star`` is a callable returning the disturbance vector, or a constant vector.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    dist = d_star if callable(d_star) else (lambda _t, _d=np.asarray(d_star, dtype=float): _d)
    x, u_held, _ = plant._check(x, u_held, dist(t))
    return _rk4(plant, x, u_held, dist, t, dt)


def _rk4(plant, x, u, dist, t, dt):
    f = plant.rhs
    half = 0.5 * dt
    d_mid = dist(t + half)
    k1 = f(x, u, dist(t), t)
    k2 = f(x + half * k1, u, d_mid, t + half)
    k3 = f(x + half * k2, u, d_mid, t + half)
    k4 = f(x + dt * k3, u, dist(t + dt), t + dt)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(x_next).all():
        raise DivergenceError(t + dt, "x")
    return plant.clip_state(x_next)


def _rk4_stages(f, x, s1, s2, s3, h):
    k1 = f(x, s1)
    k2 = f(x + 0.5 * h * k1, s2)
    k3 = f(x + 0.5 * h * k2, s2)
    k4 = f(x + h * k3, s3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def linear_rk4_map(a, h):
    """Affine form of one RK4 step of ``x^(n) = -a . x + s(t)`` in phase variables.

    Returns ``(P, c1, c2, c3)`` with ``x_next = P x + c1 s(t) + c2 s(t + h/2) + c3 s(t + h)``,
    built by pushing basis vectors through the RK4 stages.
    """
    n = len(a)
    M = np.eye(n, k=1)
    M[-1, :] -= a
    e = np.zeros(n)
    e[-1] = 1.0

    def f(x, s):
        return M @ x + e * s

    P = np.column_stack([_rk4_stages(f, np.eye(n)[j], 0.0, 0.0, 0.0, h) for j in range(n)])
    z = np.zeros(n)
    c1 = _rk4_stages(f, z, 1.0, 0.0, 0.0, h)
    c2 = _rk4_stages(f, z, 0.0, 1.0, 0.0, h)
    c3 = _rk4_stages(f, z, 0.0, 0.0, 1.0, h)
    return P, c1, c2, c3


def true_total_disturbance(plant: PlantModel, x, u, d_star, b_hat_user, t, xd_n=0.0) -> float:
    """Total disturbance in the error domain, ``d = e^(n) + b_hat * u``.

    ``xd_n`` is the n-th derivative of the reference at ``t``. Only defined for
    phase-variable SISO plants, where ``x^(n)`` is the last state derivative.
    """
    require_phase_form(plant)
    x_n = plant.derivative(x, [u], [d_star], t)[-1]
    return float(xd_n - x_n + b_hat_user * u)


def _total_disturbance(plant, x, u, d_vec, b_hat_user, t, xd_n):
    return float(xd_n - plant.rhs(x, u, d_vec, t)[-1] + b_hat_user * u[0])


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one closed-loop run.

    Channel ``i`` uses ``controllers[i]`` to drive plant input ``i`` from the
    error on output ``i``. ``provenance`` maps dotted parameter paths to
    ``"paper"`` or ``"default"``.
    """

    plant: PlantModel
    controllers: Tuple[AdrcConfig, ...]
    references: Tuple[Signal, ...]
    disturbances: Tuple[Signal, ...]
    noise_variance: Tuple[float, ...]
    duration: float
    sample_time: float
    integrator_dt: float
    seed: int = 0
    initial_state: Optional[Tuple[float, ...]] = None
    eso_initial: Optional[Tuple[Optional[Tuple[float, ...]], ...]] = None
    name: str = "scenario"
    provenance: Dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for key in ("controllers", "references", "disturbances", "noise_variance"):
            object.__setattr__(self, key, tuple(getattr(self, key)))
        object.__setattr__(self, "noise_variance", tuple(float(v) for v in self.noise_variance))
        n_ch = self.plant.output_dim
        if self.plant.input_dim != n_ch:
            raise ConfigError("plant must have as many inputs as outputs", "plant")
        for key in ("controllers", "references", "disturbances", "noise_variance"):
            if len(getattr(self, key)) != n_ch:
                raise ConfigError(f"expected {n_ch} entries, got {len(getattr(self, key))}", key)
        for key in ("duration", "sample_time", "integrator_dt"):
            value = float(getattr(self, key))
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"must be finite and > 0, got {value!r}", f"timing.{key}")
            object.__setattr__(self, key, value)
        if self.integrator_dt > self.sample_time:
            raise ConfigError("integrator_dt must not exceed sample_time", "timing.integrator_dt")
        ratio = self.sample_time / self.integrator_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError("sample_time must be an integer multiple of integrator_dt", "timing.integrator_dt")
        for i, cfg in enumerate(self.controllers):
            if cfg.sample_time != self.sample_time:
                raise ConfigError("controller sample_time differs from scenario sample_time", f"channels[{i}].controller")
        if self.duration < self.sample_time:
            raise ConfigError("duration shorter than one sample", "timing.duration")
        if self.initial_state is not None:
            x0 = tuple(float(v) for v in self.initial_state)
            if len(x0) != self.plant.state_dim:
                raise ConfigError(f"expected {self.plant.state_dim} values", "plant.initial_state")
            object.__setattr__(self, "initial_state", x0)
        if self.eso_initial is not None:
            if len(self.eso_initial) != n_ch:
                raise ConfigError(f"expected {n_ch} entries", "eso_initial")
            eso0 = []
            for i, (z0, cfg) in enumerate(zip(self.eso_initial, self.controllers)):
                if z0 is not None:
                    z0 = tuple(float(v) for v in z0)
                    if len(z0) != cfg.n + 1:
                        raise ConfigError(f"expected {cfg.n + 1} values", f"channels[{i}].eso_initial")
                eso0.append(z0)
            object.__setattr__(self, "eso_initial", tuple(eso0))
        NoiseModel(self.noise_variance, self.seed)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_channels(self):
        return self.plant.output_dim

    @property
    def n_steps(self):
        return int(math.floor(self.duration / self.sample_time + 1e-9))

    @property
    def substeps(self):
        return int(round(self.sample_time / self.integrator_dt))

    @property
    def noise(self):
        return NoiseModel(self.noise_variance, self.seed)

    def x0(self):
        if self.initial_state is None:
            return self.plant.initial_state()
        return np.array(self.initial_state, dtype=float)

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)

    def with_controllers(self, **changes):
        """Apply the same AdrcConfig changes to every channel."""
        return self.replace(controllers=tuple(c.replace(**changes) for c in self.controllers))

    def supports_total_disturbance(self):
        order = self.plant.phase_order
        return order is not None and self.n_channels == 1 and self.controllers[0].n == order


@dataclass
class ChannelTrace:
    x_d: np.ndarray
    y: np.ndarray
    e: np.ndarray
    u: np.ndarray
    z_hat: np.ndarray
    d_true: Optional[np.ndarray] = None

    @property
    def d_hat(self):
        return self.z_hat[:, -1]

    def truncate(self, n):
        return ChannelTrace(
            self.x_d[:n], self.y[:n], self.e[:n], self.u[:n], self.z_hat[:n],
            None if self.d_true is None else self.d_true[:n],
        )


@dataclass
class Trace:
    """Per-controller-step record of every loop signal.

    Row ``k`` holds the time ``t_k``, the signals measured at ``t_k``, the
    control held over ``[t_k, t_k+1)`` and the observer state used to
    compute it.
    """

    t: np.ndarray
    channels: List[ChannelTrace]
    name: str = "scenario"
    diagnostic: Optional[str] = None
    final_state: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    def window(self, t_start, t_end=math.inf):
        return (self.t >= t_start) & (self.t <= t_end)


def _allocate(scenario, n_steps, with_d_true):
    return [
        ChannelTrace(
            np.empty(n_steps), np.empty(n_steps), np.empty(n_steps), np.empty(n_steps),
            np.empty((n_steps, cfg.n + 1)), np.empty(n_steps) if with_d_true else None,
        )
        for cfg in scenario.controllers
    ]


def run(scenario: Scenario) -> Trace:
    """Simulate the scenario; raises DivergenceError carrying the partial trace."""
    plant = scenario.plant
    n_ch = scenario.n_channels
    N = scenario.n_steps
    Ts = scenario.sample_time
    h = scenario.integrator_dt
    m = scenario.substeps
    with_d_true = scenario.supports_total_disturbance()

    eso0 = scenario.eso_initial or (None,) * n_ch
    blocks = [
        AdrcBlock(cfg, None if z0 is None else EsoState(np.array(z0, dtype=float), 0.0))
        for cfg, z0 in zip(scenario.controllers, eso0)
    ]
    noise = scenario.noise
    w = np.vstack([noise.samples(i, N) for i in range(n_ch)]) if n_ch else np.zeros((0, N))
    refs = scenario.references
    dists = scenario.disturbances
    n_ref = [cfg.n for cfg in scenario.controllers]

    def d_star(t):
        return np.array([d(t) for d in dists])

    linear = plant.phase_coefficients()
    if linear is not None:
        a, gain = linear
        P, c1, c2, c3 = linear_rk4_map(a, h)
        dist0 = dists[0]

        def advance(x, u, t):
            u0 = gain * u[0]
            x = P @ x + c1 * (u0 + dist0(t)) + c2 * (u0 + dist0(t + 0.5 * h)) + c3 * (u0 + dist0(t + h))
            if not np.isfinite(x).all():
                raise DivergenceError(t + h, "x")
            return x
    else:

        def advance(x, u, t):
            return _rk4(plant, x, u, d_star, t, h)

    times = np.arange(N) * Ts
    channels = _allocate(scenario, N, with_d_true)
    x = scenario.x0()
    u = np.zeros(n_ch)
    k = 0
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(N):
                t = times[k]
                y = plant.output(x, w[:, k])
                for i in range(n_ch):
                    ch = channels[i]
                    x_d = refs[i](t)
                    e = x_d - y[i]
                    ch.z_hat[k] = blocks[i].eso.z_hat
                    u[i] = blocks[i].update(e, t)
                    ch.x_d[k] = x_d
                    ch.y[k] = y[i]
                    ch.e[k] = e
                    ch.u[k] = u[i]
                if with_d_true:
                    channels[0].d_true[k] = _total_disturbance(
                        plant, x, u, d_star(t), blocks[0].b_hat, t, refs[0].derivative(t, n_ref[0])
                    )
                for j in range(m):
                    x = advance(x, u, t + j * h)
    except DivergenceError as exc:
        partial = Trace(times[:k], [c.truncate(k) for c in channels], scenario.name,
                        f"diverged: non-finite {exc.signal} at t={exc.t!r}", x)
        exc.trace = partial
        raise
    return Trace(times, channels, scenario.name, None, x)
