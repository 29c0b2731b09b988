"""Time signals used as references, external disturbances and parameter sources.

Every signal is a frozen dataclass, callable as ``signal(t)``, exposes
``derivative(t, order)`` and serializes to a tagged dictionary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import ClassVar, Dict, Tuple, Type

import numpy as np

from .errors import ConfigError

_REGISTRY: Dict[str, Type["Signal"]] = {}


class Signal:
    kind: ClassVar[str] = ""

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.kind:
            _REGISTRY[cls.kind] = cls

    def __call__(self, t: float) -> float:
        raise NotImplementedError

    def derivative(self, t: float, order: int = 1) -> float:
        """Time derivative of the given order; impulses at jumps are ignored."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "parts":
                value = [p.to_dict() for p in value]
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


def _finite(value, key):
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"must be finite, got {value!r}", key)
    return value


@dataclass(frozen=True)
class Constant(Signal):
    kind: ClassVar[str] = "constant"
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "value", _finite(self.value, "value"))

    def __call__(self, t):
        return self.value

    def derivative(self, t, order=1):
        return self.value if order == 0 else 0.0


@dataclass(frozen=True)
class Step(Signal):
    """``amplitude * 1(t - t0)`` with the right-continuous convention ``1(0) = 1``."""

    kind: ClassVar[str] = "step"
    amplitude: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "amplitude", _finite(self.amplitude, "amplitude"))
        object.__setattr__(self, "t0", _finite(self.t0, "t0"))

    def __call__(self, t):
        return self.amplitude if t >= self.t0 else 0.0

    def derivative(self, t, order=1):
        return self(t) if order == 0 else 0.0


@dataclass(frozen=True)
class SmoothStep(Signal):
    """Quintic (C2) transition from 0 to ``amplitude`` over ``[t0, t0 + rise_time]``."""

    kind: ClassVar[str] = "smooth_step"
    amplitude: float = 1.0
    t0: float = 0.0
    rise_time: float = 1.0

    # 10 s^3 - 15 s^4 + 6 s^5
    _COEFFS: ClassVar[np.ndarray] = np.array([6.0, -15.0, 10.0, 0.0, 0.0, 0.0])

    def __post_init__(self):
        for name in ("amplitude", "t0", "rise_time"):
            object.__setattr__(self, name, _finite(getattr(self, name), name))
        if not self.rise_time > 0:
            raise ConfigError("must be > 0", "rise_time")

    def __call__(self, t):
        return self.derivative(t, 0)

    def derivative(self, t, order=1):
        s = (t - self.t0) / self.rise_time
        if s <= 0.0:
            return 0.0
        if s >= 1.0:
            return self.amplitude if order == 0 else 0.0
        poly = np.polyder(self._COEFFS, order) if order else self._COEFFS
        return float(self.amplitude * np.polyval(poly, s) / self.rise_time**order)


def _sinusoid_derivative(amplitude, omega, phase, t, order):
    # d^k/dt^k sin(x) = sin(x + k*pi/2)
    return amplitude * omega**order * math.sin(omega * t + phase + order * math.pi / 2)


@dataclass(frozen=True)
class Harmonic(Signal):
    """``offset + amplitude * sin(angular_frequency * t + phase)``."""

    kind: ClassVar[str] = "harmonic"
    amplitude: float = 1.0
    angular_frequency: float = 1.0
    offset: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _finite(getattr(self, f.name), f.name))

    def __call__(self, t):
        return self.offset + self.amplitude * math.sin(self.angular_frequency * t + self.phase)

    def derivative(self, t, order=1):
        if order == 0:
            return self(t)
        return _sinusoid_derivative(self.amplitude, self.angular_frequency, self.phase, t, order)


@dataclass(frozen=True)
class Sine(Signal):
    """``offset + amplitude * sin(2 pi frequency t + phase)``, frequency in Hz."""

    kind: ClassVar[str] = "sine"
    amplitude: float = 1.0
    frequency: float = 1.0
    offset: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _finite(getattr(self, f.name), f.name))

    def __call__(self, t):
        return self.offset + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)

    def derivative(self, t, order=1):
        if order == 0:
            return self(t)
        return _sinusoid_derivative(self.amplitude, 2.0 * math.pi * self.frequency, self.phase, t, order)


@dataclass(frozen=True)
class Table(Signal):
    """Piecewise-linear interpolation through ``(times, values)``; ends are held."""

    kind: ClassVar[str] = "table"
    times: Tuple[float, ...] = (0.0,)
    values: Tuple[float, ...] = (0.0,)

    def __post_init__(self):
        times = tuple(_finite(v, "times") for v in self.times)
        values = tuple(_finite(v, "values") for v in self.values)
        if not times or len(times) != len(values):
            raise ConfigError("times and values must be nonempty and of equal length", "times")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("must be strictly increasing", "times")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        return float(np.interp(t, self.times, self.values))

    def derivative(self, t, order=1):
        if order == 0:
            return self(t)
        if order > 1 or len(self.times) == 1 or not self.times[0] <= t < self.times[-1]:
            return 0.0
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return (self.values[i + 1] - self.values[i]) / (self.times[i + 1] - self.times[i])


@dataclass(frozen=True)
class Composite(Signal):
    """Sum of component signals."""

    kind: ClassVar[str] = "composite"
    parts: Tuple[Signal, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    def __call__(self, t):
        return sum(p(t) for p in self.parts)

    def derivative(self, t, order=1):
        return sum(p.derivative(t, order) for p in self.parts)


NONE = Constant(0.0)

REFERENCE_KINDS = frozenset({"constant", "step", "smooth_step", "sine", "composite"})
DISTURBANCE_KINDS = frozenset({"constant", "step", "harmonic", "table", "composite"})


def signal_from_dict(data, key="signal", allowed=None) -> Signal:
    """Build a signal from its tagged dictionary, rejecting unknown fields."""
    if isinstance(data, (int, float)) and not isinstance(data, bool):
        return Constant(float(data))
    if data is None or data == "none":
        return NONE
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("expected a number, 'none' or a mapping with a 'kind' tag", key)
    kind = data["kind"]
    if kind == "none":
        if len(data) > 1:
            raise ConfigError("'none' takes no parameters", key)
        return NONE
    if kind not in _REGISTRY or (allowed is not None and kind not in allowed):
        raise ConfigError(f"unknown signal kind {kind!r}", f"{key}.kind")
    cls = _REGISTRY[kind]
    names = {f.name for f in fields(cls)}
    params = {k: v for k, v in data.items() if k != "kind"}
    unknown = set(params) - names
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} for {kind!r}", key)
    if kind == "composite":
        params["parts"] = tuple(
            signal_from_dict(p, f"{key}.parts[{i}]", allowed) for i, p in enumerate(params.get("parts", ()))
        )
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(str(exc), key) from None
