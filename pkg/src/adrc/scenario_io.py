"""Scenario documents, the builtin example catalog and CSV traces.

A scenario document is YAML with these top-level keys::

    name: example1
    seed: 0
    plant:
      type: generic_linear        # registered plant name
      params: {gain: 1.0}         # plant dataclass fields, optional
      initial_state: [0, 0, 0, 0] # optional
    timing: {duration: 20.0, sample_time: 0.0002, integrator_dt: 0.0002}
    channels:
      - controller:
          n: 4
          b_hat: 0.8              # number, or a signal mapping (time-dependent)
          omega_o: 50.0
          omega_c: 5.0
          saturation: {u_min: -100.0, u_max: 100.0}   # optional
          anti_peaking: 0.2       # optional T_d [s]
        reference: {kind: step, amplitude: 1.0, t0: 0.0}
        disturbance: {kind: step, amplitude: 70.0, t0: 10.0}   # optional
        noise_variance: 0.0       # optional
        eso_initial: [0, 0, 0, 0, 0]                 # optional
    provenance: {channels[0].controller.n: paper}    # optional

Unknown keys are rejected; every error names the offending key.
"""

from __future__ import annotations

import csv
import io
import math
import os
from typing import Dict, Iterator, List, Tuple

import numpy as np
import yaml

from .core import AdrcConfig
from .engine import ChannelTrace, Scenario, Trace
from .errors import ConfigError
from .plants import BuckConverter, CoupledTanks, DcMotor, GenericLinearPlant, TcLabThermal, make_plant
from .signals import (
    DISTURBANCE_KINDS,
    NONE,
    REFERENCE_KINDS,
    Composite,
    Constant,
    Signal,
    Sine,
    SmoothStep,
    Step,
    signal_from_dict,
)

PROVENANCE_VALUES = ("paper", "default")

_TOP_KEYS = {"name", "seed", "plant", "timing", "channels", "provenance"}
_PLANT_KEYS = {"type", "params", "initial_state"}
_TIMING_KEYS = {"duration", "sample_time", "integrator_dt"}
_CHANNEL_KEYS = {"controller", "reference", "disturbance", "noise_variance", "eso_initial"}
_CONTROLLER_KEYS = {"n", "b_hat", "omega_o", "omega_c", "saturation", "anti_peaking"}


def _reject_unknown(mapping, allowed, key):
    if not isinstance(mapping, dict):
        raise ConfigError("expected a mapping", key or "document")
    unknown = set(mapping) - allowed
    if unknown:
        where = f"{key}." if key else ""
        raise ConfigError(f"unknown keys {sorted(unknown)}", f"{where}{sorted(unknown)[0]}")


def _number(value, key):
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", key)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {value!r}", key) from None


def _vector(value, key):
    if not isinstance(value, (list, tuple)):
        raise ConfigError("expected a list of numbers", key)
    return tuple(_number(v, f"{key}[{i}]") for i, v in enumerate(value))


def _source(value, key):
    """Constant parameter or a time-dependent signal source."""
    if isinstance(value, dict):
        return signal_from_dict(value, key)
    return _number(value, key)


def _saturation(value, key):
    if value is None:
        return None
    if isinstance(value, dict):
        _reject_unknown(value, {"u_min", "u_max"}, key)
        if set(value) != {"u_min", "u_max"}:
            raise ConfigError("both u_min and u_max are required", key)
        return (_number(value["u_min"], f"{key}.u_min"), _number(value["u_max"], f"{key}.u_max"))
    pair = _vector(value, key)
    if len(pair) != 2:
        raise ConfigError("expected [u_min, u_max]", key)
    return pair


def _controller(doc, key, sample_time):
    _reject_unknown(doc, _CONTROLLER_KEYS, key)
    for required in ("n", "b_hat", "omega_o", "omega_c"):
        if required not in doc:
            raise ConfigError("missing required key", f"{key}.{required}")
    n = doc["n"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise ConfigError(f"expected an integer, got {n!r}", f"{key}.n")
    T_d = doc.get("anti_peaking")
    try:
        return AdrcConfig(
            n=n,
            b_hat=_source(doc["b_hat"], f"{key}.b_hat"),
            omega_o=_source(doc["omega_o"], f"{key}.omega_o"),
            omega_c=_source(doc["omega_c"], f"{key}.omega_c"),
            sample_time=sample_time,
            saturation=_saturation(doc.get("saturation"), f"{key}.saturation"),
            anti_peaking=None if T_d is None else _number(T_d, f"{key}.anti_peaking"),
        )
    except ConfigError as exc:
        if exc.key and not exc.key.startswith(key):
            raise ConfigError(str(exc).split(": ", 1)[-1], f"{key}.{exc.key}") from None
        raise


def parse_scenario(document) -> Scenario:
    """Build a validated Scenario from YAML text, a path, or an already loaded mapping."""
    if isinstance(document, (str, os.PathLike)) and not isinstance(document, dict):
        text = str(document)
        if isinstance(document, os.PathLike) or ("\n" not in text and os.path.isfile(text)):
            with open(text, encoding="utf-8") as fh:
                text = fh.read()
        try:
            document = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"syntax error: {exc}", "document") from None
    doc = document
    _reject_unknown(doc, _TOP_KEYS, "")
    for required in ("plant", "timing", "channels"):
        if required not in doc:
            raise ConfigError("missing required key", required)

    plant_doc = doc["plant"]
    _reject_unknown(plant_doc, _PLANT_KEYS, "plant")
    if "type" not in plant_doc:
        raise ConfigError("missing required key", "plant.type")
    params = plant_doc.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("expected a mapping", "plant.params")
    plant = make_plant(plant_doc["type"], params)
    x0 = plant_doc.get("initial_state")
    x0 = None if x0 is None else _vector(x0, "plant.initial_state")

    timing = doc["timing"]
    _reject_unknown(timing, _TIMING_KEYS, "timing")
    for required in ("duration", "sample_time"):
        if required not in timing:
            raise ConfigError("missing required key", f"timing.{required}")
    duration = _number(timing["duration"], "timing.duration")
    sample_time = _number(timing["sample_time"], "timing.sample_time")
    integrator_dt = _number(timing.get("integrator_dt", sample_time), "timing.integrator_dt")
    if not (sample_time > 0 and math.isfinite(sample_time)):
        raise ConfigError(f"must be finite and > 0, got {sample_time!r}", "timing.sample_time")

    channels = doc["channels"]
    if not isinstance(channels, list) or not channels:
        raise ConfigError("expected a nonempty list", "channels")
    controllers, refs, dists, noise, eso0 = [], [], [], [], []
    for i, ch in enumerate(channels):
        key = f"channels[{i}]"
        _reject_unknown(ch, _CHANNEL_KEYS, key)
        for required in ("controller", "reference"):
            if required not in ch:
                raise ConfigError("missing required key", f"{key}.{required}")
        controllers.append(_controller(ch["controller"], f"{key}.controller", sample_time))
        refs.append(signal_from_dict(ch["reference"], f"{key}.reference", REFERENCE_KINDS))
        dists.append(signal_from_dict(ch.get("disturbance"), f"{key}.disturbance", DISTURBANCE_KINDS))
        noise.append(_number(ch.get("noise_variance", 0.0), f"{key}.noise_variance"))
        z0 = ch.get("eso_initial")
        eso0.append(None if z0 is None else _vector(z0, f"{key}.eso_initial"))

    provenance = doc.get("provenance") or {}
    if not isinstance(provenance, dict):
        raise ConfigError("expected a mapping", "provenance")
    for path, value in provenance.items():
        if value not in PROVENANCE_VALUES:
            raise ConfigError(f"expected one of {PROVENANCE_VALUES}, got {value!r}", f"provenance.{path}")

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"expected an unsigned 64-bit integer, got {seed!r}", "seed")
    return Scenario(
        plant=plant,
        controllers=tuple(controllers),
        references=tuple(refs),
        disturbances=tuple(dists),
        noise_variance=tuple(noise),
        duration=duration,
        sample_time=sample_time,
        integrator_dt=integrator_dt,
        seed=seed,
        initial_state=x0,
        eso_initial=None if all(z is None for z in eso0) else tuple(eso0),
        name=str(doc.get("name", "scenario")),
        provenance=dict(provenance),
    )


def _source_to_doc(value):
    return value.to_dict() if isinstance(value, Signal) else value


def scenario_to_dict(scenario: Scenario) -> dict:
    plant = {"type": scenario.plant.name, "params": scenario.plant.params()}
    if scenario.initial_state is not None:
        plant["initial_state"] = list(scenario.initial_state)
    channels = []
    eso0 = scenario.eso_initial or (None,) * scenario.n_channels
    for cfg, ref, dist, var, z0 in zip(
        scenario.controllers, scenario.references, scenario.disturbances, scenario.noise_variance, eso0
    ):
        ctrl = {
            "n": cfg.n,
            "b_hat": _source_to_doc(cfg.b_hat),
            "omega_o": _source_to_doc(cfg.omega_o),
            "omega_c": _source_to_doc(cfg.omega_c),
        }
        if cfg.saturation is not None:
            ctrl["saturation"] = {"u_min": cfg.saturation[0], "u_max": cfg.saturation[1]}
        if cfg.anti_peaking is not None:
            ctrl["anti_peaking"] = cfg.anti_peaking
        ch = {"controller": ctrl, "reference": ref.to_dict(), "disturbance": dist.to_dict(), "noise_variance": var}
        if z0 is not None:
            ch["eso_initial"] = list(z0)
        channels.append(ch)
    doc = {
        "name": scenario.name,
        "seed": scenario.seed,
        "plant": plant,
        "timing": {
            "duration": scenario.duration,
            "sample_time": scenario.sample_time,
            "integrator_dt": scenario.integrator_dt,
        },
        "channels": channels,
    }
    if scenario.provenance:
        doc["provenance"] = dict(scenario.provenance)
    return doc


def serialize_scenario(scenario: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)


def numeric_paths(doc, prefix="") -> Iterator[str]:
    """Dotted paths of every numeric leaf in a scenario document."""
    if isinstance(doc, dict):
        for k, v in doc.items():
            if prefix == "" and k in ("provenance", "name"):
                continue
            yield from numeric_paths(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            yield from numeric_paths(v, f"{prefix}[{i}]")
    elif isinstance(doc, (int, float)) and not isinstance(doc, bool):
        yield prefix


# --- builtin catalog -------------------------------------------------------


def _with_provenance(scenario: Scenario, paper: List[str]) -> Scenario:
    """Tag the listed paths ``paper`` and every other numeric leaf ``default``."""
    paths = list(numeric_paths(scenario_to_dict(scenario)))
    missing = set(paper) - set(paths)
    if missing:
        raise AssertionError(f"provenance paths not in scenario: {sorted(missing)}")
    provenance = {p: ("paper" if p in paper else "default") for p in paths}
    return scenario.replace(provenance=provenance)


def _ctrl_paper(i, *, saturation=True, extra=()):
    base = [f"channels[{i}].controller.{k}" for k in ("n", "b_hat", "omega_o", "omega_c")]
    if saturation:
        base += [f"channels[{i}].controller.saturation.u_min", f"channels[{i}].controller.saturation.u_max"]
    return base + list(extra)


def example1() -> Scenario:
    """Fourth-order linear benchmark with a step load of 70 at t = 10 s (noiseless case).

    The 0.2 ms controller period is a default; at 1 ms the sampled loop loses
    stability once omega_o approaches 100.
    """
    Ts = 2e-4
    sc = Scenario(
        plant=GenericLinearPlant(),
        controllers=(AdrcConfig(n=4, b_hat=0.8, omega_o=50.0, omega_c=5.0, sample_time=Ts, saturation=(-100.0, 100.0)),),
        references=(Step(1.0, 0.0),),
        disturbances=(Step(70.0, 10.0),),
        noise_variance=(0.0,),
        duration=20.0,
        sample_time=Ts,
        integrator_dt=Ts,
        name="example1",
    )
    paper = _ctrl_paper(0) + [
        "plant.params.coefficients[0]",
        "plant.params.coefficients[1]",
        "plant.params.coefficients[2]",
        "plant.params.coefficients[3]",
        "plant.params.gain",
        "channels[0].disturbance.amplitude",
        "channels[0].disturbance.t0",
        "channels[0].noise_variance",
    ]
    return _with_provenance(sc, paper)


def example2() -> Scenario:
    """Coupled tanks, one second-order ADRC block per level.

    The 2 ms controller period is a default; at 10 ms the first tank, whose
    ``b_hat`` is about a hundred times below ``1/c``, chatters between the limits.
    """
    Ts = 0.002
    sat = (0.0, 4e-4)
    sc = Scenario(
        plant=CoupledTanks(),
        controllers=(
            AdrcConfig(n=2, b_hat=0.8, omega_o=3.0, omega_c=0.3, sample_time=Ts, saturation=sat),
            AdrcConfig(n=2, b_hat=1.0, omega_o=1.2, omega_c=0.12, sample_time=Ts, saturation=sat),
        ),
        references=(Constant(0.10), Constant(0.07)),
        disturbances=(Step(-1.4e-4, 90.0), Step(-0.7e-4, 130.0)),
        noise_variance=(0.8e-10, 0.8e-10),
        duration=200.0,
        sample_time=Ts,
        integrator_dt=Ts,
        name="example2",
    )
    paper = _ctrl_paper(0) + _ctrl_paper(1) + ["plant.params.a", "plant.params.c", "plant.params.g"]
    for i in (0, 1):
        paper += [f"channels[{i}].disturbance.amplitude", f"channels[{i}].disturbance.t0", f"channels[{i}].noise_variance"]
    return _with_provenance(sc, paper)


def example3() -> Scenario:
    """Averaged buck converter with the harmonic load resistance."""
    Ts = 1e-4
    sc = Scenario(
        plant=BuckConverter(),
        controllers=(AdrcConfig(n=2, b_hat=2e6, omega_o=3000.0, omega_c=500.0, sample_time=Ts, saturation=(0.0, 1.0)),),
        references=(SmoothStep(10.0, 0.0, 0.05),),
        disturbances=(NONE,),
        noise_variance=(5e-5,),
        duration=0.5,
        sample_time=Ts,
        integrator_dt=2e-5,
        name="example3",
    )
    paper = _ctrl_paper(0) + [
        "plant.params.V_in",
        "plant.params.L",
        "plant.params.C",
        "plant.params.R",
        "plant.params.load_resistance.amplitude",
        "plant.params.load_resistance.angular_frequency",
        "plant.params.load_resistance.offset",
        "plant.params.load_resistance.phase",
        "channels[0].noise_variance",
    ]
    return _with_provenance(sc, paper)


def example4() -> Scenario:
    """DC motor velocity loop at 100 Hz; motor physics are placeholders."""
    Ts = 0.01
    sc = Scenario(
        plant=DcMotor(),
        controllers=(AdrcConfig(n=2, b_hat=600.0, omega_o=90.0, omega_c=40.0, sample_time=Ts, saturation=(-100.0, 100.0)),),
        references=(Composite((Step(1.0, 1.0), Sine(0.5, 0.5))),),
        disturbances=(NONE,),
        noise_variance=(1e-4,),
        duration=10.0,
        sample_time=Ts,
        integrator_dt=1e-3,
        name="example4",
    )
    return _with_provenance(sc, _ctrl_paper(0) + ["timing.sample_time"])


def example5() -> Scenario:
    """Two-heater thermal lab, one first-order ADRC block per heater."""
    Ts = 0.1
    sat = (0.0, 100.0)
    sc = Scenario(
        plant=TcLabThermal(),
        controllers=(
            AdrcConfig(n=1, b_hat=3.0, omega_o=15.0, omega_c=6.0, sample_time=Ts, saturation=sat),
            AdrcConfig(n=1, b_hat=5.0, omega_o=15.0, omega_c=6.0, sample_time=Ts, saturation=sat),
        ),
        references=(Constant(40.0), Constant(35.0)),
        disturbances=(NONE, NONE),
        noise_variance=(1e-2, 1e-2),
        duration=600.0,
        sample_time=Ts,
        integrator_dt=0.02,
        name="example5",
    )
    return _with_provenance(sc, _ctrl_paper(0) + _ctrl_paper(1))


BUILTINS = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "example4": example4,
    "example5": example5,
}


def builtin(name: str) -> Scenario:
    if name not in BUILTINS:
        raise ConfigError(f"unknown builtin {name!r}; known: {sorted(BUILTINS)}", "scenario")
    return BUILTINS[name]()


def load_scenario(source: str) -> Scenario:
    """A builtin name or a scenario document path."""
    if source in BUILTINS:
        return builtin(source)
    if not os.path.isfile(source):
        raise ConfigError(f"no builtin or file named {source!r}", "scenario")
    return parse_scenario(os.fspath(source))


# --- CSV traces ------------------------------------------------------------


def trace_columns(trace: Trace) -> List[Tuple[str, np.ndarray]]:
    cols = [("t", trace.t)]
    for i, ch in enumerate(trace.channels, start=1):
        p = f"ch{i}."
        cols += [(p + "x_d", ch.x_d), (p + "y", ch.y), (p + "e", ch.e), (p + "u", ch.u)]
        cols += [(f"{p}z_hat_{j + 1}", ch.z_hat[:, j]) for j in range(ch.z_hat.shape[1])]
        if ch.d_true is not None:
            cols.append((p + "d_true", ch.d_true))
    return cols


def trace_to_csv(trace: Trace) -> str:
    cols = trace_columns(trace)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _ in cols])
    data = [col.tolist() for _, col in cols]
    for row in zip(*data):
        writer.writerow([repr(v) for v in row])
    return buf.getvalue()


def emit_csv(trace: Trace, destination) -> int:
    """Write the trace as CSV to a path or text stream; returns the number of bytes written."""
    text = trace_to_csv(trace)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return len(text.encode("utf-8"))


def read_csv(source) -> Trace:
    """Rebuild a Trace from emitted CSV (path, stream, or text)."""
    if hasattr(source, "read"):
        text = source.read()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    col = {name: data[:, j] for j, name in enumerate(header)}
    channels = []
    i = 1
    while f"ch{i}.x_d" in col:
        p = f"ch{i}."
        m = sum(1 for name in header if name.startswith(p + "z_hat_"))
        z = np.column_stack([col[f"{p}z_hat_{j + 1}"] for j in range(m)]) if m else np.empty((len(body), 0))
        channels.append(ChannelTrace(col[p + "x_d"], col[p + "y"], col[p + "e"], col[p + "u"], z, col.get(p + "d_true")))
        i += 1
    return Trace(col["t"], channels)
