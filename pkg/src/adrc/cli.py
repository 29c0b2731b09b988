"""Command-line front end.

Exit codes:
    0  success
    2  usage error (bad flags or arguments)
    3  configuration error (invalid scenario, override or grid point)
    4  simulation diverged (non-finite signal)
    5  I/O error
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from .analysis import all_metrics, verify_controller_poles, verify_observer_poles
from .core import admissible_gain_ratio_bounds, controller_gains, observer_gains
from .engine import Scenario, run
from .errors import ConfigError, DivergenceError
from .scenario_io import BUILTINS, builtin, emit_csv, load_scenario, serialize_scenario

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DIVERGED = 4
EXIT_IO = 5


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be finite and > 0: {text!r}")
    return value


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from None


def _order(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("n must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output CSV path")
    common.add_argument("--seed", type=_seed, help="noise seed override")
    common.add_argument("--duration", type=_positive_float, help="duration override [s]")
    common.add_argument("--dt", type=_positive_float, help="integrator step override [s]")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    common.add_argument("--T", dest="T", type=float, help="metrics window start [s] (default: half the run)")
    common.add_argument(
        "--epsilon", type=_positive_float, help="practical-stabilization band (default: 2%% of the final reference)"
    )

    parser = argparse.ArgumentParser(prog="adrc", description="ADRC closed-loop simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="simulate one scenario and write its trace")
    p.add_argument("scenario", help="builtin name or scenario file")

    p = sub.add_parser("sweep", parents=[common], help="run a bandwidth / b_hat grid and tabulate metrics")
    p.add_argument("scenario", help="builtin name or scenario file")
    p.add_argument("--omega-o", type=_float_list, help="comma-separated observer bandwidths")
    p.add_argument("--omega-c", type=_float_list, help="comma-separated controller bandwidths")
    p.add_argument("--b-hat", type=_float_list, help="comma-separated input gain estimates")
    p.add_argument("--seeds", type=int, default=1, help="seeds per grid point, starting at --seed (default 1)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")

    p = sub.add_parser("gains", help="print gain vectors and pole checks")
    p.add_argument("-n", type=_order, required=True)
    p.add_argument("--omega-o", type=_positive_float, required=True)
    p.add_argument("--omega-c", type=_positive_float, required=True)
    p.add_argument("--tol", type=_positive_float, default=1e-6)

    p = sub.add_parser("examples", help="list builtin scenarios")
    p.add_argument("--dump", metavar="NAME", help="print the scenario document of one builtin")
    return parser


def _apply_overrides(scenario: Scenario, args) -> Scenario:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.duration is not None:
        changes["duration"] = args.duration
    if args.dt is not None:
        changes["integrator_dt"] = args.dt
    return scenario.replace(**changes) if changes else scenario


def _metric_settings(scenario: Scenario, args):
    T = args.T if args.T is not None else 0.5 * scenario.duration
    if args.epsilon is not None:
        eps = [args.epsilon] * scenario.n_channels
    else:
        eps = []
        for ref in scenario.references:
            target = abs(ref(scenario.duration))
            eps.append(0.02 * target if target > 0 else 1e-2)
    return T, eps


def _print_metrics(reports, out):
    for i, m in enumerate(reports, start=1):
        settle = "unsettled" if m.settle_time is None else f"{m.settle_time:.6g} s"
        out.write(
            f"ch{i}: IAE={m.iae:.6g} ISE={m.ise:.6g} max|e|(t>={m.T:g})={m.max_abs_error_after:.6g} "
            f"settle(eps={m.epsilon:.3g})={settle} stabilized={'yes' if m.practically_stabilized else 'no'} "
            f"peak|u|={m.peak_control:.6g}\n"
        )


def cmd_run(args, stdout, stderr) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    out = args.out or f"{scenario.name}.csv"
    try:
        trace = run(scenario)
    except DivergenceError as exc:
        if exc.trace is not None:
            try:
                emit_csv(exc.trace, out)
            except OSError:
                pass
        stderr.write(f"error: simulation diverged: non-finite {exc.signal} at t={exc.t!r}; partial trace in {out}\n")
        return EXIT_DIVERGED
    try:
        size = emit_csv(trace, out)
    except OSError as exc:
        stderr.write(f"error: cannot write {out}: {exc}\n")
        return EXIT_IO
    if not args.quiet:
        T, eps = _metric_settings(scenario, args)
        stdout.write(f"{scenario.name}: {len(trace)} steps, wrote {size} bytes to {out}\n")
        _print_metrics(all_metrics(trace, T, eps), stdout)
    return EXIT_OK


SWEEP_FIELDS = [
    "point", "omega_o", "omega_c", "b_hat", "seed", "channel", "status",
    "iae", "ise", "max_abs_error_after", "mean_abs_error_after", "settle_time",
    "practically_stabilized", "peak_control", "control_std_after", "steady_state_error_band", "d_hat_std_after",
]


def _sweep_point(job):
    """Run one grid point; returns a list of table rows. Runs in a worker process."""
    index, scenario, changes, seed, T, eps = job
    base = {"point": index, "seed": seed, **{k: changes.get(k, "") for k in ("omega_o", "omega_c", "b_hat")}}
    try:
        sc = scenario.with_controllers(**changes).replace(seed=seed)
    except ConfigError as exc:
        return [{**base, "channel": "", "status": f"invalid: {exc}"}]
    try:
        trace = run(sc)
    except DivergenceError as exc:
        return [{**base, "channel": "", "status": f"diverged at t={exc.t!r}"}]
    rows = []
    for i, m in enumerate(all_metrics(trace, T, eps)):
        d_hat = trace.channels[i].d_hat[trace.t >= T]
        rows.append({**base, "channel": i + 1, "status": "ok", **m.as_row(), "d_hat_std_after": float(np.std(d_hat))})
    return rows


def cmd_sweep(args, stdout, stderr) -> int:
    scenario = _apply_overrides(load_scenario(args.scenario), args)
    axes = [(k, v) for k, v in (("omega_o", args.omega_o), ("omega_c", args.omega_c), ("b_hat", args.b_hat)) if v]
    if not axes:
        stderr.write("error: sweep needs at least one of --omega-o, --omega-c, --b-hat\n")
        return EXIT_USAGE
    if args.seeds < 1 or args.jobs < 1:
        stderr.write("error: --seeds and --jobs must be >= 1\n")
        return EXIT_USAGE
    T, eps = _metric_settings(scenario, args)
    seed0 = scenario.seed
    jobs = []
    for values in itertools.product(*(v for _, v in axes)):
        changes = dict(zip((k for k, _ in axes), values))
        for s in range(args.seeds):
            jobs.append((len(jobs), scenario, changes, seed0 + s, T, eps))
    if args.jobs == 1:
        results = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, jobs))
    rows = [row for rs in results for row in rs]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SWEEP_FIELDS, lineterminator="\n", restval="")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    text = buf.getvalue()
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            stderr.write(f"error: cannot write {args.out}: {exc}\n")
            return EXIT_IO
    if not args.quiet or not args.out:
        stdout.write(text)
    bad = [r for r in rows if r["status"] != "ok"]
    for r in bad:
        stderr.write(f"point {r['point']}: {r['status']}\n")
    if any(r["status"].startswith("invalid") for r in bad):
        return EXIT_CONFIG
    if bad:
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_gains(args, stdout, stderr) -> int:
    n = args.n
    l = observer_gains(n, args.omega_o)
    k = controller_gains(n, args.omega_c)
    obs = verify_observer_poles(n, args.omega_o, args.tol)
    ctl = verify_controller_poles(n, args.omega_c, args.tol)
    lo, hi = admissible_gain_ratio_bounds(n)
    fmt = lambda v: "[" + ", ".join(f"{x:.10g}" for x in v) + "]"  # noqa: E731
    stdout.write(f"l = {fmt(l)}\n")
    stdout.write(f"k = {fmt(k)}\n")
    stdout.write(f"observer poles: max |lambda + omega_o|/omega_o = {obs.max_deviation:.3g} -> {'pass' if obs.passed else 'FAIL'}\n")
    stdout.write(f"controller poles: max |lambda + omega_c|/omega_c = {ctl.max_deviation:.3g} -> {'pass' if ctl.passed else 'FAIL'}\n")
    stdout.write(f"admissible b/b_hat interval: ({lo:g}, {hi:g})\n")
    return EXIT_OK if obs.passed and ctl.passed else EXIT_CONFIG


def cmd_examples(args, stdout, stderr) -> int:
    if args.dump:
        stdout.write(serialize_scenario(builtin(args.dump)))
        return EXIT_OK
    for name, factory in BUILTINS.items():
        sc = factory()
        doc = (factory.__doc__ or "").strip().splitlines()[0]
        stdout.write(f"{name:10s} {sc.plant.name:15s} {sc.n_channels} ch  {sc.duration:g} s  {doc}\n")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "gains": cmd_gains, "examples": cmd_examples}


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, stdout, stderr)
    except ConfigError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
