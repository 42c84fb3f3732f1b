"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 invariant-check failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass
from fractions import Fraction

from .checks import check_trace, report
from .config import ConfigError, dump_config, load_config
from .kernel import Trace, TraceParseError
from .metrics import format_rational, write_csv
from .workload import BUILDERS, Scenario, ScenarioError, run_scenario

EXIT_OK, EXIT_INVALID, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3


@dataclass
class SweepSpec:
    experiment: str
    values: list[Fraction]
    output: str | None = None

    def scenario(self, value: Fraction) -> Scenario:
        if self.experiment in BUILDERS:
            return BUILDERS[self.experiment](value)
        return budget_scaled(load_config(self.experiment), value)


def budget_scaled(sc: Scenario, fraction: Fraction) -> Scenario:
    """Copy of `sc` with each sporadic budget set to fraction * repl_period."""
    if not 0 < fraction <= 1:
        raise ScenarioError("budget_fraction", "must be in (0, 1]")
    subs = []
    for sub in sc.subscriptions:
        p = sub.sched
        if p.is_sporadic:
            p = dataclasses.replace(p, init_budget=int(fraction * p.repl_period))
            sub = dataclasses.replace(sub, sched=p)
        subs.append(sub)
    return dataclasses.replace(sc, subscriptions=subs, pings=[p.fresh() for p in sc.pings])


def parse_values(text: str) -> list[Fraction]:
    values = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            values.append(Fraction(tok))
        except ValueError:
            raise ScenarioError("values", f"not a rational number: {tok!r}") from None
    if not values:
        raise ScenarioError("values", "empty sweep list")
    return values


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def cmd_run(args) -> int:
    scenario = load_config(args.config)
    metrics, trace = run_scenario(scenario)
    if args.trace:
        trace.write(args.trace)
    _write(args.metrics, write_csv(metrics.rows()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = SweepSpec(args.experiment, parse_values(args.values), args.out)
    if spec.experiment not in BUILDERS and not os.path.exists(spec.experiment):
        raise ScenarioError("experiment", f"not a built-in experiment or config file: "
                                          f"{spec.experiment!r}")
    scenarios = [(v, spec.scenario(v)) for v in spec.values]
    rows = []
    for value, sc in scenarios:
        metrics, trace = run_scenario(sc)
        rows.extend(metrics.rows(value))
        if args.trace_dir:
            os.makedirs(args.trace_dir, exist_ok=True)
            trace.write(os.path.join(args.trace_dir, f"{sc.name}_{format_rational(value)}.trace"))
    _write(spec.output, write_csv(rows))
    return EXIT_OK


def cmd_check_trace(args) -> int:
    with open(args.trace, encoding="ascii") as fh:
        trace = Trace.parse(fh)
    results = check_trace(trace)
    sys.stdout.write(report(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_gen_config(args) -> int:
    os.makedirs(args.outdir, exist_ok=True)
    made = {
        "case1": BUILDERS["case1"](Fraction(args.budget)),
        "case2": BUILDERS["case2"](),
        "workconserving": BUILDERS["workconserving"](Fraction(args.sleep)),
    }
    for name, sc in made.items():
        path = os.path.join(args.outdir, f"{name}.ini")
        _write(path, dump_config(sc))
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="budgetsim",
                                description="Budget-based real-time executor simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario config")
    r.add_argument("config")
    r.add_argument("--trace", help="write the event trace here")
    r.add_argument("--metrics", help="write metrics CSV here (default: stdout)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep a built-in experiment or a config's budgets")
    s.add_argument("experiment", help="case1, case2, workconserving, or a config path")
    s.add_argument("--values", required=True, help="comma-separated rationals, e.g. 0.1,0.3")
    s.add_argument("--out", help="metrics CSV path (default: stdout)")
    s.add_argument("--trace-dir", help="also write one trace per sweep value")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check-trace", help="verify invariants over a trace file")
    c.add_argument("trace")
    c.set_defaults(func=cmd_check_trace)

    g = sub.add_parser("gen-config", help="write the built-in scenarios as editable files")
    g.add_argument("outdir")
    g.add_argument("--budget", default="0.3", help="case1 budget fraction")
    g.add_argument("--sleep", default="0.5", help="workconserving sleep fraction")
    g.set_defaults(func=cmd_gen_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError, TraceParseError, ValueError) as exc:
        print(f"budgetsim: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"budgetsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
