"""Command-line front end: ``oxyro forecast|schedule|distribute|simulate``.

Every command writes delimited tables (and, unless ``--no-plots``, PNG
figures) into ``--out``.  Exit codes: 0 success, 1 infeasible model,
2 I/O error, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import instance as inst_mod
from .distmodel import export_solution, solve_deterministic
from .gpforecast import SeriesDataset, holdout_forecast, predict
from .instance import Horizon, InstanceFormatError, InstanceValidationError, synthesize
from .robust import budget_grid, budget_vector, ramp_sweep, report_objective, solve_robust
from .scheduler import (
    GraphFormatError, ScheduleError, ScheduleInfeasible, demand_curve, export_gantt, load_graph, solve_scenario,
    synthetic_graph,
)
from .simulate import run_comparison, write_report

EXIT_OK, EXIT_INFEASIBLE, EXIT_IO, EXIT_CONFIG = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="JSON file whose keys mirror the long flags")
    p.add_argument("--no-plots", action="store_true", help="write tables only")


def _instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", help="instance JSON file")
    p.add_argument("--synth-level", choices=["high", "medium", "low"], default="medium")
    p.add_argument("--eta", type=float, help="relative demand deviation (synthetic default 0.05; "
                   "a loaded instance keeps its own unless given)")
    p.add_argument("--budget-a", type=float, default=0.10)
    p.add_argument("--budget-b", type=float, default=0.40)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oxyro", description="Robust oxygen distribution experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("forecast", help="GP interval forecast with a held-out tail")
    f.add_argument("series", help="delimited file (timestamp, value)")
    f.add_argument("--lag", type=int, default=3)
    f.add_argument("--train", type=int, help="training length; the rest is held out")
    f.add_argument("--confidence", type=float, default=0.95)
    f.add_argument("--restarts", type=int, default=10)
    _common(f)

    s = sub.add_parser("schedule", help="capacity-constrained steelmaking schedules")
    s.add_argument("--graph", help="task graph JSON; default is a synthetic graph")
    s.add_argument("--jobs", type=int, default=6, help="jobs in the synthetic graph")
    s.add_argument("--capacity", type=int, nargs="+", default=[5, 4])
    s.add_argument("--horizon", type=int, help="time units; default 1.5x the forward makespan")
    s.add_argument("--periods", type=int, default=32)
    s.add_argument("--period-minutes", type=int, default=15)
    s.add_argument("--eta", type=float, default=0.05)
    s.add_argument("--total", action="append", default=[], metavar="USER=VALUE",
                   help="nominal horizon total for an oxygen user (default 1, i.e. shares)")
    _common(s)

    d = sub.add_parser("distribute", help="deterministic and robust plans, budget grid, ramp sweep")
    _instance_flags(d)
    d.add_argument("--grid", action="store_true", help="11 x 11 sweep of (a, b) over [0, 0.5]")
    d.add_argument("--ramp-sweep", action="store_true", help="ramp limits 0..500 step 50")
    _common(d)

    m = sub.add_parser("simulate", help="Monte-Carlo comparison of deterministic and robust plans")
    _instance_flags(m)
    m.add_argument("--levels", type=float, nargs="+", default=[0.3, 0.4, 0.5, 0.6, 0.7],
                   help="initial gasholder levels as fractions of capacity")
    m.add_argument("--etas", type=float, nargs="+", help="deviation levels (default: --eta)")
    m.add_argument("--all-levels", action="store_true", help="use the high, medium and low instances")
    m.add_argument("--rounds", type=int, default=1000)
    _common(m)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{args.config}: expected an object")
    known = vars(args)
    defaults = {}
    for key, val in cfg.items():
        k = key.replace("-", "_")
        if k not in known or k in ("command", "config"):
            raise ConfigError(f"{args.config}: unknown key {key!r}")
        defaults[k] = val
    # config supplies defaults; flags given on the command line still win
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_instance(args):
    if args.instance:
        inst = inst_mod.load(args.instance)
        return inst.with_eta(args.eta) if args.eta is not None else inst
    return synthesize(args.synth_level, args.seed, eta=0.05 if args.eta is None else args.eta)


def _check_budget(args) -> None:
    if not 0.0 <= args.budget_a <= 0.5:
        raise ConfigError("--budget-a must lie in [0, 0.5]")
    if args.budget_b < 0:
        raise ConfigError("--budget-b must be >= 0")
    if args.eta is not None and args.eta < 0:
        raise ConfigError("--eta must be >= 0")


# -- commands ----------------------------------------------------------------

def cmd_forecast(args) -> int:
    series = SeriesDataset.from_csv(args.series, lag=args.lag)
    n = len(series.values)
    train = args.train if args.train is not None else n - min(35, max(1, n // 4))
    if not args.lag < train < n:
        raise ConfigError(f"--train must lie between {args.lag + 1} and {n - 1}")
    if not 0.0 < args.confidence < 1.0:
        raise ConfigError("--confidence must lie in (0, 1)")
    res = holdout_forecast(series, n - train, confidence=args.confidence, restarts=args.restarts, seed=args.seed)
    values = np.asarray(series.values)
    nxt = predict(res.model, values[-args.lag:][::-1], args.confidence, include_noise=True)
    out = _out(args)
    with open(out / "forecast.csv", "w") as fh:
        fh.write("step,actual,mean,lower,upper\n")
        for k, (p, a) in enumerate(zip(res.predictions, res.actual), start=train + 1):
            fh.write(f"{k},{a:.10g},{p.mean:.10g},{p.lower:.10g},{p.upper:.10g}\n")
    summary = {"nominal": nxt.mean, "deviation": nxt.half_width, "mape": res.mape, "coverage": res.coverage,
               "train": train, "test": n - train, "signal_variance": res.model.spec.signal_variance,
               "length_scale": res.model.spec.length_scale, "noise_variance": res.model.spec.noise_variance}
    with open(out / "forecast_summary.csv", "w") as fh:
        fh.write("key,value\n" + "".join(f"{k},{v:.10g}\n" for k, v in summary.items()))
    if not args.no_plots:
        from .plotting import plot_forecast
        plot_forecast(res.actual, res.means, np.array([p.lower for p in res.predictions]),
                      np.array([p.upper for p in res.predictions]), out / "forecast.png")
    print(f"next value {nxt.mean:.6g} +- {nxt.half_width:.6g}; held-out MAPE {res.mape:.3f}% "
          f"coverage {100 * res.coverage:.1f}%")
    return EXIT_OK


def _totals(items: Sequence[str]) -> dict[str, float]:
    out = {}
    for it in items:
        key, sep, val = it.partition("=")
        try:
            out[key] = float(val)
        except ValueError:
            sep = ""
        if not sep or not key:
            raise ConfigError(f"--total expects USER=VALUE, got {it!r}")
    return out


def cmd_schedule(args) -> int:
    graph = load_graph(args.graph) if args.graph else synthetic_graph(args.seed, jobs=args.jobs)
    if any(c < 0 for c in args.capacity):
        raise ConfigError("--capacity values must be >= 0")
    totals = _totals(args.total)
    horizon = Horizon(args.periods, args.period_minutes)
    out = _out(args)
    status = EXIT_OK
    with open(out / "schedule_summary.csv", "w") as summ:
        summ.write("capacity,status,makespan,waiting,objective\n")
        for cap in args.capacity:
            try:
                sol = solve_scenario(graph, cap, args.horizon)
            except ScheduleInfeasible as exc:
                print(f"capacity {cap}: {exc}", file=sys.stderr)
                summ.write(f"{cap},infeasible,,,\n")
                status = EXIT_INFEASIBLE
                continue
            summ.write(f"{cap},optimal,{sol.makespan * graph.time_unit},{sol.waiting * graph.time_unit},"
                       f"{sol.objective:.10g}\n")
            with open(out / f"gantt_WL{cap}.csv", "w") as fh:
                export_gantt(sol, fh)
            with open(out / f"demand_WL{cap}.csv", "w") as fh:
                users = sorted(graph.users)
                curves = {u: demand_curve(sol, u, totals.get(u, 1.0), args.eta * totals.get(u, 1.0), horizon)
                          for u in users}
                fh.write("period," + ",".join(f"{u}_nominal,{u}_deviation" for u in users) + "\n")
                for t in range(horizon.period_count):
                    fh.write(f"{t + 1}," + ",".join(f"{curves[u].nominal[t]:.10g},{curves[u].deviation[t]:.10g}"
                                                    for u in users) + "\n")
            if not args.no_plots:
                from .plotting import plot_gantt
                rows = [(t[0], t[1], graph.op(t).machine, s * graph.time_unit, sol.completion[t] * graph.time_unit)
                        for t, s in sol.start.items()]
                plot_gantt(rows, graph.oxygen_stages, out / f"gantt_WL{cap}.png", f"WL = {cap}")
            print(f"capacity {cap}: makespan {sol.makespan * graph.time_unit} min, "
                  f"waiting {sol.waiting * graph.time_unit} min, objective {sol.objective:.6g}")
    return status


def cmd_distribute(args) -> int:
    _check_budget(args)
    inst = _load_instance(args)
    T = inst.horizon.period_count
    budget = budget_vector(args.budget_a, args.budget_b, T)
    out = _out(args)
    det = solve_deterministic(inst)
    if not det.is_optimal:
        print(det.message, file=sys.stderr)
        return EXIT_INFEASIBLE
    rob = solve_robust(inst, budget=budget)
    with open(out / "do_solution.csv", "w") as fh:
        export_solution(inst, det, fh)
    if rob.is_optimal:
        with open(out / "tsro_solution.csv", "w") as fh:
            export_solution(inst, rob, fh)
    with open(out / "distribute_summary.csv", "w") as fh:
        fh.write("method,status,objective,f1,f2,f3\n")
        for name, sol in (("DO", det), ("TSRO", rob)):
            f1, f2, f3 = sol.components
            fh.write(f"{name},{sol.status},{report_objective(sol):.10g},{f1:.10g},{f2:.10g},{f3:.10g}\n")
    print(f"DO objective {det.objective:.6g}")
    print(f"TSRO objective {report_objective(rob):.6g}" + ("" if rob.is_optimal else f" ({rob.message})"))
    if not args.no_plots:
        from .plotting import plot_grid, plot_levels, plot_ramp
        g = inst.gasholder
        levels = {"DO": det.level} | ({"TSRO": rob.level} if rob.is_optimal else {})
        plot_levels(levels, (g.level_min, g.level_mid, g.level_max), out / "levels.png")
    if args.grid:
        grid = budget_grid(inst)
        with open(out / "budget_grid.csv", "w") as fh:
            fh.write("a,b,objective,feasible\n")
            for a, b, f, ok in grid.rows():
                fh.write(f"{a:.2f},{b:.2f},{f:.10g},{int(ok)}\n")
        if not args.no_plots:
            plot_grid(grid.a_values, grid.b_values, grid.objective, out / "budget_grid.png")
        print(f"budget grid: {int(grid.feasible.sum())} of {grid.feasible.size} cells feasible")
    if args.ramp_sweep:
        rows = ramp_sweep(inst, budget)
        with open(out / "ramp_sweep.csv", "w") as fh:
            fh.write("ramp,do_objective,tsro_objective\n")
            fh.write("".join(f"{r:g},{d:.10g},{t:.10g}\n" for r, d, t in rows))
        if not args.no_plots:
            arr = np.array(rows)
            plot_ramp(arr[:, 0], {"DO": arr[:, 1], "TSRO": arr[:, 2]}, out / "ramp_sweep.png")
    return EXIT_OK if rob.is_optimal else EXIT_INFEASIBLE


def cmd_simulate(args) -> int:
    _check_budget(args)
    if args.rounds < 1:
        raise ConfigError("--rounds must be >= 1")
    if any(not 0.0 <= f <= 1.0 for f in args.levels):
        raise ConfigError("--levels must be fractions in [0, 1]")
    etas = args.etas if args.etas else [args.eta]  # None keeps each instance's deviations
    if args.instance:
        insts = [inst_mod.load(args.instance)]
    else:
        lv = ["high", "medium", "low"] if args.all_levels else [args.synth_level]
        insts = [synthesize(x, args.seed, eta=0.05) for x in lv]
    T = insts[0].horizon.period_count
    cases = run_comparison(insts, budget_vector(args.budget_a, args.budget_b, T), etas, args.levels,
                           args.rounds, args.seed)
    out = _out(args)
    with open(out / "simulation.csv", "w") as fh:
        write_report(cases, fh)
    for c in cases:
        print(f"{c.instance} eta={c.eta:g} GV0={c.level_init:g}: "
              + "; ".join(f"{r.method} nominal {r.nominal:.6g} sim {r.mean:.6g} +- {2 * r.std:.3g} "
                          f"penalty rounds {r.penalty_rounds}/{r.rounds}" for r in c.reports))
    if not args.no_plots:
        from .plotting import plot_simulation
        labels = [f"{c.instance} {c.eta:g} {c.level_init:g}" for c in cases]
        pick = lambda f: {m: np.array([f(c.reports[k]) for c in cases]) for k, m in enumerate(("DO", "TSRO"))}
        plot_simulation(labels, pick(lambda r: r.nominal), pick(lambda r: r.mean), pick(lambda r: r.std),
                        out / "simulation.png")
    return EXIT_OK if all(c.tsro.feasible for c in cases) else EXIT_INFEASIBLE


COMMANDS = {"forecast": cmd_forecast, "schedule": cmd_schedule, "distribute": cmd_distribute,
            "simulate": cmd_simulate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, sys.argv[1:] if argv is None else list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"oxyro: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"oxyro: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InstanceValidationError) as exc:
        print(f"oxyro: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GraphFormatError as exc:
        print(f"oxyro: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScheduleError as exc:
        print(f"oxyro: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScheduleInfeasible as exc:
        print(f"oxyro: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (OSError, InstanceFormatError) as exc:
        print(f"oxyro: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"oxyro: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
