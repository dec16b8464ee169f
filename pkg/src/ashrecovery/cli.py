"""Command-line entry point.

    ashrecovery generate  --users 1000 --days 7 --seed 1 --out traj.csv --towers-out towers.csv
    ashrecovery aggregate --trajectories traj.csv --tower-map towers.csv --out agg.csv
    ashrecovery recover   --aggregate agg.csv --tower-map towers.csv --out rec.csv
    ashrecovery evaluate  --recovered rec.csv --truth traj.csv --tower-map towers.csv --out metrics.csv
    ashrecovery sweep     --axis spatial --values sector,base_station,district --out-dir sweep/

Every option can also come from ``--config FILE`` holding ``key = value``
lines (keys are option names, ``-`` or ``_`` alike); the command line wins.
Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .aggregation import PerturbConfig, publish
from .evaluation import (CDF_GRID, error_cdf, evaluate, regularity_stats, uniqueness_curve)
from .experiment import ExperimentConfig, base_population, ground_truth_view, run_sweep, summary_rows
from .generator import GeneratorConfig, generate_population
from .model import LEVELS, DataError, TimeGrid
from .recovery import RecoveryConfig, RecoveryResult, recover

log = logging.getLogger("ashrecovery")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{s!r} is not an integer") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"{v} must be positive")
    return v


def _positive_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{s!r} is not a number") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{v} must be positive")
    return v


def _nonneg_float(s: str) -> float:
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"{v} must be >= 0")
    return v


def _probability(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{s!r} is not a number") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{v} outside [0, 1]")
    return v


def _window(s: str):
    try:
        lo, hi = (float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{s!r} is not 'start,end' in hours") from None
    if not 0.0 <= lo < hi <= 24.0:
        raise argparse.ArgumentTypeError(f"window {s} must lie within one day")
    return lo, hi


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


# -- parser ---------------------------------------------------------------------

def _add_generator_options(p):
    d = GeneratorConfig()
    g = p.add_argument_group("population")
    g.add_argument("--users", type=_positive_int, default=d.num_users)
    g.add_argument("--towers", type=_positive_int, default=d.num_towers)
    g.add_argument("--world-size", type=_positive_float, default=d.world_size, help="meters")
    g.add_argument("--days", type=_positive_int, default=d.num_days)
    g.add_argument("--night-home-prob", type=_probability, default=d.night_home_prob)
    g.add_argument("--work-attachment", type=_probability, default=d.work_attachment)
    g.add_argument("--exploration-prob", type=_probability, default=d.exploration_prob)
    g.add_argument("--commute-speed", type=_positive_float, default=d.commute_speed, help="meters per slot")
    g.add_argument("--work-distance", type=_positive_float, default=d.work_distance, help="meters")
    g.add_argument("--seed", type=int, default=d.seed)


def _add_recovery_options(p):
    d = RecoveryConfig()
    g = p.add_argument_group("attack")
    g.add_argument("--night-window", type=_window, default=d.night_window, help="hours, e.g. 0,6")
    g.add_argument("--night-threshold", type=_nonneg_float, default=d.night_threshold,
                   help="pre-link distance in meters for the night stage")
    g.add_argument("--day-threshold", type=_nonneg_float, default=d.day_threshold,
                   help="pre-link distance in meters for the day stage")
    g.add_argument("--per-day-gain", action="store_true",
                   help="cross-day costs from the previous day only, not the whole chain")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value file with default options")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("--slot-minutes", type=_positive_int, default=30,
                        help="slot length of the input files")

    parser = _Parser(prog="ashrecovery", description="Trajectory recovery from aggregated mobility data.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate", parents=[common], help="synthesize a population")
    _add_generator_options(p)
    p.add_argument("--out", default="trajectories.csv")
    p.add_argument("--towers-out", default="towers.csv")

    p = sub.add_parser("aggregate", parents=[common], help="publish per-slot tower counts")
    p.add_argument("--trajectories", required=True)
    p.add_argument("--tower-map", required=True)
    p.add_argument("--out", default="aggregate.csv")
    p.add_argument("--spatial", choices=LEVELS, default="sector")
    p.add_argument("--temporal", type=_positive_int, default=None, help="output slot length in minutes")
    p.add_argument("--perturb", type=_probability, default=0.0, help="record displacement probability")
    p.add_argument("--perturb-seed", type=int, default=0)
    p.add_argument("--tower-map-out", default=None,
                   help="tower map of the published level (default <out>.towers.csv when coarsened)")

    p = sub.add_parser("recover", parents=[common], help="run the attack on an aggregate")
    p.add_argument("--aggregate", required=True)
    p.add_argument("--tower-map", required=True)
    p.add_argument("--out", default="recovered.csv")
    _add_recovery_options(p)

    p = sub.add_parser("evaluate", parents=[common], help="score recovered trajectories")
    p.add_argument("--recovered", required=True, help="final recovered CSV; .stage1/.stage2 files are picked up")
    p.add_argument("--truth", required=True)
    p.add_argument("--tower-map", required=True, help="tower map of the ground truth")
    p.add_argument("--level", choices=LEVELS, default="sector", help="level the recovered ids refer to")
    p.add_argument("--truth-slot-minutes", type=_positive_int, default=30)
    p.add_argument("--ks", default="1,2,3,4,5")
    p.add_argument("--out", default="metrics.csv")
    p.add_argument("--cdf-out", default="error_cdf.csv")
    p.add_argument("--plot-data", default=None, metavar="DIR", help="write figure-ready CSVs to DIR")
    p.add_argument("--night-window", type=_window, default=RecoveryConfig().night_window)

    p = sub.add_parser("sweep", parents=[common], help="run the pipeline across one factor")
    _add_generator_options(p)
    _add_recovery_options(p)
    p.add_argument("--axis", choices=("spatial", "temporal", "users", "perturb"), required=True)
    p.add_argument("--values", required=True, help="comma separated sweep values")
    p.add_argument("--level", choices=LEVELS, default="sector")
    p.add_argument("--perturb", type=_probability, default=0.0)
    p.add_argument("--ks", default="1,2,3,4,5")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out-dir", default="sweep")
    p.add_argument("--plot-data", action="store_true", help="also write error CDFs per point")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        values = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest: a for a in sub._actions}
        for key in values:
            if key not in dests or key in ("config", "help"):
                raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
        defaults = {}
        for key, raw in values.items():
            action = dests[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                try:
                    defaults[key] = action.type(raw) if action.type else raw
                except (argparse.ArgumentTypeError, ValueError) as exc:
                    raise UsageError(f"{args.config}: {key}: {exc}") from None
                if action.choices is not None and defaults[key] not in action.choices:
                    raise UsageError(f"{args.config}: {key}: {raw!r} not in {list(action.choices)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


# -- commands -------------------------------------------------------------------

def _generator_config(args) -> GeneratorConfig:
    return GeneratorConfig(
        num_users=args.users, num_towers=args.towers, world_size=args.world_size,
        night_home_prob=args.night_home_prob, work_attachment=args.work_attachment,
        exploration_prob=args.exploration_prob, commute_speed=args.commute_speed,
        work_distance=args.work_distance, num_days=args.days,
        slot_seconds=args.slot_minutes * 60, seed=args.seed)


def _recovery_config(args) -> RecoveryConfig:
    return RecoveryConfig(night_window=args.night_window, night_threshold=args.night_threshold,
                          day_threshold=args.day_threshold, accumulate_days=not args.per_day_gain)


def _ks(s: str):
    try:
        ks = tuple(int(k) for k in s.split(","))
    except ValueError:
        raise UsageError(f"--ks {s!r}: expected comma separated integers") from None
    if not ks or min(ks) < 1:
        raise UsageError("--ks values must be >= 1")
    return ks


def cmd_generate(args) -> int:
    if 86400 % (args.slot_minutes * 60):
        raise UsageError(f"--slot-minutes {args.slot_minutes} does not divide a day")
    ts = generate_population(_generator_config(args))
    io.store_trajectories(ts, args.out)
    io.store_tower_map(ts.tower_map, args.towers_out)
    print(f"N={ts.N} T={ts.grid.T} towers={len(ts.tower_map)}")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    tm = io.load_tower_map(args.tower_map)
    ts = io.load_trajectories(args.trajectories, tm, slot_seconds=args.slot_minutes * 60)
    factor = 1
    if args.temporal is not None:
        if args.temporal % args.slot_minutes:
            raise UsageError(f"--temporal {args.temporal} is not a multiple of {args.slot_minutes} min")
        factor = args.temporal // args.slot_minutes
    noise = PerturbConfig(args.perturb, args.perturb_seed) if args.perturb > 0 else None
    agg = publish(ts, args.spatial, factor, noise)
    io.store_aggregate(agg, args.out)
    if args.spatial != "sector" or args.tower_map_out:
        out = args.tower_map_out or f"{args.out}.towers.csv"
        io.store_tower_map(agg.tower_map, out)
        print(f"tower map of level {args.spatial}: {out}")
    print(f"N={agg.N} T={agg.grid.T} slot={agg.grid.slot_seconds // 60}min locations={len(agg.tower_map)}")
    return EXIT_OK


def cmd_recover(args) -> int:
    tm = io.load_tower_map(args.tower_map)
    agg = io.load_aggregate(args.aggregate, tm, slot_seconds=args.slot_minutes * 60)
    result = recover(agg, _recovery_config(args))
    for k, name in enumerate(("night", "day", "full"), 1):
        io.store_recovered(result.stages[name], io.stage_path(args.out, k))
    io.store_recovered(result.final, args.out)
    print(f"recovered N={agg.N} T={agg.grid.T} -> {args.out}")
    return EXIT_OK


def _write_plot_data(out_dir: Path, truth, report, night_window) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    reg = regularity_stats(truth, night_window)
    rows = []
    for k in range(reg.top_k_per_user.shape[1]):
        frac = np.sort(reg.top_k_per_user[:, k])
        cum = np.arange(1, len(frac) + 1) / len(frac)
        rows.extend((k + 1, f, c) for f, c in zip(frac, cum))
    _rows(out_dir / "top_k_fraction_cdf.csv", ("k", "fraction", "cum_fraction"), rows)
    _rows(out_dir / "night_locations.csv", ("num_locations", "fraction_users"),
          sorted(reg.night_location_counts.items()))
    e = np.sort(reg.velocity_error)
    if e.size:
        io.store_cdf(error_cdf(e, CDF_GRID + (1500.0, 3000.0)), out_dir / "velocity_error_cdf.csv")
    bins = np.linspace(0.0, max(np.log(2.0), float(np.max(np.concatenate([reg.gain_same, reg.gain_diff, [0.0]])))), 41)
    rows = []
    for label, g in (("same", reg.gain_same), ("different", reg.gain_diff)):
        if g.size:
            dens, edges = np.histogram(g, bins=bins, density=True)
            rows.extend((label, a, b, d) for a, b, d in zip(edges[:-1], edges[1:], dens))
    _rows(out_dir / "gain_pdf.csv", ("group", "bin_left", "bin_right", "density"), rows)
    rows = [(s, k, v) for s in ("top", "rand", "cont")
            for k, v in uniqueness_curve(truth.locations, strategy=s).items()]
    _rows(out_dir / "uniqueness.csv", ("strategy", "k", "fraction"), rows)
    for stage, cdf in report.error_cdf.items():
        io.store_cdf(cdf, out_dir / f"error_cdf_stage{stage.lstrip('#')}.csv")


def _rows(path, header, rows) -> None:
    f, w = io._writer(path)
    with f:
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def cmd_evaluate(args) -> int:
    ks = _ks(args.ks)
    tm = io.load_tower_map(args.tower_map)
    truth = io.load_trajectories(args.truth, tm, slot_seconds=args.truth_slot_minutes * 60)
    level_map = tm.coarsen(args.level)
    final = io.load_recovered(args.recovered, level_map, stage="full", slot_seconds=args.slot_minutes * 60)
    if final.N != truth.N:
        raise DataError(f"recovered has {final.N} trajectories, truth {truth.N}")
    if truth.grid.T % final.grid.T:
        raise DataError(f"recovered has {final.grid.T} slots, truth {truth.grid.T}")
    view = ground_truth_view(truth, args.level, truth.grid.T // final.grid.T)
    stages = {}
    for k, name in ((1, "night"), (2, "day")):
        p = io.stage_path(args.recovered, k)
        if p.exists():
            stages[name] = io.load_recovered(p, level_map, final.grid, stage=name)
    stages["full"] = final
    report = evaluate(RecoveryResult(stages), view, ks)
    io.store_metrics(report.rows(), args.out)
    io.store_cdf(report.error_cdf["#3"], args.cdf_out)
    if args.plot_data:
        _write_plot_data(Path(args.plot_data), view, report, args.night_window)
    for stage, a in report.accuracy.items():
        print(f"accuracy {stage} = {a:.4f}")
    return EXIT_OK


def _sweep_values(axis: str, raw: str):
    parts = [v.strip() for v in raw.split(",") if v.strip()]
    if not parts:
        raise UsageError("--values is empty")
    try:
        if axis == "spatial":
            bad = [v for v in parts if v not in LEVELS]
            if bad:
                raise UsageError(f"unknown levels {bad}; expected {LEVELS}")
            return tuple(parts)
        if axis in ("temporal", "users"):
            vals = tuple(int(v) for v in parts)
            if min(vals) < 1:
                raise UsageError(f"--values for {axis} must be positive")
            return vals
        vals = tuple(float(v) for v in parts)
        if not all(0.0 <= v <= 1.0 for v in vals):
            raise UsageError("perturbation values must lie in [0, 1]")
        return vals
    except ValueError:
        raise UsageError(f"--values {raw!r} do not parse for axis {axis}") from None


def cmd_sweep(args) -> int:
    cfg = ExperimentConfig(
        generator=_generator_config(args), recovery=_recovery_config(args),
        level=args.level, slot_minutes=args.slot_minutes, perturb=args.perturb,
        sweep=args.axis, values=_sweep_values(args.axis, args.values), ks=_ks(args.ks),
        workers=args.workers, out_dir=args.out_dir)
    try:
        cfg.validate()
    except DataError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_sweep(cfg)
    for point, rep in results:
        io.store_metrics(rep.rows(), out / f"metrics_{point.label()}.csv")
        if args.plot_data:
            for stage, cdf in rep.error_cdf.items():
                io.store_cdf(cdf, out / f"error_cdf_{point.label()}_stage{stage.lstrip('#')}.csv")
    io.store_metrics(summary_rows(results), out / "summary.csv")
    for point, rep in results:
        print(point.label(), " ".join(f"{s}={a:.4f}" for s, a in rep.accuracy.items()))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "aggregate": cmd_aggregate, "recover": cmd_recover,
            "evaluate": cmd_evaluate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA
