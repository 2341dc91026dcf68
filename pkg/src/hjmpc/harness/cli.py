"""Command line: precompute, rollout, report, validate.

Exit codes: 0 success, 1 bad input, 2 value iteration did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .. import reachability, valuefn
from ..mpc import VARIANTS
from . import experiment, metrics, plotting
from . import scenario as scen

logger = logging.getLogger("hjmpc")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2


class InputError(Exception):
    pass


def _scenario(args):
    if args.scenario is None:
        return scen.default_scenario(paper_scale=args.paper_scale)
    if not Path(args.scenario).is_file():
        raise InputError(f"scenario file not found: {args.scenario}")
    sc = scen.load(args.scenario)
    return sc.with_grid(scen.PAPER_GRID) if args.paper_scale else sc


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _variant_list(text: str) -> list[str]:
    out = [t.strip() for t in text.split(",") if t.strip()]
    bad = [v for v in out if v not in VARIANTS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"variants must be drawn from {','.join(VARIANTS)}")
    return out


def cmd_validate(args) -> int:
    if args.emit_default:
        scen.dump(scen.default_scenario(paper_scale=args.paper_scale), args.emit_default)
        print(f"wrote {args.emit_default}")
        return EXIT_OK
    if args.scenario is None:
        raise InputError("--scenario or --emit-default is required")
    sc = _scenario(args)
    print(f"ok: {sc.name}, {len(sc.obstacles)} obstacles, K = {sc.steps}, grid {sc.grid_counts}")
    return EXIT_OK


def cmd_precompute(args) -> int:
    sc = _scenario(args)
    grid = sc.grid()
    logger.info("solving on grid %s (%d nodes)", grid.shape, grid.size)
    field, report = reachability.solve_safety_value(
        sc.model, grid, sc, tol=args.tol, max_iters=args.max_iters, cfl=args.cfl)
    valuefn.save(field, args.out)
    print(json.dumps(report.to_dict(), sort_keys=True))
    if not report.converged:
        print(f"warning: value iteration stopped after {report.iterations} sweeps without reaching "
              f"tol {args.tol}; {args.out} holds the last iterate", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _progress(done, total):
    if done % 25 == 0 or done == total:
        logger.info("rollouts %d/%d", done, total)


def cmd_rollout(args) -> int:
    sc = _scenario(args)
    if not Path(args.value).is_file():
        raise InputError(f"value file not found: {args.value}")
    field = valuefn.load(args.value)
    if field.grid != sc.grid():
        logger.warning("value grid %s differs from the scenario grid %s", field.grid.shape, sc.grid_counts)
    horizons = args.horizons
    if any(h <= args.hc for h in horizons):
        raise InputError("every horizon must exceed --hc")
    t0 = time.perf_counter()
    records = experiment.run_batch(sc, field, args.variants, horizons, args.n, args.seed,
                                   controls_per_plan=args.hc, margin=args.margin,
                                   progress=_progress)
    path = experiment.write_outputs(records, args.out)
    summary = {
        "records": str(path), "rows": len(records), "seed": args.seed,
        "timing": {"wall_time_s": round(time.perf_counter() - t0, 3),
                   "workers": experiment.worker_count()},
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        rows = experiment.read_records(args.records)
    except (OSError, experiment.RecordsFormatError) as exc:
        raise InputError(str(exc)) from None
    groups = metrics.group(rows)
    reference = args.reference
    if reference is None:
        default = metrics.config_id("safety-value", 20)
        reference = default if default in groups else sorted(groups)[0]
    try:
        report = metrics.compute_metrics(groups, reference)
    except (KeyError, metrics.SeedMismatchError) as exc:
        raise InputError(str(exc)) from None
    print(report.table())
    out = Path(args.out) if args.out else Path(args.records).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    plotting.metrics_figure(report, out / "metrics.png")
    traj_dir = Path(args.records).parent / "trajectories"
    if traj_dir.is_dir():
        sc = _scenario(args)
        trajs = {}
        for r in rows:
            f = traj_dir / f"{r.variant}_h{r.h}_hc{r.h_c}_seed{r.seed}.csv"
            if f.is_file():
                trajs.setdefault(r.config, []).append((experiment.read_trajectory(f)["states"], r.safe))
        if trajs:
            plotting.trajectories_figure(sc, trajs, out / "trajectories.png")
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hjmpc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", help="scenario YAML/JSON (default: built-in scenario)")
        sp.add_argument("--paper-scale", action="store_true", help="use the 50x50x50x30 grid preset")

    sp = sub.add_parser("validate", help="lint a scenario file")
    common(sp)
    sp.add_argument("--emit-default", metavar="PATH", help="write the built-in scenario to PATH")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("precompute", help="solve for the safety value and write an HJVF file")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tol", type=float, default=1e-4)
    sp.add_argument("--max-iters", type=int, default=2000)
    sp.add_argument("--cfl", type=float, default=0.5)
    sp.set_defaults(fn=cmd_precompute)

    sp = sub.add_parser("rollout", help="closed-loop rollouts for each (variant, horizon)")
    common(sp)
    sp.add_argument("--value", required=True)
    sp.add_argument("--variants", type=_variant_list, default=list(VARIANTS))
    sp.add_argument("--horizons", type=_int_list, default=[10, 20, 40])
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--hc", type=int, default=1, help="controls applied per plan")
    sp.add_argument("--margin", type=float, help="terminal safety margin (default: from the scenario)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(fn=cmd_rollout)

    sp = sub.add_parser("report", help="metrics table, JSON and figures from a records CSV")
    common(sp)
    sp.add_argument("--records", required=True)
    sp.add_argument("--reference", help="config id, e.g. safety-value/h=20")
    sp.add_argument("--out", help="directory for report.json and figures (default: next to records)")
    sp.add_argument("--json", action="store_true", help="also print the report as JSON")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (InputError, scen.ScenarioError, valuefn.ValueFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
