"""Command line entry point.

    quadcatch run --scenario centered-50 --method all --seed 0 --format table
    quadcatch fit-gmm demos.txt --out mixture.json
    quadcatch replay throw.log --method gmm --format csv
    quadcatch report a.json b.json --format table
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from ..ballistics import ThrowStartDetector, read_stream
from ..errors import InsufficientDataError, DegenerateDataError, PlanInfeasibleError, QuadCatchError
from ..frames import pixel_to_robot
from ..gmm import read_dataset, select_k, write_mixture
from ..predictor import RegressionAccumulators, ingest, solve
from ..selector import METHODS, refresh
from ..simulator import run_episode
from .config import load_config
from .report import FORMATS, emit_report, read_report, render
from .runner import combine, make_trials, run_scenario, scenario_config

logger = logging.getLogger("quadcatch")


def _methods(arg: str):
    return METHODS if arg == "all" else (arg,)


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    base = cfg.scenario(args.scenario, args.seed)
    reports = []
    for k in range(args.repeats):
        sc = replace(base, seed=base.seed + k)
        reports.append(run_scenario(sc, cfg.sim, _methods(args.method), workers=args.workers))
        logger.info("seed %d done", sc.seed)
    report = reports[0] if len(reports) == 1 else combine(reports)
    _write(emit_report(report, args.format), args.out)
    if args.trace_dir:
        _dump_traces(base, cfg.sim, _methods(args.method), Path(args.trace_dir))
    return 0


def _dump_traces(scenario, sim, methods, out_dir: Path, every: int = 10) -> None:
    # re-simulates the first seed only; traces are large
    out_dir.mkdir(parents=True, exist_ok=True)
    conf = scenario_config(scenario, sim)
    for trial in make_trials(scenario, conf):
        for m in methods:
            res = run_episode(trial.throw, conf.with_method(m), seed=trial.noise_seed, phase=trial.phase)
            doc = {
                "index": trial.index,
                "method": m,
                "caught": res.caught,
                "plans": [p.to_dict() for p in res.plan_history],
                "trace": res.trace.subsample(every).to_records(),
            }
            (out_dir / f"episode_{trial.index:04d}_{m}.json").write_text(json.dumps(doc))


def cmd_fit_gmm(args) -> int:
    cfg = load_config(args.config)
    if args.dataset is not None:
        data = read_dataset(args.dataset)
        mix = select_k(data, range(1, args.k_max + 1), seed=args.seed)
    else:
        mix = cfg.sim.mixture
    if args.out is None:
        sys.stdout.write(json.dumps(mix.to_dict(), indent=2) + "\n")
    else:
        write_mixture(mix, args.out)
    logger.info("selected K=%d", mix.K)
    return 0


REPLAY_FIELDS = ("stamp", "n_used", "t_catch", "t_remain", "x_catch", "y_catch", "z_catch")


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    sim = cfg.sim.with_method(args.method)
    stream = read_stream(args.log, fps=sim.perception_fps)
    gate = ThrowStartDetector(sim.delta_min)
    acc = RegressionAccumulators()
    rows = []
    for det in stream:
        pt = pixel_to_robot(det, sim.camera)
        if not gate.update(pt):
            continue
        ingest(acc, pt)
        try:
            fit = solve(acc, sim.lam, sim.g)
            plan = refresh(sim.method, fit, sim.context, det.stamp - fit.t_ref)
        except (InsufficientDataError, DegenerateDataError, PlanInfeasibleError) as exc:
            logger.debug("t=%.3f: no plan (%s)", det.stamp, exc)
            continue
        rows.append((det.stamp, fit.n_used, plan.t_catch_abs, plan.t_remain, *plan.x_catch))
    if args.format == "json":
        text = json.dumps([dict(zip(REPLAY_FIELDS, r)) for r in rows], indent=2) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPLAY_FIELDS)
        w.writerows([[repr(v) if isinstance(v, float) else v for v in r] for r in rows])
        text = buf.getvalue()
    else:
        lines = ["".join(f"{h:>11}" for h in REPLAY_FIELDS)]
        lines += ["".join(f"{v:>11}" if isinstance(v, int) else f"{v:>11.4f}" for v in r) for r in rows]
        text = "\n".join(lines) + "\n"
    _write(text, args.out)
    return 0


def cmd_report(args) -> int:
    reports = [read_report(p) for p in args.reports]
    report = reports[0] if len(reports) == 1 else combine(reports)
    _write(render(report, args.format), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadcatch", description="Simulated quadruped object catching.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt_default="table"):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=FORMATS, default=fmt_default)

    p = sub.add_parser("run", help="run a scenario batch and print the report")
    common(p)
    p.add_argument("--scenario", default="centered-50")
    p.add_argument("--method", choices=METHODS + ("all",), default="all")
    p.add_argument("--seed", type=int, default=None, help="scenario seed (default: from config or 0)")
    p.add_argument("--repeats", type=int, default=1, help="run this many consecutive seeds and pool them")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trace-dir", help="also write per-episode traces for the first seed here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit-gmm", help="fit a mixture to demonstration positions")
    p.add_argument("dataset", nargs="?", help="x y z records; omitted: synthetic demonstrations from the config")
    p.add_argument("--config")
    p.add_argument("--out", help="mixture JSON file (default: stdout)")
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_gmm)

    p = sub.add_parser("replay", help="re-run prediction and selection on an observation log")
    p.add_argument("log", help="observation log written by write_stream")
    common(p)
    p.add_argument("--method", choices=METHODS, default="gmm")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="pool JSON reports and render them")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.add_argument("--format", choices=FORMATS, default="table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "repeats", 1) < 1:
        parser.error("--repeats must be >= 1")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except QuadCatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
