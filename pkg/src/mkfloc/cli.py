"""Command-line entry point: ``mkfloc gen-map | simulate | bench | report``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bench import ExperimentConfig, load_config, load_results, run_experiment, write_results
from .env import PRESETS, MapError, load_map, make_preset, save_map
from .metrics import is_useless, rows_to_csv
from .sim import generate_trajectory, save_trajectories

WORKERS_ENV = "MKFLOC_WORKERS"
USELESS_MARK = "*"

log = logging.getLogger("mkfloc")


class UsageError(Exception):
    """Bad flags or missing inputs (exit code 2)."""


def _cmd_gen_map(args) -> int:
    env = make_preset(args.preset, nonsymmetric=args.nonsymmetric, seed=args.seed)
    save_map(env, args.out)
    log.info("wrote %s (%d obstacles, %d beacons)", args.out, len(env.obstacles), env.n_beacons)
    return 0


def _cmd_simulate(args) -> int:
    path = Path(args.map)
    if not path.exists():
        raise UsageError(f"map file not found: {path}")
    env = load_map(path)
    trajs = []
    for i in range(args.n_traj):
        seed = int(np.random.SeedSequence(args.seed, spawn_key=(i,)).generate_state(1, dtype=np.uint64)[0])
        trajs.append(generate_trajectory(env, args.T, rng=np.random.default_rng(seed), seed=seed))
    paths = save_trajectories(trajs, args.out)
    log.info("wrote %d trajectories to %s", len(paths), args.out)
    return 0


def _resolve_workers(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def _cmd_bench(args) -> int:
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        cfg = load_config(path)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    workers = _resolve_workers(args.workers)
    if workers is not None:
        if workers < 1:
            raise UsageError("--workers must be >= 1")
        cfg.workers = workers
    log.info("running %d cells x %d trajectories on %d worker(s)",
             len(cfg.cell_list()), cfg.n_trajectories, cfg.workers)
    report = run_experiment(cfg, progress=True)
    write_results(report, args.out)
    log.info("results in %s", args.out)
    return 0


def _fmt_cell(mean: float, std: float) -> str:
    return f"{mean:.2f}({std:.2f})"


def render_table(summary: dict, rows) -> str:
    """Accuracy grid (rows: env, N; columns: filter/setting) and a runtime grid."""
    w, h = summary["width"], summary["height"]
    cols = sorted({(r.filter, r.setting) for r in rows}, key=lambda c: (c[1] != "sigma", c[1], c[0]))
    keys = sorted({(r.env, r.N) for r in rows})
    lookup = {(r.env, r.N, r.filter, r.setting): r for r in rows}
    head = ["env", "N"] + [f"{f} {s}" for f, s in cols]
    body = []
    for env, n in keys:
        line = [env, str(n)]
        for f, s in cols:
            r = lookup.get((env, n, f, s))
            if r is None:
                line.append("-")
            else:
                line.append(_fmt_cell(r.mean_fse, r.std_fse) + (USELESS_MARK if is_useless(r, w, h) else ""))
        body.append(line)
    out = ["Final-step error, mean(std)", _grid(head, body)]
    if any(is_useless(r, w, h) for r in rows):
        out.append(f"{USELESS_MARK} mean MSE above the random-guess level")

    rt_head = ["env", "filter", "N", "setting", "FSE", "time_s"]
    rt_body = [[r.env, r.filter, str(r.N), r.setting, f"{r.mean_fse:.2f}", f"{r.mean_time * r.n_runs:.2f}"]
               for r in sorted(rows, key=lambda r: (r.env, r.filter, r.setting, r.N))]
    out += ["", "Total runtime", _grid(rt_head, rt_body)]
    return "\n".join(out) + "\n"


def _grid(head, body) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(str(x).ljust(wd) for x, wd in zip(head, widths)).rstrip()]
    lines.append("  ".join("-" * wd for wd in widths))
    lines += ["  ".join(str(x).ljust(wd) for x, wd in zip(row, widths)).rstrip() for row in body]
    return "\n".join(lines)


def _cmd_report(args) -> int:
    d = Path(args.results_dir)
    if not d.is_dir():
        raise UsageError(f"results directory not found: {d}")
    try:
        summary, rows = load_results(d)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if not rows:
        raise UsageError(f"{d}: results contain no rows")
    if args.format == "csv":
        flags = [is_useless(r, summary["width"], summary["height"]) for r in rows]
        sys.stdout.write(rows_to_csv(rows, flags))
    else:
        sys.stdout.write(render_table(summary, rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mkfloc", description="Planar localization with EKF, PF and MKF.")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-map", help="write a preset map file")
    g.add_argument("--preset", required=True, choices=sorted(PRESETS))
    g.add_argument("--nonsymmetric", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_map)

    s = sub.add_parser("simulate", help="generate ground-truth trajectories")
    s.add_argument("--map", required=True)
    s.add_argument("--T", type=int, default=100)
    s.add_argument("--n-traj", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    b = sub.add_parser("bench", help="run a paired PF/MKF experiment")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--workers", type=int, default=None, help=f"overrides the config and ${WORKERS_ENV}")
    b.set_defaults(func=_cmd_bench)

    r = sub.add_parser("report", help="render a results directory")
    r.add_argument("results_dir")
    r.add_argument("--format", choices=("table", "csv"), default="table")
    r.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on bad flags
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if getattr(args, "T", 1) < 1 or getattr(args, "n_traj", 1) < 1:
        print("mkfloc: error: --T and --n-traj must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mkfloc: error: {exc}", file=sys.stderr)
        return 2
    except (MapError, OSError, ValueError, RuntimeError) as exc:
        print(f"mkfloc: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
