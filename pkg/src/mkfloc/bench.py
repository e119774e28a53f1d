"""Paired PF / MKF comparison experiments.

Every trajectory is generated once and then filtered by every configured
cell ``(filter, N, noise setting)``.  All randomness derives from the master
seed through ``SeedSequence`` keys ``(trajectory index, cell index)``, so a
report is reproducible bit-for-bit whatever the worker count.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .env import Environment, SymmetrySpec, load_map, make_preset
from .filters import FilterConfig
from .metrics import AggregateRow, aggregate, fse, is_useless, mse, symmetry_aware_fse
from .models import SIGMA_D0_SQ, SIGMA_PHI0, SIGMA_R0, MeasurementNoiseModel, MotionNoiseModel
from .sim import DEFAULT_T, generate_trajectory, run_filter

log = logging.getLogger(__name__)

SETTINGS = {"sigma": 1.0, "4sigma": 4.0}
RUN_COLUMNS = ("traj_id", "filter", "N", "setting", "mse", "fse")
TIMING_COLUMNS = ("traj_id", "filter", "N", "setting", "time_s")
RUNTIME_COLUMNS = ("env", "filter", "N", "FSE", "time_s")


@dataclass
class ExperimentConfig:
    """Declarative experiment description (mirrors the JSON config file).

    ``map`` is a preset name (``world10``, ``World18``, ``WORLD27``,
    ``labyrinth``) or a path to a map file.  ``cells`` may list explicit
    ``[filter, N, setting]`` triples; otherwise the full grid of
    ``filters x particles x settings`` is run.
    """

    map: str = "world10"
    nonsymmetric: bool = False
    map_seed: int = 0
    filters: list[str] = field(default_factory=lambda: ["PF", "MKF"])
    particles: list[int] = field(default_factory=lambda: [100, 500, 1000, 4000])
    settings: list[str] = field(default_factory=lambda: ["sigma", "4sigma"])
    cells: list[list] | None = None
    T: int = DEFAULT_T
    n_trajectories: int = 500
    seed: int = 0
    workers: int = 1
    k_measure: int = 5
    sigma_d0_sq: float = SIGMA_D0_SQ
    sigma_r0: float = SIGMA_R0
    sigma_phi0: float = SIGMA_PHI0
    speed_range: tuple[float, float] = (0.0, 0.5)
    q_samples: int = 64
    full_scale: bool = False

    def __post_init__(self):
        if self.full_scale:
            self.n_trajectories = 10_000
            self.particles = sorted(set(self.particles) | {100, 500, 1000, 4000, 10_000})
        self.speed_range = tuple(float(v) for v in self.speed_range)
        for name in ("T", "n_trajectories", "workers", "k_measure", "q_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if min(self.sigma_d0_sq, self.sigma_r0, self.sigma_phi0) <= 0:
            raise ValueError("noise scales must be positive")
        for s in self.settings:
            if s not in SETTINGS:
                raise ValueError(f"unknown noise setting {s!r}; choose from {sorted(SETTINGS)}")
        for c in self.cell_list():
            if c[0] not in ("PF", "MKF", "EKF") or c[1] < 1 or c[2] not in SETTINGS:
                raise ValueError(f"invalid cell {c}")

    def cell_list(self) -> list[tuple[str, int, str]]:
        if self.cells is not None:
            return [(str(f).upper(), int(n), str(s)) for f, n, s in self.cells]
        return [(f.upper(), int(n), s) for f, n, s in product(self.filters, self.particles, self.settings)]

    def environment(self) -> Environment:
        if Path(self.map).suffix or os.sep in self.map:
            return load_map(self.map)
        return make_preset(self.map, self.nonsymmetric, self.map_seed)

    def filter_config(self, N: int, setting: str) -> FilterConfig:
        M0 = np.diag([self.sigma_r0**2, self.sigma_phi0**2])
        return FilterConfig(
            N=N,
            k_measure=self.k_measure,
            M=SETTINGS[setting] * M0,
            R=2.0 * self.sigma_d0_sq * np.eye(self.k_measure),
            q_samples=self.q_samples,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["speed_range"] = list(self.speed_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return ExperimentConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))


@dataclass
class RunReport:
    config: dict
    rows: list[AggregateRow]
    runs: list[dict]
    trajectories: list[dict]
    env: dict
    provenance: dict = field(default_factory=dict)

    def row(self, filter: str, N: int, setting: str) -> AggregateRow:
        for r in self.rows:
            if (r.filter, r.N, r.setting) == (filter, N, setting):
                return r
        raise KeyError((filter, N, setting))

    def runs_for(self, filter: str, N: int, setting: str) -> list[dict]:
        """Per-run records of one cell, ordered by trajectory id."""
        return [r for r in self.runs if (r["filter"], r["N"], r["setting"]) == (filter, N, setting)]

    def runtime_rows(self) -> list[dict]:
        """Total wall time and mean FSE per cell, shaped like a runtime table."""
        out = []
        for r in self.rows:
            total = float(sum(x["time_s"] for x in self.runs_for(r.filter, r.N, r.setting)))
            out.append({"env": r.env, "filter": r.filter, "N": r.N, "FSE": r.mean_fse, "time_s": total})
        return out


def _trajectory_seed(master: int, idx: int) -> int:
    return int(np.random.SeedSequence(master, spawn_key=(idx,)).generate_state(1, dtype=np.uint64)[0])


def symmetry_of(env: Environment) -> SymmetrySpec | None:
    """Tile translation group of a fully tiled world (``None`` for other maps)."""
    if env.tiles is None or env.name.startswith("n-"):
        return None
    tw, th = env.tile_size
    return SymmetrySpec(env.tiles[0], env.tiles[1], tw, th)


def _run_one(env: Environment, cfg: ExperimentConfig, idx: int) -> tuple[dict, list[dict]]:
    seed = _trajectory_seed(cfg.seed, idx)
    traj = generate_trajectory(
        env,
        cfg.T,
        cfg.speed_range,
        np.random.default_rng(seed),
        k=cfg.k_measure,
        motion_noise=MotionNoiseModel.truth(),
        measurement_noise=MeasurementNoiseModel(cfg.sigma_d0_sq),
        seed=seed,
    )
    truth = traj.pose_array()[1:]
    spec = symmetry_of(env)
    records = []
    for ci, (kind, N, setting) in enumerate(cfg.cell_list()):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(ci,)))
        trace = run_filter(kind, env, traj, cfg.filter_config(N, setting), rng)
        rec = {
            "traj_id": idx,
            "filter": kind,
            "N": N,
            "setting": setting,
            "mse": mse(trace.estimates, truth),
            "fse": fse(trace.estimates[-1], truth[-1]),
            "time_s": trace.wall_time,
            "skipped_updates": trace.incidents.skipped_updates,
            "weight_resets": trace.incidents.weight_resets,
        }
        if spec is not None:
            rec["sym_fse"] = symmetry_aware_fse(trace.estimates[-1], truth[-1], spec)
        records.append(rec)
    return {"traj_id": idx, "seed": seed, "rejected": traj.rejected}, records


def _run_chunk(args):
    env, cfg, indices = args
    return [_run_one(env, cfg, i) for i in indices]


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> RunReport:
    """Run every cell on every trajectory and aggregate per cell."""
    env = cfg.environment()
    indices = list(range(cfg.n_trajectories))
    t0 = time.perf_counter()
    if cfg.workers == 1:
        results = []
        for i in indices:
            results.append(_run_one(env, cfg, i))
            if progress and (i + 1) % max(1, len(indices) // 20) == 0:
                log.info("%s: %d/%d trajectories", env.name, i + 1, len(indices))
    else:
        chunks = [indices[i::cfg.workers * 4] for i in range(cfg.workers * 4)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(_run_chunk, [(env, cfg, c) for c in chunks if c]))
        results = sorted((r for part in parts for r in part), key=lambda r: r[0]["traj_id"])
    elapsed = time.perf_counter() - t0

    trajectories = [t for t, _ in results]
    runs = [rec for _, recs in results for rec in recs]
    rows = []
    for kind, N, setting in cfg.cell_list():
        cell = [r for r in runs if (r["filter"], r["N"], r["setting"]) == (kind, N, setting)]
        rows.append(aggregate(cell, {"env": env.name, "filter": kind, "N": N, "setting": setting}))
    provenance = {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "hardware": f"{platform.machine()} / {platform.processor() or 'unknown cpu'} / {os.cpu_count()} cpus",
        "python": platform.python_version(),
        "elapsed_s": elapsed,
        "workers": cfg.workers,
        "rejected_trajectories": int(sum(t["rejected"] for t in trajectories)),
    }
    return RunReport(cfg.to_dict(), rows, runs, trajectories, env.to_dict(), provenance)


def runtime_benchmark(cfg: ExperimentConfig, target_fse_matching, setting: str = "4sigma") -> RunReport:
    """Time PF and MKF cells given as ``(PF N, MKF N)`` pairs on the same trajectories."""
    cells = []
    for pf_n, mkf_n in target_fse_matching:
        for cell in (["PF", int(pf_n), setting], ["MKF", int(mkf_n), setting]):
            if cell not in cells:
                cells.append(cell)
    run_cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "cells": cells, "full_scale": False})
    return run_experiment(run_cfg)


def tune_particle_count(cfg: ExperimentConfig, kind: str, target_fse: float, candidates,
                        setting: str = "4sigma") -> tuple[int | None, RunReport]:
    """Smallest candidate ``N`` whose mean FSE is at most ``target_fse``.

    Returns ``(N, report)``; ``N`` is ``None`` if no candidate reaches the target.
    """
    cells = [[kind, int(n), setting] for n in sorted(candidates)]
    report = run_experiment(ExperimentConfig.from_dict({**cfg.to_dict(), "cells": cells, "full_scale": False}))
    for n in sorted(candidates):
        if report.row(kind, int(n), setting).mean_fse <= target_fse:
            return int(n), report
    return None, report


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def summary_dict(report: RunReport) -> dict:
    """The deterministic part of a report (no timings, no timestamps)."""
    w, h = report.env["width"], report.env["height"]
    rows = []
    for r in report.rows:
        d = r.as_dict()
        d.pop("mean_time")
        d["useless"] = is_useless(r, w, h)
        rows.append(d)
    # the worker count cannot change results; it is recorded in provenance.json
    config = {k: v for k, v in report.config.items() if k != "workers"}
    return {"config": config, "env": report.env["name"], "width": w, "height": h, "rows": rows}


def write_results(report: RunReport, outdir) -> Path:
    """Write a results directory.

    ``summary.json``, ``runs.csv`` and ``trajectories.csv`` depend only on the
    config and seed.  Wall-clock data lives in ``timing.csv`` and
    ``provenance.json``.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "summary.json").write_text(json.dumps(summary_dict(report), indent=2) + "\n", encoding="utf-8")
    (outdir / "runs.csv").write_text(_csv(report.runs, RUN_COLUMNS), encoding="utf-8")
    (outdir / "trajectories.csv").write_text(
        _csv(report.trajectories, ("traj_id", "seed", "rejected")), encoding="utf-8")
    (outdir / "timing.csv").write_text(_csv(report.runs, TIMING_COLUMNS), encoding="utf-8")
    prov = dict(report.provenance)
    prov["cell_time_s"] = {f"{r.filter}/{r.N}/{r.setting}": t["time_s"] for r, t in zip(report.rows, report.runtime_rows())}
    (outdir / "provenance.json").write_text(json.dumps(prov, indent=2) + "\n", encoding="utf-8")
    return outdir


def load_results(outdir) -> tuple[dict, list[AggregateRow]]:
    """Read ``summary.json`` (and ``timing.csv`` if present) back into rows."""
    outdir = Path(outdir)
    summary_path = outdir / "summary.json"
    if not summary_path.exists():
        raise FileNotFoundError(f"{outdir}: no summary.json found")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    times: dict[tuple, list[float]] = {}
    timing = outdir / "timing.csv"
    if timing.exists():
        with open(timing, newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                times.setdefault((r["filter"], int(r["N"]), r["setting"]), []).append(float(r["time_s"]))
    rows = []
    for d in summary["rows"]:
        t = times.get((d["filter"], d["N"], d["setting"]), [0.0])
        rows.append(AggregateRow(d["env"], d["filter"], d["N"], d["setting"], d["mean_mse"], d["mean_fse"],
                                 d["std_fse"], float(np.mean(t)), d["n_runs"]))
    return summary, rows
