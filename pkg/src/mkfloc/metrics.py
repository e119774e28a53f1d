"""Trajectory losses, the random-guess baseline and run aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .env import SymmetrySpec


def _positions(poses) -> np.ndarray:
    a = np.asarray(poses, dtype=float)
    return a[..., :2]


def mse(estimates, truths) -> float:
    """Mean over steps of the squared planar position error."""
    e, t = _positions(estimates), _positions(truths)
    if e.shape != t.shape:
        raise ValueError(f"length mismatch: {e.shape[0]} estimates vs {t.shape[0]} truths")
    return float(np.mean(np.sum((e - t) ** 2, axis=-1)))


def fse(estimate, truth) -> float:
    """Squared planar position error of the final estimate."""
    d = _positions(estimate) - _positions(truth)
    return float(d @ d)


def mse_random_threshold(w: float, h: float) -> float:
    """Expected squared distance between two independent uniform points in a ``w`` x ``h`` box."""
    if not (w > 0 and h > 0):
        raise ValueError("w and h must be positive")
    return (w * w + h * h) / 6.0


def symmetry_aware_fse(estimate, truth, spec: SymmetrySpec) -> float:
    """FSE against the closest tile-translated copy of the truth.

    The copies are ``truth + (i * tile_w, j * tile_h)`` for every integer shift
    that keeps the copy inside the world (boundary points may have extra copies).
    """
    e = _positions(estimate)
    t = _positions(truth)
    i = np.arange(-spec.tiles_x, spec.tiles_x + 1) * spec.tile_w
    j = np.arange(-spec.tiles_y, spec.tiles_y + 1) * spec.tile_h
    shifts = np.stack(np.meshgrid(i, j, indexing="ij"), axis=-1).reshape(-1, 2)
    images = t + shifts
    eps = 1e-9 * max(spec.width, spec.height)
    inside = np.all((images >= -eps) & (images <= (spec.width + eps, spec.height + eps)), axis=1)
    return float(np.min(np.sum((images[inside] - e) ** 2, axis=1)))


@dataclass(frozen=True)
class AggregateRow:
    env: str
    filter: str
    N: int
    setting: str
    mean_mse: float
    mean_fse: float
    std_fse: float
    mean_time: float
    n_runs: int

    def as_dict(self) -> dict:
        return asdict(self)


def _mean_std(values) -> tuple[float, float]:
    v = [float(x) for x in values]
    n = len(v)
    mean = math.fsum(v) / n
    if n < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((x - mean) ** 2 for x in v) / (n - 1))


def aggregate(traces, meta: dict) -> AggregateRow:
    """Summarise runs of one (env, filter, N, setting) cell.

    ``traces`` holds ``(RunTrace, Trajectory)`` pairs or plain per-run records
    with ``mse``, ``fse`` and ``time_s`` keys.  Sums are exact (``math.fsum``),
    so the result does not depend on the order of the runs.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("cannot aggregate an empty set of runs")
    mses, fses, times = [], [], []
    for item in traces:
        if isinstance(item, dict):
            mses.append(item["mse"])
            fses.append(item["fse"])
            times.append(item.get("time_s", 0.0))
        else:
            trace, traj = item
            truth = traj.pose_array()[1:]
            mses.append(mse(trace.estimates, truth))
            fses.append(fse(trace.estimates[-1], truth[-1]))
            times.append(trace.wall_time)
    mean_f, std_f = _mean_std(fses)
    return AggregateRow(
        env=str(meta.get("env", "")),
        filter=str(meta.get("filter", "")),
        N=int(meta.get("N", 0)),
        setting=str(meta.get("setting", "")),
        mean_mse=math.fsum(mses) / len(mses),
        mean_fse=mean_f,
        std_fse=std_f,
        mean_time=math.fsum(times) / len(times),
        n_runs=len(traces),
    )


def merge_rows(a: AggregateRow, b: AggregateRow) -> AggregateRow:
    """Combine two aggregates of the same cell (pooled mean and unbiased std)."""
    if (a.env, a.filter, a.N, a.setting) != (b.env, b.filter, b.N, b.setting):
        raise ValueError("can only merge rows of the same cell")
    n = a.n_runs + b.n_runs
    mean = (a.n_runs * a.mean_fse + b.n_runs * b.mean_fse) / n
    ss = (
        (a.n_runs - 1) * a.std_fse**2
        + (b.n_runs - 1) * b.std_fse**2
        + a.n_runs * b.n_runs / n * (a.mean_fse - b.mean_fse) ** 2
    )
    return AggregateRow(
        env=a.env,
        filter=a.filter,
        N=a.N,
        setting=a.setting,
        mean_mse=(a.n_runs * a.mean_mse + b.n_runs * b.mean_mse) / n,
        mean_fse=mean,
        std_fse=math.sqrt(ss / (n - 1)) if n > 1 else 0.0,
        mean_time=(a.n_runs * a.mean_time + b.n_runs * b.mean_time) / n,
        n_runs=n,
    )


def is_useless(row: AggregateRow, width: float, height: float) -> bool:
    """A filter whose mean MSE exceeds the random-guess level is no better than guessing."""
    return row.mean_mse > mse_random_threshold(width, height)


ROW_COLUMNS = ("env", "filter", "N", "setting", "mean_mse", "mean_fse", "std_fse", "mean_time", "n_runs")


def rows_to_csv(rows, useless=None) -> str:
    """Serialise aggregate rows; ``useless`` optionally adds a flag column."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS + (("useless",) if useless is not None else ()))
    for i, r in enumerate(rows):
        d = r.as_dict()
        line = [d[c] if isinstance(d[c], (str, int)) else repr(float(d[c])) for c in ROW_COLUMNS]
        if useless is not None:
            line.append(int(bool(useless[i])))
        w.writerow(line)
    return buf.getvalue()


def rows_from_csv(text: str) -> list[AggregateRow]:
    out = []
    for d in csv.DictReader(io.StringIO(text)):
        out.append(AggregateRow(d["env"], d["filter"], int(d["N"]), d["setting"], float(d["mean_mse"]),
                                float(d["mean_fse"]), float(d["std_fse"]), float(d["mean_time"]), int(d["n_runs"])))
    return out
