"""Batch experiment harness: seeded campaigns, summary stats, trace files.

``roundabout-sim`` runs the configured campaign (default: 4..8 vehicles,
200 runs each), writes ``summary.csv`` and ``summary.json`` under the
output directory, and with ``--traces`` one CSV per run under
``traces/n<k>/``.  :func:`summarize` rebuilds the same report from a trace
directory alone, so results can be re-analysed without re-simulation.

Trace rows are ``(t, id, r, theta, v, status, accel,
est_agg_of_each_neighbour, override_flag)`` with ``t`` in simulated
seconds and numbers as shortest round-trip decimals (``repr``), which is
what makes reruns byte-identical.  The estimate column is a sparse
``id=value`` list; a vehicle's entry for itself carries its true
aggressiveness (it knows its own weight), which is how the aggressiveness
buckets can be recomputed from traces.

Aggregation rules: collision and censored runs are excluded from
mission-time statistics (their vehicles never all exit); non-finite
minimum distances (single-vehicle runs) are excluded from distance
statistics; campaign rows with zero runs are dropped.  Reports order rows
by vehicle count; campaigns with two rows at the same vehicle count will
have their traces pooled by :func:`summarize`.
"""

from __future__ import annotations

import argparse
import csv
import functools
import json
import math
import os
import re
import sys
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import (ConfigError, ExperimentConfig, load_config, parse_config,
                     resolved_campaign)
from .geometry import build_roundabout
from .sim import RunResult, run_simulation

TRACE_COLUMNS = ("t", "id", "r", "theta", "v", "status", "accel",
                 "est_agg_of_each_neighbour", "override_flag")
SUMMARY_COLUMNS = ("n_vehicles", "runs", "collisions", "collision_rate_pct",
                   "avg_min_distance_m", "avg_mission_time_s",
                   "p25_min_distance_m", "p50_min_distance_m",
                   "p75_min_distance_m", "p25_mission_s", "p50_mission_s",
                   "p75_mission_s", "censored_runs")
BUCKET_LO, BUCKET_HI, BUCKET_WIDTH = 0.2, 0.8, 0.1
_TRACE_NAME = re.compile(r"^run_(\d+)\.csv$")
_DIR_NAME = re.compile(r"^n(\d+)$")


@dataclass(frozen=True)
class RunStats:
    """The per-run facts the report needs (slim enough to cross a Pool)."""

    n_vehicles: int
    seed: int
    collided: bool
    censored: bool
    min_distance: float
    mission_mean_s: Optional[float]  # None unless every vehicle exited
    avg_w: Optional[float]


@dataclass(frozen=True)
class BucketStats:
    w_lo: float
    w_hi: float
    count: int
    median: Optional[float] = None
    q1: Optional[float] = None
    q3: Optional[float] = None
    whisker_lo: Optional[float] = None
    whisker_hi: Optional[float] = None


@dataclass(frozen=True)
class SummaryRow:
    n_vehicles: int
    runs: int
    collisions: int
    collision_rate_pct: float
    avg_min_distance_m: float
    avg_mission_time_s: float
    p25_min_distance_m: float
    p50_min_distance_m: float
    p75_min_distance_m: float
    p25_mission_s: float
    p50_mission_s: float
    p75_mission_s: float
    censored_runs: int


@dataclass(frozen=True)
class SummaryReport:
    rows: Tuple[SummaryRow, ...]
    buckets_min_distance: Tuple[BucketStats, ...]
    buckets_mission_time: Tuple[BucketStats, ...]
    warnings: int = 0


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def run_stats(result: RunResult) -> RunStats:
    mission = None
    if result.collision is None and all(
            s is not None for s in result.mission_steps.values()):
        secs = [result.mission_steps[vid] * result.delta
                for vid in sorted(result.mission_steps)]
        mission = _mean(secs) if secs else None
    avg_w = None
    if result.true_w:
        avg_w = _mean([result.true_w[vid] for vid in sorted(result.true_w)])
    return RunStats(
        n_vehicles=result.n_vehicles,
        seed=result.seed,
        collided=result.collision is not None,
        censored=result.censored,
        min_distance=result.min_distance,
        mission_mean_s=mission,
        avg_w=avg_w,
    )


# ---------------------------------------------------------------------------
# trace files


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_trace(result: RunResult, path: str) -> None:
    """One CSV row per (step, vehicle); ``t`` in seconds, floats via repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TRACE_COLUMNS)
        for row in result.rows:
            est = ";".join(f"{vid}={_fmt(row.est[vid])}"
                           for vid in sorted(row.est))
            out.writerow((_fmt(row.t * result.delta), row.vid, _fmt(row.r),
                          _fmt(row.theta), _fmt(row.v),
                          row.status.name.lower(), _fmt(row.accel), est,
                          int(row.override)))


class TraceFormatError(ValueError):
    pass


def trace_stats(path: str, diameter: float = 4.5) -> RunStats:
    """Recompute one run's stats from its trace file alone.

    Mirrors the simulator's bookkeeping: minimum distance is taken over
    vehicles that have not yet exited, a step minimum under ``diameter``
    means the run collided, a vehicle's mission time is the timestamp of
    its first ``exit`` row, and a run whose trace ends with someone still
    inside (and no collision) was censored at the step cap.
    """
    name = os.path.basename(path)
    m = _TRACE_NAME.match(name)
    if m is None:
        raise TraceFormatError(f"{name}: trace files are named run_<seed>.csv")
    seed = int(m.group(1))

    by_t: Dict[float, list] = {}
    first_exit: Dict[int, float] = {}
    last_status: Dict[int, str] = {}
    self_w: Dict[int, float] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != TRACE_COLUMNS:
                raise TraceFormatError(f"{name}: bad header {header!r}")
            for rec in reader:
                if len(rec) != len(TRACE_COLUMNS):
                    raise TraceFormatError(f"{name}: short row {rec!r}")
                t, vid = float(rec[0]), int(rec[1])
                r, theta, status = float(rec[2]), float(rec[3]), rec[5]
                by_t.setdefault(t, []).append((vid, r, theta, status))
                last_status[vid] = status
                if status == "exit" and vid not in first_exit:
                    first_exit[vid] = t
                if vid not in self_w and rec[7]:
                    for pair in rec[7].split(";"):
                        k, _, v = pair.partition("=")
                        if int(k) == vid:
                            self_w[vid] = float(v)
                            break
    except (ValueError, IndexError) as exc:
        if isinstance(exc, TraceFormatError):
            raise
        raise TraceFormatError(f"{name}: {exc}")

    vids = sorted(last_status)
    min_distance = math.inf
    collided = False
    for t in sorted(by_t):
        pts = [(r * math.cos(th), r * math.sin(th))
               for _, r, th, status in sorted(by_t[t]) if status != "exit"]
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                d = math.hypot(pts[a][0] - pts[b][0], pts[a][1] - pts[b][1])
                if d < min_distance:
                    min_distance = d
        if min_distance < diameter:
            collided = True
            break

    finished = all(last_status[vid] == "exit" for vid in vids)
    mission = None
    if not collided and finished and vids:
        mission = _mean([first_exit[vid] for vid in vids])
    avg_w = _mean([self_w[vid] for vid in vids]) if vids else None
    return RunStats(
        n_vehicles=len(vids),
        seed=seed,
        collided=collided,
        censored=not collided and not finished,
        min_distance=min_distance,
        mission_mean_s=mission,
        avg_w=avg_w,
    )


# ---------------------------------------------------------------------------
# aggregation


def _quantiles(xs: List[float]) -> Tuple[float, float, float]:
    if not xs:
        return (math.nan,) * 3
    q = np.percentile(np.asarray(xs, dtype=float), [25.0, 50.0, 75.0])
    return float(q[0]), float(q[1]), float(q[2])


def summarize_row(n_vehicles: int, stats: Sequence[RunStats]) -> SummaryRow:
    runs = len(stats)
    collisions = sum(s.collided for s in stats)
    censored = sum(s.censored for s in stats)
    dists = [s.min_distance for s in stats if math.isfinite(s.min_distance)]
    missions = [s.mission_mean_s for s in stats if s.mission_mean_s is not None]
    d25, d50, d75 = _quantiles(dists)
    m25, m50, m75 = _quantiles(missions)
    return SummaryRow(
        n_vehicles=n_vehicles,
        runs=runs,
        collisions=collisions,
        collision_rate_pct=100.0 * collisions / runs if runs else math.nan,
        avg_min_distance_m=_mean(dists) if dists else math.nan,
        avg_mission_time_s=_mean(missions) if missions else math.nan,
        p25_min_distance_m=d25, p50_min_distance_m=d50, p75_min_distance_m=d75,
        p25_mission_s=m25, p50_mission_s=m50, p75_mission_s=m75,
        censored_runs=censored,
    )


def _bucket_stats(lo: float, hi: float, xs: List[float]) -> BucketStats:
    if not xs:
        return BucketStats(w_lo=lo, w_hi=hi, count=0)
    q1, med, q3 = _quantiles(xs)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    return BucketStats(
        w_lo=lo, w_hi=hi, count=len(xs), median=med, q1=q1, q3=q3,
        whisker_lo=min(x for x in xs if x >= lo_fence),
        whisker_hi=max(x for x in xs if x <= hi_fence),
    )


def _buckets(pairs: Iterable[Tuple[float, float]]) -> Tuple[BucketStats, ...]:
    """Tukey box stats per aggressiveness bucket (width 0.1 over [0.2, 0.8])."""
    n = round((BUCKET_HI - BUCKET_LO) / BUCKET_WIDTH)
    grouped: List[List[float]] = [[] for _ in range(n)]
    for w, value in pairs:
        if w < BUCKET_LO or w > BUCKET_HI:
            continue
        idx = min(int((w - BUCKET_LO) / BUCKET_WIDTH), n - 1)
        grouped[idx].append(value)
    return tuple(
        _bucket_stats(BUCKET_LO + i * BUCKET_WIDTH,
                      BUCKET_LO + (i + 1) * BUCKET_WIDTH, xs)
        for i, xs in enumerate(grouped))


def build_report(groups: Sequence[Tuple[int, Sequence[RunStats]]],
                 warnings: int = 0) -> SummaryReport:
    rows = tuple(summarize_row(n, stats) for n, stats in groups if stats)
    pool = [s for _, stats in groups for s in stats if s.avg_w is not None]
    dist_pairs = [(s.avg_w, s.min_distance) for s in pool
                  if math.isfinite(s.min_distance)]
    mission_pairs = [(s.avg_w, s.mission_mean_s) for s in pool
                     if s.mission_mean_s is not None]
    return SummaryReport(
        rows=rows,
        buckets_min_distance=_buckets(dist_pairs),
        buckets_mission_time=_buckets(mission_pairs),
        warnings=warnings,
    )


def write_summary_csv(report: SummaryReport, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(SUMMARY_COLUMNS)
        for row in report.rows:
            out.writerow(tuple(_fmt(getattr(row, col)) for col in SUMMARY_COLUMNS))


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def report_json(report: SummaryReport) -> dict:
    return {
        "rows": [{col: _jsonable(getattr(row, col)) for col in SUMMARY_COLUMNS}
                 for row in report.rows],
        "aggressiveness_buckets": {
            "min_distance_m": [vars(b) for b in report.buckets_min_distance],
            "mission_time_s": [vars(b) for b in report.buckets_mission_time],
        },
        "warnings": report.warnings,
    }


def write_summary_json(report: SummaryReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_json(report), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# campaign execution


@functools.lru_cache(maxsize=4)
def _geometry_for(spec):
    return build_roundabout(spec)


def _run_one(task):
    config, n, seed, trace_path = task
    try:
        geometry = _geometry_for(config.spec)
        result = run_simulation(n, seed, geometry, config.cost, config.game,
                                config.agent, config.sim)
        if trace_path is not None:
            write_trace(result, trace_path)
        return run_stats(result), None
    except Exception as exc:  # noqa: BLE001 - report and keep going
        return None, f"n={n} seed={seed}: {exc}"


def run_campaign(config: ExperimentConfig, out_dir: str, *,
                 traces: bool = False, jobs: int = 1,
                 flag_seed: Optional[int] = None,
                 flag_runs: Optional[int] = None,
                 env: Optional[Dict[str, str]] = None,
                 ) -> Tuple[SummaryReport, List[str]]:
    """Run every campaign row and write summary.csv / summary.json.

    Returns the report and a list of per-run error strings (empty on
    success).  Worker results are folded in submission (seed) order, so
    the report does not depend on ``jobs``.
    """
    campaign = resolved_campaign(config, flag_seed, flag_runs, env)
    os.makedirs(out_dir, exist_ok=True)

    tasks = []
    bounds = []
    for row in campaign:
        trace_dir = None
        if traces and row.n_runs:
            trace_dir = os.path.join(out_dir, "traces", f"n{row.n_vehicles}")
            os.makedirs(trace_dir, exist_ok=True)
        start = len(tasks)
        for i in range(row.n_runs):
            seed = row.base_seed + i
            trace_path = None
            if trace_dir is not None:
                trace_path = os.path.join(trace_dir, f"run_{seed:08d}.csv")
            tasks.append((config, row.n_vehicles, seed, trace_path))
        bounds.append((row.n_vehicles, start, len(tasks)))

    if jobs > 1 and len(tasks) > 1:
        with Pool(processes=jobs) as pool:
            outcomes = list(pool.imap(_run_one, tasks, chunksize=4))
    else:
        outcomes = [_run_one(t) for t in tasks]

    errors = [err for _, err in outcomes if err is not None]
    groups = []
    for n, start, stop in bounds:
        stats = [st for st, _ in outcomes[start:stop] if st is not None]
        groups.append((n, stats))
    groups.sort(key=lambda g: g[0])

    report = build_report(groups)
    write_summary_csv(report, os.path.join(out_dir, "summary.csv"))
    write_summary_json(report, os.path.join(out_dir, "summary.json"))
    return report, errors


def summarize(trace_root: str, diameter: float = 4.5) -> SummaryReport:
    """Recompute a :class:`SummaryReport` from a directory of traces.

    ``trace_root`` is the ``traces/`` directory written by a campaign
    (``n<k>/run_<seed>.csv`` layout).  Malformed files are named on stderr,
    skipped, and counted in ``report.warnings``.
    """
    groups = []
    warnings = 0
    for entry in sorted(os.listdir(trace_root)):
        m = _DIR_NAME.match(entry)
        sub = os.path.join(trace_root, entry)
        if m is None or not os.path.isdir(sub):
            continue
        stats = []
        named = []
        for fname in os.listdir(sub):
            fm = _TRACE_NAME.match(fname)
            if fm is not None:
                named.append((int(fm.group(1)), fname))
        for _, fname in sorted(named):
            try:
                stats.append(trace_stats(os.path.join(sub, fname), diameter))
            except TraceFormatError as exc:
                print(f"warning: skipping malformed trace: {exc}",
                      file=sys.stderr)
                warnings += 1
        groups.append((int(m.group(1)), stats))
    groups.sort(key=lambda g: g[0])
    return build_report(groups, warnings=warnings)


# ---------------------------------------------------------------------------
# entry point


def _seed_arg(text: str) -> int:
    value = int(text, 10)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in u64")
    return value


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="roundabout-sim",
        description="Seeded Monte-Carlo campaigns of game-theoretic "
                    "roundabout negotiation.")
    parser.add_argument("--config", metavar="PATH",
                        help="config file (omit for defaults)")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory (default: results)")
    parser.add_argument("--traces", action="store_true",
                        help="write per-run CSV traces")
    parser.add_argument("--seed", type=_seed_arg, metavar="U64",
                        help="override the campaign base seed")
    parser.add_argument("--runs", type=int, metavar="N",
                        help="override the per-row run count")
    parser.add_argument("--jobs", type=int, metavar="N",
                        default=os.cpu_count() or 1,
                        help="worker processes (default: logical CPUs)")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    args = parser.parse_args(argv)

    if args.runs is not None and args.runs < 0:
        parser.error("--runs must be >= 0")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")

    try:
        config = load_config(args.config) if args.config else parse_config("")
        out_dir = args.out or config.out or "results"
        report, errors = run_campaign(
            config, out_dir,
            traces=args.traces or config.traces,
            jobs=args.jobs, flag_seed=args.seed, flag_runs=args.runs)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    for err in errors:
        print(f"error: run failed: {err}", file=sys.stderr)
    for row in report.rows:
        print(f"n={row.n_vehicles}: {row.runs} runs, "
              f"{row.collisions} collisions, "
              f"avg min distance {row.avg_min_distance_m:.2f} m, "
              f"avg mission time {row.avg_mission_time_s:.2f} s, "
              f"{row.censored_runs} censored")
    print(f"wrote {os.path.join(out_dir, 'summary.csv')} and summary.json")
    return 1 if errors else 0


if __name__ == "__main__":
    sys.exit(main())
