"""Repeated-run experiments, error statistics and dimension sweeps."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import DEFAULT_BUDGET, SchemeParams, mlp_estimate, predicted_draw_count
from .examples import ExampleConfig, build_example
from .fdref import FdConfig, fd_solve
from .stochastics import Branch, RngKey, derive_child_key, root_key

RUNS_HEADER = ("rho", "run", "value", "runtime_s")
STATS_HEADER = ("rho", "mean", "std", "rel_error", "rel_increment", "mean_runtime_s")
SWEEP_HEADER = ("dim", "run", "value", "runtime_s")
REFUSED = "refused"


def fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{value:.6g}"


@dataclass(frozen=True)
class ExperimentConfig:
    example: str
    dim: int
    rho_list: tuple[int, ...]
    runs: int = 10
    seed: int = 2016
    budget: int = DEFAULT_BUDGET
    output: Optional[Path] = None
    workers: int = 1

    def __post_init__(self):
        rhos = tuple(int(r) for r in self.rho_list)
        if not rhos:
            raise ValueError("rho_list must not be empty")
        if list(rhos) != sorted(set(rhos)) or rhos[0] < 1:
            raise ValueError("rho_list must be sorted, distinct and positive")
        if self.runs < 2:
            raise ValueError("at least two runs are needed for a standard deviation")
        object.__setattr__(self, "rho_list", rhos)


@dataclass(frozen=True)
class RunRecord:
    rho: int
    run: int
    value: float
    runtime_s: float
    estimate: np.ndarray = field(repr=False, compare=False, default=None)


@dataclass(frozen=True)
class StatsRow:
    rho: int
    mean_value: Optional[float]
    std: Optional[float]
    rel_error: Optional[float] = None
    rel_increment: Optional[float] = None
    runtime_seconds: Optional[float] = None
    refused: bool = False


def run_key(seed: int | RngKey, rho: int, run: int) -> RngKey:
    """Key of run ``run`` at accuracy ``rho``; runs at different rho are independent."""
    root = seed if isinstance(seed, RngKey) else root_key(seed)
    return derive_child_key(root, Branch.RUN, [rho, run])


def relative_error(samples: Sequence[float], v: float) -> float:
    """Mean absolute deviation from ``v``, relative to ``|v|``."""
    if v == 0:
        raise ValueError("relative error against zero is undefined")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("no samples")
    return float(np.mean(np.abs(samples - v)) / abs(v))


def relative_increments(samples_by_rho: Mapping[int, Sequence[float]],
                        rho_max: int) -> dict[int, float]:
    """Run-paired increments between consecutive rho, scaled by the rho_max mean.

    The i-th sample at ``rho`` is paired with the i-th sample at ``rho + 1``.
    """
    if rho_max not in samples_by_rho:
        raise ValueError(f"no samples for rho_max={rho_max}")
    lengths = {len(v) for v in samples_by_rho.values()}
    if len(lengths) != 1:
        raise ValueError("every rho needs the same number of runs")
    denom = abs(float(np.mean(samples_by_rho[rho_max])))
    if denom == 0:
        raise ValueError("mean at rho_max is zero")
    out = {}
    for rho in sorted(samples_by_rho):
        if rho >= rho_max:
            continue
        if rho + 1 not in samples_by_rho:
            raise ValueError(f"rho={rho + 1} missing; increments need consecutive rho")
        a = np.asarray(samples_by_rho[rho], dtype=np.float64)
        b = np.asarray(samples_by_rho[rho + 1], dtype=np.float64)
        out[rho] = float(np.mean(np.abs(b - a)) / denom)
    return out


def reference_value(example: ExampleConfig) -> Optional[float]:
    """Exact value when known, finite-difference value in one dimension, else None."""
    x0 = example.problem.eval_point
    if example.closed_form is not None:
        return example.closed_form(0.0, x0)
    if example.dim == 1:
        return fd_solve(FdConfig(), example)
    return None


def _timed_estimate(example: ExampleConfig, params: SchemeParams, k: int,
                    key: RngKey) -> tuple[np.ndarray, float]:
    problem = example.problem
    start = time.perf_counter()
    est = mlp_estimate(problem, example.driver, params, k, 0.0, problem.eval_point, key,
                       budget=None)
    return est.as_array(), time.perf_counter() - start


def collect_runs(config: ExperimentConfig,
                 example: Optional[ExampleConfig] = None) -> tuple[list[RunRecord], list[int]]:
    """Raw realisations for every admissible rho; also returns the refused rho values."""
    example = example or build_example(config.example, config.dim)
    accepted, refused = [], []
    for rho in config.rho_list:
        params = SchemeParams(rho, example.variant)
        if predicted_draw_count(example.problem, params, rho) > config.budget:
            refused.append(rho)
            break
        accepted.append(rho)

    tasks = [(rho, run) for rho in accepted for run in range(config.runs)]

    def work(task):
        rho, run = task
        params = SchemeParams(rho, example.variant)
        est, secs = _timed_estimate(example, params, rho, run_key(config.seed, rho, run))
        return RunRecord(rho, run, float(est[0]), secs, est)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(work, tasks))
    else:
        records = [work(t) for t in tasks]
    records.sort(key=lambda r: (r.rho, r.run))
    return records, refused


def summarise(records: Iterable[RunRecord], refused: Sequence[int] = (),
              reference: Optional[float] = None) -> list[StatsRow]:
    by_rho: dict[int, list[RunRecord]] = {}
    for rec in records:
        by_rho.setdefault(rec.rho, []).append(rec)
    for recs in by_rho.values():
        recs.sort(key=lambda r: r.run)
    samples = {rho: [r.value for r in recs] for rho, recs in by_rho.items()}

    increments: dict[int, float] = {}
    if reference is None and samples:
        rho_max = max(samples)
        consecutive = [r for r in sorted(samples) if all(q in samples for q in range(r, rho_max + 1))]
        if len(consecutive) > 1 and np.mean(samples[rho_max]) != 0:
            increments = relative_increments({r: samples[r] for r in consecutive}, rho_max)

    rows = []
    for rho in sorted(by_rho):
        vals = np.asarray(samples[rho])
        rows.append(StatsRow(
            rho=rho,
            mean_value=float(vals.mean()),
            std=float(vals.std(ddof=1)),
            rel_error=relative_error(vals, reference) if reference is not None else None,
            rel_increment=increments.get(rho),
            runtime_seconds=float(np.mean([r.runtime_s for r in by_rho[rho]])),
        ))
    rows.extend(StatsRow(rho, None, None, refused=True) for rho in refused)
    return rows


def execute(config: ExperimentConfig, reference: Optional[float] = None,
            use_reference: bool = True) -> tuple[list[RunRecord], list[StatsRow]]:
    example = build_example(config.example, config.dim)
    if reference is None and use_reference:
        reference = reference_value(example)
    records, refused = collect_runs(config, example)
    stats = summarise(records, refused, reference)
    if config.output is not None:
        write_stats_csv(config.output, stats)
        write_runs_csv(runs_path(config.output), records)
    return records, stats


def run_experiment(config: ExperimentConfig, reference: Optional[float] = None) -> list[StatsRow]:
    """Per-rho mean, std, runtime and either relative error or relative increment."""
    return execute(config, reference)[1]


def runs_path(stats_path: Path) -> Path:
    stats_path = Path(stats_path)
    return stats_path.with_name(stats_path.stem + ".runs.csv")


def _writer(path: Path):
    handle = open(path, "w", encoding="utf-8", newline="")
    return handle, csv.writer(handle, lineterminator="\n")


def write_runs_csv(path: Path, records: Iterable[RunRecord]) -> None:
    handle, w = _writer(path)
    with handle:
        w.writerow(RUNS_HEADER)
        for r in records:
            w.writerow((r.rho, r.run, fmt(r.value), fmt(r.runtime_s)))


def write_stats_csv(path: Path, rows: Iterable[StatsRow]) -> None:
    handle, w = _writer(path)
    with handle:
        w.writerow(STATS_HEADER)
        for r in rows:
            if r.refused:
                w.writerow((r.rho, REFUSED, "", "", "", ""))
            else:
                w.writerow((r.rho, fmt(r.mean_value), fmt(r.std), fmt(r.rel_error),
                            fmt(r.rel_increment), fmt(r.runtime_seconds)))


@dataclass(frozen=True)
class SweepPoint:
    dim: int
    runtime_seconds: Optional[float]
    values: tuple[float, ...] = ()
    runtimes: tuple[float, ...] = ()
    refused: bool = False


def dimension_sweep(example: str, rho_fixed: int, dims: Sequence[int], runs: int = 1,
                    seed: int = 2016, budget: int = DEFAULT_BUDGET,
                    output: Optional[Path] = None) -> list[SweepPoint]:
    """Wall-clock time of level ``rho_fixed`` estimates for each dimension."""
    if not dims:
        raise ValueError("dims must not be empty")
    points = []
    for d in dims:
        cfg = build_example(example, d)
        params = SchemeParams(rho_fixed, cfg.variant)
        if predicted_draw_count(cfg.problem, params, rho_fixed) > budget:
            points.append(SweepPoint(d, None, refused=True))
            continue
        values, times = [], []
        for run in range(runs):
            est, secs = _timed_estimate(cfg, params, rho_fixed, run_key(seed, rho_fixed, run))
            values.append(float(est[0]))
            times.append(secs)
        points.append(SweepPoint(d, float(np.mean(times)), tuple(values), tuple(times)))
    if output is not None:
        write_sweep_csv(output, points)
    return points


def write_sweep_csv(path: Path, points: Iterable[SweepPoint]) -> None:
    handle, w = _writer(path)
    with handle:
        w.writerow(SWEEP_HEADER)
        for p in points:
            if p.refused:
                w.writerow((p.dim, "", REFUSED, ""))
                continue
            for run, (v, t) in enumerate(zip(p.values, p.runtimes)):
                w.writerow((p.dim, run, fmt(v), fmt(t)))
