"""
Experiment runner for hidden-vi
File: harness/runner.py
Executes every seeded run of an experiment, writes per-run and aggregate
CSVs and the run manifest
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd
import ujson
from tqdm import tqdm

from core.errors import ConfigError, HiddenVIError, RunFailure
from core.records import TrajectoryRecord

from . import __version__
from .config import ExperimentConfig
from .experiments import CATALOG, RunOutput

logger = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ["iter", "mean_dist_sq", "ci_lo", "ci_hi", "n_runs"]
Z_95 = 1.96


@dataclass
class RunManifest:
    experiment: str
    version: str
    master_seed: int
    seeds: List[int]
    threads: int
    config: Dict = field(repr=False)
    wall_seconds: float = 0.0
    run_seconds: List[float] = field(default_factory=list)
    files: List[str] = field(default_factory=list)
    failed_run: Optional[int] = None
    failure: Optional[str] = None

    def to_dict(self) -> Dict:
        return asdict(self)


def write_csv(frame: pd.DataFrame, path: Path):
    """17 significant digits, LF endings, minimal RFC-4180 quoting"""
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def aggregate(records: List[TrajectoryRecord]) -> pd.DataFrame:
    """Per-iteration mean of dist_sq with a 95% normal-approximation interval"""
    frames = [pd.DataFrame({"iter": r.column("iter").astype(int), "dist_sq": r.dist_sq()}) for r in records]
    stacked = pd.concat(frames, ignore_index=True)
    grouped = stacked.groupby("iter", sort=True)["dist_sq"]
    mean = grouped.mean()
    count = grouped.count()
    sd = grouped.std(ddof=1)
    half = (Z_95 * sd / count.pow(0.5)).fillna(0.0)
    return pd.DataFrame({
        "iter": mean.index.astype(int),
        "mean_dist_sq": mean.values,
        "ci_lo": (mean - half).values,
        "ci_hi": (mean + half).values,
        "n_runs": count.values.astype(int),
    }, columns=AGGREGATE_COLUMNS)


def _timed_run(fn, cfg: ExperimentConfig, index: int, seed: int) -> Tuple[RunOutput, float]:
    started = time.perf_counter()
    output = fn(cfg, index, seed)
    return output, time.perf_counter() - started


def _write_partial(exc: RunFailure, out_dir: Path, index: int, cfg: ExperimentConfig) -> Optional[Path]:
    if not isinstance(exc.record, TrajectoryRecord) or not len(exc.record):
        return None
    path = out_dir / f"{exc.label or 'run'}_run{index:04d}_partial.csv"
    write_csv(exc.record.to_frame(cfg.record_timing), path)
    return path


def _as_run_failure(exc: HiddenVIError) -> RunFailure:
    if isinstance(exc, RunFailure):
        return exc
    wrapped = RunFailure(f"{type(exc).__name__}: {exc}")
    wrapped.__cause__ = exc
    return wrapped


def run_experiment(cfg: ExperimentConfig, threads: int = 1, progress: bool = True) -> RunManifest:
    """
    Run every seed of cfg and write its CSVs.

    Runs may execute concurrently; results are joined in seed order before
    anything is written, so output bytes do not depend on the thread count.
    A failing run (blowup, rank collapse or any other library error) is
    re-raised as a RunFailure after completed runs and the partial record
    of the failing run have been written. ConfigError passes straight
    through.
    """
    info = CATALOG[cfg.experiment]
    out_dir = Path(cfg.output_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = cfg.run_seeds()
    manifest = RunManifest(cfg.experiment, __version__, cfg.seed, seeds, threads, cfg.raw)
    logger.info("running %s: %d runs on %d threads into %s", cfg.experiment, len(seeds), threads, out_dir)
    started = time.perf_counter()

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_timed_run, info.fn, cfg, i, s) for i, s in enumerate(seeds)]
        results: List[Optional[Tuple[RunOutput, float]]] = []
        failure: Optional[Tuple[int, RunFailure]] = None
        for index, future in enumerate(tqdm(futures, desc=cfg.experiment, unit="run", disable=not progress)):
            try:
                results.append(future.result())
            except ConfigError:
                raise
            except HiddenVIError as exc:
                results.append(None)
                if failure is None:
                    failure = (index, _as_run_failure(exc))

    per_label: Dict[str, List[TrajectoryRecord]] = {}
    for index, result in enumerate(results):
        if result is None:
            continue
        output, seconds = result
        manifest.run_seconds.append(seconds)
        for label, record in output.records.items():
            path = out_dir / f"{label}_run{index:04d}.csv"
            write_csv(record.to_frame(cfg.record_timing), path)
            manifest.files.append(path.name)
            per_label.setdefault(label, []).append(record)
        for name, table in output.tables.items():
            path = out_dir / f"{name}_run{index:04d}.csv"
            write_csv(table, path)
            manifest.files.append(path.name)

    if failure is not None:
        index, exc = failure
        manifest.failed_run = index
        manifest.failure = f"{exc.label or 'run'}: {exc}"
        partial = _write_partial(exc, out_dir, index, cfg)
        if partial is not None:
            manifest.files.append(partial.name)
        manifest.wall_seconds = time.perf_counter() - started
        _write_manifest(manifest, out_dir)
        logger.error("run %d (%s) failed: %s", index, exc.label, exc)
        raise exc

    for label, records in per_label.items():
        path = out_dir / f"{label}_aggregate.csv"
        write_csv(aggregate(records), path)
        manifest.files.append(path.name)

    manifest.wall_seconds = time.perf_counter() - started
    _write_manifest(manifest, out_dir)
    logger.info("%s finished in %.2fs, %d files", cfg.experiment, manifest.wall_seconds, len(manifest.files))
    return manifest


def _write_manifest(manifest: RunManifest, out_dir: Path):
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        ujson.dump(manifest.to_dict(), f, indent=2)


def summarize(out_dir: Path, manifest: RunManifest) -> pd.DataFrame:
    """Final mean dist_sq per label, read back from the aggregate CSVs"""
    rows = []
    for name in manifest.files:
        if not name.endswith("_aggregate.csv"):
            continue
        frame = pd.read_csv(Path(out_dir) / name)
        last = frame.iloc[-1]
        rows.append({
            "label": name[: -len("_aggregate.csv")],
            "iters": int(last["iter"]),
            "final_mean_dist_sq": float(last["mean_dist_sq"]),
            "n_runs": int(last["n_runs"]),
        })
    return pd.DataFrame(rows, columns=["label", "iters", "final_mean_dist_sq", "n_runs"])
