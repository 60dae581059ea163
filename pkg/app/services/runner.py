"""Chunked sample generation, worker pool and report assembly."""

import logging
import time
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from app import __version__
from app.config import settings
from app.models import ChunkStatus, ExperimentConfig, ExperimentReport, ExponentFit, GridEstimate
from app.storage import Row, RunStore

logger = logging.getLogger(__name__)


class ReportError(ValueError):
    """Raised when a raw sample table does not match the experiment's column layout."""

    pass


@dataclass
class SampleTable:
    """Raw samples in sample order: one row per sample, one column per estimand."""

    columns: list[str]
    index: np.ndarray
    values: np.ndarray

    @classmethod
    def from_rows(cls, columns: Sequence[str], rows: Sequence[Row]) -> "SampleTable":
        index = np.array([i for i, _ in rows], dtype=np.int64)
        values = np.array([v for _, v in rows], dtype=np.float64).reshape(len(rows), len(columns))
        return cls(list(columns), index, values)

    def __len__(self) -> int:
        return len(self.index)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"No column {name}") from None


@dataclass
class Summary:
    estimates: list[GridEstimate] = field(default_factory=list)
    fits: dict[str, ExponentFit] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)

    def add(self, quantity: str, x: float, value: float, stderr: float | None = None) -> None:
        self.estimates.append(GridEstimate(quantity=quantity, x=x, value=value, stderr=stderr))


@dataclass(frozen=True)
class ExperimentDefinition:
    name: str
    description: str
    columns: Callable[[ExperimentConfig], list[str]]
    # Must be a module-level function so worker processes can unpickle it
    sample: Callable[[ExperimentConfig, int], Sequence[float]]
    summarize: Callable[[ExperimentConfig, SampleTable], Summary]
    defaults: dict
    tolerances: dict[str, float] = field(default_factory=dict)


def sample_chunk(
    sample: Callable[[ExperimentConfig, int], Sequence[float]],
    config: ExperimentConfig,
    start: int,
    stop: int,
) -> list[Row]:
    return [(i, [float(v) for v in sample(config, i)]) for i in range(start, stop)]


def _completed_chunks(
    definition: ExperimentDefinition,
    config: ExperimentConfig,
    pending: list[ChunkStatus],
) -> Iterator[tuple[ChunkStatus, list[Row]]]:
    if config.workers == 1 or len(pending) <= 1:
        for chunk in pending:
            yield chunk, sample_chunk(definition.sample, config, chunk.start, chunk.stop)
        return

    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        futures = {pool.submit(sample_chunk, definition.sample, config, c.start, c.stop): c for c in pending}
        try:
            for future in as_completed(futures):
                yield futures[future], future.result()
        except BaseException:
            pool.shutdown(wait=False, cancel_futures=True)
            raise


def build_report(
    definition: ExperimentDefinition,
    config: ExperimentConfig,
    table: SampleTable,
    wall_time: float = 0.0,
    raw_path: Path | None = None,
    manifest_path: Path | None = None,
) -> ExperimentReport:
    """Summarize a sample table; pass requires every check to hold."""
    expected = definition.columns(config)
    if table.columns != expected:
        raise ReportError(f"Raw columns {table.columns} do not match {definition.name} layout {expected}")
    summary = definition.summarize(config, table)
    return ExperimentReport(
        experiment=definition.name,
        config=config,
        config_hash=config.config_hash(),
        estimates=summary.estimates,
        fits=summary.fits,
        checks=summary.checks,
        passed=bool(summary.checks) and all(summary.checks.values()),
        wall_time=wall_time,
        library_version=__version__,
        raw_path=str(raw_path) if raw_path else None,
        manifest_path=str(manifest_path) if manifest_path else None,
    )


def execute(definition: ExperimentDefinition, config: ExperimentConfig, store: RunStore | None = None) -> ExperimentReport:
    """Generate every sample chunk (resuming finished ones), write raw.csv and report.json."""
    if store is None:
        store = RunStore(config.out_path or settings.run_dir(config.experiment))
    store.open()
    columns = definition.columns(config)
    manifest = store.begin(config)
    pending = [c for c in manifest.chunks if not c.completed]
    done = len(manifest.chunks) - len(pending)
    if done:
        logger.info(f"Resuming {config.experiment}: {done}/{len(manifest.chunks)} chunks already complete")
    logger.info(
        f"Running {config.experiment}: {config.samples} samples, {len(pending)} chunks, {config.workers} worker(s)"
    )
    store.save_manifest(manifest)

    started = time.perf_counter()
    for chunk, rows in _completed_chunks(definition, config, pending):
        store.write_chunk(chunk.index, columns, rows)
        chunk.completed = True
        store.save_manifest(manifest)
        logger.info(f"Chunk {chunk.index + 1}/{len(manifest.chunks)} done (samples {chunk.start}-{chunk.stop - 1})")

    # Chunk files are concatenated in chunk order whatever order they finished in
    rows = [row for chunk in manifest.chunks for row in store.read_chunk(chunk.index)]
    raw_path = store.write_raw(columns, rows)
    report = build_report(
        definition,
        config,
        SampleTable.from_rows(columns, rows),
        wall_time=time.perf_counter() - started,
        raw_path=raw_path,
        manifest_path=store.manifest_path,
    )
    store.write_report(report)
    manifest.finished_at = datetime.now()
    store.save_manifest(manifest)
    logger.info(f"Finished {config.experiment} in {report.wall_time:.1f}s: pass={report.passed}")
    return report
