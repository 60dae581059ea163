import csv
import json
from collections.abc import Iterable, Sequence
from datetime import datetime
from pathlib import Path

from app.config import settings
from app.models import ChunkStatus, ExperimentConfig, ExperimentReport, RunManifest

RAW_NAME = "raw.csv"
REPORT_NAME = "report.json"
MANIFEST_NAME = "manifest.json"


class StorageError(OSError):
    """Raised when a run file cannot be read or written."""

    pass


Row = tuple[int, list[float]]


def _format(value: float) -> str:
    # 17 significant digits round-trip every binary64 value
    return format(float(value), ".17g")


def write_raw(path: Path | str, columns: Sequence[str], rows: Iterable[Row]) -> None:
    """Write samples as CSV: sample_index then one column per estimand, rows in the given order."""
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["sample_index", *columns])
            for index, values in rows:
                writer.writerow([str(index), *(_format(v) for v in values)])
    except OSError as e:
        raise StorageError(f"Cannot write raw samples to {path}: {e}") from e


def read_raw(path: Path | str) -> tuple[list[str], list[Row]]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if not header or header[0] != "sample_index":
                raise StorageError(f"{path} is not a raw sample file")
            rows = [(int(line[0]), [float(v) for v in line[1:]]) for line in reader]
    except OSError as e:
        raise StorageError(f"Cannot read raw samples from {path}: {e}") from e
    except ValueError as e:
        raise StorageError(f"Malformed raw sample file {path}: {e}") from e
    return header[1:], rows


def plan_chunks(samples: int, chunk_size: int) -> list[ChunkStatus]:
    return [
        ChunkStatus(index=i, start=start, stop=min(start + chunk_size, samples))
        for i, start in enumerate(range(0, samples, chunk_size))
    ]


class RunStore:
    """Files of one experiment run: raw CSV, report, manifest and per-chunk partials."""

    def __init__(self, run_dir: Path | str | None = None):
        self.run_dir = Path(run_dir) if run_dir else settings.data_dir / "run"

    @property
    def raw_path(self) -> Path:
        return self.run_dir / RAW_NAME

    @property
    def report_path(self) -> Path:
        return self.run_dir / REPORT_NAME

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / MANIFEST_NAME

    @property
    def chunk_dir(self) -> Path:
        return self.run_dir / "chunks"

    def chunk_path(self, index: int) -> Path:
        return self.chunk_dir / f"chunk_{index:05d}.csv"

    def open(self) -> None:
        """Create the run directory tree."""
        try:
            self.chunk_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise StorageError(f"Cannot create run directory {self.run_dir}: {e}") from e

    def begin(self, config: ExperimentConfig) -> RunManifest:
        """Resume a matching unfinished manifest, otherwise start a fresh one."""
        existing = self.load_manifest()
        if existing is not None and existing.config_hash == config.config_hash():
            for chunk in existing.chunks:
                if chunk.completed and not self.chunk_path(chunk.index).exists():
                    chunk.completed = False
            existing.finished_at = None
            existing.config = config
            return existing

        for stale in self.chunk_dir.glob("chunk_*.csv"):
            stale.unlink()
        return RunManifest(
            config_hash=config.config_hash(),
            master_seed=config.master_seed,
            sample_stop=config.samples,
            chunk_size=config.chunk_size,
            raw_path=str(self.raw_path),
            report_path=str(self.report_path),
            started_at=datetime.now(),
            chunks=plan_chunks(config.samples, config.chunk_size),
            config=config,
        )

    def write_chunk(self, index: int, columns: Sequence[str], rows: Iterable[Row]) -> None:
        write_raw(self.chunk_path(index), columns, rows)

    def read_chunk(self, index: int) -> list[Row]:
        return read_raw(self.chunk_path(index))[1]

    def write_raw(self, columns: Sequence[str], rows: Iterable[Row]) -> Path:
        write_raw(self.raw_path, columns, rows)
        return self.raw_path

    def save_manifest(self, manifest: RunManifest) -> None:
        self._write_json(self.manifest_path, manifest.model_dump_json(indent=2))

    def load_manifest(self) -> RunManifest | None:
        if not self.manifest_path.exists():
            return None
        try:
            return RunManifest.model_validate_json(self.manifest_path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise StorageError(f"Cannot load manifest {self.manifest_path}: {e}") from e

    def write_report(self, report: ExperimentReport) -> Path:
        self._write_json(self.report_path, report.model_dump_json(indent=2, by_alias=True))
        return self.report_path

    def load_report(self) -> ExperimentReport:
        try:
            return ExperimentReport.model_validate(json.loads(self.report_path.read_text(encoding="utf-8")))
        except (OSError, ValueError) as e:
            raise StorageError(f"Cannot load report {self.report_path}: {e}") from e

    def _write_json(self, path: Path, payload: str) -> None:
        try:
            path.write_text(payload + "\n", encoding="utf-8")
        except OSError as e:
            raise StorageError(f"Cannot write {path}: {e}") from e
