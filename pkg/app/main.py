import argparse
import json
import logging
import sys
from pathlib import Path

from app import __version__
from app.config import settings
from app.models import ExperimentConfig
from app.services import oracles
from app.services.experiments import EXPERIMENTS, ConfigError, load_config, report_from_raw, run_experiment
from app.services.runner import ReportError
from app.storage import MANIFEST_NAME, RunStore, StorageError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2


class UsageError(Exception):
    """Raised for malformed command lines."""

    pass


class ArgumentParser(argparse.ArgumentParser):
    # argparse would exit 2, which is reserved for failed experiments
    def error(self, message: str):
        raise UsageError(message)


def _read_document(path: str) -> dict:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return document


def cmd_run(args: argparse.Namespace) -> int:
    document = _read_document(args.config) if args.config else None
    config = load_config(
        args.experiment,
        document,
        n=args.n,
        samples=args.samples,
        master_seed=args.seed,
        workers=args.workers,
        out_path=args.out,
    )
    logger.info(f"Loaded {config.experiment} config (hash {config.config_hash()[:12]})")
    report = run_experiment(config)
    failed = [name for name, ok in report.checks.items() if not ok]
    print(f"{report.experiment}: {'PASS' if report.passed else 'FAIL'} in {report.wall_time:.1f}s -> {report.raw_path}")
    if failed:
        print(f"failed checks: {', '.join(failed)}")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_report(args: argparse.Namespace) -> int:
    raw = Path(args.raw)
    store = RunStore(raw.parent)
    manifest = store.load_manifest()
    if manifest is None:
        raise ConfigError(f"no {MANIFEST_NAME} next to {raw}; cannot recover the run config")
    report = report_from_raw(raw, manifest.config)
    report.manifest_path = str(store.manifest_path)
    print(report.model_dump_json(indent=2, by_alias=True))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_selftest(args: argparse.Namespace) -> int:
    results = oracles.run_all()
    for result in results:
        print(f"{'ok  ' if result.passed else 'FAIL'} {result.name}: {result.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def cmd_list(args: argparse.Namespace) -> int:
    listing = {
        "version": __version__,
        "experiments": {
            name: {"description": d.description, "defaults": d.defaults, "tolerances": d.tolerances}
            for name, d in EXPERIMENTS.items()
        },
        "config_schema": ExperimentConfig.model_json_schema(),
    }
    print(json.dumps(listing, indent=2, default=str))
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="lpp-lab", description="Monte Carlo experiments for exponential last passage percolation")
    parser.add_argument("--version", action="version", version=f"{settings.app_name} {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run one experiment")
    run.add_argument("experiment", help="experiment name (see `list`)")
    run.add_argument("--config", help="JSON config file; the experiment's defaults when omitted")
    run.add_argument("--n", type=int)
    run.add_argument("--samples", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out", type=Path, help="run directory (raw.csv, report.json, manifest.json)")
    run.set_defaults(handler=cmd_run)

    report = commands.add_parser("report", help="recompute a report from raw samples")
    report.add_argument("raw", help="raw.csv written by `run`")
    report.set_defaults(handler=cmd_report)

    selftest = commands.add_parser("selftest", help="run the brute-force and synthetic oracles")
    selftest.set_defaults(handler=cmd_selftest)

    listing = commands.add_parser("list", help="print experiment names, defaults and the config schema")
    listing.set_defaults(handler=cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.DEBUG if settings.debug else getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except (UsageError, ConfigError, ReportError, StorageError) as e:
        message = " ".join(str(e).split())
        print(f"error: {message}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
