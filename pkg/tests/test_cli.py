import json

import pytest

from app.main import EXIT_ERROR, EXIT_FAILED, EXIT_OK, build_parser, main
from app.services import oracles

from .conftest import SMALL_CONFIGS


@pytest.fixture
def config_file(tmp_path):
    """A small corr_decay config on disk."""
    path = tmp_path / "corr_decay.json"
    document = {"experiment": "corr_decay", "samples": 24, "batches": 4, "chunk_size": 8, **SMALL_CONFIGS["corr_decay"]}
    path.write_text(json.dumps(document))
    return path


def error_lines(capsys) -> list[str]:
    return [line for line in capsys.readouterr().err.splitlines() if line.startswith("error:")]


class TestList:
    def test_lists_every_experiment(self, capsys):
        assert main(["list"]) == EXIT_OK
        listing = json.loads(capsys.readouterr().out)
        assert set(listing["experiments"]) == set(SMALL_CONFIGS)
        assert listing["experiments"]["corr_decay"]["defaults"]["n"] == 2048
        assert "master_seed" in listing["config_schema"]["properties"]


class TestRun:
    def test_rerun_gives_identical_raw(self, config_file, tmp_path, capsys):
        first, second = tmp_path / "first", tmp_path / "second"
        assert main(["run", "corr_decay", "--config", str(config_file), "--out", str(first)]) in (EXIT_OK, EXIT_FAILED)
        assert main(["run", "corr_decay", "--config", str(config_file), "--out", str(second)]) in (EXIT_OK, EXIT_FAILED)
        assert (first / "raw.csv").read_bytes() == (second / "raw.csv").read_bytes()
        assert (first / "report.json").exists()
        assert "corr_decay:" in capsys.readouterr().out

    def test_seed_override(self, config_file, tmp_path):
        main(["run", "corr_decay", "--config", str(config_file), "--out", str(tmp_path / "a")])
        main(["run", "corr_decay", "--config", str(config_file), "--seed", "7", "--out", str(tmp_path / "b")])
        assert (tmp_path / "a" / "raw.csv").read_bytes() != (tmp_path / "b" / "raw.csv").read_bytes()

    def test_regime_violation(self, tmp_path, capsys):
        code = main(["run", "corr_decay", "--n", "100", "--samples", "200", "--out", str(tmp_path / "x")])
        assert code == EXIT_ERROR
        lines = error_lines(capsys)
        assert len(lines) == 1
        assert "regime violation" in lines[0]
        assert not (tmp_path / "x").exists()

    def test_unknown_experiment(self, capsys):
        assert main(["run", "tracy_widom"]) == EXIT_ERROR
        assert "unknown experiment" in error_lines(capsys)[0]

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "corr_decay", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR
        assert "cannot read config" in error_lines(capsys)[0]

    def test_config_for_other_experiment(self, config_file, capsys):
        assert main(["run", "moddev", "--config", str(config_file)]) == EXIT_ERROR
        assert len(error_lines(capsys)) == 1


class TestUsage:
    def test_no_subcommand(self, capsys):
        assert main([]) == EXIT_ERROR
        assert len(error_lines(capsys)) == 1

    def test_bad_integer(self, capsys):
        assert main(["run", "corr_decay", "--samples", "many"]) == EXIT_ERROR
        assert len(error_lines(capsys)) == 1

    def test_parser_commands(self):
        args = build_parser().parse_args(["run", "moddev", "--workers", "3"])
        assert args.experiment == "moddev"
        assert args.workers == 3


class TestReport:
    def test_prints_report_from_raw(self, config_file, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "corr_decay", "--config", str(config_file), "--out", str(out)])
        stored = json.loads((out / "report.json").read_text())
        capsys.readouterr()

        code = main(["report", str(out / "raw.csv")])
        printed = json.loads(capsys.readouterr().out)
        assert code == (EXIT_OK if stored["pass"] else EXIT_FAILED)
        assert printed["estimates"] == stored["estimates"]
        assert printed["checks"] == stored["checks"]
        assert printed["pass"] == stored["pass"]

    def test_report_without_manifest(self, tmp_path, capsys):
        raw = tmp_path / "raw.csv"
        raw.write_text("sample_index,T_4\n")
        assert main(["report", str(raw)]) == EXIT_ERROR
        assert "manifest" in error_lines(capsys)[0]

    def test_report_layout_mismatch(self, config_file, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "corr_decay", "--config", str(config_file), "--out", str(out)])
        (out / "raw.csv").write_text("sample_index,T_4\n0,1.0\n")
        capsys.readouterr()
        assert main(["report", str(out / "raw.csv")]) == EXIT_ERROR
        assert len(error_lines(capsys)) == 1


class TestSelftest:
    def test_selftest_passes(self, capsys, monkeypatch):
        quick = [
            lambda: oracles.path_enumeration(fields=50, size=3),
            lambda: oracles.two_pass_moments(count=500),
        ]
        monkeypatch.setattr(oracles, "run_all", lambda: [check() for check in quick])
        assert main(["selftest"]) == EXIT_OK
        assert "ok" in capsys.readouterr().out
