"""
Tests for the quakeml command line.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from quakeml import __version__
from quakeml.cli import cli
from quakeml.detector import Smartphone, detect
from quakeml.estimation import EstimatorConfig, Trigger, estimate_hypocenter
from quakeml.geo import PRIMARY_WAVE, GeoPoint
from quakeml.io import read_roster, read_triggers, write_roster, write_triggers
from quakeml.simulate import (
    Arm,
    CalibrationReport,
    CalibrationStudy,
    NetworkSpec,
    generate_network,
    replication_rng,
    simulate_stream,
)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def roster_csv(tmp_path: Path) -> Path:
    """Ten active phones a few hundred meters apart."""
    path = tmp_path / "roster.csv"
    write_roster([Smartphone(f"p{i}", GeoPoint(0.0, 0.003 * i)) for i in range(10)], path)
    return path


def stream_csv(path: Path, times: list[float]) -> Path:
    write_triggers([Trigger.at(0.0, 0.003 * i, t, f"p{i}") for i, t in enumerate(times)], path)
    return path


def report_of(path: Path) -> dict:
    return json.loads(path.read_text())


class TestClassifyCommand:
    """Test the classify command."""

    def test_true_earthquake(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test that a true event exits 0 with both velocity blocks."""
        out = tmp_path / "report.json"
        result = runner.invoke(
            cli,
            ["classify", str(trigger_csv(genova_triggers)), "--restarts", "5", "--seed", "1", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        report = report_of(out)
        assert report["verdict"] == "true_earthquake"
        assert [block["v"] for block in report["tests"]] == [7.8, 4.5]
        primary = report["tests"][0]
        assert primary["df"] == 18
        assert primary["T"] < primary["critical"]
        assert set(primary["estimate"]["ci"]) == {"lat", "lon", "depth_km"}
        assert report["seed"] == 1
        assert report["input"]["n"] == 21
        assert report["timing_ms"] >= 0

    def test_false_detection(self, runner, tmp_path, trigger_csv, acapulco_triggers):
        """Test that random trigger times exit 3."""
        out = tmp_path / "report.json"
        result = runner.invoke(
            cli,
            ["classify", str(trigger_csv(acapulco_triggers)), "--restarts", "10", "--seed", "1", "-o", str(out)],
        )
        assert result.exit_code == 3, result.output
        report = report_of(out)
        assert report["verdict"] == "false_detection"
        assert all(block["rejected"] for block in report["tests"])
        assert report["tests"][0]["critical"] == pytest.approx(141.62, abs=0.01)

    def test_truth_columns(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test that a known hypocenter adds real values and errors."""
        out = tmp_path / "report.json"
        result = runner.invoke(
            cli,
            [
                "classify", str(trigger_csv(genova_triggers)),
                "--truth", "44.46,9.06,8", "--restarts", "5", "--seed", "1", "-o", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        truth = report_of(out)["tests"][0]["truth"]
        assert truth["real"] == {"lat": 44.46, "lon": 9.06, "depth_km": 8.0}
        assert truth["epicentre_km"] >= 0

    def test_bad_truth(self, runner, trigger_csv, genova_triggers):
        """Test that a malformed hypocenter is a usage error."""
        result = runner.invoke(cli, ["classify", str(trigger_csv(genova_triggers)), "--truth", "44.46,9.06"])
        assert result.exit_code == 2

    def test_unclassifiable(self, runner, tmp_path, trigger_csv, trigger_factory):
        """Test that three triggers exit 4 with a report and a message."""
        out = tmp_path / "report.json"
        result = runner.invoke(cli, ["classify", str(trigger_csv(trigger_factory(n=3))), "-o", str(out)])
        assert result.exit_code == 4
        assert "insufficient triggers (n=3 < 4)" in result.output
        report = report_of(out)
        assert report["verdict"] == "unclassifiable"
        assert report["tests"] == []

    def test_parse_error(self, runner, tmp_path):
        """Test that malformed rows exit 2 with line-numbered diagnostics."""
        path = tmp_path / "bad.csv"
        path.write_text("id,lat,lon,t\na,1.0,2.0,0.0\nb,abc,2.0,1.0\n")
        result = runner.invoke(cli, ["classify", str(path)])
        assert result.exit_code == 2
        assert "line 3: invalid lat value 'abc'" in result.output

    def test_invalid_delta(self, runner, trigger_csv, genova_triggers):
        """Test that a non-positive delta is a usage error."""
        result = runner.invoke(cli, ["classify", str(trigger_csv(genova_triggers)), "--delta", "0"])
        assert result.exit_code == 2

    def test_seed_from_environment(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test that QUAKEML_SEED supplies the default seed."""
        out = tmp_path / "report.json"
        result = runner.invoke(
            cli,
            ["classify", str(trigger_csv(genova_triggers)), "--restarts", "3", "-o", str(out)],
            env={"QUAKEML_SEED": "42"},
        )
        assert result.exit_code == 0, result.output
        assert report_of(out)["seed"] == 42


class TestEstimateCommand:
    """Test the estimate command."""

    def test_shift_invariance(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test that shifting every time by a constant leaves the estimate unchanged."""
        base = [Trigger(t.location, round(t.time * 1024) / 1024, t.id) for t in genova_triggers]
        moved = [Trigger(t.location, t.time + 1024.0, t.id) for t in base]
        reports = []
        for name, triggers in (("a", base), ("b", moved)):
            out = tmp_path / f"{name}.json"
            path = trigger_csv(triggers, f"{name}.csv")
            result = runner.invoke(cli, ["estimate", str(path), "--restarts", "4", "--seed", "9", "-o", str(out)])
            assert result.exit_code == 0, result.output
            reports.append(report_of(out))
        assert reports[0]["estimate"] == reports[1]["estimate"]
        assert reports[0]["sigma2"] == reports[1]["sigma2"]
        assert len(reports[0]["residuals"]) == 21

    def test_secondary_wave(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test wave selection and a custom speed."""
        out = tmp_path / "e.json"
        result = runner.invoke(
            cli,
            [
                "estimate", str(trigger_csv(genova_triggers)), "--wave", "secondary",
                "--velocity", "4.2", "--restarts", "3", "--seed", "1", "-o", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        report = report_of(out)
        assert (report["wave"], report["v"]) == ("secondary", 4.2)

    def test_coincident_triggers(self, runner, tmp_path, trigger_csv):
        """Test that triggers at one location are flagged degenerate with unbounded intervals."""
        triggers = [Trigger.at(44.46, 9.06, 0.1 * i, f"d{i}") for i in range(5)]
        out = tmp_path / "e.json"
        result = runner.invoke(cli, ["estimate", str(trigger_csv(triggers)), "--seed", "1", "-o", str(out)])
        assert result.exit_code == 0, result.output
        report = report_of(out)
        assert report["degenerate"] is True
        assert report["estimate"]["ci"]["depth_km"] == {"lower": None, "upper": None}


class TestDetectCommand:
    """Test detector replay."""

    def test_fires(self, runner, tmp_path, roster_csv):
        """Test that the concurring triggers are written as a trigger file."""
        out = tmp_path / "detection.csv"
        stream = stream_csv(tmp_path / "stream.csv", [0.0, 1.0, 2.0, 3.0, 4.0])
        result = runner.invoke(cli, ["detect", str(stream), "--roster", str(roster_csv), "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert [t.time for t in read_triggers(out)] == [0.0, 1.0, 2.0, 3.0]

    def test_empty_stream(self, runner, tmp_path, roster_csv):
        """Test that an empty stream exits 5."""
        stream = tmp_path / "stream.csv"
        stream.write_text("id,lat,lon,t\n")
        result = runner.invoke(cli, ["detect", str(stream), "--roster", str(roster_csv)])
        assert result.exit_code == 5
        assert "no detection" in result.output

    def test_unsorted_stream(self, runner, tmp_path, roster_csv):
        """Test that an unsorted stream exits 2."""
        stream = stream_csv(tmp_path / "stream.csv", [0.0, 2.0, 1.0])
        result = runner.invoke(cli, ["detect", str(stream), "--roster", str(roster_csv)])
        assert result.exit_code == 2

    def test_ratio_option(self, runner, tmp_path, roster_csv):
        """Test that a stricter ratio keeps four triggers from firing."""
        stream = stream_csv(tmp_path / "stream.csv", [0.0, 1.0, 2.0, 3.0])
        result = runner.invoke(cli, ["detect", str(stream), "--roster", str(roster_csv), "--ratio", "0.5"])
        assert result.exit_code == 5


class TestSimulateCommand:
    """Test the simulate command."""

    ARGS = ["simulate", "--phones", "200", "--replications", "2", "--seed", "3"]

    def test_reproducible(self, runner, tmp_path):
        """Test that the same seed writes byte-identical files."""
        for name in ("a", "b"):
            result = runner.invoke(cli, [*self.ARGS, "-d", str(tmp_path / name)])
            assert result.exit_code == 0, result.output
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert files == ["network.csv", "plot_data.json", "triggers_0000.csv", "triggers_0001.csv", "truth.csv"]
        for name in files:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_true_files(self, runner, tmp_path):
        """Test truth rows, trigger counts and plot data of true events."""
        result = runner.invoke(cli, [*self.ARGS, "-d", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert len((tmp_path / "truth.csv").read_text().splitlines()) == 3
        assert len(read_triggers(tmp_path / "triggers_0000.csv")) == 140 + 4
        plots = json.loads((tmp_path / "plot_data.json").read_text())
        assert [p["replication"] for p in plots] == [0, 1]
        assert len(plots[0]["phones"]) == 200

    def test_false_kind(self, runner, tmp_path):
        """Test that false detections write a header-only truth file."""
        result = runner.invoke(cli, [*self.ARGS, "--kind", "false", "-d", str(tmp_path)])
        assert result.exit_code == 0, result.output
        assert (tmp_path / "truth.csv").read_text() == "replication,lat,lon,depth_km,t_origin\n"
        assert len(read_triggers(tmp_path / "triggers_0001.csv")) == 60

    def test_roster_placement(self, runner, tmp_path, roster_csv):
        """Test that a roster file replaces uniform placement."""
        result = runner.invoke(
            cli, ["simulate", "--roster", str(roster_csv), "--seed", "1", "-d", str(tmp_path / "out")]
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "out" / "network.csv").read_text() == roster_csv.read_text()


class TestCalibrateCommand:
    """Test the calibrate command."""

    def test_too_few_replications(self, runner):
        """Test that fewer than 100 replications is a usage error."""
        result = runner.invoke(cli, ["calibrate", "--replications", "10"])
        assert result.exit_code == 2
        assert "insufficient replications (n=10 < 100)" in result.output


class TestPipeline:
    """Test simulate, detect and classify chained through files."""

    def test_files_match_memory(self, runner, tmp_path):
        """Test that the file pipeline sees exactly the in-memory detection and fit."""
        out = tmp_path / "sim"
        result = runner.invoke(
            cli, ["simulate", "--phones", "200", "--replications", "1", "--seed", "3", "-d", str(out)]
        )
        assert result.exit_code == 0, result.output

        study = CalibrationStudy(network=NetworkSpec(count=200), seed=3)
        network = generate_network(study.network, replication_rng(3, Arm.NETWORK, 0))
        stream, truth = simulate_stream(Arm.TRUE, 0, network, study)
        detection = detect(stream, network)
        assert detection is not None
        assert read_roster(out / "network.csv") == network
        assert read_triggers(out / "triggers_0000.csv") == stream

        concurring = tmp_path / "detection.csv"
        result = runner.invoke(
            cli,
            ["detect", str(out / "triggers_0000.csv"), "--roster", str(out / "network.csv"), "-o", str(concurring)],
        )
        assert result.exit_code == 0, result.output
        assert tuple(read_triggers(concurring)) == detection.triggers

        report_path = tmp_path / "report.json"
        epicentre = truth.epicentre
        result = runner.invoke(
            cli,
            [
                "classify", str(concurring), "--delta", "2.5", "--restarts", "5", "--seed", "1",
                f"--truth={epicentre.lat!r},{epicentre.lon!r},{truth.depth_km!r}",
                "-o", str(report_path),
            ],
        )
        assert result.exit_code in (0, 3), result.output
        report = report_of(report_path)
        fit = estimate_hypocenter(detection.triggers, PRIMARY_WAVE, EstimatorConfig(restarts=5, seed=1))
        primary = report["tests"][0]
        assert report["input"]["n"] == detection.triggering_count
        assert primary["sigma2"] == fit.sigma2
        assert (primary["estimate"]["lat"], primary["estimate"]["lon"]) == (
            fit.hypocenter.epicentre.lat,
            fit.hypocenter.epicentre.lon,
        )
        assert primary["truth"]["real"]["depth_km"] == truth.depth_km


CLASSIFY_KEYS = ["verdict", "tests", "timing_ms", "seed", "config", "input", "message"]
BLOCK_KEYS = [
    "v", "estimate", "sigma2", "T", "df", "critical", "rejected", "wave",
    "converged", "degenerate", "at_depth_bound", "confidence_level", "truth",
]
ESTIMATE_KEYS = [
    "v", "wave", "estimate", "sigma2", "objective", "log_likelihood", "converged",
    "degenerate", "at_depth_bound", "restarts", "converged_restarts", "residuals",
    "timing_ms", "seed", "config", "input",
]
INPUT_KEYS = ["n", "lat_min", "lat_max", "lon_min", "lon_max", "t_span_s"]
CALIBRATION_KEYS = [
    "delta", "alpha", "type1", "type2", "rejection_rates", "replications", "seed",
    "true_detections", "false_detections", "true_nondetections", "false_nondetections",
    "nonconverged_fits", "depth_bound_fits", "epicentre_errors_km", "depth_errors_km",
    "sigma2_histogram", "error_boxplot", "config",
]


class TestReportSchema:
    """Test the key layout of JSON reports."""

    def test_classification(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test classification report keys and their order."""
        out = tmp_path / "report.json"
        result = runner.invoke(
            cli, ["classify", str(trigger_csv(genova_triggers)), "--restarts", "3", "--seed", "1", "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        report = report_of(out)
        assert list(report) == CLASSIFY_KEYS
        assert report["message"] is None
        assert list(report["input"]) == INPUT_KEYS
        for block in report["tests"]:
            assert list(block) == BLOCK_KEYS
            assert list(block["estimate"]) == ["lat", "lon", "depth_km", "ci"]
            assert block["truth"] is None
            for ci in block["estimate"]["ci"].values():
                assert list(ci) == ["lower", "upper"]

    def test_unclassifiable(self, runner, tmp_path, trigger_csv, trigger_factory):
        """Test that an unclassifiable report keeps the same top-level keys."""
        out = tmp_path / "report.json"
        runner.invoke(cli, ["classify", str(trigger_csv(trigger_factory(n=3))), "-o", str(out)])
        report = report_of(out)
        assert list(report) == CLASSIFY_KEYS
        assert report["input"]["n"] == 3
        assert isinstance(report["message"], str)

    def test_estimate(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test estimate report keys and their order."""
        out = tmp_path / "e.json"
        result = runner.invoke(
            cli, ["estimate", str(trigger_csv(genova_triggers)), "--restarts", "3", "--seed", "1", "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        report = report_of(out)
        assert list(report) == ESTIMATE_KEYS
        assert list(report["input"]) == INPUT_KEYS

    def test_calibration_fields(self):
        """Test the calibration report field layout."""
        assert list(CalibrationReport.model_fields) == CALIBRATION_KEYS


class TestConfigFile:
    """Test YAML option defaults."""

    def test_defaults_from_file(self, runner, tmp_path, trigger_csv, genova_triggers):
        """Test that shared keys and command sections set defaults and flags still win."""
        config = tmp_path / "quakeml.yaml"
        config.write_text("seed: 5\nrestarts: 3\nclassify:\n  delta: 0.9\n  alpha: 0.05\n")
        out = tmp_path / "report.json"
        path = str(trigger_csv(genova_triggers))
        result = runner.invoke(cli, ["--config", str(config), "classify", path, "--alpha", "0.01", "-o", str(out)])
        assert result.exit_code == 0, result.output
        report = report_of(out)
        assert report["seed"] == 5
        assert report["config"]["delta"] == 0.9
        assert report["config"]["alpha"] == 0.01
        assert report["config"]["estimator"]["restarts"] == 3

    def test_not_a_mapping(self, runner, tmp_path):
        """Test that a config file must hold a mapping."""
        config = tmp_path / "quakeml.yaml"
        config.write_text("- a\n- b\n")
        result = runner.invoke(cli, ["--config", str(config), "version"])
        assert result.exit_code == 2


class TestVersion:
    """Test version output."""

    def test_version_command(self, runner):
        """Test the version command."""
        result = runner.invoke(cli, ["version"])
        assert result.exit_code == 0
        assert f"Version: {__version__}" in result.output

    def test_version_option(self, runner):
        """Test the --version flag."""
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.output
