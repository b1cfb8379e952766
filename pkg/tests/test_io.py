"""
Tests for trigger and roster CSV files.
"""

import importlib
import logging

import pytest
import structlog

import quakeml
from quakeml.detector import Smartphone
from quakeml.errors import TriggerFileError
from quakeml.estimation import Hypocenter, Trigger
from quakeml.geo import GeoPoint
from quakeml.io import (
    read_roster,
    read_triggers,
    write_hypocenters,
    write_roster,
    write_triggers,
)


class TestTriggerFiles:
    """Test reading and writing trigger files."""

    def test_write_then_read(self, tmp_path):
        """Test that written triggers read back unchanged."""
        triggers = [Trigger.at(44.46, 9.06, 0.125, "a"), Trigger.at(44.5, 9.1, 1.5, "b")]
        path = tmp_path / "t.csv"
        write_triggers(triggers, path)
        assert path.read_text().splitlines()[0] == "id,lat,lon,t"
        assert read_triggers(path) == triggers

    def test_bit_exact_round_trip(self, tmp_path):
        """Test that values without a short decimal form read back to the same bits."""
        triggers = [Trigger.at(0.0, 0.003 * i, 0.1 * i) for i in range(10)]
        path = tmp_path / "t.csv"
        write_triggers(triggers, path)
        back = read_triggers(path)
        assert [t.location.lon for t in back] == [0.003 * i for i in range(10)]
        assert [t.time for t in back] == [0.1 * i for i in range(10)]
        assert back == triggers

    def test_id_optional(self, tmp_path):
        """Test that the id column may be missing or empty."""
        path = tmp_path / "t.csv"
        path.write_text("lat,lon,t\n1.0,2.0,3.5\n")
        assert read_triggers(path) == [Trigger.at(1.0, 2.0, 3.5)]
        path.write_text("id,lat,lon,t\n,1.0,2.0,3.5\n")
        assert read_triggers(path)[0].id is None

    def test_whitespace_tolerated(self, tmp_path):
        """Test that blanks after separators are ignored."""
        path = tmp_path / "t.csv"
        path.write_text("id, lat, lon, t\nx, 1.0, 2.0, 3.0\n")
        assert read_triggers(path) == [Trigger.at(1.0, 2.0, 3.0, "x")]

    def test_line_numbered_diagnostics(self, tmp_path):
        """Test that every bad value is reported with its line."""
        path = tmp_path / "t.csv"
        path.write_text("id,lat,lon,t\na,1.0,2.0,0.0\nb,abc,2.0,1.0\nc,95.0,2.0,nan\n")
        with pytest.raises(TriggerFileError) as excinfo:
            read_triggers(path)
        diagnostics = excinfo.value.diagnostics
        assert "line 3: invalid lat value 'abc'" in diagnostics
        assert "line 4: invalid t value 'nan'" in diagnostics
        assert any(d.startswith("line 4: lat 95.0 outside") for d in diagnostics)

    def test_missing_column(self, tmp_path):
        """Test that a missing required column is reported on the header line."""
        path = tmp_path / "t.csv"
        path.write_text("id,lat,t\na,1.0,0.0\n")
        with pytest.raises(TriggerFileError, match="line 1: missing column"):
            read_triggers(path)

    def test_no_rows(self, tmp_path):
        """Test that a header-only file is an error unless empty input is allowed."""
        path = tmp_path / "t.csv"
        path.write_text("id,lat,lon,t\n")
        with pytest.raises(TriggerFileError, match="no trigger rows"):
            read_triggers(path)
        assert read_triggers(path, allow_empty=True) == []

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises a parse error."""
        with pytest.raises(TriggerFileError, match="file not found"):
            read_triggers(tmp_path / "nope.csv")


class TestRosterFiles:
    """Test reading and writing smartphone rosters."""

    def test_write_then_read(self, tmp_path):
        """Test that rosters round-trip including the active flag."""
        phones = [
            Smartphone("00001", GeoPoint(-12.0, -77.0)),
            Smartphone("00002", GeoPoint(-12.1, -77.1), active=False),
        ]
        path = tmp_path / "r.csv"
        write_roster(phones, path)
        assert read_roster(path) == phones

    def test_roster_bit_exact(self, tmp_path):
        """Test that generated coordinates survive a roster file unchanged."""
        phones = [
            Smartphone(f"{i:05d}", GeoPoint(-12.0 + 0.1 * i / 3, -77.0 + 0.003 * i))
            for i in range(10)
        ]
        path = tmp_path / "r.csv"
        write_roster(phones, path)
        assert read_roster(path) == phones

    def test_active_defaults_true(self, tmp_path):
        """Test that phones without an active column are active."""
        path = tmp_path / "r.csv"
        path.write_text("id,lat,lon\n007,1.0,2.0\n")
        assert read_roster(path) == [Smartphone("007", GeoPoint(1.0, 2.0))]

    def test_duplicate_and_missing_ids(self, tmp_path):
        """Test roster id diagnostics."""
        path = tmp_path / "r.csv"
        path.write_text("id,lat,lon,active\na,1,2,yes\na,1,2,no\n,1,2,1\nb,1,2,maybe\n")
        with pytest.raises(TriggerFileError) as excinfo:
            read_roster(path)
        diagnostics = excinfo.value.diagnostics
        assert "line 3: duplicate id 'a'" in diagnostics
        assert "line 4: missing id" in diagnostics
        assert "line 5: invalid active value 'maybe'" in diagnostics


class TestTruthFiles:
    """Test ground-truth output of simulations."""

    def test_rows_and_header(self, tmp_path):
        """Test one row per replication with a fixed header."""
        path = tmp_path / "truth.csv"
        write_hypocenters([(0, Hypocenter.at(-12.0, -77.0, 30.0)), (3, Hypocenter.at(-12.2, -76.9, 5.5))], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "replication,lat,lon,depth_km,t_origin"
        assert lines[1] == "0,-12.0,-77.0,30.0,0.0"
        assert len(lines) == 3

    def test_empty(self, tmp_path):
        """Test that false-detection runs write only the header."""
        path = tmp_path / "truth.csv"
        write_hypocenters([], path)
        assert path.read_text() == "replication,lat,lon,depth_km,t_origin\n"


class TestLibraryLogging:
    """Test the logging defaults of library use."""

    @pytest.fixture(autouse=True)
    def restore_defaults(self):
        yield
        structlog.reset_defaults()
        importlib.reload(quakeml)

    def test_debug_silent_by_default(self, tmp_path, capsys):
        """Test that reading a file prints nothing when no application configured logging."""
        structlog.reset_defaults()
        importlib.reload(quakeml)
        assert structlog.is_configured()
        path = tmp_path / "t.csv"
        write_triggers([Trigger.at(1.0, 2.0, 0.5)], path)
        read_triggers(path)
        assert capsys.readouterr().out == ""

    def test_application_config_kept(self):
        """Test that importing the package keeps an existing structlog configuration."""
        wrapper = structlog.make_filtering_bound_logger(logging.DEBUG)
        structlog.configure(wrapper_class=wrapper)
        importlib.reload(quakeml)
        assert structlog.get_config()["wrapper_class"] is wrapper
