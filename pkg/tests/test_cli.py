"""
Tests for the ion-stylus command line.
"""

import json
import math

import polars as pl
import pytest

from ion_stylus import cli, solver
from ion_stylus.errors import NoMinimumError


def write_config(tmp_path, raw: dict):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(raw))
    return str(path)


class TestSense:
    """Tests for the sense command."""

    def test_report(self, tmp_path, capsys):
        assert cli.run(["sense", "--out", str(tmp_path)]) == cli.EXIT_OK
        report = json.loads((tmp_path / "sense.json").read_text())
        assert report["command"] == "sense"
        assert report["config"]["sensing"]["heating_rate_per_s"] == 1000.0
        assert report["budget"]["force_N_per_rtHz"] == pytest.approx(0.4596e-24, rel=1e-3)
        assert report["cryogenic_improvement"] == pytest.approx(math.sqrt(1000.0), rel=1e-9)
        assert "wrote" in capsys.readouterr().out

    def test_reproducible(self, tmp_path):
        cli.run(["sense", "--out", str(tmp_path)])
        first = (tmp_path / "sense.json").read_bytes()
        cli.run(["sense", "--out", str(tmp_path)])
        assert (tmp_path / "sense.json").read_bytes() == first
        assert first.endswith(b"\n")

    def test_csv(self, tmp_path):
        assert cli.run(["sense", "--out", str(tmp_path), "--format", "csv"]) == cli.EXIT_OK
        frame = pl.read_csv(tmp_path / "sense.csv")
        assert frame.height == 9
        assert "force_yN_per_rtHz" in frame.columns

    def test_zero_heating_is_a_config_error(self, tmp_path):
        config = write_config(tmp_path, {"sensing": {"heating_rate_per_s": 0}})
        assert cli.run(["sense", "--config", config, "--out", str(tmp_path)]) == cli.EXIT_CONFIG


class TestMirror:
    """Tests for the mirror command."""

    def test_report(self, tmp_path):
        assert cli.run(["mirror", "--out", str(tmp_path), "--rays", "100000"]) == cli.EXIT_OK
        report = json.loads((tmp_path / "mirror.json").read_text())
        assert report["cos_theta_rim"] == pytest.approx(5 / 7)
        assert report["dipole_efficiency"] == pytest.approx(324 / 343)
        assert report["hole_for_target_deg"] == pytest.approx(25.07, abs=0.05)
        assert report["cavity_efficiency"] == pytest.approx(0.9)
        assert report["pair_rate_boost"] > 5e4
        assert report["intercepted_fraction_raycast"]["rays"] == 100000


class TestSolidAngle:
    """Tests for the solid-angle command."""

    def test_analytic_trap1(self, tmp_path):
        config = write_config(tmp_path, {
            "geometry": {"preset": 1},
            "solid_angle": {"method": "analytic", "hit_map_bins": [18, 36]},
        })
        assert cli.run(["solid-angle", "--config", config, "--out", str(tmp_path)]) == cli.EXIT_OK
        report = json.loads((tmp_path / "solid-angle.json").read_text())
        assert report["ion_height_um"] == 168.0
        assert report["solid_angle"]["analytic"]["fraction"] == pytest.approx(0.714, abs=1e-3)
        assert "raycast" not in report["solid_angle"]
        assert pl.read_csv(tmp_path / "solid-angle-hitmap.csv").height == 18 * 36


class TestExitStatus:
    """Tests for the exit-status mapping."""

    def test_unknown_key(self, tmp_path):
        config = write_config(tmp_path, {"bogus": 1})
        assert cli.run(["sense", "--config", config, "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{")
        assert cli.run(["sense", "--config", str(path)]) == cli.EXIT_CONFIG

    def test_bad_flag_value(self, tmp_path):
        assert cli.run(["sense", "--rays", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        assert cli.run(["sense", "--config", str(tmp_path / "absent.json")]) == cli.EXIT_IO

    def test_physics_failure(self, tmp_path, monkeypatch, capsys):
        def lost(_run):
            raise NoMinimumError("no trapping minimum")

        monkeypatch.setitem(cli.COMMANDS, "analyze", (lost, "test"))
        assert cli.run(["analyze", "--out", str(tmp_path)]) == cli.EXIT_PHYSICS
        assert "no trapping minimum" in capsys.readouterr().err

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            cli.run(["polish"])


class TestTable1:
    """Tests for the table1 command."""

    @pytest.mark.slow
    def test_runs_all_traps(self, tmp_path):
        args = ["table1", "--out", str(tmp_path), "--resolution", "1", "--rays", "100000", "--no-cache",
                "--format", "csv"]
        assert cli.run(args) == cli.EXIT_OK
        frame = pl.read_csv(tmp_path / "table1.csv")
        assert frame.height == 21
        assert sorted(set(frame["trap"].to_list())) == [1, 2, 3]
        solid = frame.filter(pl.col("quantity") == "solid_angle_analytic")
        assert all(abs(d) < 2.0 for d in solid["deviation_pct"].to_list())

    @pytest.mark.slow
    def test_reproducible(self, tmp_path):
        args = ["table1", "--resolution", "1", "--rays", "100000", "--no-cache"]
        reports = []
        for _ in range(2):
            solver._solve_cached.cache_clear()
            assert cli.run([*args, "--out", str(tmp_path)]) == cli.EXIT_OK
            reports.append((tmp_path / "table1.json").read_bytes())
        assert reports[0] == reports[1]
        assert json.loads(reports[0])["table1"]
