"""Harness round-trips: trace files, summary reports, CLI behaviour."""

import csv
import json
import math
import os

import pytest

from roundabout_sim.cli import (
    SUMMARY_COLUMNS,
    TRACE_COLUMNS,
    main,
    run_campaign,
    run_stats,
    summarize,
    trace_stats,
    write_trace,
)
from roundabout_sim.config import parse_config
from roundabout_sim.game import GameParams
from roundabout_sim.geometry import RoundaboutSpec, build_roundabout
from roundabout_sim.sim import SimParams, run_simulation


@pytest.fixture(scope="module")
def geom():
    return build_roundabout(RoundaboutSpec())


SMALL = "campaign = 2 x 3\ncampaign = 4 x 3\n"


class TestTraceRoundTrip:
    """write_trace -> trace_stats must agree with the simulator's own metrics."""

    def roundtrip(self, result, tmp_path):
        path = str(tmp_path / f"run_{result.seed:08d}.csv")
        write_trace(result, path)
        return trace_stats(path)

    def test_normal_run(self, geom, tmp_path):
        r = run_simulation(5, 2, geom)
        assert self.roundtrip(r, tmp_path) == run_stats(r)

    def test_censored_run(self, geom, tmp_path):
        r = run_simulation(6, 4, geom, sim_params=SimParams(max_steps=3))
        stats = self.roundtrip(r, tmp_path)
        assert stats.censored and stats == run_stats(r)

    def test_collision_run(self, geom, tmp_path):
        r = run_simulation(8, 3, geom,
                           game_params=GameParams(strategy_accels=(29.0, 30.0)))
        stats = self.roundtrip(r, tmp_path)
        assert stats.collided and stats == run_stats(r)
        assert stats.mission_mean_s is None

    def test_single_vehicle_run(self, geom, tmp_path):
        r = run_simulation(1, 9, geom)
        stats = self.roundtrip(r, tmp_path)
        assert math.isinf(stats.min_distance) and stats == run_stats(r)

    def test_trace_format(self, geom, tmp_path):
        r = run_simulation(4, 7, geom)
        path = str(tmp_path / "run_00000007.csv")
        write_trace(r, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert rows[1][0] == "0.0"
        assert {rec[0] for rec in rows[1:5]} == {"0.0"}   # one row per vehicle
        assert rows[5][0] == "0.25"                        # t advances in seconds
        first = rows[1]
        assert first[5] == "enter"
        self_entries = dict(kv.split("=") for kv in first[7].split(";"))
        assert first[1] in self_entries                    # own true weight present


class TestReports:
    def test_summarize_reproduces_campaign_report(self, tmp_path):
        cfg = parse_config(SMALL)
        report, errors = run_campaign(cfg, str(tmp_path), traces=True, jobs=1)
        assert errors == []
        again = summarize(str(tmp_path / "traces"))
        assert again == report

    def test_jobs_do_not_change_results(self, tmp_path):
        cfg = parse_config(SMALL)
        rep1, _ = run_campaign(cfg, str(tmp_path / "a"), traces=True, jobs=1)
        rep2, _ = run_campaign(cfg, str(tmp_path / "b"), traces=True, jobs=3)
        assert rep1 == rep2
        csv_a = (tmp_path / "a" / "summary.csv").read_bytes()
        csv_b = (tmp_path / "b" / "summary.csv").read_bytes()
        assert csv_a == csv_b
        trace = os.path.join("traces", "n4", "run_00000044.csv")
        assert (tmp_path / "a" / trace).read_bytes() == (tmp_path / "b" / trace).read_bytes()

    def test_summary_files_mirror_each_other(self, tmp_path):
        report, _ = run_campaign(parse_config(SMALL), str(tmp_path), jobs=1)
        with open(tmp_path / "summary.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == SUMMARY_COLUMNS
        assert len(rows) == 1 + len(report.rows)
        doc = json.loads((tmp_path / "summary.json").read_text())
        assert [r["n_vehicles"] for r in doc["rows"]] == [2, 4]
        assert set(doc["rows"][0]) == set(SUMMARY_COLUMNS)
        buckets = doc["aggressiveness_buckets"]
        assert len(buckets["min_distance_m"]) == 6
        assert len(buckets["mission_time_s"]) == 6
        lows = [b["w_lo"] for b in buckets["min_distance_m"]]
        assert lows == pytest.approx([0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
        total = sum(b["count"] for b in buckets["min_distance_m"])
        assert total == 6  # every finite-distance run lands in one bucket

    def test_malformed_trace_named_and_counted(self, tmp_path, capsys):
        run_campaign(parse_config("campaign = 2 x 2\n"), str(tmp_path),
                     traces=True, jobs=1)
        bad = tmp_path / "traces" / "n2" / "run_99999999.csv"
        bad.write_text("not,a,trace\n1,2,3\n")
        (tmp_path / "traces" / "n2" / "notes.txt").write_text("ignored\n")
        report = summarize(str(tmp_path / "traces"))
        assert report.warnings == 1
        assert report.rows[0].runs == 2
        assert "run_99999999.csv" in capsys.readouterr().err

    def test_zero_run_rows_drop_out(self, tmp_path):
        report, errors = run_campaign(parse_config("campaign = 4 x 0\n"),
                                      str(tmp_path), jobs=1)
        assert errors == []
        assert report.rows == ()


class TestMain:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "roundabout-sim" in capsys.readouterr().out

    def test_end_to_end(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text("campaign = 2 x 2\n[sim]\nmax_steps = 120\n")
        code = main(["--config", str(cfg), "--out", str(tmp_path / "res"),
                     "--traces", "--jobs", "1", "--seed", "5"])
        assert code == 0
        assert (tmp_path / "res" / "summary.csv").exists()
        assert (tmp_path / "res" / "summary.json").exists()
        assert (tmp_path / "res" / "traces" / "n2" / "run_00000005.csv").exists()
        assert "n=2: 2 runs" in capsys.readouterr().out

    def test_bad_config_is_reported(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[cost]\nlambda = 1.5\n")
        assert main(["--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
        assert "lam must be in (0, 1)" in capsys.readouterr().err
