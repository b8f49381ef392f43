"""End-to-end checks of the parkctl commands via click's test runner."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from smartlot.cli import main

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures" / "frames"


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args):
    res = runner.invoke(main, args)
    assert res.exit_code == 0, res.stderr or res.output
    return json.loads(res.stdout)


class TestSim:
    def test_quiet_lot_stays_empty(self, runner):
        body = run_ok(runner, ["sim", "--seed", "7", "--horizon", "30"])
        assert body["report"]["parked_count"] == 0
        assert body["final_view"]["available"] == 4
        assert body["report"]["occupancy_rate"] == 0.0

    def test_traffic_parks_vehicles(self, runner, tmp_path):
        log = tmp_path / "run.jsonl"
        body = run_ok(runner, [
            "sim", "--seed", "42", "--arrival-rate", "0.05",
            "--mean-stay", "120", "--horizon", "600", "--log", str(log)])
        assert body["report"]["parked_count"] >= 1
        assert log.exists() and log.stat().st_size > 0

    def test_scenario_file(self, runner, tmp_path):
        scn = tmp_path / "s.json"
        scn.write_text(json.dumps({
            "seed": 1, "arrival_rate": 0.0, "mean_stay_s": 60,
            "horizon_ms": 60_000, "flicker_p": 0.0,
            "explicit_events": [{"at_ms": 1000, "stay_ms": 30_000},
                                {"at_ms": 2000, "stay_ms": 30_000}]}))
        body = run_ok(runner, ["sim", "--scenario", str(scn)])
        assert body["report"]["parked_count"] == 2

    def test_bad_config_exits_2(self, runner):
        res = runner.invoke(main, ["sim", "--slots", "0"])
        assert res.exit_code == 2

    def test_pretty_is_indented(self, runner):
        res = runner.invoke(main, ["sim", "--horizon", "5", "--pretty"])
        assert res.exit_code == 0
        assert res.stdout.startswith("{\n")


class TestReplay:
    def test_replay_matches_sim_final_view(self, runner, tmp_path):
        # The log alone must be enough to rebuild the closing state.
        log = tmp_path / "run.jsonl"
        sim = run_ok(runner, [
            "sim", "--seed", "1337", "--arrival-rate", "0.05",
            "--mean-stay", "180", "--horizon", "900", "--log", str(log)])
        replay = run_ok(runner, ["replay", str(log)])
        want = dict(sim["final_view"])
        # Liveness depends on when you ask, not on what happened.
        want.pop("online")
        replay.pop("online")
        assert replay == want

    def test_empty_log_yields_default_view(self, runner, tmp_path):
        log = tmp_path / "empty.jsonl"
        log.write_text("")
        view = run_ok(runner, ["replay", str(log), "--slots", "6"])
        assert view["available"] == 6
        assert [s["status"] for s in view["slots"]] == ["Empty"] * 6

    def test_corrupt_line_exits_1_with_line_no(self, runner, tmp_path):
        log = tmp_path / "bad.jsonl"
        log.write_text('{"not": "a record"}\n')
        res = runner.invoke(main, ["replay", str(log)])
        assert res.exit_code == 1
        assert "line 1" in res.stderr

    def test_gap_exits_1(self, runner, tmp_path):
        good = tmp_path / "good.jsonl"
        runner.invoke(main, [
            "sim", "--seed", "3", "--arrival-rate", "0.05",
            "--mean-stay", "60", "--horizon", "600", "--log", str(good)])
        lines = good.read_text().splitlines()
        assert len(lines) > 4
        holey = tmp_path / "holey.jsonl"
        holey.write_text("\n".join(lines[:2] + lines[3:]) + "\n")
        res = runner.invoke(main, ["replay", str(holey)])
        assert res.exit_code == 1
        assert "GapDetected" in res.stderr


class TestReport:
    def test_report_from_log_matches_sim_report(self, runner, tmp_path):
        log = tmp_path / "run.jsonl"
        sim = run_ok(runner, [
            "sim", "--seed", "42", "--arrival-rate", "0.05",
            "--mean-stay", "120", "--horizon", "900", "--log", str(log)])
        report = run_ok(runner, ["report", str(log)])
        assert report == sim["report"]


class TestDecode:
    def test_decodes_fixture_frame(self, runner):
        for sidecar in sorted(FIXTURES.glob("*.json")):
            meta = json.loads(sidecar.read_text())
            body = run_ok(runner, ["decode", meta["hex"]])
            assert body == meta["frame"]

    def test_not_hex_exits_2(self, runner):
        res = runner.invoke(main, ["decode", "ZZ"])
        assert res.exit_code == 2

    def test_bad_crc_exits_1(self, runner):
        meta = json.loads((FIXTURES / "heartbeat.json").read_text())
        raw = bytearray(bytes.fromhex(meta["hex"]))
        raw[-1] ^= 0x01
        res = runner.invoke(main, ["decode", raw.hex()])
        assert res.exit_code == 1
        assert json.loads(res.stdout) == {"error": "CrcMismatch"}
