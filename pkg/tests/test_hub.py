import json
import threading

import pytest

from smartlot import protocol
from smartlot.core import BarrierState, LotConfig, SlotStatus
from smartlot.hub import (
    CorruptRecord,
    GapDetected,
    Hub,
    LotEventRecord,
    UnknownLot,
    initial_view,
    iter_log_lines,
    replay_log_file,
    replay_records,
)
from smartlot.sim import Scenario, run_simulation

from .conftest import O, S, V, make_snapshot


def telemetry(statuses, seq, tick=None, lot_id=1, barrier=None):
    return protocol.encode_telemetry(make_snapshot(
        statuses, seq=seq, tick_ms=tick if tick is not None else seq * 100,
        lot_id=lot_id, barrier=barrier))


@pytest.fixture
def hub(config):
    h = Hub()
    h.register_lot(config)
    h.set_clock_ms(0)
    return h


class TestIngest:
    def test_first_frame_accepted(self, hub):
        result = hub.ingest_frame(telemetry([V] * 4, seq=0))
        assert result.status == "accepted"
        view = hub.snapshot(1)
        assert view.available == 4
        assert view.online(hub.now_ms())

    def test_duplicate_leaves_state_unchanged(self, hub):
        frame = telemetry([O, V, V, V], seq=1)
        first = hub.ingest_frame(frame)
        assert first.status == "accepted"
        log_len = len(hub.history(1))
        second = hub.ingest_frame(frame)
        assert second.status == "duplicate"
        assert len(hub.history(1)) == log_len

    def test_stale_rejected(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=100))
        result = hub.ingest_frame(telemetry([O, V, V, V], seq=99))
        assert result.status == "stale"
        assert hub.snapshot(1).available == 4

    def test_window_wraparound(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0xFFF0))
        result = hub.ingest_frame(telemetry([O, V, V, V], seq=5))  # wraps, delta 21
        assert result.status == "accepted"
        assert hub.snapshot(1).seq == 5

    def test_beyond_window_is_stale(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        assert hub.ingest_frame(telemetry([V] * 4, seq=1025)).status == "stale"
        assert hub.ingest_frame(telemetry([O, V, V, V], seq=1024)).status == "accepted"

    def test_corrupt_frame_is_error(self, hub):
        frame = bytearray(telemetry([V] * 4, seq=1))
        frame[-1] ^= 0x01
        result = hub.ingest_frame(bytes(frame))
        assert result.status == "error"
        assert result.error == "CrcMismatch"
        assert hub.snapshot(1).seq == 0
        assert hub.decode_errors == 1

    def test_diff_produces_one_record_per_fact(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        result = hub.ingest_frame(telemetry([O, V, O, V], seq=1))
        kinds = [r.kind for r in result.records]
        assert kinds == ["SlotChanged", "SlotChanged", "AvailabilityChanged"]
        slots = [r.slot for r in result.records if r.kind == "SlotChanged"]
        assert slots == [1, 3]
        avail = result.records[-1]
        assert (avail.old, avail.new) == (4, 2)

    def test_record_seq_gapless(self, hub):
        for seq, statuses in enumerate(([V] * 4, [O, V, V, V], [O, O, V, V])):
            hub.ingest_frame(telemetry(statuses, seq=seq))
        seqs = [r.record_seq for r in hub.history(1)]
        assert seqs == list(range(1, len(seqs) + 1))

    def test_idempotent_prefix_redelivery(self, config):
        res = run_simulation(config, Scenario(
            seed=5, arrival_rate=0.2, mean_stay_s=120, horizon_ms=200_000))
        frames = res.frames

        def deliver(duplicated):
            hub = Hub()
            hub.register_lot(config)
            hub.set_clock_ms(0)
            for f in frames:
                hub.ingest_frame(f)
                if duplicated:
                    hub.ingest_frame(f)
            return hub.snapshot(1).state_fields(), len(hub.history(1, limit=10**6))

        assert deliver(False) == deliver(True)

    def test_unknown_lot_heartbeat(self, hub):
        result = hub.ingest_frame(protocol.encode_heartbeat(42, 0, 0))
        assert result.status == "error"
        assert result.error == "UnknownLot"

    def test_auto_registration_from_telemetry(self):
        hub = Hub()
        hub.set_clock_ms(0)
        assert hub.ingest_frame(telemetry([V, O], seq=0, lot_id=9)).status == "accepted"
        assert hub.snapshot(9).slot_count == 2


class TestReads:
    def test_snapshot_unknown_lot(self, hub):
        with pytest.raises(UnknownLot):
            hub.snapshot(77)

    def test_snapshot_is_a_copy(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        view = hub.snapshot(1)
        hub.ingest_frame(telemetry([O] * 4, seq=1))
        assert view.available == 4

    def test_history_pagination(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        hub.ingest_frame(telemetry([O, V, O, V], seq=1))  # 3 records
        page1 = hub.history(1, from_seq=0, limit=2)
        page2 = hub.history(1, from_seq=page1[-1].record_seq, limit=2)
        assert [r.record_seq for r in page1] == [1, 2]
        assert [r.record_seq for r in page2] == [3]
        assert hub.history(1, from_seq=3) == []

    def test_history_limit_validation(self, hub):
        with pytest.raises(ValueError):
            hub.history(1, limit=0)

    def test_reads_consistent_during_ingest(self, config):
        """Views are never torn: available always matches statuses."""
        hub = Hub()
        hub.register_lot(config)
        hub.set_clock_ms(0)
        stop = threading.Event()
        errors = []

        def reader():
            from smartlot.core import available_count
            while not stop.is_set():
                view = hub.snapshot(1)
                if view.available != available_count(view.statuses):
                    errors.append(view)

        threads = [threading.Thread(target=reader) for _ in range(4)]
        for t in threads:
            t.start()
        statuses = [V, V, V, V]
        for seq in range(500):
            statuses[seq % 4] = O if statuses[seq % 4] is V else V
            hub.ingest_frame(telemetry(statuses, seq=seq))
        stop.set()
        for t in threads:
            t.join()
        assert errors == []


class TestLiveness:
    def test_offline_after_silence(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        view = hub.snapshot(1)
        assert view.online(0)
        assert view.online(15_000)
        assert not view.online(15_001)

    def test_heartbeat_refreshes(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        hub.set_clock_ms(14_000)
        hub.ingest_frame(protocol.encode_heartbeat(1, 0, 14_000))
        view = hub.snapshot(1)
        assert view.online(20_000)
        assert view.seq == 0  # heartbeat does not move state

    def test_missed_heartbeat_recorded_once(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        assert hub.check_liveness(10_000) == []
        records = hub.check_liveness(16_000)
        assert [r.kind for r in records] == ["HeartbeatMissed"]
        assert hub.check_liveness(17_000) == []
        # a new frame re-arms the detector
        hub.set_clock_ms(20_000)
        hub.ingest_frame(protocol.encode_heartbeat(1, 0, 20_000))
        assert [r.kind for r in hub.check_liveness(40_000)] == ["HeartbeatMissed"]


class TestCommands:
    def test_issue_and_poll(self, hub):
        cmd_id = hub.issue_command(
            1, protocol.CommandPayload(protocol.CMD_BARRIER_OVERRIDE, 2, 0))
        frames = hub.poll_commands(1)
        assert len(frames) == 1
        frame, _ = protocol.decode_frame(frames[0])
        assert frame.msg_type == protocol.MSG_COMMAND
        assert frame.seq == cmd_id
        assert hub.poll_commands(1) == []
        issued = [r for r in hub.history(1) if r.kind == "CommandIssued"]
        assert issued[0].payload == {"type": "barrier_override", "mode": "forced_closed"}

    def test_ack_appends_record(self, hub):
        cmd_id = hub.issue_command(
            1, protocol.CommandPayload(protocol.CMD_SLOT_SERVICE, 2, 1))
        result = hub.ingest_frame(protocol.encode_command_ack(1, cmd_id, 500))
        assert result.status == "accepted"
        acked = [r for r in hub.history(1) if r.kind == "CommandAcked"]
        assert acked[0].source_frame_seq == cmd_id

    def test_unknown_lot(self, hub):
        with pytest.raises(UnknownLot):
            hub.issue_command(5, protocol.CommandPayload(protocol.CMD_BARRIER_OVERRIDE, 0, 0))

    def test_slot_out_of_range(self, hub):
        with pytest.raises(protocol.InvalidArgument):
            hub.issue_command(1, protocol.CommandPayload(protocol.CMD_SLOT_SERVICE, 9, 1))


class TestSubscriptions:
    def test_subscriber_sees_changes(self, hub):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        sub = hub.subscribe(1)
        hub.ingest_frame(telemetry([O, V, V, V], seq=1))
        rec = sub.get(timeout=1)
        assert rec.kind == "SlotChanged"
        assert rec.slot == 1

    def test_two_subscribers_identical_order(self, hub):
        sub1, sub2 = hub.subscribe(1), hub.subscribe(1)
        for seq, statuses in enumerate(([V] * 4, [O, V, V, V], [O, O, V, V])):
            hub.ingest_frame(telemetry(statuses, seq=seq))
        def drain(sub):
            out = []
            while (rec := sub.get(timeout=0.05)) is not None:
                out.append(rec.record_seq)
            return out
        seen1, seen2 = drain(sub1), drain(sub2)
        assert seen1 == seen2
        assert seen1 == sorted(seen1)

    def test_slow_subscriber_disconnected(self, config):
        hub = Hub(subscriber_buffer=16)
        hub.register_lot(config)
        hub.set_clock_ms(0)
        sub = hub.subscribe(1)
        statuses = [V, V, V, V]
        for seq in range(40):
            statuses[0] = O if statuses[0] is V else V
            hub.ingest_frame(telemetry(statuses, seq=seq))
        assert sub.overflowed
        assert sub.closed
        # ingestion never stalled: the hub kept accepting well past the buffer
        assert hub.snapshot(1).seq == 39


class TestReplay:
    def test_empty_log_is_initial_view(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text("")
        views = replay_log_file(str(path), configs={1: 4})
        assert views == {}

    def test_replay_equals_live(self, config, tmp_path):
        path = tmp_path / "log.jsonl"
        hub = Hub(log_path=str(path))
        res = run_simulation(config, Scenario(
            seed=2, arrival_rate=0.2, mean_stay_s=180, horizon_ms=300_000), hub=hub)
        hub.close()
        views = replay_log_file(str(path), configs={1: 4})
        assert views[1].state_fields() == hub.snapshot(1).state_fields()
        assert res.records  # the run actually produced history

    def test_gap_detected(self, hub, tmp_path):
        hub.ingest_frame(telemetry([V] * 4, seq=0))
        hub.ingest_frame(telemetry([O, V, O, V], seq=1))
        lines = [r.to_json() for r in hub.history(1)]
        del lines[1]
        path = tmp_path / "gap.jsonl"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(GapDetected) as exc_info:
            replay_log_file(str(path))
        assert exc_info.value.line_no == 2

    def test_corrupt_record(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"record_seq": 1, "received_at_ms": 0, "lot_id": 1, '
                        '"kind": "SlotChanged", "slot": 1, "from": "Empty", "to": "Fill"}\n'
                        '{"truncated...\n')
        with pytest.raises(CorruptRecord) as exc_info:
            list(iter_log_lines(path.read_text().splitlines()))
        assert exc_info.value.line_no == 2

    def test_availability_mismatch_is_corrupt(self):
        recs = [
            LotEventRecord(1, 0, 1, "AvailabilityChanged", old=4, new=2),
        ]
        with pytest.raises(CorruptRecord):
            replay_records(((i + 1, r) for i, r in enumerate(recs)), configs={1: 4})

    def test_unknown_kind_is_corrupt(self):
        recs = [LotEventRecord(1, 0, 1, "Mystery")]
        with pytest.raises(CorruptRecord):
            replay_records(((1, recs[0]),), configs={1: 4})


class TestRecordSerialization:
    def test_json_field_names(self):
        rec = LotEventRecord(3, 500, 1, "SlotChanged", slot=2,
                             old="Empty", new="Fill", source_frame_seq=7)
        doc = json.loads(rec.to_json())
        assert doc == {"record_seq": 3, "received_at_ms": 500, "lot_id": 1,
                       "kind": "SlotChanged", "slot": 2, "from": "Empty",
                       "to": "Fill", "source_frame_seq": 7}
        assert LotEventRecord.from_dict(doc) == rec
