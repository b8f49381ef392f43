"""Central hub: ingests telemetry frames, keeps per-lot views, persists an
append-only JSON Lines event log, relays operator commands, and fans
records out to live subscribers.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import IO, Iterable

from . import protocol
from .core import (
    BarrierMotion,
    BarrierState,
    LotConfig,
    OverrideMode,
    SlotStatus,
    available_count,
    status_label,
)

DEFAULT_SEQ_WINDOW = 1024
DEFAULT_SUBSCRIBER_BUFFER = 1024
DEFAULT_HEARTBEAT_MS = 5000
HEARTBEAT_TIMEOUT_FACTOR = 3


class UnknownLot(Exception):
    pass


class GapDetected(Exception):
    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class CorruptRecord(Exception):
    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


_STATUS_FROM_LABEL = {s.value: s for s in SlotStatus}
_MOTION_FROM_LABEL = {m.value: m for m in BarrierMotion}
_OVERRIDE_FROM_LABEL = {o.value: o for o in OverrideMode}


@dataclass(frozen=True)
class LotEventRecord:
    record_seq: int
    received_at_ms: int
    lot_id: int
    kind: str
    slot: int | None = None
    old: object = None
    new: object = None
    source_frame_seq: int | None = None
    payload: dict | None = None

    def to_dict(self) -> dict:
        doc: dict = {
            "record_seq": self.record_seq,
            "received_at_ms": self.received_at_ms,
            "lot_id": self.lot_id,
            "kind": self.kind,
        }
        if self.slot is not None:
            doc["slot"] = self.slot
        if self.old is not None:
            doc["from"] = self.old
        if self.new is not None:
            doc["to"] = self.new
        if self.source_frame_seq is not None:
            doc["source_frame_seq"] = self.source_frame_seq
        if self.payload is not None:
            doc["payload"] = self.payload
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "LotEventRecord":
        return cls(
            record_seq=int(doc["record_seq"]),
            received_at_ms=int(doc["received_at_ms"]),
            lot_id=int(doc["lot_id"]),
            kind=str(doc["kind"]),
            slot=doc.get("slot"),
            old=doc.get("from"),
            new=doc.get("to"),
            source_frame_seq=doc.get("source_frame_seq"),
            payload=doc.get("payload"),
        )


@dataclass
class LotView:
    lot_id: int
    slot_count: int
    statuses: tuple[SlotStatus, ...]
    available: int
    barrier: BarrierState
    seq: int = 0
    tick_ms: int = 0
    updated_at_ms: int = 0
    last_seen_ms: int | None = None

    def online(self, now_ms: int, heartbeat_ms: int = DEFAULT_HEARTBEAT_MS) -> bool:
        if self.last_seen_ms is None:
            return False
        return now_ms - self.last_seen_ms <= HEARTBEAT_TIMEOUT_FACTOR * heartbeat_ms

    def state_fields(self) -> dict:
        """The event-sourced fields: everything replay must reproduce.

        Liveness (last_seen/online) is a transport side channel and is
        deliberately not part of the replayable state.
        """
        return {
            "lot_id": self.lot_id,
            "slot_count": self.slot_count,
            "statuses": tuple(self.statuses),
            "available": self.available,
            "barrier": (self.barrier.motion.value, self.barrier.override.value),
            "seq": self.seq,
            "tick_ms": self.tick_ms,
            "updated_at_ms": self.updated_at_ms,
        }

    def to_api_dict(self, now_ms: int, heartbeat_ms: int = DEFAULT_HEARTBEAT_MS) -> dict:
        return {
            "lot_id": self.lot_id,
            "seq": self.seq,
            "tick_ms": self.tick_ms,
            "slots": [{"index": i + 1, "status": status_label(s)}
                      for i, s in enumerate(self.statuses)],
            "available": self.available,
            "barrier": {"state": self.barrier.motion.value,
                        "override": self.barrier.override.value},
            "online": self.online(now_ms, heartbeat_ms),
            "updated_at_ms": self.updated_at_ms,
        }


def initial_view(lot_id: int, slot_count: int) -> LotView:
    return LotView(
        lot_id=lot_id,
        slot_count=slot_count,
        statuses=tuple([SlotStatus.VACANT] * slot_count),
        available=slot_count,
        barrier=BarrierState(),
    )


@dataclass
class IngestResult:
    status: str  # "accepted" | "duplicate" | "stale" | "error"
    records: list[LotEventRecord] = field(default_factory=list)
    error: str | None = None


class Subscription:
    """Bounded live feed; overflowing readers get cut off, never the writer."""

    def __init__(self, lot_id: int, buffer: int):
        self.lot_id = lot_id
        self._queue: queue.Queue[LotEventRecord | None] = queue.Queue(maxsize=buffer)
        self.overflowed = False
        self.closed = False

    def _publish(self, record: LotEventRecord) -> bool:
        try:
            self._queue.put_nowait(record)
            return True
        except queue.Full:
            self.overflowed = True
            self.closed = True
            return False

    def get(self, timeout: float | None = None) -> LotEventRecord | None:
        """Next record, or None on timeout/closed feed."""
        if self.closed and self._queue.empty():
            return None
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        self.closed = True
        try:
            self._queue.put_nowait(None)
        except queue.Full:
            pass


@dataclass
class _LotState:
    config_slot_count: int
    view: LotView
    last_frame_seq: int | None = None
    records: list[LotEventRecord] = field(default_factory=list)
    next_record_seq: int = 1
    command_seq: int = 0
    outbound: list[bytes] = field(default_factory=list)
    subscribers: list[Subscription] = field(default_factory=list)
    offline_reported: bool = False


class Hub:
    def __init__(self, log_path: str | None = None,
                 heartbeat_ms: int = DEFAULT_HEARTBEAT_MS,
                 seq_window: int = DEFAULT_SEQ_WINDOW,
                 subscriber_buffer: int = DEFAULT_SUBSCRIBER_BUFFER,
                 sim_injector=None):
        self._lots: dict[int, _LotState] = {}
        self._lock = threading.RLock()
        self.heartbeat_ms = heartbeat_ms
        self.seq_window = seq_window
        self.subscriber_buffer = subscriber_buffer
        self.sim_injector = sim_injector
        self._log: IO[str] | None = open(log_path, "a", encoding="utf-8") if log_path else None
        self._manual_now: int | None = None
        self.decode_errors = 0

    # -- clock ----------------------------------------------------------

    def set_clock_ms(self, now_ms: int) -> None:
        """Pin the hub clock (embedded-sim runs drive it with sim time)."""
        self._manual_now = now_ms

    def now_ms(self) -> int:
        if self._manual_now is not None:
            return self._manual_now
        return int(time.time() * 1000)

    # -- lot registry ----------------------------------------------------

    def register_lot(self, config: LotConfig) -> None:
        with self._lock:
            if config.lot_id not in self._lots:
                self._lots[config.lot_id] = _LotState(
                    config_slot_count=config.slot_count,
                    view=initial_view(config.lot_id, config.slot_count),
                )

    def lot_ids(self) -> list[int]:
        with self._lock:
            return sorted(self._lots)

    def _lot(self, lot_id: int) -> _LotState:
        lot = self._lots.get(lot_id)
        if lot is None:
            raise UnknownLot(f"lot {lot_id} is not known to this hub")
        return lot

    # -- ingestion --------------------------------------------------------

    def ingest_frame(self, data: bytes) -> IngestResult:
        try:
            frame, _ = protocol.decode_frame(data)
        except protocol.ProtocolError as exc:
            self.decode_errors += 1
            return IngestResult("error", error=type(exc).__name__)

        now = self.now_ms()
        with self._lock:
            if frame.msg_type == protocol.MSG_TELEMETRY:
                return self._ingest_telemetry(frame, now)
            if frame.msg_type == protocol.MSG_HEARTBEAT:
                lot = self._lots.get(frame.lot_id)
                if lot is None:
                    return IngestResult("error", error="UnknownLot")
                lot.view.last_seen_ms = now
                lot.offline_reported = False
                return IngestResult("accepted")
            if frame.msg_type == protocol.MSG_COMMAND_ACK:
                lot = self._lots.get(frame.lot_id)
                if lot is None:
                    return IngestResult("error", error="UnknownLot")
                lot.view.last_seen_ms = now
                rec = self._append(lot, "CommandAcked", now,
                                   source_frame_seq=frame.seq)
                return IngestResult("accepted", records=[rec])
            return IngestResult("error", error="UnknownType")

    def _ingest_telemetry(self, frame: protocol.Frame, now: int) -> IngestResult:
        assert isinstance(frame.payload, protocol.TelemetryPayload)
        lot = self._lots.get(frame.lot_id)
        if lot is None:
            lot = _LotState(
                config_slot_count=frame.payload.slot_count,
                view=initial_view(frame.lot_id, frame.payload.slot_count),
            )
            self._lots[frame.lot_id] = lot

        if frame.payload.slot_count != lot.view.slot_count:
            return IngestResult("error", error="SlotCountMismatch")

        last = lot.last_frame_seq
        if last is not None:
            delta = (frame.seq - last) & 0xFFFF
            if delta == 0:
                return IngestResult("duplicate")
            if delta > self.seq_window:
                return IngestResult("stale")

        new_statuses = frame.payload.statuses()
        new_barrier = BarrierState(frame.payload.barrier_motion, frame.payload.override)
        view = lot.view
        records: list[LotEventRecord] = []

        for i, (old, new) in enumerate(zip(view.statuses, new_statuses)):
            if old is not new:
                records.append(self._append(
                    lot, "SlotChanged", now, slot=i + 1,
                    old=status_label(old), new=status_label(new),
                    source_frame_seq=frame.seq))
        if (view.barrier.motion, view.barrier.override) != (new_barrier.motion, new_barrier.override):
            records.append(self._append(
                lot, "BarrierChanged", now,
                old={"state": view.barrier.motion.value,
                     "override": view.barrier.override.value},
                new={"state": new_barrier.motion.value,
                     "override": new_barrier.override.value},
                source_frame_seq=frame.seq))
        if view.available != frame.payload.available:
            records.append(self._append(
                lot, "AvailabilityChanged", now,
                old=view.available, new=frame.payload.available,
                source_frame_seq=frame.seq))

        lot.last_frame_seq = frame.seq
        view.last_seen_ms = now
        lot.offline_reported = False
        view.seq = frame.seq
        view.tick_ms = frame.tick_ms
        view.statuses = new_statuses
        view.available = frame.payload.available
        view.barrier = new_barrier
        if records:
            view.updated_at_ms = now
        return IngestResult("accepted", records=records)

    def _append(self, lot: _LotState, kind: str, now: int, *,
                slot: int | None = None, old: object = None, new: object = None,
                source_frame_seq: int | None = None,
                payload: dict | None = None) -> LotEventRecord:
        rec = LotEventRecord(
            record_seq=lot.next_record_seq,
            received_at_ms=now,
            lot_id=lot.view.lot_id,
            kind=kind,
            slot=slot,
            old=old,
            new=new,
            source_frame_seq=source_frame_seq,
            payload=payload,
        )
        lot.next_record_seq += 1
        lot.records.append(rec)
        if self._log is not None:
            self._log.write(rec.to_json() + "\n")
            self._log.flush()
        lot.subscribers = [s for s in lot.subscribers if not s.closed]
        for sub in lot.subscribers:
            sub._publish(rec)
        return rec

    def append_sim_record(self, lot_id: int, kind: str, *,
                          slot: int | None = None, payload: dict | None = None) -> LotEventRecord:
        """Simulation outcome records (parked/denied/balked) share the lot log."""
        with self._lock:
            return self._append(self._lot(lot_id), kind, self.now_ms(),
                                slot=slot, payload=payload)

    def append_run_info(self, lot_id: int, *, slot_count: int, horizon_ms: int) -> LotEventRecord:
        with self._lock:
            return self._append(self._lot(lot_id), "SimRunInfo", self.now_ms(),
                                payload={"slot_count": slot_count, "horizon_ms": horizon_ms})

    # -- reads ------------------------------------------------------------

    def snapshot(self, lot_id: int) -> LotView:
        with self._lock:
            lot = self._lot(lot_id)
            view = lot.view
            return LotView(
                lot_id=view.lot_id, slot_count=view.slot_count,
                statuses=tuple(view.statuses), available=view.available,
                barrier=view.barrier, seq=view.seq, tick_ms=view.tick_ms,
                updated_at_ms=view.updated_at_ms, last_seen_ms=view.last_seen_ms,
            )

    def history(self, lot_id: int, from_seq: int = 0, limit: int = 1000) -> list[LotEventRecord]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        with self._lock:
            lot = self._lot(lot_id)
            # record_seq is 1-based and gapless, so slicing beats scanning
            start = max(from_seq, 0)
            return lot.records[start : start + limit]

    # -- liveness ---------------------------------------------------------

    def check_liveness(self, now_ms: int | None = None) -> list[LotEventRecord]:
        now = self.now_ms() if now_ms is None else now_ms
        out = []
        with self._lock:
            for lot in self._lots.values():
                if lot.view.last_seen_ms is None or lot.offline_reported:
                    continue
                if not lot.view.online(now, self.heartbeat_ms):
                    lot.offline_reported = True
                    out.append(self._append(
                        lot, "HeartbeatMissed", now,
                        payload={"last_seen_ms": lot.view.last_seen_ms}))
        return out

    # -- commands ---------------------------------------------------------

    def issue_command(self, lot_id: int, command: protocol.CommandPayload) -> int:
        command.validate()
        with self._lock:
            lot = self._lot(lot_id)
            if (command.command == protocol.CMD_SLOT_SERVICE
                    and command.arg1 > lot.view.slot_count):
                raise protocol.InvalidArgument(
                    f"slot {command.arg1} out of range for lot {lot_id}")
            lot.command_seq = (lot.command_seq + 1) & 0xFFFF
            cmd_id = lot.command_seq
            frame = protocol.encode_command(lot_id, cmd_id, command,
                                            tick_ms=self.now_ms())
            lot.outbound.append(frame)
            self._append(lot, "CommandIssued", self.now_ms(),
                         source_frame_seq=cmd_id,
                         payload=command_payload_dict(command))
            return cmd_id

    def poll_commands(self, lot_id: int) -> list[bytes]:
        with self._lock:
            lot = self._lot(lot_id)
            out, lot.outbound = lot.outbound, []
            return out

    # -- subscriptions ------------------------------------------------------

    def subscribe(self, lot_id: int) -> Subscription:
        with self._lock:
            lot = self._lot(lot_id)
            sub = Subscription(lot_id, self.subscriber_buffer)
            lot.subscribers.append(sub)
            return sub

    def unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            lot = self._lots.get(sub.lot_id)
            sub.close()
            if lot is not None and sub in lot.subscribers:
                lot.subscribers.remove(sub)

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None


def command_payload_dict(command: protocol.CommandPayload) -> dict:
    if command.command == protocol.CMD_BARRIER_OVERRIDE:
        mode = {0: "auto", 1: "forced_open", 2: "forced_closed"}[command.arg1]
        return {"type": "barrier_override", "mode": mode}
    return {"type": "slot_service", "slot": command.arg1,
            "out_of_service": command.arg2 == 1}


# ---------------------------------------------------------------------------
# Replay

def replay_records(records: Iterable[tuple[int | None, LotEventRecord]],
                   configs: dict[int, int] | None = None) -> dict[int, LotView]:
    """Fold an ordered record stream back into per-lot views.

    `records` yields (line_no, record); line numbers feed error messages.
    `configs` maps lot_id -> slot_count for lots that might have no
    slot-bearing records.
    """
    views: dict[int, LotView] = {}
    expected_seq: dict[int, int] = {}

    for line_no, rec in records:
        view = views.get(rec.lot_id)
        if view is None:
            slot_count = (configs or {}).get(rec.lot_id, 0)
            if rec.kind == "SimRunInfo" and rec.payload:
                slot_count = int(rec.payload.get("slot_count", slot_count))
            if slot_count == 0:
                slot_count = 4
            view = initial_view(rec.lot_id, slot_count)
            views[rec.lot_id] = view
            expected_seq[rec.lot_id] = 1

        if rec.record_seq != expected_seq[rec.lot_id]:
            raise GapDetected(
                f"lot {rec.lot_id}: expected record_seq {expected_seq[rec.lot_id]}, "
                f"got {rec.record_seq}", line_no)
        expected_seq[rec.lot_id] += 1

        try:
            _apply_record(view, rec)
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise CorruptRecord(f"cannot apply record: {exc}", line_no) from exc

    return views


def _apply_record(view: LotView, rec: LotEventRecord) -> None:
    if rec.kind == "SlotChanged":
        statuses = list(view.statuses)
        if not 1 <= rec.slot <= len(statuses):
            raise ValueError(f"slot {rec.slot} out of range")
        statuses[rec.slot - 1] = _STATUS_FROM_LABEL[rec.new]
        view.statuses = tuple(statuses)
        view.available = available_count(view.statuses)
    elif rec.kind == "BarrierChanged":
        view.barrier = BarrierState(
            _MOTION_FROM_LABEL[rec.new["state"]],
            _OVERRIDE_FROM_LABEL[rec.new["override"]])
    elif rec.kind == "AvailabilityChanged":
        if int(rec.new) != available_count(view.statuses):
            raise ValueError(
                f"availability {rec.new} inconsistent with slot statuses")
        view.available = int(rec.new)
    elif rec.kind in ("HeartbeatMissed", "CommandIssued", "CommandAcked",
                      "SimRunInfo", "VehicleParked", "EntryDenied", "EntryBalked"):
        pass
    else:
        raise ValueError(f"unknown record kind {rec.kind!r}")

    if rec.kind in ("SlotChanged", "BarrierChanged", "AvailabilityChanged"):
        if rec.source_frame_seq is not None:
            view.seq = rec.source_frame_seq
        view.tick_ms = rec.received_at_ms
        view.updated_at_ms = rec.received_at_ms
        view.last_seen_ms = rec.received_at_ms


def iter_log_lines(lines: Iterable[str]):
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
            rec = LotEventRecord.from_dict(doc)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptRecord(f"bad record: {exc}", line_no) from exc
        yield line_no, rec


def replay_log_file(path: str, configs: dict[int, int] | None = None) -> dict[int, LotView]:
    with open(path, encoding="utf-8") as fh:
        return replay_records(iter_log_lines(fh), configs)
