"""Deterministic controller logic: sensor debouncing, the entry-barrier
state machine, 16x2 LCD rendering, and change-driven telemetry emission.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from . import protocol
from .core import (
    BarrierMotion,
    BarrierState,
    LotConfig,
    LotSnapshot,
    OverrideMode,
    SlotStatus,
    available_count,
)


class ArityMismatch(Exception):
    pass


class UnsupportedLayout(Exception):
    pass


# ---------------------------------------------------------------------------
# Debounce

@dataclass(frozen=True)
class DebounceState:
    """Consecutive-sample filter for one slot's raw IR bit."""
    confirmed: SlotStatus = SlotStatus.VACANT
    candidate_bit: int = 0
    run_length: int = 0


def debounce_update(
    state: DebounceState, raw: int, k: int
) -> tuple[DebounceState, SlotStatus | None]:
    """Feed one raw sample; returns the new state and the confirmed status
    if this sample flipped it.

    The confirmed status flips only after k consecutive identical raw bits
    that disagree with it. Out-of-service slots ignore raw bits entirely.
    """
    if state.confirmed is SlotStatus.OUT_OF_SERVICE:
        return state, None

    confirmed_bit = 1 if state.confirmed is SlotStatus.OCCUPIED else 0
    if raw == confirmed_bit:
        return replace(state, candidate_bit=raw, run_length=0), None

    if raw == state.candidate_bit:
        run = state.run_length + 1
    else:
        run = 1
    if run >= k:
        new_status = SlotStatus.OCCUPIED if raw else SlotStatus.VACANT
        return DebounceState(confirmed=new_status, candidate_bit=raw, run_length=0), new_status
    return DebounceState(state.confirmed, raw, run), None


# ---------------------------------------------------------------------------
# LCD

LCD_COLS = 16
LCD_SLOTS = 4

_STATUS_CHAR = {
    SlotStatus.OCCUPIED: "F",
    SlotStatus.VACANT: "E",
    SlotStatus.OUT_OF_SERVICE: "S",
}


@dataclass(frozen=True)
class LcdFrame:
    line1: str
    line2: str

    def __post_init__(self) -> None:
        for line in (self.line1, self.line2):
            if len(line) != LCD_COLS:
                raise ValueError(f"LCD line must be {LCD_COLS} chars: {line!r}")
            if not all(0x20 <= ord(c) <= 0x7E for c in line):
                raise ValueError(f"non-printable character in LCD line: {line!r}")


def render_lcd(snapshot: LotSnapshot) -> LcdFrame:
    """Render the fixed 16x2 layout: one 4-char cell per slot on line 1,
    the availability counter (or LOT FULL) on line 2.
    """
    if snapshot.slot_count != LCD_SLOTS:
        raise UnsupportedLayout(
            f"LCD layout is fixed at {LCD_SLOTS} slots, got {snapshot.slot_count}")
    line1 = "".join(
        f"{i}:{_STATUS_CHAR[s]} " for i, s in enumerate(snapshot.statuses, start=1))
    full = all(s is SlotStatus.OCCUPIED for s in snapshot.statuses)
    line2 = "LOT FULL" if full else f"Available: {snapshot.available}"
    return LcdFrame(line1.ljust(LCD_COLS), line2.ljust(LCD_COLS))


# ---------------------------------------------------------------------------
# Barrier state machine

class BarrierEventKind(enum.Enum):
    ENTRY_DETECTED = "entry_detected"
    VEHICLE_PASSED = "vehicle_passed"
    TICK = "tick"
    OVERRIDE_SET = "override_set"


@dataclass(frozen=True)
class BarrierEvent:
    kind: BarrierEventKind
    mode: OverrideMode | None = None  # for OVERRIDE_SET


class ActuatorCommand(enum.Enum):
    RAISE = "raise"
    LOWER = "lower"
    DENY_SIGNAL = "deny"
    NONE = "none"


def barrier_step(
    state: BarrierState,
    event: BarrierEvent,
    available: int,
    now_ms: int,
    config: LotConfig,
) -> tuple[BarrierState, ActuatorCommand]:
    """Advance the barrier FSM by one event. Total: unexpected events are
    no-ops. Overrides pin the barrier open or closed regardless of
    availability.
    """
    if event.kind is BarrierEventKind.OVERRIDE_SET:
        assert event.mode is not None
        state = replace(state, override=event.mode)
        if event.mode is OverrideMode.FORCED_OPEN and state.motion in (
                BarrierMotion.CLOSED, BarrierMotion.CLOSING):
            return replace(state, motion=BarrierMotion.OPENING, since_ms=now_ms), ActuatorCommand.RAISE
        if event.mode is OverrideMode.FORCED_CLOSED and state.motion in (
                BarrierMotion.OPEN, BarrierMotion.OPENING):
            return replace(state, motion=BarrierMotion.CLOSING, since_ms=now_ms), ActuatorCommand.LOWER
        if (event.mode is OverrideMode.AUTO and available == 0
                and state.motion in (BarrierMotion.OPEN, BarrierMotion.OPENING)):
            # returning to auto over a full lot must not leave the gate up
            return replace(state, motion=BarrierMotion.CLOSING, since_ms=now_ms), ActuatorCommand.LOWER
        return state, ActuatorCommand.NONE

    if state.override is OverrideMode.FORCED_CLOSED:
        if event.kind is BarrierEventKind.ENTRY_DETECTED:
            return state, ActuatorCommand.DENY_SIGNAL
        if (event.kind is BarrierEventKind.TICK
                and state.motion is BarrierMotion.CLOSING
                and now_ms - state.since_ms >= config.barrier_close_ms):
            return replace(state, motion=BarrierMotion.CLOSED, since_ms=now_ms), ActuatorCommand.NONE
        return state, ActuatorCommand.NONE

    if state.override is OverrideMode.FORCED_OPEN:
        if (event.kind is BarrierEventKind.TICK
                and state.motion is BarrierMotion.OPENING
                and now_ms - state.since_ms >= config.barrier_open_ms):
            return replace(state, motion=BarrierMotion.OPEN, since_ms=now_ms), ActuatorCommand.NONE
        return state, ActuatorCommand.NONE

    # Auto mode
    motion = state.motion
    if motion is BarrierMotion.CLOSED:
        if event.kind is BarrierEventKind.ENTRY_DETECTED:
            if available > 0:
                return replace(state, motion=BarrierMotion.OPENING, since_ms=now_ms), ActuatorCommand.RAISE
            return state, ActuatorCommand.DENY_SIGNAL
    elif motion is BarrierMotion.OPENING:
        if (event.kind is BarrierEventKind.TICK
                and now_ms - state.since_ms >= config.barrier_open_ms):
            return replace(state, motion=BarrierMotion.OPEN, since_ms=now_ms), ActuatorCommand.NONE
    elif motion is BarrierMotion.OPEN:
        if event.kind is BarrierEventKind.VEHICLE_PASSED or (
                event.kind is BarrierEventKind.TICK
                and now_ms - state.since_ms >= config.barrier_hold_ms):
            return replace(state, motion=BarrierMotion.CLOSING, since_ms=now_ms), ActuatorCommand.LOWER
    elif motion is BarrierMotion.CLOSING:
        if (event.kind is BarrierEventKind.TICK
                and now_ms - state.since_ms >= config.barrier_close_ms):
            return replace(state, motion=BarrierMotion.CLOSED, since_ms=now_ms), ActuatorCommand.NONE
    return state, ActuatorCommand.NONE


# ---------------------------------------------------------------------------
# Controller

@dataclass
class TickResult:
    snapshot: LotSnapshot | None
    lcd: LcdFrame | None
    frames: list[bytes]
    actuators: list[ActuatorCommand]
    changes: list[tuple[int, SlotStatus]]  # (1-based slot, new confirmed status)


class Controller:
    """The lot's firmware brain, advanced one sample tick at a time.

    State changes only through tick() and handle_frame(), so two
    controllers fed identical inputs produce identical outputs.
    """

    def __init__(self, config: LotConfig):
        self.config = config
        self.debounce = [DebounceState() for _ in range(config.slot_count)]
        self.barrier = BarrierState()
        self.seq = 0
        self._booted = False
        self._last_emitted: LotSnapshot | None = None
        self._last_frame_ms = 0

    def _statuses(self) -> tuple[SlotStatus, ...]:
        return tuple(d.confirmed for d in self.debounce)

    def _snapshot(self, now_ms: int) -> LotSnapshot:
        statuses = self._statuses()
        return LotSnapshot(
            lot_id=self.config.lot_id,
            tick_ms=now_ms,
            seq=self.seq,
            statuses=statuses,
            available=available_count(statuses),
            barrier=self.barrier,
        )

    def tick(
        self,
        raw_bits: list[int],
        now_ms: int,
        entry_detected: bool = False,
        vehicle_passed: bool = False,
    ) -> TickResult:
        cfg = self.config
        if len(raw_bits) != cfg.slot_count:
            raise ArityMismatch(
                f"expected {cfg.slot_count} raw bits, got {len(raw_bits)}")

        changes: list[tuple[int, SlotStatus]] = []
        for i, raw in enumerate(raw_bits):
            self.debounce[i], changed = debounce_update(self.debounce[i], raw, cfg.debounce_k)
            if changed is not None:
                changes.append((i + 1, changed))

        available = available_count(self._statuses())
        actuators: list[ActuatorCommand] = []
        events = []
        if vehicle_passed:
            events.append(BarrierEvent(BarrierEventKind.VEHICLE_PASSED))
        if entry_detected:
            events.append(BarrierEvent(BarrierEventKind.ENTRY_DETECTED))
        events.append(BarrierEvent(BarrierEventKind.TICK))
        for ev in events:
            self.barrier, cmd = barrier_step(self.barrier, ev, available, now_ms, cfg)
            if cmd is not ActuatorCommand.NONE:
                actuators.append(cmd)

        return self._emit(now_ms, changes, actuators)

    def _emit(
        self,
        now_ms: int,
        changes: list[tuple[int, SlotStatus]],
        actuators: list[ActuatorCommand],
        extra_frames: list[bytes] | None = None,
    ) -> TickResult:
        prev = self._last_emitted
        current = self._snapshot(now_ms)
        changed = (
            not self._booted
            or prev.statuses != current.statuses
            or prev.available != current.available
            or prev.barrier != current.barrier
        )

        frames = list(extra_frames or [])
        snapshot = None
        lcd = None
        if changed:
            if self._booted:
                self.seq = (self.seq + 1) & 0xFFFF
                current = self._snapshot(now_ms)
            self._booted = True
            self._last_emitted = current
            self._last_frame_ms = now_ms
            snapshot = current
            if self.config.slot_count == LCD_SLOTS:
                lcd = render_lcd(current)
            frames.append(protocol.encode_telemetry(current))
        elif now_ms - self._last_frame_ms >= self.config.heartbeat_ms:
            self._last_frame_ms = now_ms
            frames.append(protocol.encode_heartbeat(self.config.lot_id, self.seq, now_ms))

        return TickResult(snapshot, lcd, frames, actuators, changes)

    def handle_frame(self, data: bytes, now_ms: int) -> TickResult:
        """Apply a hub command frame; returns the ack plus any state-change
        emission it provoked.
        """
        frame, _ = protocol.decode_frame(data)
        if frame.msg_type != protocol.MSG_COMMAND:
            raise protocol.UnknownType(f"controller cannot handle msg_type {frame.msg_type}")
        assert isinstance(frame.payload, protocol.CommandPayload)
        cmd = frame.payload
        actuators: list[ActuatorCommand] = []
        changes: list[tuple[int, SlotStatus]] = []

        if cmd.command == protocol.CMD_BARRIER_OVERRIDE:
            mode = {0: OverrideMode.AUTO,
                    1: OverrideMode.FORCED_OPEN,
                    2: OverrideMode.FORCED_CLOSED}[cmd.arg1]
            available = available_count(self._statuses())
            self.barrier, act = barrier_step(
                self.barrier, BarrierEvent(BarrierEventKind.OVERRIDE_SET, mode),
                available, now_ms, self.config)
            if act is not ActuatorCommand.NONE:
                actuators.append(act)
        else:  # CMD_SLOT_SERVICE
            idx = cmd.arg1
            if idx > self.config.slot_count:
                raise protocol.InvalidArgument(
                    f"slot {idx} out of range for {self.config.slot_count}-slot lot")
            if cmd.arg2 == 1:
                self.debounce[idx - 1] = DebounceState(confirmed=SlotStatus.OUT_OF_SERVICE)
                changes.append((idx, SlotStatus.OUT_OF_SERVICE))
            else:
                # restored slots re-confirm occupancy through the debounce filter
                self.debounce[idx - 1] = DebounceState(confirmed=SlotStatus.VACANT)
                changes.append((idx, SlotStatus.VACANT))

        ack = protocol.encode_command_ack(self.config.lot_id, frame.seq, now_ms)
        return self._emit(now_ms, changes, actuators, extra_frames=[ack])
