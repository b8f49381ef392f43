"""Bit-exact binary framing for controller-to-hub telemetry and hub commands.

Frame layout (all multi-byte integers big-endian):

    offset  size  field
    0       1     magic 0xA5
    1       1     version 0x01
    2       1     msg_type (0x01 telemetry, 0x02 heartbeat,
                  0x03 command, 0x04 command ack)
    3       1     lot_id
    4       2     seq
    6       8     tick_ms
    14      var   payload (schema per msg_type)
    last 2  2     CRC-16/CCITT-FALSE over all preceding bytes

Telemetry payload: slot_count, occupancy bitmap (ceil(n/8) bytes,
LSB-first), out-of-service bitmap (same shape), barrier byte, available.
Heartbeat and command-ack payloads are empty; an ack echoes the command's
seq in the header seq field. Command payload: command, arg1, arg2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .core import (
    BarrierMotion,
    BarrierState,
    LotSnapshot,
    OverrideMode,
    SlotStatus,
    available_count,
)

MAGIC = 0xA5
VERSION = 0x01

MSG_TELEMETRY = 0x01
MSG_HEARTBEAT = 0x02
MSG_COMMAND = 0x03
MSG_COMMAND_ACK = 0x04

CMD_BARRIER_OVERRIDE = 0x01
CMD_SLOT_SERVICE = 0x02

MAX_SLOTS = 64

HEADER_LEN = 14
CRC_LEN = 2

_BARRIER_MOTION_CODE = {
    BarrierMotion.CLOSED: 0,
    BarrierMotion.OPENING: 1,
    BarrierMotion.OPEN: 2,
    BarrierMotion.CLOSING: 3,
}
_BARRIER_MOTION_FROM_CODE = {v: k for k, v in _BARRIER_MOTION_CODE.items()}

FLAG_FORCED_OPEN = 0x10
FLAG_FORCED_CLOSED = 0x20

_OVERRIDE_CODE = {
    OverrideMode.AUTO: 0,
    OverrideMode.FORCED_OPEN: 1,
    OverrideMode.FORCED_CLOSED: 2,
}
_OVERRIDE_FROM_CODE = {v: k for k, v in _OVERRIDE_CODE.items()}


class ProtocolError(Exception):
    pass


class BadMagic(ProtocolError):
    pass


class UnknownVersion(ProtocolError):
    pass


class UnknownType(ProtocolError):
    pass


class Truncated(ProtocolError):
    pass


class CrcMismatch(ProtocolError):
    pass


class InconsistentPayload(ProtocolError):
    pass


class CapacityExceeded(ProtocolError):
    pass


class InvalidArgument(ProtocolError):
    pass


def _build_crc_table() -> list[int]:
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
        table.append(crc & 0xFFFF)
    return table


_CRC_TABLE = _build_crc_table()


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection or xor-out."""
    crc = 0xFFFF
    for b in data:
        crc = ((crc << 8) & 0xFFFF) ^ _CRC_TABLE[(crc >> 8) ^ b]
    return crc


@dataclass(frozen=True)
class TelemetryPayload:
    slot_count: int
    occupied: tuple[bool, ...]
    out_of_service: tuple[bool, ...]
    barrier_motion: BarrierMotion
    override: OverrideMode
    available: int

    def statuses(self) -> tuple[SlotStatus, ...]:
        out = []
        for occ, oos in zip(self.occupied, self.out_of_service):
            if oos:
                out.append(SlotStatus.OUT_OF_SERVICE)
            elif occ:
                out.append(SlotStatus.OCCUPIED)
            else:
                out.append(SlotStatus.VACANT)
        return tuple(out)


@dataclass(frozen=True)
class CommandPayload:
    command: int
    arg1: int
    arg2: int

    def validate(self) -> None:
        if self.command == CMD_BARRIER_OVERRIDE:
            if self.arg1 not in (0, 1, 2) or self.arg2 != 0:
                raise InvalidArgument(f"bad barrier override args: {self.arg1}, {self.arg2}")
        elif self.command == CMD_SLOT_SERVICE:
            if not 1 <= self.arg1 <= MAX_SLOTS:
                raise InvalidArgument(f"slot index out of range: {self.arg1}")
            if self.arg2 not in (0, 1):
                raise InvalidArgument(f"bad slot-service arg2: {self.arg2}")
        else:
            raise InvalidArgument(f"unknown command: {self.command}")


@dataclass(frozen=True)
class Frame:
    msg_type: int
    lot_id: int
    seq: int
    tick_ms: int
    payload: TelemetryPayload | CommandPayload | None


def _pack_bitmap(bits: tuple[bool, ...]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, bit in enumerate(bits):
        if bit:
            out[i // 8] |= 1 << (i % 8)
    return bytes(out)


def _unpack_bitmap(raw: bytes, n: int) -> tuple[bool, ...]:
    bits = tuple(bool(raw[i // 8] >> (i % 8) & 1) for i in range(n))
    for i in range(n, len(raw) * 8):
        if raw[i // 8] >> (i % 8) & 1:
            raise InconsistentPayload("nonzero bitmap padding bits")
    return bits


def _frame_bytes(msg_type: int, lot_id: int, seq: int, tick_ms: int, payload: bytes) -> bytes:
    header = struct.pack(">BBBBHQ", MAGIC, VERSION, msg_type, lot_id, seq & 0xFFFF, tick_ms)
    body = header + payload
    return body + struct.pack(">H", crc16(body))


def telemetry_frame_len(slot_count: int) -> int:
    return HEADER_LEN + 3 + 2 * ((slot_count + 7) // 8) + CRC_LEN


def encode_telemetry(snapshot: LotSnapshot) -> bytes:
    n = snapshot.slot_count
    if n > MAX_SLOTS:
        raise CapacityExceeded(f"slot_count {n} exceeds {MAX_SLOTS}")
    occ = _pack_bitmap(tuple(s is SlotStatus.OCCUPIED for s in snapshot.statuses))
    oos = _pack_bitmap(tuple(s is SlotStatus.OUT_OF_SERVICE for s in snapshot.statuses))
    barrier = _BARRIER_MOTION_CODE[snapshot.barrier.motion]
    if snapshot.barrier.override is OverrideMode.FORCED_OPEN:
        barrier |= FLAG_FORCED_OPEN
    elif snapshot.barrier.override is OverrideMode.FORCED_CLOSED:
        barrier |= FLAG_FORCED_CLOSED
    payload = bytes([n]) + occ + oos + bytes([barrier, snapshot.available])
    return _frame_bytes(MSG_TELEMETRY, snapshot.lot_id, snapshot.seq, snapshot.tick_ms, payload)


def encode_heartbeat(lot_id: int, seq: int, tick_ms: int) -> bytes:
    return _frame_bytes(MSG_HEARTBEAT, lot_id, seq, tick_ms, b"")


def encode_command(lot_id: int, seq: int, command: CommandPayload, tick_ms: int = 0) -> bytes:
    command.validate()
    payload = bytes([command.command, command.arg1, command.arg2])
    return _frame_bytes(MSG_COMMAND, lot_id, seq, tick_ms, payload)


def encode_command_ack(lot_id: int, seq: int, tick_ms: int) -> bytes:
    return _frame_bytes(MSG_COMMAND_ACK, lot_id, seq, tick_ms, b"")


def _payload_len(msg_type: int, data: bytes) -> int:
    if msg_type in (MSG_HEARTBEAT, MSG_COMMAND_ACK):
        return 0
    if msg_type == MSG_COMMAND:
        return 3
    # telemetry: length depends on the slot_count byte
    if len(data) < HEADER_LEN + 1:
        raise Truncated("telemetry frame too short for slot_count")
    n = data[HEADER_LEN]
    if n < 1 or n > MAX_SLOTS:
        raise InconsistentPayload(f"slot_count out of range: {n}")
    return 3 + 2 * ((n + 7) // 8)


def decode_frame(data: bytes) -> tuple[Frame, int]:
    """Decode one frame from the start of `data`.

    Returns (frame, consumed); trailing bytes after a complete frame are
    left for the caller.
    """
    if len(data) < 1:
        raise Truncated("empty input")
    if data[0] != MAGIC:
        raise BadMagic(f"expected 0x{MAGIC:02X}, got 0x{data[0]:02X}")
    if len(data) < 2:
        raise Truncated("no version byte")
    if data[1] != VERSION:
        raise UnknownVersion(f"unsupported version 0x{data[1]:02X}")
    if len(data) < 3:
        raise Truncated("no msg_type byte")
    msg_type = data[2]
    if msg_type not in (MSG_TELEMETRY, MSG_HEARTBEAT, MSG_COMMAND, MSG_COMMAND_ACK):
        raise UnknownType(f"unknown msg_type 0x{msg_type:02X}")
    if len(data) < HEADER_LEN:
        raise Truncated("incomplete header")

    total = HEADER_LEN + _payload_len(msg_type, data) + CRC_LEN
    if len(data) < total:
        raise Truncated(f"need {total} bytes, have {len(data)}")

    body, crc_bytes = data[: total - CRC_LEN], data[total - CRC_LEN : total]
    if crc16(body) != struct.unpack(">H", crc_bytes)[0]:
        raise CrcMismatch("frame CRC check failed")

    _, _, _, lot_id, seq, tick_ms = struct.unpack(">BBBBHQ", data[:HEADER_LEN])
    raw_payload = body[HEADER_LEN:]

    payload: TelemetryPayload | CommandPayload | None
    if msg_type == MSG_TELEMETRY:
        n = raw_payload[0]
        bitmap_len = (n + 7) // 8
        occ = _unpack_bitmap(raw_payload[1 : 1 + bitmap_len], n)
        oos = _unpack_bitmap(raw_payload[1 + bitmap_len : 1 + 2 * bitmap_len], n)
        barrier_byte = raw_payload[1 + 2 * bitmap_len]
        available = raw_payload[2 + 2 * bitmap_len]
        motion_code = barrier_byte & 0x0F
        if motion_code not in _BARRIER_MOTION_FROM_CODE:
            raise InconsistentPayload(f"bad barrier motion code {motion_code}")
        flags = barrier_byte & 0xF0
        if flags == 0:
            override = OverrideMode.AUTO
        elif flags == FLAG_FORCED_OPEN:
            override = OverrideMode.FORCED_OPEN
        elif flags == FLAG_FORCED_CLOSED:
            override = OverrideMode.FORCED_CLOSED
        else:
            raise InconsistentPayload(f"bad barrier flags 0x{flags:02X}")
        if any(o and s for o, s in zip(occ, oos)):
            raise InconsistentPayload("slot marked both occupied and out of service")
        derived_available = sum(1 for o, s in zip(occ, oos) if not o and not s)
        if available != derived_available:
            raise InconsistentPayload(
                f"available {available} != bitmap-derived {derived_available}")
        payload = TelemetryPayload(
            slot_count=n,
            occupied=occ,
            out_of_service=oos,
            barrier_motion=_BARRIER_MOTION_FROM_CODE[motion_code],
            override=override,
            available=available,
        )
    elif msg_type == MSG_COMMAND:
        payload = CommandPayload(raw_payload[0], raw_payload[1], raw_payload[2])
        try:
            payload.validate()
        except InvalidArgument as exc:
            raise InconsistentPayload(str(exc)) from exc
    else:
        payload = None

    return Frame(msg_type, lot_id, seq, tick_ms, payload), total


_MSG_TYPE_NAMES = {
    MSG_TELEMETRY: "telemetry",
    MSG_HEARTBEAT: "heartbeat",
    MSG_COMMAND: "command",
    MSG_COMMAND_ACK: "command_ack",
}

_COMMAND_NAMES = {
    CMD_BARRIER_OVERRIDE: "barrier_override",
    CMD_SLOT_SERVICE: "slot_service",
}


def frame_to_dict(frame: Frame) -> dict:
    """JSON-friendly view of a decoded frame (CLI decode output, fixtures)."""
    doc: dict = {
        "msg_type": _MSG_TYPE_NAMES[frame.msg_type],
        "lot_id": frame.lot_id,
        "seq": frame.seq,
        "tick_ms": frame.tick_ms,
    }
    if isinstance(frame.payload, TelemetryPayload):
        p = frame.payload
        doc["payload"] = {
            "slot_count": p.slot_count,
            "occupied": [i + 1 for i, b in enumerate(p.occupied) if b],
            "out_of_service": [i + 1 for i, b in enumerate(p.out_of_service) if b],
            "barrier": {"state": p.barrier_motion.value, "override": p.override.value},
            "available": p.available,
        }
    elif isinstance(frame.payload, CommandPayload):
        doc["payload"] = {
            "command": _COMMAND_NAMES[frame.payload.command],
            "arg1": frame.payload.arg1,
            "arg2": frame.payload.arg2,
        }
    return doc


def snapshot_from_frame(frame: Frame) -> LotSnapshot:
    """Rebuild a LotSnapshot from a decoded telemetry frame."""
    if not isinstance(frame.payload, TelemetryPayload):
        raise ValueError("not a telemetry frame")
    statuses = frame.payload.statuses()
    return LotSnapshot(
        lot_id=frame.lot_id,
        tick_ms=frame.tick_ms,
        seq=frame.seq,
        statuses=statuses,
        available=available_count(statuses),
        barrier=BarrierState(frame.payload.barrier_motion, frame.payload.override),
    )
