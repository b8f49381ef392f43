"""Domain types and occupancy arithmetic shared by every other module."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence


class SlotStatus(enum.Enum):
    VACANT = "Empty"
    OCCUPIED = "Fill"
    OUT_OF_SERVICE = "Serv"


class BarrierMotion(enum.Enum):
    CLOSED = "closed"
    OPENING = "opening"
    OPEN = "open"
    CLOSING = "closing"


class OverrideMode(enum.Enum):
    AUTO = "auto"
    FORCED_OPEN = "forced_open"
    FORCED_CLOSED = "forced_closed"


@dataclass(frozen=True)
class BarrierState:
    motion: BarrierMotion = BarrierMotion.CLOSED
    override: OverrideMode = OverrideMode.AUTO
    # when the current motion phase started, for timeout transitions;
    # excluded from equality so snapshots compare on observable state
    since_ms: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LotConfig:
    lot_id: int = 1
    slot_count: int = 4
    debounce_k: int = 3
    barrier_open_ms: int = 2000
    barrier_hold_ms: int = 8000
    barrier_close_ms: int = 2000
    sample_period_ms: int = 100
    heartbeat_ms: int = 5000

    def __post_init__(self) -> None:
        if not 0 <= self.lot_id <= 255:
            raise ValueError(f"lot_id must fit in one byte, got {self.lot_id}")
        if self.slot_count < 1:
            raise ValueError(f"slot_count must be >= 1, got {self.slot_count}")
        if self.debounce_k < 1:
            raise ValueError(f"debounce_k must be >= 1, got {self.debounce_k}")
        for name in ("barrier_open_ms", "barrier_hold_ms", "barrier_close_ms",
                     "sample_period_ms", "heartbeat_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class LotSnapshot:
    lot_id: int
    tick_ms: int
    seq: int
    statuses: tuple[SlotStatus, ...]
    available: int
    barrier: BarrierState

    def __post_init__(self) -> None:
        if self.available != available_count(self.statuses):
            raise ValueError("available does not match statuses")

    @property
    def slot_count(self) -> int:
        return len(self.statuses)


def occupied_total(statuses: Sequence[SlotStatus]) -> int:
    """Sum of per-slot 0/1 occupancy indicators."""
    return sum(1 for s in statuses if s is SlotStatus.OCCUPIED)


def available_count(statuses: Sequence[SlotStatus]) -> int:
    """Number of slots a driver can still take (vacant, in service)."""
    return sum(1 for s in statuses if s is SlotStatus.VACANT)


def status_label(status: SlotStatus) -> str:
    return status.value
