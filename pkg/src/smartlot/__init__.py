"""Simulated smart-parking lot: per-slot sensors, controller logic, a
bit-exact telemetry protocol, and a central hub with an HTTP API.
"""

from .core import (
    BarrierMotion,
    BarrierState,
    LotConfig,
    LotSnapshot,
    OverrideMode,
    SlotStatus,
    available_count,
    occupied_total,
    status_label,
)

__all__ = [
    "BarrierMotion",
    "BarrierState",
    "LotConfig",
    "LotSnapshot",
    "OverrideMode",
    "SlotStatus",
    "available_count",
    "occupied_total",
    "status_label",
]
