"""Statistics computed purely from a persisted event log.

This is an independent path from the live simulation's own bookkeeping;
tests assert both agree on the same run.
"""

from __future__ import annotations

from .hub import LotEventRecord
from .sim import ReportSummary


def compute_report(records: list[LotEventRecord]) -> ReportSummary:
    slot_count = 0
    horizon_ms = 0
    for rec in records:
        if rec.kind == "SimRunInfo" and rec.payload:
            slot_count = int(rec.payload.get("slot_count", 0))
            horizon_ms = int(rec.payload.get("horizon_ms", 0))
            break
    if slot_count == 0:
        slot_count = max((rec.slot or 0 for rec in records), default=0)

    summary = ReportSummary(per_slot_occupied_ms=[0] * slot_count)
    occupied_since: dict[int, int] = {}
    stay_total = 0
    stay_count = 0

    for rec in records:
        if rec.kind == "VehicleParked":
            summary.parked_count += 1
        elif rec.kind == "EntryDenied":
            summary.denied_count += 1
        elif rec.kind == "EntryBalked":
            summary.balked_count += 1
        elif rec.kind == "SlotChanged" and rec.slot is not None:
            if rec.new == "Fill":
                occupied_since[rec.slot] = rec.received_at_ms
            elif rec.old == "Fill" and rec.slot in occupied_since:
                duration = rec.received_at_ms - occupied_since.pop(rec.slot)
                summary.per_slot_occupied_ms[rec.slot - 1] += duration
                stay_total += duration
                stay_count += 1

    # stays still open when the run ended count toward occupancy only
    for slot, since in occupied_since.items():
        summary.per_slot_occupied_ms[slot - 1] += max(0, horizon_ms - since)

    if slot_count and horizon_ms:
        summary.occupancy_rate = sum(summary.per_slot_occupied_ms) / (slot_count * horizon_ms)
    summary.mean_stay_observed_ms = stay_total / stay_count if stay_count else 0.0
    return summary
