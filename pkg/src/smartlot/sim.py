"""Seeded, deterministic traffic and sensor simulation.

Vehicle arrivals are a Poisson process (exponential inter-arrival times by
inverse CDF), parking durations are exponential, and all randomness comes
from a splitmix64 stream so runs reproduce bit-for-bit across platforms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .core import BarrierMotion, BarrierState, LotConfig, LotSnapshot, SlotStatus
from .controller import ActuatorCommand, Controller

BALK_TIMEOUT_MS = 30_000

# domain separator so sensor flicker draws never alias traffic draws
FLICKER_STREAM_SALT = 0x5EED5EED5EED5EED

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """splitmix64: tiny, portable, and plenty for traffic generation."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        """Uniform in (0, 1], safe to feed through log()."""
        return ((self.next_u64() >> 11) + 1) * 2.0**-53


@dataclass
class VehicleEvent:
    at_ms: int
    stay_ms: int
    outcome: str | None = None  # "parked" | "denied" | "balked"
    slot: int | None = None
    entered_ms: int | None = None


_SCENARIO_FIELDS = {"seed", "arrival_rate", "mean_stay_s", "horizon_ms",
                    "flicker_p", "explicit_events"}


@dataclass(frozen=True)
class Scenario:
    seed: int = 0
    arrival_rate: float = 0.0  # expected arrivals per second
    mean_stay_s: float = 600.0
    horizon_ms: int = 3_600_000
    flicker_p: float = 0.0
    explicit_events: tuple[tuple[int, int], ...] | None = None  # (at_ms, stay_ms)

    def __post_init__(self) -> None:
        if self.arrival_rate < 0:
            raise ValueError("arrival_rate must be >= 0")
        if self.mean_stay_s <= 0:
            raise ValueError("mean_stay_s must be > 0")
        if self.horizon_ms <= 0:
            raise ValueError("horizon_ms must be > 0")
        if not 0.0 <= self.flicker_p <= 1.0:
            raise ValueError("flicker_p must be in [0, 1]")

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ValueError("scenario document must be a JSON object")
        unknown = set(doc) - _SCENARIO_FIELDS
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        events = None
        if doc.get("explicit_events") is not None:
            events = []
            for ev in doc["explicit_events"]:
                extra = set(ev) - {"at_ms", "stay_ms"}
                if extra:
                    raise ValueError(f"unknown event fields: {sorted(extra)}")
                events.append((int(ev["at_ms"]), int(ev["stay_ms"])))
            events = tuple(events)
        return cls(
            seed=int(doc.get("seed", 0)),
            arrival_rate=float(doc.get("arrival_rate", 0.0)),
            mean_stay_s=float(doc.get("mean_stay_s", 600.0)),
            horizon_ms=int(doc.get("horizon_ms", 3_600_000)),
            flicker_p=float(doc.get("flicker_p", 0.0)),
            explicit_events=events,
        )


def generate_scenario_events(
    seed: int, arrival_rate: float, mean_stay_s: float, horizon_ms: int
) -> list[VehicleEvent]:
    """Poisson arrivals with exponential stays, one VehicleEvent each."""
    if arrival_rate < 0:
        raise ValueError("arrival_rate must be >= 0")
    events: list[VehicleEvent] = []
    if arrival_rate == 0:
        return events
    rng = SplitMix64(seed)
    t_s = 0.0
    while True:
        t_s += -math.log(rng.next_unit()) / arrival_rate
        at_ms = int(t_s * 1000)
        if at_ms >= horizon_ms:
            break
        stay_ms = max(1, int(-math.log(rng.next_unit()) * mean_stay_s * 1000))
        events.append(VehicleEvent(at_ms=at_ms, stay_ms=stay_ms))
    return events


def scenario_events(scenario: Scenario) -> list[VehicleEvent]:
    if scenario.explicit_events is not None:
        for at_ms, stay_ms in scenario.explicit_events:
            if not 0 <= at_ms < scenario.horizon_ms:
                raise ValueError(f"event at_ms {at_ms} outside horizon")
            if stay_ms <= 0:
                raise ValueError("event stay_ms must be > 0")
        return [VehicleEvent(at_ms=a, stay_ms=s)
                for a, s in sorted(scenario.explicit_events)]
    return generate_scenario_events(
        scenario.seed, scenario.arrival_rate, scenario.mean_stay_s, scenario.horizon_ms)


@dataclass
class StepResult:
    raw_bits: list[int]
    entry_detected: bool
    vehicle_passed: bool
    parked: VehicleEvent | None
    departed: list[VehicleEvent]
    balked: list[VehicleEvent]


class World:
    """Ground truth: which vehicle sits where, who queues at the gate."""

    def __init__(self, slot_count: int, events: list[VehicleEvent],
                 flicker_p: float = 0.0, seed: int = 0,
                 balk_timeout_ms: int = BALK_TIMEOUT_MS):
        self.slot_count = slot_count
        self.pending = sorted(events, key=lambda e: e.at_ms)
        self.queue: list[VehicleEvent] = []
        self.occupants: list[VehicleEvent | None] = [None] * slot_count
        self.flicker_p = flicker_p
        self.flicker_rng = SplitMix64(seed ^ FLICKER_STREAM_SALT)
        self.balk_timeout_ms = balk_timeout_ms
        self.all_vehicles: list[VehicleEvent] = list(self.pending)
        self._last_now = -1

    def inject(self, event: VehicleEvent) -> None:
        self.pending.append(event)
        self.pending.sort(key=lambda e: e.at_ms)
        self.all_vehicles.append(event)

    def force_depart(self, slot: int, now_ms: int) -> bool:
        v = self.occupants[slot - 1]
        if v is None:
            return False
        v.stay_ms = max(1, now_ms - (v.entered_ms or 0))
        return True

    def step(self, now_ms: int, barrier: BarrierState,
             blocked_slots: frozenset[int] = frozenset()) -> StepResult:
        if now_ms < self._last_now:
            raise ValueError("time must not run backwards")
        self._last_now = now_ms

        departed = []
        for i, v in enumerate(self.occupants):
            if v is not None and v.entered_ms + v.stay_ms <= now_ms:
                self.occupants[i] = None
                departed.append(v)

        while self.pending and self.pending[0].at_ms <= now_ms:
            self.queue.append(self.pending.pop(0))

        balked = []
        for v in list(self.queue):
            if now_ms - v.at_ms > self.balk_timeout_ms:
                v.outcome = "balked"
                self.queue.remove(v)
                balked.append(v)

        parked = None
        vehicle_passed = False
        if self.queue and barrier.motion is BarrierMotion.OPEN:
            slot = next(
                (i + 1 for i in range(self.slot_count)
                 if self.occupants[i] is None and (i + 1) not in blocked_slots),
                None)
            if slot is not None:
                v = self.queue.pop(0)
                v.outcome = "parked"
                v.slot = slot
                v.entered_ms = now_ms
                self.occupants[slot - 1] = v
                parked = v
                vehicle_passed = True

        raw_bits = [1 if v is not None else 0 for v in self.occupants]
        if self.flicker_p > 0:
            raw_bits = [b ^ (1 if self.flicker_rng.next_unit() <= self.flicker_p else 0)
                        for b in raw_bits]

        return StepResult(
            raw_bits=raw_bits,
            entry_detected=bool(self.queue),
            vehicle_passed=vehicle_passed,
            parked=parked,
            departed=departed,
            balked=balked,
        )

    def deny_head(self, now_ms: int) -> VehicleEvent | None:
        if not self.queue:
            return None
        v = self.queue.pop(0)
        v.outcome = "denied"
        return v


@dataclass
class ReportSummary:
    occupancy_rate: float = 0.0
    denied_count: int = 0
    balked_count: int = 0
    parked_count: int = 0
    mean_stay_observed_ms: float = 0.0
    per_slot_occupied_ms: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "occupancy_rate": self.occupancy_rate,
            "denied_count": self.denied_count,
            "balked_count": self.balked_count,
            "parked_count": self.parked_count,
            "mean_stay_observed_ms": self.mean_stay_observed_ms,
            "per_slot_occupied_ms": list(self.per_slot_occupied_ms),
        }


@dataclass
class SimResult:
    records: list
    final_snapshot: LotSnapshot
    stats: ReportSummary
    vehicles: list[VehicleEvent]
    frames: list[bytes] = field(default_factory=list)


def run_simulation(config: LotConfig, scenario: Scenario, hub=None,
                   pace_s_per_tick: float | None = None,
                   injections: list | None = None) -> SimResult:
    """Closed loop: world -> controller -> hub, one sample period at a time.

    `injections` is an optional thread-shared list of ("arrive", stay_ms) /
    ("depart", slot) tuples drained each tick (used by the embedded-sim
    HTTP endpoint). `pace_s_per_tick` sleeps that long per tick for
    real-time runs.
    """
    import time as _time

    from .hub import Hub

    if hub is None:
        hub = Hub()
    hub.register_lot(config)
    hub.set_clock_ms(0)

    events = scenario_events(scenario)
    world = World(config.slot_count, events,
                  flicker_p=scenario.flicker_p, seed=scenario.seed)
    controller = Controller(config)

    period = config.sample_period_ms
    stats = ReportSummary(per_slot_occupied_ms=[0] * config.slot_count)
    stay_total = 0
    stay_count = 0
    occupy_start: list[int | None] = [None] * config.slot_count

    hub.append_run_info(config.lot_id, slot_count=config.slot_count,
                        horizon_ms=scenario.horizon_ms)

    def track_transitions(old: tuple[SlotStatus, ...], new: tuple[SlotStatus, ...],
                          now_ms: int) -> None:
        nonlocal stay_total, stay_count
        for i, (a, b) in enumerate(zip(old, new)):
            if a is b:
                continue
            if b is SlotStatus.OCCUPIED:
                occupy_start[i] = now_ms
            elif a is SlotStatus.OCCUPIED and occupy_start[i] is not None:
                stay_total += now_ms - occupy_start[i]
                stay_count += 1
                occupy_start[i] = None

    last_statuses = tuple(d.confirmed for d in controller.debounce)
    final_snapshot: LotSnapshot | None = None
    sent_frames: list[bytes] = []

    for now in range(0, scenario.horizon_ms, period):
        hub.set_clock_ms(now)

        if injections is not None:
            while injections:
                action = injections.pop(0)
                if action[0] == "arrive":
                    world.inject(VehicleEvent(at_ms=now, stay_ms=int(action[1])))
                elif action[0] == "depart":
                    world.force_depart(int(action[1]), now)

        for cmd_frame in hub.poll_commands(config.lot_id):
            result = controller.handle_frame(cmd_frame, now)
            for f in result.frames:
                sent_frames.append(f)
                hub.ingest_frame(f)
            if result.snapshot is not None:
                final_snapshot = result.snapshot
            new_statuses = tuple(d.confirmed for d in controller.debounce)
            track_transitions(last_statuses, new_statuses, now)
            last_statuses = new_statuses

        blocked = frozenset(
            i + 1 for i, d in enumerate(controller.debounce)
            if d.confirmed is SlotStatus.OUT_OF_SERVICE)
        step = world.step(now, controller.barrier, blocked)

        result = controller.tick(step.raw_bits, now,
                                 entry_detected=step.entry_detected,
                                 vehicle_passed=step.vehicle_passed)
        for f in result.frames:
            sent_frames.append(f)
            hub.ingest_frame(f)
        if result.snapshot is not None:
            final_snapshot = result.snapshot

        new_statuses = tuple(d.confirmed for d in controller.debounce)
        track_transitions(last_statuses, new_statuses, now)
        last_statuses = new_statuses

        if step.parked is not None:
            stats.parked_count += 1
            hub.append_sim_record(config.lot_id, "VehicleParked",
                                  slot=step.parked.slot,
                                  payload={"at_ms": now, "stay_ms": step.parked.stay_ms})
        for v in step.balked:
            stats.balked_count += 1
            hub.append_sim_record(config.lot_id, "EntryBalked",
                                  payload={"arrived_at_ms": v.at_ms})

        for act in result.actuators:
            if act is ActuatorCommand.DENY_SIGNAL:
                denied = world.deny_head(now)
                if denied is not None:
                    stats.denied_count += 1
                    hub.append_sim_record(config.lot_id, "EntryDenied",
                                          payload={"arrived_at_ms": denied.at_ms})

        for i, s in enumerate(last_statuses):
            if s is SlotStatus.OCCUPIED:
                stats.per_slot_occupied_ms[i] += period

        if pace_s_per_tick:
            _time.sleep(pace_s_per_tick)

    # stays still open at the horizon are not "observed"; occupancy counts them
    total_occupied = sum(stats.per_slot_occupied_ms)
    stats.occupancy_rate = total_occupied / (config.slot_count * scenario.horizon_ms)
    stats.mean_stay_observed_ms = stay_total / stay_count if stay_count else 0.0

    if final_snapshot is None:
        final_snapshot = controller._snapshot(0)
    return SimResult(
        records=hub.history(config.lot_id, from_seq=0, limit=10**9),
        final_snapshot=final_snapshot,
        stats=stats,
        vehicles=world.all_vehicles,
        frames=sent_frames,
    )
