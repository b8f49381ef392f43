import pytest

from smartlot.core import (
    BarrierState,
    LotConfig,
    LotSnapshot,
    SlotStatus,
    available_count,
)

V = SlotStatus.VACANT
O = SlotStatus.OCCUPIED
S = SlotStatus.OUT_OF_SERVICE


def make_snapshot(statuses, barrier=None, lot_id=1, tick_ms=1000, seq=7):
    sts = tuple(statuses)
    return LotSnapshot(
        lot_id=lot_id, tick_ms=tick_ms, seq=seq, statuses=sts,
        available=available_count(sts), barrier=barrier or BarrierState())


@pytest.fixture
def config():
    return LotConfig()
