from __future__ import annotations

import pytest

from crossdeal.errors import OffsetBeyondEnd
from crossdeal.eventlog import EventLog, FaultPlan, listing_topic


class Clock:
    def __init__(self):
        self.t = 0

    def __call__(self):
        return self.t


def filled(n=5):
    clock = Clock()
    log = EventLog(clock)
    for i in range(n):
        log.append("t", "BiddingAuctionEvent", {"i": i}, b"p")
    return log, clock


def test_append_offsets_are_dense():
    log, _ = filled(4)
    assert [r.offset for r in log.records("t")] == [0, 1, 2, 3]
    assert log.length("t") == 4
    assert log.get("t", 9) is None
    assert log.length("nope") == 0


def test_unknown_kind_rejected():
    log = EventLog()
    with pytest.raises(ValueError):
        log.append("t", "Whatever", {}, b"p")


def test_interleaved_producers_keep_append_order():
    log = EventLog()
    order = []
    for i in range(10):
        who = b"a" if i % 3 else b"b"
        order.append((who, log.append("x", "AuctionResponse", {"i": i}, who)))
    assert [(r.producer, r.offset) for r in log.records("x")] == order


def test_append_once_dedupes_by_key():
    log = EventLog()
    a = log.append_once("x", "AuctionCreationEvent", ("k", 1), {"a": 1}, b"p")
    b = log.append_once("x", "AuctionCreationEvent", ("k", 1), {"a": 2}, b"q")
    c = log.append_once("x", "AuctionCreationEvent", ("k", 2), {"a": 3}, b"q")
    assert a == b == 0 and c == 1
    assert log.length("x") == 2


def test_poll_commit_and_bounds():
    log, _ = filled(3)
    sub = log.subscribe("t", "c")
    assert [r.offset for r in log.poll(sub)] == [0, 1, 2]
    assert len(log.poll(sub, max_records=2)) == 2
    log.commit(sub, 2)
    assert [r.offset for r in log.poll(sub)] == [2]
    log.commit(sub, 1)  # commits never move backwards
    assert sub.committed == 2
    with pytest.raises(OffsetBeyondEnd):
        log.commit(sub, 4)


def test_drop_fault_hides_record_from_one_consumer_only():
    log, _ = filled(3)
    faulty = log.subscribe("t", "c", FaultPlan(drop={("t", 1)}))
    clean = log.subscribe("t", "d")
    assert [r.offset for r in log.poll(faulty)] == [0, 2]
    assert [r.offset for r in log.poll(clean)] == [0, 1, 2]
    assert log.length("t") == 3


def test_delay_blocks_until_due():
    log, clock = filled(3)
    sub = log.subscribe("t", "c", FaultPlan(delay={("t", 1): 4}))
    assert [r.offset for r in log.poll(sub)] == [0]
    clock.t = 4
    assert [r.offset for r in log.poll(sub)] == [0, 1, 2]


def test_duplicate_is_redelivered_once_after_commit():
    log, _ = filled(3)
    sub = log.subscribe("t", "c", FaultPlan(duplicate={("t", 0)}))
    log.commit(sub, 3)
    assert [r.offset for r in log.poll(sub)] == [0]
    assert log.poll(sub) == []


def test_export_and_digest_stable():
    a, _ = filled(3)
    b, _ = filled(3)
    assert a.export() == b.export() and a.digest() == b.digest()
    assert listing_topic(7) == "listing-7"
    assert FaultPlan().empty
