"""Append-only, topic-partitioned event log with offset-tracking consumers.

Stands in for the message broker that relayers and users watch. Faults are
injected per consumer at delivery time through a :class:`FaultPlan`; the
stored log itself is never touched by them.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

from .crypto import canonical, hexdigest
from .errors import OffsetBeyondEnd

KINDS = (
    "AuctionCreationEvent",
    "BiddingAuctionEvent",
    "AuctionEndingEvent",
    "AuctionClosingEvent",
    "AuctionResponse",
    "DidVerifiedEvent",
    "ReputationAttestation",
)

IDENTITY_TOPIC = "identity"


def listing_topic(listing_id: int) -> str:
    return f"listing-{listing_id}"


@dataclass(frozen=True)
class EventRecord:
    topic: str
    offset: int
    kind: str
    payload: dict
    producer: bytes
    produced_at: int

    def export(self) -> dict:
        return {
            "topic": self.topic,
            "offset": self.offset,
            "kind": self.kind,
            "payload": canonical(self.payload),
            "producer": "0x" + self.producer.hex(),
            "producedAt": self.produced_at,
        }

    def content_hash(self) -> str:
        return hexdigest(self.export())


@dataclass
class FaultPlan:
    """Delivery faults for one consumer.

    ``drop`` suppresses a record forever, ``delay`` holds it (and everything
    after it on that topic) until the universal clock passes producedAt +
    delay, ``duplicate`` redelivers the record once more after it has been
    committed.
    """

    drop: set[tuple[str, int]] = field(default_factory=set)
    delay: dict[tuple[str, int], int] = field(default_factory=dict)
    duplicate: set[tuple[str, int]] = field(default_factory=set)

    @property
    def empty(self) -> bool:
        return not (self.drop or self.delay or self.duplicate)


@dataclass
class Subscription:
    topic: str
    consumer: str
    committed: int = 0
    faults: FaultPlan = field(default_factory=FaultPlan)
    redelivered: set[int] = field(default_factory=set)


class EventLog:
    def __init__(self, clock: Callable[[], int] = lambda: 0):
        self._clock = clock
        self._topics: dict[str, list[EventRecord]] = {}
        self._keys: dict[str, dict[Any, int]] = {}
        self._lock = threading.Lock()

    # -- producing -----------------------------------------------------------

    def append(self, topic: str, kind: str, payload: dict, producer: bytes) -> int:
        if kind not in KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._lock:
            records = self._topics.setdefault(topic, [])
            rec = EventRecord(topic, len(records), kind, payload, producer, self._clock())
            records.append(rec)
            return rec.offset

    def append_once(self, topic: str, kind: str, key: Any, payload: dict, producer: bytes) -> int:
        """Append unless a record with the same (kind, key) is already on *topic*.

        Several relayers watch the same chains; this keeps the log free of
        copies of one observation. Returns the offset of the stored record.
        """
        with self._lock:
            seen = self._keys.setdefault(topic, {})
            k = (kind, canonical(key).__repr__())
            if k in seen:
                return seen[k]
            records = self._topics.setdefault(topic, [])
            rec = EventRecord(topic, len(records), kind, payload, producer, self._clock())
            records.append(rec)
            seen[k] = rec.offset
            return rec.offset

    # -- consuming -----------------------------------------------------------

    def topics(self) -> list[str]:
        return sorted(self._topics)

    def length(self, topic: str) -> int:
        return len(self._topics.get(topic, ()))

    def records(self, topic: str) -> list[EventRecord]:
        return list(self._topics.get(topic, ()))

    def get(self, topic: str, offset: int) -> EventRecord | None:
        recs = self._topics.get(topic, ())
        return recs[offset] if 0 <= offset < len(recs) else None

    def subscribe(self, topic: str, consumer: str, faults: FaultPlan | None = None) -> Subscription:
        return Subscription(topic, consumer, 0, faults or FaultPlan())

    def poll(self, sub: Subscription, max_records: int = 1 << 30) -> list[EventRecord]:
        """Deliverable records after the committed offset (does not commit)."""
        recs = self._topics.get(sub.topic, [])
        out: list[EventRecord] = []
        faults = sub.faults
        now = self._clock()
        # duplicates of already-committed records come first, once each
        for off in sorted(faults.duplicate):
            t, o = off
            if t == sub.topic and o < sub.committed and o not in sub.redelivered and o < len(recs):
                if len(out) < max_records:
                    out.append(recs[o])
                    sub.redelivered.add(o)
        for rec in recs[sub.committed:]:
            if len(out) >= max_records:
                break
            key = (sub.topic, rec.offset)
            if key in faults.drop:
                continue
            d = faults.delay.get(key)
            if d is not None and now < rec.produced_at + d:
                break
            out.append(rec)
        return out

    def commit(self, sub: Subscription, offset: int) -> None:
        if offset > self.length(sub.topic) or offset < 0:
            raise OffsetBeyondEnd(f"{sub.topic}: {offset} > {self.length(sub.topic)}")
        sub.committed = max(sub.committed, offset)

    # -- export --------------------------------------------------------------

    def export(self) -> str:
        lines = []
        for topic in self.topics():
            for rec in self._topics[topic]:
                lines.append(json.dumps(rec.export(), sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    def digest(self) -> str:
        return hexdigest([[t, [r.export() for r in self._topics[t]]] for t in self.topics()])
