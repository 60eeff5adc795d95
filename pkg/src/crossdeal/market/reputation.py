"""Vendor reputation aggregated from stored feedback."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable


@dataclass(frozen=True)
class FeedbackRow:
    vendor: bytes
    chain: int
    listing: int
    index: int
    score: int
    did_backed: bool
    registry: tuple[int, bytes] | None


@dataclass(frozen=True)
class Reputation:
    vendor: bytes
    count: int
    total: int

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else 0.0

    @property
    def exact_mean(self) -> Fraction:
        return Fraction(self.total, self.count) if self.count else Fraction(0)


def feedback_table(world, coin_chains: Iterable[int], upto: dict[int, int] | None = None) -> list[FeedbackRow]:
    """Feedback rows read from coin-chain journals, optionally up to given journal lengths."""
    rows = []
    for c in coin_chains:
        entries = world.read_journal(c)
        if upto is not None:
            entries = entries[: upto.get(c, 0)]
        for e in entries:
            if e.event == "FeedbackStored":
                p = e.payload
                reg = tuple(p["registry"]) if p["registry"] is not None else None
                rows.append(FeedbackRow(p["vendor"], c, p["listing"], p["index"], p["score"], p["didBacked"], reg))
    return rows


def aggregate(rows: Iterable[FeedbackRow], vendor: bytes, trusted_registries: Iterable[tuple[int, bytes]]) -> Reputation:
    trusted = {tuple(r) for r in trusted_registries}
    scores = [r.score for r in rows if r.vendor == vendor and r.did_backed and r.registry in trusted]
    return Reputation(vendor, len(scores), sum(scores))


def attestation_payload(rep: Reputation, registries, upto: dict[int, int]) -> tuple:
    regs = sorted(tuple(r) for r in registries)
    return ("reputation", rep.vendor, rep.count, rep.total, regs, sorted(upto.items()))
