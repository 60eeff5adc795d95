"""Listing parameters, bid records and the winner rule.

Everything here is pure: the contracts store these records and call
:func:`compute_winner`, and so do relayers and auditors when they recompute
an outcome from journals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from ..errors import BadTimers, EmptySvcSet, InvalidParams


class ListingType(enum.Enum):
    Fixed = "fixed"
    OpenIncreasing = "open"
    OpenDecreasing = "dutch"
    SealedFirst = "sealed"
    SealedSecond = "vickrey"

    @property
    def sealed(self) -> bool:
        return self in (ListingType.SealedFirst, ListingType.SealedSecond)

    @property
    def valued(self) -> bool:
        return self is not ListingType.Fixed

    @classmethod
    def parse(cls, text: str) -> "ListingType":
        for t in cls:
            if text in (t.name, t.value):
                return t
        raise ValueError(f"unknown listing type {text!r}")


class Phase(enum.IntEnum):
    Created = 0
    Bidding = 1
    Reveal = 2
    Concluding = 3
    Finalized = 4
    Aborted = 5

    @property
    def terminal(self) -> bool:
        return self >= Phase.Finalized


@dataclass(frozen=True)
class ListingParams:
    vendor: bytes
    asset_chain: int
    asset_id: str
    coin_chains: tuple[int, ...]
    trusted_svcs: tuple[bytes, ...]
    listing_type: ListingType
    start_time: int
    reveal_time: int
    conclude_time: int
    feedback_time: int
    initial_price: int
    abort_penalty: int
    num_winners: int = 1
    require_did: bool = False
    trusted_registries: tuple[tuple[int, bytes], ...] = ()
    cred_def: str | None = None
    dutch_steps: int = 10
    reserve_price: int | None = None
    svc_fee: int = 0
    gov_fee: int = 0
    treasury: bytes = b""
    # extra time the asset chain waits past feedback_time for relayed votes
    settle_grace: int = 0
    listing_id: int = -1

    def with_id(self, listing_id: int) -> "ListingParams":
        return replace(self, listing_id=listing_id)

    @property
    def lead_svc(self) -> bytes:
        return self.trusted_svcs[0]

    @property
    def reserve(self) -> int:
        return self.initial_price // 2 if self.reserve_price is None else self.reserve_price

    @property
    def asset_deadline(self) -> int:
        return self.feedback_time + self.settle_grace

    def validate(self) -> "ListingParams":
        if not (self.start_time <= self.reveal_time <= self.conclude_time <= self.feedback_time):
            raise BadTimers("need start <= reveal <= conclude <= feedback")
        if self.listing_type.sealed:
            if self.reveal_time == self.start_time:
                raise BadTimers("sealed listings need a reveal phase")
            if self.conclude_time == self.reveal_time:
                raise BadTimers("sealed listings need a non-empty reveal window")
        elif self.reveal_time != self.start_time:
            raise BadTimers("only sealed listings have a reveal phase")
        if self.conclude_time == self.start_time:
            raise BadTimers("empty bidding window")
        if not self.trusted_svcs:
            raise EmptySvcSet("listing names no relayer")
        if not self.coin_chains or len(set(self.coin_chains)) != len(self.coin_chains):
            raise InvalidParams("coin chains must be non-empty and distinct")
        if self.asset_chain in self.coin_chains:
            raise InvalidParams("asset chain cannot also be a coin chain")
        if self.initial_price < 0 or self.abort_penalty < 0 or self.abort_penalty > self.initial_price:
            raise InvalidParams("need 0 <= abort_penalty <= initial_price")
        if self.num_winners < 1 or (self.num_winners > 1 and self.listing_type is not ListingType.Fixed):
            raise InvalidParams("multiple winners only for fixed-price listings")
        if self.svc_fee < 0 or self.gov_fee < 0 or self.settle_grace < 0:
            raise InvalidParams("fees and grace must be non-negative")
        if self.require_did and not self.trusted_registries:
            raise InvalidParams("DID-gated listing names no registry")
        if self.dutch_steps < 2 or not (0 <= self.reserve <= self.initial_price):
            raise InvalidParams("bad descending-price schedule")
        return self

    def scheduled_price(self, t: int) -> int:
        """Descending-price schedule: equal steps from initial down to reserve."""
        if t <= self.start_time:
            return self.initial_price
        span = self.conclude_time - self.start_time
        k = min(self.dutch_steps - 1, (t - self.start_time) * self.dutch_steps // span)
        drop = (self.initial_price - self.reserve) * k // (self.dutch_steps - 1)
        return self.initial_price - drop


@dataclass(frozen=True)
class Bid:
    listing_id: int
    chain: int
    index: int
    bidder: bytes
    placed_at: int
    escrowed: int
    value: int | None = None
    commitment: bytes | None = None
    revealed: bool = False
    did_backed: bool = False

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.placed_at, self.chain, self.index)

    @property
    def ref(self) -> tuple[int, int]:
        return (self.chain, self.index)


@dataclass(frozen=True)
class Winner:
    chain: int
    index: int
    bidder: bytes
    price: int


@dataclass(frozen=True)
class Outcome:
    listing_id: int
    winners: tuple[Winner, ...] = ()

    def on_chain(self, chain: int) -> tuple[Winner, ...]:
        return tuple(w for w in self.winners if w.chain == chain)

    @property
    def refs(self) -> tuple[tuple[int, int], ...]:
        return tuple((w.chain, w.index) for w in self.winners)

    def to_json(self) -> dict:
        return {
            "listing": self.listing_id,
            "winners": [[w.chain, w.index, "0x" + w.bidder.hex(), w.price] for w in self.winners],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Outcome":
        ws = tuple(Winner(c, i, bytes.fromhex(b[2:]), p) for c, i, b, p in doc["winners"])
        return cls(doc["listing"], ws)


def eligible(params: ListingParams, bid: Bid) -> bool:
    """Whether a bid may take part in winner selection."""
    t = params.listing_type
    if t is ListingType.Fixed:
        return True
    if t.sealed and not bid.revealed:
        return False
    if bid.value is None:
        return False
    if t is ListingType.OpenDecreasing:
        return bid.value >= params.scheduled_price(bid.placed_at)
    return bid.value >= params.initial_price


def _best(bids: Sequence[Bid]) -> Bid:
    # highest value first, then earliest (placed_at, chain, index)
    return min(bids, key=lambda b: (-b.value, b.key))


def compute_winner(params: ListingParams, bids: Iterable[Bid]) -> Outcome:
    lid = params.listing_id
    pool = [b for b in bids if b.listing_id == lid and eligible(params, b)]
    if not pool:
        return Outcome(lid)
    t = params.listing_type
    if t is ListingType.Fixed:
        chosen = sorted(pool, key=lambda b: b.key)[: params.num_winners]
        return Outcome(lid, tuple(Winner(b.chain, b.index, b.bidder, params.initial_price) for b in chosen))
    if t is ListingType.OpenDecreasing:
        first = min(pool, key=lambda b: b.key)
        return Outcome(lid, (Winner(first.chain, first.index, first.bidder, first.value),))
    top = _best(pool)
    price = top.value
    if t is ListingType.SealedSecond:
        rest = [b.value for b in pool if b is not top]
        price = max(rest) if rest else params.initial_price
    return Outcome(lid, (Winner(top.chain, top.index, top.bidder, price),))


def local_outcome_ok(params: ListingParams, chain: int, bids: Sequence[Bid], outcome: Outcome) -> str | None:
    """Check a declared outcome against one chain's own bid book.

    Returns None when consistent, else a reason. Only what is decidable from
    local data is checked; cross-chain fairness is left to auditors.
    """
    if outcome.listing_id != params.listing_id:
        return "listing mismatch"
    if len(outcome.winners) > params.num_winners:
        return "too many winners"
    if len(set(outcome.refs)) != len(outcome.refs):
        return "duplicate winner"
    book = {b.index: b for b in bids}
    local = outcome.on_chain(chain)
    pool = [b for b in bids if eligible(params, b)]
    t = params.listing_type
    for w in local:
        b = book.get(w.index)
        if b is None or b.bidder != w.bidder or not eligible(params, b):
            return f"bid {w.index} cannot win"
        if t is ListingType.Fixed:
            if w.price != params.initial_price:
                return "fixed price mismatch"
        elif t is ListingType.SealedSecond:
            if not (params.initial_price <= w.price <= b.value):
                return "second price out of range"
            others = [x.value for x in pool if x.index != b.index]
            if others and w.price < max(others):
                return "second price below local runner-up"
        elif w.price != b.value:
            return "price differs from bid value"
    if not local:
        return None
    if t is ListingType.Fixed:
        fifo = sorted(pool, key=lambda b: b.key)
        prefix = [b.index for b in fifo[: len(local)]]
        if sorted(prefix) != sorted(w.index for w in local):
            return "fixed winners are not the earliest local intents"
    elif t is ListingType.OpenDecreasing:
        if min(pool, key=lambda b: b.key).index != local[0].index:
            return "not the first local bid"
    elif _best(pool).index != local[0].index:
        return "not the best local bid"
    return None


@dataclass(frozen=True)
class FeedbackEntry:
    listing_id: int
    chain: int
    bid_index: int
    rater: bytes
    score: int
    comment_hash: bytes
    did_backed: bool
    registry: tuple[int, bytes] | None = None


VOTES = ("commit", "abort")


def vote_payload(listing_id: int, chain: int, index: int, winner: bytes, price: int, vote: str) -> tuple:
    """What a participant signs when voting on one winning bid."""
    return ("vote", listing_id, chain, index, winner, price, vote)
