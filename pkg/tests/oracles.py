"""Independent reference implementations used to check the library.

The winner oracle avoids sorting and ``min``: a bid wins when it beats every
other eligible bid pairwise, and fixed-price slots go to bids with fewer than
``num_winners`` strictly earlier rivals.
"""

from __future__ import annotations

import random

from crossdeal.market.auction import Bid, ListingParams, ListingType


def schedule_price(p: ListingParams, t: int) -> int:
    if t <= p.start_time:
        return p.initial_price
    reserve = p.initial_price // 2 if p.reserve_price is None else p.reserve_price
    ladder = [p.initial_price - (p.initial_price - reserve) * k // (p.dutch_steps - 1) for k in range(p.dutch_steps)]
    # which tick of the schedule t falls into
    tick = 0
    span = p.conclude_time - p.start_time
    while tick + 1 < p.dutch_steps and (tick + 1) * span <= (t - p.start_time) * p.dutch_steps:
        tick += 1
    return ladder[tick]


def can_win(p: ListingParams, b: Bid) -> bool:
    t = p.listing_type
    if t is ListingType.Fixed:
        return True
    if t in (ListingType.SealedFirst, ListingType.SealedSecond) and not b.revealed:
        return False
    if b.value is None:
        return False
    floor = schedule_price(p, b.placed_at) if t is ListingType.OpenDecreasing else p.initial_price
    return b.value >= floor


def earlier(a: Bid, b: Bid) -> bool:
    if a.placed_at != b.placed_at:
        return a.placed_at < b.placed_at
    if a.chain != b.chain:
        return a.chain < b.chain
    return a.index < b.index


def beats(a: Bid, b: Bid) -> bool:
    return a.value > b.value or (a.value == b.value and earlier(a, b))


def oracle_winners(p: ListingParams, bids: list[Bid]) -> list[tuple[int, int, bytes, int]]:
    pool = [b for b in bids if b.listing_id == p.listing_id and can_win(p, b)]
    t = p.listing_type
    if t is ListingType.Fixed:
        out = [b for b in pool if sum(1 for o in pool if earlier(o, b)) < p.num_winners]
        out.sort(key=lambda b: sum(1 for o in pool if earlier(o, b)))
        return [(b.chain, b.index, b.bidder, p.initial_price) for b in out]
    if t is ListingType.OpenDecreasing:
        first = [b for b in pool if all(b is o or earlier(b, o) for o in pool)]
        return [(b.chain, b.index, b.bidder, b.value) for b in first]
    top = [b for b in pool if all(b is o or beats(b, o) for o in pool)]
    if not top:
        return []
    w = top[0]
    price = w.value
    if t is ListingType.SealedSecond:
        others = [o.value for o in pool if o is not w]
        price = None
        for v in others:
            if price is None or v > price:
                price = v
        if price is None:
            price = p.initial_price
    return [(w.chain, w.index, w.bidder, price)]


def random_instance(rng: random.Random, kind: ListingType) -> tuple[ListingParams, list[Bid]]:
    """Small books with deliberate ties, zero bids and ineligible entries."""
    start, conclude = 10, 10 + rng.randint(5, 40)
    sealed = kind in (ListingType.SealedFirst, ListingType.SealedSecond)
    reveal = rng.randint(start + 1, conclude - 1) if sealed else start
    initial = rng.randint(1, 20)
    p = ListingParams(
        vendor=b"v" * 20, asset_chain=1, asset_id="a", coin_chains=(2, 3, 4), trusted_svcs=(b"s" * 20,),
        listing_type=kind, start_time=start, reveal_time=reveal, conclude_time=conclude, feedback_time=conclude + 10,
        initial_price=initial, abort_penalty=0, num_winners=rng.randint(1, 4) if kind is ListingType.Fixed else 1,
        dutch_steps=rng.randint(2, 8), reserve_price=rng.choice((None, 0, initial)), listing_id=rng.randint(0, 3),
    )
    n = rng.choice((0, 0, 1, 2, 3, 5, 8, 12))
    bids = []
    counters = {c: 0 for c in p.coin_chains}
    for _ in range(n):
        c = rng.choice(p.coin_chains)
        placed = rng.randint(start, conclude - 1)
        # narrow value range so equal values are common
        value = rng.randint(max(0, initial - 3), initial + 4)
        revealed = rng.random() < 0.8 if sealed else False
        lid = p.listing_id if rng.random() < 0.95 else p.listing_id + 1
        bids.append(Bid(lid, c, counters[c], bytes([len(bids)]) * 20, placed, value,
                        value=None if sealed and not revealed else value, revealed=revealed))
        counters[c] += 1
    return p, bids
