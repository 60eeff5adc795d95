from __future__ import annotations

import random
from dataclasses import replace

import pytest

from crossdeal.errors import BadTimers, EmptySvcSet, InvalidParams
from crossdeal.market.auction import (
    Bid,
    ListingParams,
    ListingType,
    Outcome,
    Winner,
    compute_winner,
    local_outcome_ok,
)
from oracles import oracle_winners, random_instance, schedule_price

V, S = b"v" * 20, b"s" * 20


def params(kind=ListingType.SealedFirst, **kw) -> ListingParams:
    base = dict(vendor=V, asset_chain=1, asset_id="a", coin_chains=(2, 3), trusted_svcs=(S,), listing_type=kind,
                start_time=0, reveal_time=10 if kind.sealed else 0, conclude_time=20, feedback_time=30,
                initial_price=5, abort_penalty=1, listing_id=0)
    base.update(kw)
    return ListingParams(**base)


def bid(chain, index, value, t, revealed=True, who=None):
    return Bid(0, chain, index, who or bytes([chain, index]) * 10, t, value, value, None, revealed)


def as_tuples(o: Outcome):
    return [(w.chain, w.index, w.bidder, w.price) for w in o.winners]


def test_sealed_tie_goes_to_earlier_bid():
    p = params()
    late, early = bid(2, 0, 9, 4), bid(3, 0, 9, 3)
    o = compute_winner(p, [late, early])
    assert as_tuples(o) == [(3, 0, early.bidder, 9)]


def test_fixed_takes_earliest_intents():
    p = params(ListingType.Fixed, num_winners=2)
    bids = [bid(2, 0, 5, 3), bid(2, 1, 5, 1), bid(2, 2, 5, 2)]
    o = compute_winner(p, bids)
    assert [(w.index, w.price) for w in o.winners] == [(1, 5), (2, 5)]


def test_vickrey_pays_second_price_or_initial():
    p = params(ListingType.SealedSecond)
    o = compute_winner(p, [bid(2, 0, 12, 1), bid(3, 0, 8, 1), bid(3, 1, 30, 2, revealed=False)])
    assert as_tuples(o) == [(2, 0, bid(2, 0, 12, 1).bidder, 8)]
    single = compute_winner(p, [bid(2, 0, 12, 1)])
    assert single.winners[0].price == 5


def test_unrevealed_and_below_initial_never_win():
    p = params()
    assert compute_winner(p, [bid(2, 0, 100, 1, revealed=False), bid(2, 1, 4, 2)]).winners == ()
    assert compute_winner(p, []).winners == ()


def test_dutch_first_bid_at_scheduled_price():
    p = params(ListingType.OpenDecreasing, initial_price=100, reserve_price=10, dutch_steps=10)
    assert p.scheduled_price(0) == 100
    assert p.scheduled_price(19) == 10
    assert [p.scheduled_price(t) for t in range(0, 20, 2)] == sorted([p.scheduled_price(t) for t in range(0, 20, 2)],
                                                                    reverse=True)
    low = bid(2, 0, 50, 1)  # below the schedule at t=1
    ok = bid(3, 0, 70, 8)
    assert as_tuples(compute_winner(p, [low, ok])) == [(3, 0, ok.bidder, 70)]


@pytest.mark.parametrize("kind", list(ListingType))
def test_compute_winner_matches_oracle(kind):
    rng = random.Random(f"unit:{kind.value}")
    for _ in range(200):
        p, bids = random_instance(rng, kind)
        assert as_tuples(compute_winner(p, bids)) == oracle_winners(p, bids)


def test_schedule_matches_oracle():
    rng = random.Random(1)
    for _ in range(300):
        p, _ = random_instance(rng, ListingType.OpenDecreasing)
        for t in range(p.start_time - 1, p.conclude_time + 2):
            assert p.scheduled_price(t) == schedule_price(p, t)


def test_local_check_accepts_honest_outcome_per_chain():
    rng = random.Random(2)
    for kind in ListingType:
        for _ in range(100):
            p, bids = random_instance(rng, kind)
            bids = [b for b in bids if b.listing_id == p.listing_id]
            o = compute_winner(p, bids)
            for c in p.coin_chains:
                assert local_outcome_ok(p, c, [b for b in bids if b.chain == c], o) is None


def test_local_check_rejects_distortions():
    p = params()
    bids = [bid(2, 0, 9, 1), bid(2, 1, 7, 2)]
    good = compute_winner(p, bids)
    loser = Outcome(0, (Winner(2, 1, bids[1].bidder, 7),))
    assert local_outcome_ok(p, 2, bids, good) is None
    assert local_outcome_ok(p, 2, bids, loser) == "not the best local bid"
    assert local_outcome_ok(p, 2, bids, Outcome(0, (Winner(2, 0, bids[0].bidder, 8),))) == "price differs from bid value"
    assert local_outcome_ok(p, 2, bids, Outcome(0, (Winner(2, 5, b"x" * 20, 9),))) == "bid 5 cannot win"
    assert local_outcome_ok(p, 2, bids, Outcome(1, ())) == "listing mismatch"
    dup = Outcome(0, (good.winners[0], good.winners[0]))
    assert local_outcome_ok(replace(p, listing_type=ListingType.Fixed, num_winners=2), 2, bids, dup) == "duplicate winner"


def test_validate_rejects_bad_params():
    with pytest.raises(BadTimers):
        params(reveal_time=25).validate()
    with pytest.raises(BadTimers):
        params(ListingType.OpenIncreasing, reveal_time=5).validate()
    with pytest.raises(EmptySvcSet):
        params(trusted_svcs=()).validate()
    with pytest.raises(InvalidParams):
        params(abort_penalty=6).validate()
    with pytest.raises(InvalidParams):
        params(num_winners=2).validate()
    with pytest.raises(InvalidParams):
        params(coin_chains=(1, 2)).validate()
    with pytest.raises(InvalidParams):
        params(require_did=True).validate()
    assert params().validate().lead_svc == S


def test_outcome_json_round_trip():
    o = Outcome(3, (Winner(2, 1, b"\x01" * 20, 9), Winner(3, 0, b"\x02" * 20, 9)))
    assert Outcome.from_json(o.to_json()) == o
    assert ListingType.parse("vickrey") is ListingType.SealedSecond
    with pytest.raises(ValueError):
        ListingType.parse("english")
