from __future__ import annotations

import random

from hypothesis import given, settings
from hypothesis import strategies as st

from crossdeal.eventlog import EventLog
from crossdeal.market.auction import ListingType, compute_winner
from crossdeal.simchain import World
from conftest import make_market
from oracles import oracle_winners, random_instance

ops = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(-5, 80)), max_size=40)


@settings(max_examples=60, deadline=None)
@given(ops)
def test_transfers_conserve_supply(moves):
    w = World(1, 0)
    auth = w.keyring.account("authority")
    coin = w.deploy(0, auth, "coin")
    accts = [w.keyring.account(f"a{i}") for i in range(4)]
    for a in accts:
        w.call(0, auth, coin, "mint", a, 50)
    for src, dst, amt in moves:
        w.call(0, accts[src], coin, "transfer", accts[dst], amt)
        assert w.view(0, coin, "totalSupply") == 200
        assert sum(w.view(0, coin, "balanceOf", a) for a in accts) == 200
        assert all(w.view(0, coin, "balanceOf", a) >= 0 for a in accts)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100), st.integers(1, 500))
def test_failed_call_leaves_state_untouched(funds, amount):
    w = World(1, 0)
    auth = w.keyring.account("authority")
    coin = w.deploy(0, auth, "coin")
    a, b = w.keyring.account("a"), w.keyring.account("b")
    w.call(0, auth, coin, "mint", a, funds)
    before = w.chain(0).state_digest()
    r = w.call(0, a, coin, "transfer", b, amount)
    assert r.ok == (amount <= funds)
    if not r.ok:
        assert w.chain(0).state_digest() == before


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["t0", "t1", "t2"]), max_size=50))
def test_log_offsets_stay_dense(topics):
    log = EventLog()
    for t in topics:
        log.append(t, "BiddingAuctionEvent", {}, b"p")
    for t in set(topics):
        assert [r.offset for r in log.records(t)] == list(range(topics.count(t)))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(list(ListingType)), st.integers(0, 2**32))
def test_winner_matches_oracle(kind, seed):
    p, bids = random_instance(random.Random(seed), kind)
    got = [(w.chain, w.index, w.bidder, w.price) for w in compute_winner(p, bids).winners]
    assert got == oracle_winners(p, bids)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 40)), max_size=15), st.booleans())
def test_market_balance_equals_live_escrow(bids, withdraw):
    m = make_market()
    p = m.listing(ListingType.OpenIncreasing)
    people = [m.account(f"b{i}", 2, 100) for i in range(4)]
    m.at(12)
    for who, raise_by in bids:
        m.call(2, people[who], "bidOpen", p.listing_id, 10 + raise_by)
        assert m.coin(2, m.dep.markets[2]) == m.world.view(2, m.dep.markets[2], "liveEscrow")
    if withdraw:
        m.at(51)
        m.call(2, m.svc, "expire", p.listing_id)
        for who in people:
            m.call(2, who, "withdraw", p.listing_id)
            assert m.coin(2, m.dep.markets[2]) == m.world.view(2, m.dep.markets[2], "liveEscrow")
    assert sum(m.coin(2, who) for who in people) + m.coin(2, m.dep.markets[2]) == 400
