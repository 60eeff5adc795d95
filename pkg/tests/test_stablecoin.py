from __future__ import annotations

import random

from crossdeal.simchain import World


def coin_world():
    w = World(1, 0)
    auth = w.keyring.account("authority")
    coin = w.deploy(0, auth, "coin")
    return w, auth, coin


def bal(w, coin, who):
    return w.view(0, coin, "balanceOf", who)


def test_mint_and_supply():
    w, auth, coin = coin_world()
    a, b = w.keyring.account("a"), w.keyring.account("b")
    w.call(0, auth, coin, "mint", a, 100).raise_for_revert()
    assert bal(w, coin, a) == 100
    assert w.view(0, coin, "totalSupply") == 100
    w.call(0, auth, coin, "mint", a, 0).raise_for_revert()
    assert w.view(0, coin, "totalSupply") == 100
    w2, auth2, coin2 = coin_world()
    w2.call(0, auth2, coin2, "mint", a, 60)
    w2.call(0, auth2, coin2, "mint", b, 40)
    assert w2.view(0, coin2, "totalSupply") == 100


def test_only_authority_mints():
    w, auth, coin = coin_world()
    a = w.keyring.account("a")
    r = w.call(0, a, coin, "mint", a, 5)
    assert "Unauthorized" in r.outcome
    assert bal(w, coin, a) == 0


def test_transfer_and_insufficient_funds():
    w, auth, coin = coin_world()
    a, b = w.keyring.account("a"), w.keyring.account("b")
    w.call(0, auth, coin, "mint", a, 100)
    r = w.call(0, a, coin, "transfer", b, 30)
    assert r.ok and any(e.event == "CoinTransfer" for e in r.events)
    assert (bal(w, coin, a), bal(w, coin, b)) == (70, 30)
    r = w.call(0, a, coin, "transfer", b, 200)
    assert "InsufficientFunds" in r.outcome
    assert (bal(w, coin, a), bal(w, coin, b)) == (70, 30)


def test_unknown_account_has_zero():
    w, auth, coin = coin_world()
    assert bal(w, coin, b"\x42" * 20) == 0


def test_negative_or_bool_amounts_rejected():
    w, auth, coin = coin_world()
    a, b = w.keyring.account("a"), w.keyring.account("b")
    w.call(0, auth, coin, "mint", a, 10)
    assert not w.call(0, a, coin, "transfer", b, -1).ok
    assert not w.call(0, a, coin, "transfer", b, True).ok
    assert bal(w, coin, a) == 10


def test_transfer_from_needs_operator():
    w, auth, coin = coin_world()
    a, op, b = (w.keyring.account(x) for x in "a op b".split())
    w.call(0, auth, coin, "mint", a, 50)
    assert "Unauthorized" in w.call(0, op, coin, "transferFrom", a, b, 5).outcome
    w.call(0, a, coin, "approveOperator", op)
    assert w.call(0, op, coin, "transferFrom", a, b, 5).ok
    w.call(0, a, coin, "approveOperator", op, False)
    assert not w.call(0, op, coin, "transferFrom", a, b, 5).ok
    w.call(0, auth, coin, "addOperator", op)
    assert w.call(0, op, coin, "transferFrom", a, b, 5).ok
    assert bal(w, coin, b) == 10


def test_random_transfers_conserve_supply():
    # brute-force summation over 1000 random transfers, some of them failing
    w, auth, coin = coin_world()
    rng = random.Random(5)
    people = [w.keyring.account(f"p{i}") for i in range(8)]
    for p in people:
        w.call(0, auth, coin, "mint", p, rng.randint(0, 200))
    supply = w.view(0, coin, "totalSupply")
    for _ in range(1000):
        src, dst = rng.choice(people), rng.choice(people)
        w.call(0, src, coin, "transfer", dst, rng.randint(0, 250))
    assert sum(bal(w, coin, p) for p in people) == supply
    assert w.view(0, coin, "totalSupply") == supply
    assert all(bal(w, coin, p) >= 0 for p in people)
