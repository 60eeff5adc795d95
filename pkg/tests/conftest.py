from __future__ import annotations

from dataclasses import dataclass, field

import pytest

from crossdeal.crypto import bid_commitment
from crossdeal.market.auction import ListingParams, ListingType, vote_payload
from crossdeal.system import ASSET_CHAIN, Deployment, build_world, deploy_system


@dataclass
class Market:
    """A zero-skew two-coin-chain deployment with one vendor and one relayer."""

    dep: Deployment
    vendor: bytes
    svc: bytes
    bidders: dict[int, list[bytes]] = field(default_factory=dict)
    assets: int = 0

    @property
    def world(self):
        return self.dep.world

    def at(self, t: int) -> None:
        if t > self.world.now:
            self.world.advance_time(t - self.world.now)

    def account(self, label: str, chain: int | None = None, funds: int = 1_000) -> bytes:
        a = self.world.keyring.account(label)
        if chain is not None:
            self.dep.mint(chain, a, funds)
        return a

    def listing(self, kind: ListingType = ListingType.SealedFirst, start: int = 10, reveal: int | None = None,
                conclude: int = 50, feedback: int = 100, **kw) -> ListingParams:
        if reveal is None:
            reveal = 30 if kind.sealed else start
        units = kw.get("num_winners", 1)
        asset_id = f"asset-{self.assets}"
        self.assets += 1
        w, dep = self.world, self.dep
        w.call(ASSET_CHAIN, dep.authority, dep.asset, "mintAsset", self.vendor, asset_id, units).raise_for_revert()
        kw.setdefault("initial_price", 10)
        kw.setdefault("abort_penalty", 2)
        p = ListingParams(self.vendor, ASSET_CHAIN, asset_id, kw.pop("coin_chains", dep.coin_chains),
                          kw.pop("trusted_svcs", (self.svc,)), kind, start, reveal, conclude, feedback, **kw)
        lid = w.call(ASSET_CHAIN, self.vendor, dep.asset, "createListing", p).raise_for_revert().return_value
        p = p.with_id(lid)
        for c in p.coin_chains:
            w.call(c, self.svc, dep.markets[c], "startAuction", p).raise_for_revert()
        return p

    def call(self, chain: int, who: bytes, method: str, *args):
        return self.world.call(chain, who, self.dep.markets[chain], method, *args)

    def sealed(self, chain: int, who: bytes, lid: int, value: int, salt: bytes = b"s" * 16):
        return self.call(chain, who, "bidSealed", lid, bid_commitment(value, salt))

    def vote(self, chain: int, who: bytes, lid: int, index: int, vote: str = "commit"):
        deal = self.world.view(chain, self.dep.markets[chain], "deal", lid, index)
        sig = self.world.keyring.signer(who).sign(vote_payload(lid, chain, index, deal.winner, deal.price, vote))
        return self.call(chain, who, "commitResult", lid, index, vote, sig)

    def coin(self, chain: int, who: bytes) -> int:
        return self.dep.balance(chain, who)


def make_market(seed: int = 0, coin_chains: int = 2) -> Market:
    world = build_world(coin_chains, delta=0, seed=seed)
    dep = deploy_system(world)
    kr = world.keyring
    return Market(dep, kr.account("vendor"), kr.account("svc0"))


@pytest.fixture
def market() -> Market:
    return make_market()


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def criterion(request):
    """Collects a detail string and prints one pass/fail line for an acceptance test."""
    detail: list[str] = []
    yield detail
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    name = (request.node.function.__doc__ or request.node.name).strip().splitlines()[0]
    line = f"{status}  {name}" + (f"  ({'; '.join(detail)})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
