"""Scripted market participants stepped by the scenario scheduler."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..crypto import bid_commitment
from ..identity import Credential
from ..market.asset import SignedVote
from ..market.auction import ListingParams, ListingType, Outcome, Phase, vote_payload
from ..simchain import TxReceipt
from ..system import Deployment


def pick_vote(mode: str, rng: random.Random) -> str | None:
    if mode == "random":
        mode = rng.choice(("commit", "commit", "commit", "abort", "silent"))
    return None if mode == "silent" else mode


@dataclass
class Agent:
    name: str
    dep: Deployment
    account: bytes = b""
    receipts: list[TxReceipt] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.account:
            self.account = self.dep.world.keyring.account(self.name)

    @property
    def world(self):
        return self.dep.world

    def call(self, chain: int, contract: bytes, method: str, *args) -> TxReceipt:
        r = self.world.call(chain, self.account, contract, method, *args)
        self.receipts.append(r)
        return r

    def sign_vote(self, lid: int, chain: int, index: int, winner: bytes, price: int, vote: str) -> bytes:
        return self.world.keyring.signer(self.account).sign(vote_payload(lid, chain, index, winner, price, vote))

    def step(self) -> None:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class BidPlan:
    value: int
    salt: bytes = b""
    index: int | None = None
    revealed: bool = False
    reveal: bool = True


@dataclass
class BidderAgent(Agent):
    chain: int = 2
    rank: int = 0
    strategy: str = "ladder"
    spread: int = 20
    rng: random.Random = field(default_factory=random.Random)
    skip_reveal: float = 0.0
    winner_vote: str = "commit"
    patience: int = 6
    give_feedback: bool = True
    score: int | None = None
    credential: Credential | None = None
    did_verifier: bytes = b""
    plans: dict[int, BidPlan] = field(default_factory=dict)
    values: dict[int, int] = field(default_factory=dict)
    done: set = field(default_factory=set)
    voted: dict[int, tuple[int, str]] = field(default_factory=dict)
    rejections: list[str] = field(default_factory=list)

    def _market(self) -> bytes:
        return self.dep.markets[self.chain]

    def _listings(self) -> list[ListingParams]:
        a = self.dep.asset_chain
        out = []
        for e in self.world.read_journal(a):
            if e.event == "ListingCreated" and self.chain in e.payload["params"].coin_chains:
                out.append(e.payload["params"])
        return out

    def valuation(self, p: ListingParams) -> int:
        v = self.values.get(p.listing_id)
        if v is None:
            v = p.initial_price + (self.rank if self.strategy == "ladder" else self.rng.randint(0, self.spread))
            self.values[p.listing_id] = v
        return v

    def step(self) -> None:
        if self.credential is not None and "did" not in self.done:
            proof = self.credential.prove(["name"])
            r = self.call(self.chain, self.dep.registries[self.chain], "submit", proof, self.did_verifier)
            if r.ok:
                self.done.add("did")
        for p in self._listings():
            self._act(p)

    def _act(self, p: ListingParams) -> None:
        w, lid, m = self.world, p.listing_id, self._market()
        c = self.chain
        if not w.view(c, m, "hasListing", lid):
            return
        t = w.chain_time(c)
        phase = w.view(c, m, "phase", lid)
        plan = self.plans.get(lid)
        if plan is None and p.start_time <= t < p.conclude_time and phase < Phase.Concluding:
            plan = self._bid(p, t)
        if (plan is not None and p.listing_type.sealed and plan.index is not None and not plan.revealed
                and plan.reveal and p.reveal_time <= t < p.conclude_time):
            r = self.call(c, m, "revealBid", lid, plan.index, plan.value, plan.salt)
            plan.revealed = r.ok
        if phase >= Phase.Concluding or t >= p.feedback_time:
            self._after_close(p)

    def _bid(self, p: ListingParams, t: int) -> BidPlan | None:
        w, lid, m, c = self.world, p.listing_id, self._market(), self.chain
        value = self.valuation(p)
        kind = p.listing_type
        if kind is ListingType.Fixed:
            r = self.call(c, m, "bidFixed", lid)
            plan = BidPlan(p.initial_price)
        elif kind is ListingType.OpenIncreasing:
            highest = max((b.value for b in w.view(c, m, "bids", lid)), default=p.initial_price - 1)
            if value <= highest:
                if self.strategy == "ladder":
                    return None
                self.plans[lid] = BidPlan(0, index=None)
                return None
            r = self.call(c, m, "bidOpen", lid, value)
            plan = BidPlan(value)
        elif kind is ListingType.OpenDecreasing:
            if w.view(c, m, "bids", lid):
                self.plans[lid] = BidPlan(0)
                return None
            price = p.scheduled_price(t)
            # wait until the schedule falls to the bidder's limit
            if price > value - self.spread:
                return None
            r = self.call(c, m, "bidOpen", lid, price)
            plan = BidPlan(price)
        else:
            if t >= p.reveal_time:
                return None
            salt = self.rng.randbytes(16)
            r = self.call(c, m, "bidSealed", lid, bid_commitment(value, salt))
            plan = BidPlan(value, salt, reveal=self.rng.random() >= self.skip_reveal)
        if not r.ok:
            self.rejections.append(r.outcome)
            self.plans[lid] = BidPlan(0)
            return None
        plan.index = r.return_value
        self.plans[lid] = plan
        return plan

    def _after_close(self, p: ListingParams) -> None:
        w, lid, m, c = self.world, p.listing_id, self._market(), self.chain
        plan = self.plans.get(lid)
        if plan is not None and plan.index is not None:
            deal = w.view(c, m, "deal", lid, plan.index)
            if deal is not None:
                self._as_winner(p, deal, plan)
        phase = w.view(c, m, "phase", lid)
        if not phase.terminal and w.chain_time(c) >= p.feedback_time:
            self.call(c, m, "expire", lid)
            phase = w.view(c, m, "phase", lid)
        if phase.terminal and w.view(c, m, "escrowOf", lid, self.account) > 0:
            self.call(c, m, "withdraw", lid)

    def _as_winner(self, p: ListingParams, deal, plan: BidPlan) -> None:
        w, lid, m, c, dep = self.world, p.listing_id, self._market(), self.chain, self.dep
        if deal.status == "pending" and lid not in self.voted:
            vote = pick_vote(self.winner_vote, self.rng)
            self.voted[lid] = (w.now, vote or "silent")
            if vote is not None:
                sig = self.sign_vote(lid, c, deal.index, deal.winner, deal.price, vote)
                self.call(c, m, "commitResult", lid, deal.index, vote, sig)
            return
        if deal.status != "settled":
            return
        a = dep.asset_chain
        outcome: Outcome | None = w.view(a, dep.asset, "outcome", lid)
        if outcome is None:
            return
        slot = next((i for i, x in enumerate(outcome.winners) if (x.chain, x.index) == (c, deal.index)), None)
        if slot is None:
            return
        owner = w.view(a, dep.asset, "slotOwner", lid, slot)
        if owner == self.account and ("asset", lid) not in self.done:
            r = self.call(a, dep.asset, "withdrawAsset", lid, slot)
            if r.ok:
                self.done.add(("asset", lid))
        elif owner is None and w.chain_time(a) < p.asset_deadline:
            settled_at = self._settled_at(lid, deal.index)
            if settled_at is not None and w.now >= settled_at + self.patience:
                r = self.call(a, dep.asset, "withdrawAsset", lid, slot, self._certificate(lid, deal.index))
                if r.ok:
                    self.done.add(("asset", lid))
        if (self.give_feedback and ("feedback", lid) not in self.done
                and p.conclude_time <= w.chain_time(c) < p.feedback_time):
            did_ref = (c, dep.registries[c]) if self.credential is not None else None
            score = self.score if self.score is not None else 1 + self.rng.randint(0, 4)
            r = self.call(c, m, "feedback", lid, deal.index, score, b"\x00" * 32, did_ref)
            if r.ok or "DuplicateFeedback" in r.outcome:
                self.done.add(("feedback", lid))

    def _settled_at(self, lid: int, index: int) -> int | None:
        for e in self.world.read_journal(self.chain):
            if e.event == "Settled" and e.payload["listing"] == lid and e.payload["index"] == index:
                return e.timestamp
        return None

    def _certificate(self, lid: int, index: int) -> list[SignedVote]:
        votes = {}
        for e in self.world.read_journal(self.chain):
            p = e.payload
            if e.event == "VoteCast" and p["listing"] == lid and p["index"] == index:
                votes[p["role"]] = SignedVote(p["voter"], p["vote"], p["signature"])
        return sorted(votes.values(), key=lambda v: v.voter)


@dataclass
class VendorAgent(Agent):
    listings: list[ListingParams] = field(default_factory=list)
    vote_mode: str = "commit"
    rng: random.Random = field(default_factory=random.Random)
    created: dict[int, ListingParams] = field(default_factory=dict)
    voted: set = field(default_factory=set)
    markers: dict[int, set] = field(default_factory=dict)

    def step(self) -> None:
        w, dep = self.world, self.dep
        a = dep.asset_chain
        while self.listings:
            p = self.listings.pop(0)
            r = self.call(a, dep.asset, "createListing", p)
            r.raise_for_revert()
            self.created[r.return_value] = p.with_id(r.return_value)
        for lid, p in sorted(self.created.items()):
            ta = w.chain_time(a)
            if "end" not in self._m(lid) and ta >= p.reveal_time:
                if self.call(a, dep.asset, "endBidding", lid).ok:
                    self._m(lid).add("end")
            if "conclude" not in self._m(lid) and ta >= p.conclude_time:
                if self.call(a, dep.asset, "requestConclusion", lid).ok:
                    self._m(lid).add("conclude")
            self._vote(p)
            # the vendor reclaims unresolved units itself rather than rely on a relayer
            if ta >= p.asset_deadline and not w.view(a, dep.asset, "resolved", lid):
                self.call(a, dep.asset, "expire", lid)
            # same for coin chains nobody bid on, where no bidder will fire the timer
            for c in p.coin_chains:
                m = dep.markets[c]
                if (w.chain_time(c) >= p.feedback_time and w.view(c, m, "hasListing", lid)
                        and not w.view(c, m, "phase", lid).terminal):
                    self.call(c, m, "expire", lid)

    def _m(self, lid: int) -> set:
        return self.markers.setdefault(lid, set())

    def _vote(self, p: ListingParams) -> None:
        w, dep, lid = self.world, self.dep, p.listing_id
        declared: Outcome | None = w.view(dep.asset_chain, dep.asset, "outcome", lid)
        if declared is None:
            return
        for win in declared.winners:
            key = (lid, win.chain, win.index)
            if key in self.voted:
                continue
            c, m = win.chain, dep.markets[win.chain]
            if not w.view(c, m, "hasListing", lid):
                continue
            deal = w.view(c, m, "deal", lid, win.index)
            if deal is None or deal.status != "pending":
                continue
            # only sign what the asset chain will honour
            if (deal.winner, deal.price) != (win.bidder, win.price):
                continue
            vote = pick_vote(self.vote_mode, self.rng)
            self.voted.add(key)
            if vote is not None:
                sig = self.sign_vote(lid, c, win.index, win.bidder, win.price, vote)
                self.call(c, m, "commitResult", lid, win.index, vote, sig)
