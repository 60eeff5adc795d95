"""Cross-chain relayer processes.

A :class:`CrossChainService` is stepped by the scheduler. Each step it

1. reads new journal entries on every chain and publishes the matching
   event-log records (deduplicated, so several relayers can publish safely);
2. polls its own subscriptions to the listing topics it serves, where
   delivery faults apply, and records what it learned;
3. issues the chain calls the current deal stage requires.

The first relayer named by a listing is its lead and acts as soon as an
action is due; the others are standbys that step in only once an action is
``takeover_delay`` seconds overdue. A :class:`MisbehaviorPlan` makes a
relayer misreport winners, stall at a stage or sign bad DID confirmations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

from .crypto import Signer
from .errors import InvalidProof
from .eventlog import IDENTITY_TOPIC, EventLog, FaultPlan, Subscription, listing_topic
from .identity import VdrStore, confirmation_payload, request_verification, verify_disclosure
from .market.asset import SignedVote
from .market.auction import (
    ListingParams,
    ListingType,
    Outcome,
    Phase,
    Winner,
    compute_winner,
    eligible,
)
from .market.reputation import Reputation, aggregate, attestation_payload, feedback_table
from .simchain import World
from .system import Deployment

MAX_RETRIES = 3


class Stage(enum.IntEnum):
    Idle = 0
    AuctionDeployed = 1
    Bidding = 2
    Revealing = 3
    OutcomeRelayed = 4
    AwaitVotes = 5
    Settled = 6
    Aborted = 7

    @property
    def terminal(self) -> bool:
        return self >= Stage.Settled


# -- misbehavior plans ----------------------------------------------------------


@dataclass(frozen=True)
class Honest:
    def describe(self) -> str:
        return "Honest"


@dataclass(frozen=True)
class MisreportWinner:
    target: tuple[int, int] | None = None  # (chain, bid index); None picks a plausible loser

    def describe(self) -> str:
        return f"MisreportWinner({self.target})"


@dataclass(frozen=True)
class StallAt:
    stage: Stage

    def describe(self) -> str:
        return f"StallAt({self.stage.name})"


@dataclass(frozen=True)
class SignBadDid:
    holder: bytes

    def describe(self) -> str:
        return "SignBadDid"


@dataclass(frozen=True)
class MisreportReputation:
    bonus: int = 5

    def describe(self) -> str:
        return f"MisreportReputation(+{self.bonus})"


MisbehaviorPlan = Honest | MisreportWinner | StallAt | SignBadDid | MisreportReputation


@dataclass
class DealState:
    listing_id: int
    params: ListingParams
    stage: Stage = Stage.Idle
    last_progress_at: int = 0
    announced: bool = False
    declared: Outcome | None = None
    # (chain, index) -> role -> SignedVote, learned from the event log
    votes: dict[tuple[int, int], dict[str, SignedVote]] = field(default_factory=dict)
    cert_seen_at: dict[tuple[int, int], int] = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "listing": self.listing_id,
            "stage": self.stage.name,
            "announced": self.announced,
            "declared": self.declared.to_json() if self.declared else None,
            "votes": sorted((k[0], k[1], r, v.vote) for k, d in self.votes.items() for r, v in d.items()),
        }


@dataclass(frozen=True)
class Action:
    tick: int
    action: str
    chain: int
    method: str
    listing: int | None
    outcome: str

    def export(self) -> dict:
        return {"tick": self.tick, "action": self.action, "chain": self.chain, "method": self.method,
                "listing": self.listing, "outcome": self.outcome}


# journal event -> event-log kind
_PUBLISH = {
    "ListingCreated": "AuctionCreationEvent",
    "BidPlaced": "BiddingAuctionEvent",
    "BidRevealed": "BiddingAuctionEvent",
    "OutcomeDeclared": "AuctionEndingEvent",
    "ListingClosed": "AuctionClosingEvent",
    "VoteCast": "AuctionResponse",
}


class CrossChainService:
    def __init__(
        self,
        name: str,
        dep: Deployment,
        log: EventLog,
        plan: MisbehaviorPlan | None = None,
        takeover_delay: int = 0,
        vdr: VdrStore | None = None,
        faults: FaultPlan | None = None,
    ):
        self.name = name
        self.dep = dep
        self.world: World = dep.world
        self.log = log
        self.plan = plan or Honest()
        self.takeover_delay = takeover_delay
        self.vdr = vdr
        self.faults = faults or FaultPlan()
        self.account = self.world.keyring.account(name)
        self.signer: Signer = self.world.keyring.signer(self.account)
        self.cursors = {c.id: 0 for c in self.world.chains}
        self.deals: dict[int, DealState] = {}
        self.subs: dict[str, Subscription] = {}
        self.trace: list[Action] = []
        self.tick = 0
        self._done: set[Any] = set()
        self._failures: dict[Any, int] = {}

    def __repr__(self) -> str:
        return f"CrossChainService({self.name}, {self.plan.describe()})"

    # -- plumbing --------------------------------------------------------------

    def _call(self, key: Any, chain: int, contract: bytes, method: str, *args: Any, listing: int | None = None):
        if key in self._done or self._failures.get(key, 0) >= MAX_RETRIES:
            return None
        r = self.world.call(chain, self.account, contract, method, *args)
        self.trace.append(Action(self.tick, "call", chain, method, listing, r.outcome))
        if r.ok:
            self._done.add(key)
        else:
            self._failures[key] = self._failures.get(key, 0) + 1
        return r

    def _stalled(self, deal: DealState) -> bool:
        return isinstance(self.plan, StallAt) and deal.stage >= self.plan.stage

    def _is_lead(self, deal: DealState) -> bool:
        return deal.params.lead_svc == self.account

    def _may_act(self, deal: DealState, deadline: int, now: int) -> bool:
        """Leads act when due; standbys only once the action is overdue by takeover_delay."""
        if self._stalled(deal):
            return False
        return self._is_lead(deal) or now >= deadline + self.takeover_delay

    # -- step ------------------------------------------------------------------

    def step(self) -> list[Action]:
        self.tick += 1
        start = len(self.trace)
        self._observe()
        self._consume()
        for lid in sorted(self.deals):
            self._drive(self.deals[lid])
        return self.trace[start:]

    def _observe(self) -> None:
        for chain in self.world.chains:
            entries = self.world.read_journal(chain.id, self.cursors[chain.id])
            for e in entries:
                self._on_entry(chain.id, e)
            self.cursors[chain.id] += len(entries)

    def _on_entry(self, chain: int, e) -> None:
        p = e.payload
        if e.event == "ListingCreated" and chain == self.dep.asset_chain:
            params: ListingParams = p["params"]
            if self.account in params.trusted_svcs and params.listing_id not in self.deals:
                self.deals[params.listing_id] = DealState(params.listing_id, params, last_progress_at=self.world.now)
                topic = listing_topic(params.listing_id)
                self.subs[topic] = self.log.subscribe(topic, self.name, self.faults)
        if e.event in _PUBLISH:
            lid = p["listing"]
            payload = {k: v for k, v in p.items() if k != "params"}
            if e.event == "ListingCreated":
                payload["params"] = p["params"]
            payload.update(chain=chain, journalIndex=e.index, timestamp=e.timestamp, event=e.event)
            self.log.append_once(listing_topic(lid), _PUBLISH[e.event], (chain, e.index), payload, self.account)
            deal = self.deals.get(lid)
            if deal is not None:
                deal.last_progress_at = self.world.now
        elif e.event == "Verified":
            payload = dict(p, chain=chain, journalIndex=e.index, timestamp=e.timestamp)
            self.log.append_once(IDENTITY_TOPIC, "DidVerifiedEvent", (chain, e.index), payload, self.account)
        elif e.event == "DidSubmitted" and p.get("verifier") == self.account:
            self._verify_submission(chain, e.contract, p["didId"])
        elif "listing" in p and p["listing"] in self.deals:
            self.deals[p["listing"]].last_progress_at = self.world.now

    def _consume(self) -> None:
        for topic in sorted(self.subs):
            sub = self.subs[topic]
            recs = self.log.poll(sub)
            top = sub.committed
            for rec in recs:
                self._on_record(rec)
                top = max(top, rec.offset + 1)
            self.log.commit(sub, top)

    def _on_record(self, rec) -> None:
        p = rec.payload
        deal = self.deals.get(p.get("listing"))
        if deal is None:
            return
        if rec.kind == "AuctionCreationEvent":
            deal.announced = True
        elif rec.kind == "AuctionEndingEvent" and deal.declared is None:
            deal.declared = Outcome.from_json(p["outcome"])
        elif rec.kind == "AuctionResponse":
            ref = (p["chain"], p["index"])
            votes = deal.votes.setdefault(ref, {})
            votes.setdefault(p["role"], SignedVote(p["voter"], p["vote"], p["signature"]))
            complete = all(v.vote == "commit" for v in votes.values()) and len(votes) == 2
            if (complete or any(v.vote == "abort" for v in votes.values())) and ref not in deal.cert_seen_at:
                deal.cert_seen_at[ref] = self.world.now

    # -- deal driving ------------------------------------------------------------

    def _drive(self, deal: DealState) -> None:
        self._refresh_stage(deal)
        if deal.stage.terminal:
            return
        p = deal.params
        lid = deal.listing_id
        w, dep = self.world, self.dep

        if deal.announced:
            for c in p.coin_chains:
                if not w.view(c, dep.markets[c], "hasListing", lid) and self._may_act(deal, p.start_time, w.chain_time(c)):
                    self._call(("start", lid, c), c, dep.markets[c], "startAuction", p, listing=lid)

        if p.listing_type.sealed:
            for c in p.coin_chains:
                t = w.chain_time(c)
                if (p.reveal_time <= t < p.conclude_time and w.view(c, dep.markets[c], "hasListing", lid)
                        and w.view(c, dep.markets[c], "phase", lid) == Phase.Bidding
                        and self._may_act(deal, p.reveal_time, t)):
                    self._call(("reveal", lid, c), c, dep.markets[c], "startReveal", lid, listing=lid)

        a = dep.asset_chain
        ta = w.chain_time(a)
        coin_due = all(w.chain_time(c) >= p.conclude_time for c in p.coin_chains)
        if (coin_due and p.conclude_time <= ta < p.feedback_time and w.view(a, dep.asset, "outcome", lid) is None
                and self._may_act(deal, p.conclude_time, ta)):
            self._call(("declare", lid), a, dep.asset, "finAuction", lid, self.decide_outcome(p), listing=lid)

        if deal.declared is not None:
            for c in p.coin_chains:
                t = w.chain_time(c)
                if (p.conclude_time <= t < p.feedback_time and w.view(c, dep.markets[c], "hasListing", lid)
                        and w.view(c, dep.markets[c], "phase", lid) < Phase.Concluding
                        and self._may_act(deal, p.conclude_time, t)):
                    self._call(("close", lid, c), c, dep.markets[c], "closeAuction", lid, deal.declared, listing=lid)
            self._forward_votes(deal)

        self._timers(deal)
        self._refresh_stage(deal)

    def _forward_votes(self, deal: DealState) -> None:
        p, lid, w, dep = deal.params, deal.listing_id, self.world, self.dep
        a = dep.asset_chain
        if w.chain_time(a) >= p.asset_deadline:
            return
        for slot, win in enumerate(deal.declared.winners):
            ref = (win.chain, win.index)
            seen = deal.cert_seen_at.get(ref)
            if seen is None or w.view(a, dep.asset, "slotOwner", lid, slot) is not None:
                continue
            if not self._may_act(deal, seen, w.now):
                continue
            votes = sorted(deal.votes[ref].values(), key=lambda v: v.voter)
            self._call(("forward", lid, slot), a, dep.asset, "recordResponse", lid, slot, votes, listing=lid)

    def _timers(self, deal: DealState) -> None:
        if self._stalled(deal):
            return
        p, lid, w, dep = deal.params, deal.listing_id, self.world, self.dep
        for c in p.coin_chains:
            if (w.chain_time(c) >= p.feedback_time and w.view(c, dep.markets[c], "hasListing", lid)
                    and not w.view(c, dep.markets[c], "phase", lid).terminal):
                self._call(("expire", lid, c), c, dep.markets[c], "expire", lid, listing=lid)
        a = dep.asset_chain
        if w.chain_time(a) >= p.asset_deadline and not w.view(a, dep.asset, "resolved", lid):
            self._call(("expire", lid, a), a, dep.asset, "expire", lid, listing=lid)

    def _refresh_stage(self, deal: DealState) -> None:
        deal.stage = max(deal.stage, deal_stage(self.world, self.dep, deal.params))

    # -- outcome -----------------------------------------------------------------

    def all_bids(self, p: ListingParams):
        bids = []
        for c in p.coin_chains:
            m = self.dep.markets[c]
            if self.world.view(c, m, "hasListing", p.listing_id):
                bids.extend(self.world.view(c, m, "bids", p.listing_id))
        return bids

    def decide_outcome(self, p: ListingParams) -> Outcome:
        honest = compute_winner(p, self.all_bids(p))
        if not isinstance(self.plan, MisreportWinner):
            return honest
        return distort_outcome(p, self.all_bids(p), honest, self.plan.target)

    # -- identity duties ------------------------------------------------------------

    def sign_did_verification(self, record) -> tuple[bool, bytes]:
        """Check a submitted proof and sign the verdict.

        Raises InvalidProof when acting honestly and the proof fails.
        """
        did = record.proof.did
        forced = isinstance(self.plan, SignBadDid) and record.holder == self.plan.holder
        if not forced:
            if self.vdr is None:
                raise InvalidProof("no registry available")
            session = request_verification(self.vdr, record.holder, self.account, did)
            if not session.accepted:
                raise InvalidProof(session.reason)
            verify_disclosure(self.vdr, record.proof, at=self.world.now)
        return True, self.signer.sign(confirmation_payload(did.did_id, did.schema_id, did.cred_def_id, True))

    def _verify_submission(self, chain: int, rsc: bytes, did_id: str) -> None:
        record = self.world.view(chain, rsc, "record", did_id)
        if record is None or record.status != "Pending":
            return
        try:
            result, sig = self.sign_did_verification(record)
        except InvalidProof:
            did = record.proof.did
            result, sig = False, self.signer.sign(confirmation_payload(did.did_id, did.schema_id, did.cred_def_id, False))
        self._call(("confirm", chain, did_id), chain, rsc, "confirm", did_id, result, sig)

    # -- fees and reputation -----------------------------------------------------

    def collect_fee(self) -> int:
        """Fees credited to this relayer by settled deals."""
        total = 0
        for c in self.dep.coin_chains:
            for e in self.world.read_journal(c):
                if e.event == "Settled" and e.payload["svc"] == self.account:
                    total += e.payload["svcFee"]
        return total

    def aggregate_reputation(self, vendor: bytes, trusted_registries) -> tuple[Reputation, bytes]:
        """Aggregate DID-backed feedback for *vendor*, sign it and publish it."""
        regs = [tuple(r) for r in trusted_registries]
        upto = {c: len(self.world.chain(c).journal) for c in self.dep.coin_chains}
        rep = aggregate(feedback_table(self.world, self.dep.coin_chains, upto), vendor, regs)
        if isinstance(self.plan, MisreportReputation):
            rep = Reputation(vendor, rep.count + 1, rep.total + self.plan.bonus)
        sig = self.signer.sign(attestation_payload(rep, regs, upto))
        self.log.append(IDENTITY_TOPIC, "ReputationAttestation",
                        {"vendor": vendor, "count": rep.count, "total": rep.total, "registries": regs,
                         "upto": sorted(upto.items()), "svc": self.account, "signature": sig},
                        self.account)
        return rep, sig

    def export_trace(self) -> list[dict]:
        return [a.export() for a in self.trace]

    def state_snapshot(self) -> dict:
        return {"name": self.name, "deals": [d.snapshot() for _, d in sorted(self.deals.items())]}


def distort_outcome(p: ListingParams, bids, honest: Outcome, target: tuple[int, int] | None) -> Outcome:
    """Declare a bid other than the rightful one as winner."""
    pool = [b for b in bids if eligible(p, b)]
    if not pool:
        return honest
    by_ref = {b.ref: b for b in pool}
    if target is not None and target in by_ref:
        pick = by_ref[target]
    else:
        winners = set(honest.refs)
        losers = [b for b in pool if b.ref not in winners]
        if not losers:
            return honest
        win_chains = {c for c, _ in winners}
        other = [b for b in losers if b.chain not in win_chains] or losers
        if p.listing_type is ListingType.Fixed or p.listing_type is ListingType.OpenDecreasing:
            pick = min(other, key=lambda b: b.key)
        else:
            pick = min(other, key=lambda b: (-b.value, b.key))
    if p.listing_type is ListingType.Fixed:
        ws = list(honest.winners[: p.num_winners - 1]) if honest.winners else []
        ws = [w for w in ws if (w.chain, w.index) != pick.ref]
        ws.append(Winner(pick.chain, pick.index, pick.bidder, p.initial_price))
        return Outcome(p.listing_id, tuple(ws))
    price = pick.value
    if p.listing_type is ListingType.SealedSecond:
        local = [b.value for b in pool if b.chain == pick.chain and b.ref != pick.ref]
        price = max([p.initial_price] + local)
        price = min(price, pick.value)
    return Outcome(p.listing_id, (Winner(pick.chain, pick.index, pick.bidder, price),))


def deal_stage(world: World, dep: Deployment, p: ListingParams) -> Stage:
    """Where a listing stands, judged from chain state alone."""
    lid = p.listing_id
    started = [world.view(c, dep.markets[c], "hasListing", lid) for c in p.coin_chains]
    a = dep.asset_chain
    outcome = world.view(a, dep.asset, "outcome", lid)
    phases = [world.view(c, dep.markets[c], "phase", lid) if s else None for c, s in zip(p.coin_chains, started)]
    # a coin chain that never started the auction has nothing left to settle
    coin_terminal = all(ph is None or ph.terminal for ph in phases)
    if outcome is not None and world.view(a, dep.asset, "resolved", lid) and coin_terminal:
        owners = [world.view(a, dep.asset, "slotOwner", lid, s) for s in range(len(outcome.winners))]
        won = any(o is not None and o != p.vendor for o in owners)
        return Stage.Settled if won else Stage.Aborted
    if outcome is not None:
        if all(ph is not None and ph >= Phase.Concluding for ph in phases):
            return Stage.AwaitVotes
        return Stage.OutcomeRelayed
    if not all(started):
        return Stage.Idle
    t = min(world.chain_time(c) for c in p.coin_chains)
    if p.listing_type.sealed and t >= p.reveal_time:
        return Stage.Revealing
    if t >= p.start_time:
        return Stage.Bidding
    return Stage.AuctionDeployed
