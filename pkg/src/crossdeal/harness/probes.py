"""Invariant probes evaluated while a scenario runs and once it ends.

Step probes run after every scheduler round; final probes run after the
last round. A failing probe raises :class:`InvariantViolation` carrying the
most recent relayer actions as a diagnostic trace.
"""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..errors import InvariantViolation
from ..eventlog import EventLog
from ..market.auction import ListingParams, Outcome
from ..system import Deployment


@dataclass(frozen=True)
class Secret:
    listing: int
    chain: int
    value: int
    salt: bytes


# values below this are too common as decimal tokens to search for in text
MIN_SEARCHABLE_VALUE = 10**6


def find_leaks(text: str, secrets: Iterable[Secret]) -> list[str]:
    """Salts (hex) or distinctive bid values appearing in serialized text."""
    leaks = []
    for s in secrets:
        if s.salt and s.salt.hex() in text:
            leaks.append(f"salt of a bid on listing {s.listing} chain {s.chain}")
        if s.value >= MIN_SEARCHABLE_VALUE and re.search(rf"(?<![0-9]){s.value}(?![0-9])", text):
            leaks.append(f"value {s.value} of a bid on listing {s.listing} chain {s.chain}")
    return leaks


def structural_leaks(dep: Deployment, log: EventLog, p: ListingParams) -> list[str]:
    """Sealed bids that carry a value in storage, journal or log before reveal."""
    w, lid = dep.world, p.listing_id
    out = []
    for c in p.coin_chains:
        m = dep.markets[c]
        if w.view(c, m, "hasListing", lid):
            out += [f"stored value for bid {b.index} on chain {c}" for b in w.view(c, m, "bids", lid)
                    if b.value is not None]
        out += [f"journal {c}:{e.index} carries a value" for e in w.read_journal(c)
                if e.event == "BidPlaced" and e.payload["listing"] == lid and "value" in e.payload]
    for topic in log.topics():
        out += [f"log {topic}:{r.offset} carries a value" for r in log.records(topic)
                if r.payload.get("listing") == lid and r.payload.get("event") == "BidPlaced" and "value" in r.payload]
    return out


def listing_params(dep: Deployment) -> list[ListingParams]:
    return [e.payload["params"] for e in dep.world.read_journal(dep.asset_chain) if e.event == "ListingCreated"]


@dataclass
class ProbeSet:
    dep: Deployment
    log: EventLog
    enabled: tuple[str, ...]
    secrets: Callable[[], list[Secret]] = lambda: []
    trace: Callable[[], list] = lambda: []
    baseline: dict[int, int] = field(default_factory=dict)
    results: dict[str, str] = field(default_factory=dict)
    dt: int = 1
    hiding_scans: int = 0
    hidden_checked: set = field(default_factory=set)

    def __post_init__(self) -> None:
        d = self.dep
        self.baseline = {c: d.supply(c) for c in sorted(d.coins)}

    def fail(self, probe: str, detail: str) -> None:
        self.results[probe] = f"fail: {detail}"
        raise InvariantViolation(probe, detail, self.trace()[-20:])

    def passed(self, probe: str) -> None:
        self.results.setdefault(probe, "pass")

    # -- every round -----------------------------------------------------------

    def step(self) -> None:
        if "conservation" in self.enabled:
            self.conservation()
        if "hiding" in self.enabled:
            self.hiding()

    def conservation(self) -> None:
        d, w = self.dep, self.dep.world
        for c, base in self.baseline.items():
            now = d.supply(c)
            if now != base:
                self.fail("conservation", f"chain {c} supply {now} != {base}")
        for c, m in d.markets.items():
            bal, live = d.balance(c, m), w.view(c, m, "liveEscrow")
            if bal != live:
                self.fail("conservation", f"chain {c} market holds {bal} but live escrow is {live}")
        self.passed("conservation")

    def hiding(self) -> None:
        """Scan everything public at the last round before any chain reaches a reveal time."""
        w = self.dep.world
        for p in listing_params(self.dep):
            if not p.listing_type.sealed or p.listing_id in self.hidden_checked:
                continue
            if max(w.chain_time(c) for c in p.coin_chains) >= p.reveal_time:
                self.hidden_checked.add(p.listing_id)
                continue
            # the next round may already open the reveal window on some chain
            if max(w.chain_time(c) for c in p.coin_chains) + self.dt < p.reveal_time:
                continue
            self.hidden_checked.add(p.listing_id)
            self.scan_hidden(p)
        self.passed("hiding")

    def scan_hidden(self, p: ListingParams) -> None:
        w = self.dep.world
        text = w.serialize() + w.export_journal() + self.log.export()
        secrets = [s for s in self.secrets() if s.listing == p.listing_id]
        leaks = find_leaks(text, secrets) + structural_leaks(self.dep, self.log, p)
        self.hiding_scans += 1
        if leaks:
            self.fail("hiding", "; ".join(leaks[:5]))

    # -- at the end ------------------------------------------------------------

    def final(self, liveness_expected: bool, audit_expect_clean: bool, claims: list) -> None:
        if "conservation" in self.enabled:
            self.conservation()
        if "atomicity" in self.enabled:
            for p in listing_params(self.dep):
                self.atomicity(p)
            self.passed("atomicity")
        if "liveness" in self.enabled and liveness_expected:
            for p in listing_params(self.dep):
                self.liveness(p)
            self.passed("liveness")
        if "audit" in self.enabled:
            if audit_expect_clean and claims:
                self.fail("audit", f"{len(claims)} claims in a fault-free honest run")
            self.passed("audit")

    def atomicity(self, p: ListingParams) -> None:
        d, w = self.dep, self.dep.world
        lid, a = p.listing_id, d.asset_chain
        if not w.view(a, d.asset, "resolved", lid):
            self.fail("atomicity", f"listing {lid}: asset side never resolved")
        outcome: Outcome = w.view(a, d.asset, "outcome", lid)
        started = [c for c in p.coin_chains if w.view(c, d.markets[c], "hasListing", lid)]
        for c in started:
            if not w.view(c, d.markets[c], "phase", lid).terminal:
                self.fail("atomicity", f"listing {lid}: chain {c} not terminal")
        settled = self._events("Settled", lid, p.coin_chains)
        settled_refs = {(e.payload["chain"], e.payload["index"]): e for e in settled}
        winner_refs = set()
        for slot, win in enumerate(outcome.winners):
            ref = (win.chain, win.index)
            winner_refs.add(ref)
            owner = w.view(a, d.asset, "slotOwner", lid, slot)
            e = settled_refs.get(ref)
            if e is not None:
                if owner != win.bidder:
                    self.fail("atomicity", f"listing {lid} slot {slot}: coins settled but asset went to vendor")
                pay = e.payload
                if pay["vendorNet"] + pay["svcFee"] + pay["govFee"] != pay["price"] or pay["price"] != win.price:
                    self.fail("atomicity", f"listing {lid} slot {slot}: payout does not add up to the price")
                if pay["vendorNet"] and not self._paid(win.chain, e.tx_id, p.vendor, pay["vendorNet"]):
                    self.fail("atomicity", f"listing {lid} slot {slot}: vendor not paid")
            elif owner != p.vendor:
                self.fail("atomicity", f"listing {lid} slot {slot}: asset left vendor without settlement")
        if set(settled_refs) - winner_refs:
            self.fail("atomicity", f"listing {lid}: settlement for a bid that was not declared")
        for c in started:
            self._bidder_nets(p, c, settled_refs)

    def _bidder_nets(self, p: ListingParams, c: int, settled_refs: dict) -> None:
        w, m, lid = self.dep.world, self.dep.markets[c], p.listing_id
        paid_in: dict[bytes, int] = defaultdict(int)
        paid_out: dict[bytes, int] = defaultdict(int)
        failures: dict[bytes, int] = defaultdict(int)
        price: dict[bytes, int] = defaultdict(int)
        for e in w.read_journal(c):
            q = e.payload
            if q.get("listing") != lid:
                continue
            if e.event == "BidPlaced":
                paid_in[q["bidder"]] += q["escrowed"]
            elif e.event == "BidRevealed":
                paid_in[q["bidder"]] += q["value"] - p.abort_penalty
            elif e.event == "Withdrawn":
                paid_out[q["bidder"]] += q["amount"]
        for b in w.view(c, m, "bids", lid):
            if p.listing_type.sealed and not b.revealed:
                failures[b.bidder] += 1
        for deal in w.view(c, m, "deals", lid):
            if (c, deal.index) in settled_refs:
                price[deal.winner] += deal.price
            elif deal.winner_vote != "commit":
                failures[deal.winner] += 1
        for bidder in paid_in:
            left = w.view(c, m, "escrowOf", lid, bidder)
            net = paid_out[bidder] + left - paid_in[bidder] + price[bidder]
            lost = -net
            if lost == 0:
                continue
            if lost < 0 or failures[bidder] == 0 or lost > failures[bidder] * p.abort_penalty or lost % max(1, p.abort_penalty):
                label = w.keyring.label(bidder)
                self.fail("atomicity", f"listing {lid} chain {c}: {label} lost {lost} with {failures[bidder]} failures")

    def _events(self, name: str, lid: int, chains: Iterable[int]):
        w = self.dep.world
        return [e for c in chains for e in w.read_journal(c) if e.event == name and e.payload.get("listing") == lid]

    def _paid(self, chain: int, tx_id, to: bytes, amount: int) -> bool:
        return any(e.tx_id == tx_id and e.event == "CoinTransfer" and e.payload["to"] == to
                   and e.payload["amount"] == amount for e in self.dep.world.read_journal(chain))

    def liveness(self, p: ListingParams) -> None:
        """Coin side terminal by the feedback timer, asset side by its deadline."""
        d, w, lid, dt = self.dep, self.dep.world, p.listing_id, self.dt
        for c in p.coin_chains:
            if not w.view(c, d.markets[c], "hasListing", lid):
                continue
            fin = [e for e in w.read_journal(c) if e.event == "ListingFinalized" and e.payload["listing"] == lid]
            if not fin or fin[0].timestamp > p.feedback_time + dt:
                self.fail("liveness", f"listing {lid} chain {c} not terminal by feedback time {p.feedback_time}")
        a = d.asset_chain
        marks = [e.timestamp for e in w.read_journal(a)
                 if e.event in ("AssetSettled", "AssetReturned") and e.payload["listing"] == lid]
        if not w.view(a, d.asset, "resolved", lid) or (marks and max(marks) > p.asset_deadline + dt):
            self.fail("liveness", f"listing {lid}: asset side not resolved by {p.asset_deadline}")


def deal_outcomes(dep: Deployment) -> dict[int, str]:
    """Settled/Aborted per listing, judged from the asset chain's slots."""
    w, a = dep.world, dep.asset_chain
    out = {}
    for p in listing_params(dep):
        outcome = w.view(a, dep.asset, "outcome", p.listing_id)
        if outcome is None or not w.view(a, dep.asset, "resolved", p.listing_id):
            out[p.listing_id] = "Open"
            continue
        owners = [w.view(a, dep.asset, "slotOwner", p.listing_id, s) for s in range(len(outcome.winners))]
        out[p.listing_id] = "Settled" if any(o not in (None, p.vendor) for o in owners) else "Aborted"
    return out


