"""Auditors, claims and the governance contract.

Auditors are read-only scanners over chain journals, the event log and the
identity registry. They look for three kinds of relayer misbehavior:

* an outcome that is not the one the bid books dictate (``UnfairConclusion``);
* a required relayer action that is provably overdue (``Stall``);
* a signed DID confirmation or reputation figure that does not hold up on
  recomputation (``BadDidOrScore``).

Each finding becomes a :class:`Claim` whose evidence points at journal and
log coordinates together with content hashes. The governance contract on
chain 0 escrows the auditor's deposit and records the verdict, which
:func:`evaluate_claim` computes by re-fetching the cited records and
re-running the check. The verdict depends on the evidence and on public
state only, never on who submitted the claim.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

from .crypto import hexdigest, verify_payload
from .errors import DuplicateClaim, InsufficientFunds, InvalidParams, Unauthorized, UnknownClaim
from .eventlog import IDENTITY_TOPIC, EventLog
from .identity import VdrStore, proof_valid
from .market.auction import ListingParams, Outcome, compute_winner
from .market.reputation import Reputation, aggregate, attestation_payload, feedback_table
from .simchain import CallContext, Contract, World, external, register_kind, view
from .system import Deployment


class MisbehaviorKind(enum.Enum):
    UnfairConclusion = "unfair-conclusion"
    Stall = "stall"
    BadDidOrScore = "bad-did-or-score"


class Verdict(enum.Enum):
    Pending = "pending"
    Valid = "valid"
    Invalid = "invalid"


@dataclass(frozen=True)
class JournalRef:
    chain: int
    index: int
    hash: str


@dataclass(frozen=True)
class LogRef:
    topic: str
    offset: int
    hash: str


@dataclass(frozen=True)
class Evidence:
    listing: int | None = None
    journal: tuple[JournalRef, ...] = ()
    log: tuple[LogRef, ...] = ()
    # scan-specific facts, e.g. which action was overdue and its deadline
    facts: tuple[tuple[str, Any], ...] = ()

    def fact(self, name: str, default: Any = None) -> Any:
        return dict(self.facts).get(name, default)

    def digest(self) -> str:
        return hexdigest(self)


@dataclass(frozen=True)
class Claim:
    claimant: bytes
    accused: bytes
    kind: MisbehaviorKind
    evidence: Evidence

    @property
    def key(self) -> tuple[bytes, str]:
        return (self.accused, self.evidence.digest())


@dataclass(frozen=True)
class ClaimRecord:
    claim_id: int
    claim: Claim
    deposit: int
    verdict: Verdict = Verdict.Pending


DEFAULT_PARAMS = {"deposit": 10, "penalty": 1, "initial_score": 100, "stall_timeout": -1}


@register_kind("governance")
class GovernanceContract(Contract):
    """Parameter store, relayer reputation ledger and claim registry."""

    def setup(self, ctx: CallContext, coin: bytes, treasury: bytes, authority: bytes | None = None) -> None:
        self.storage["coin"] = coin
        self.storage["treasury"] = treasury
        self.storage["authority"] = authority if authority is not None else ctx.caller
        for k, v in DEFAULT_PARAMS.items():
            self.storage[("param", k)] = v
        self.storage["nclaims"] = 0

    def _auth(self, ctx: CallContext) -> None:
        if ctx.caller != self.storage["authority"]:
            raise Unauthorized("governance authority only")

    @external
    def setParam(self, ctx: CallContext, name: str, value: int) -> None:
        """Stand-in for a governance vote: the authority sets a parameter."""
        self._auth(ctx)
        self.storage[("param", name)] = value
        ctx.emit("ParamSet", name=name, value=value)

    @external
    def registerSvc(self, ctx: CallContext, svc: bytes) -> None:
        self._auth(ctx)
        if ("score", svc) not in self.storage:
            self.storage[("score", svc)] = self.storage[("param", "initial_score")]
            ctx.emit("SvcRegistered", svc=svc)

    @external
    def submitClaim(self, ctx: CallContext, claim: Claim) -> int:
        if claim.claimant != ctx.caller:
            raise Unauthorized("claims are submitted by their claimant")
        if ("claimkey",) + claim.key in self.storage:
            raise DuplicateClaim("same accused and evidence already claimed")
        deposit = self.storage[("param", "deposit")]
        coin = self.storage["coin"]
        have = ctx.call(coin, "balanceOf", ctx.caller)
        if have < deposit:
            raise InsufficientFunds(f"deposit {deposit} exceeds balance {have}")
        ctx.call(coin, "transferFrom", ctx.caller, ctx.this, deposit)
        cid = self.storage["nclaims"]
        self.storage["nclaims"] = cid + 1
        self.storage[("claim", cid)] = ClaimRecord(cid, claim, deposit)
        self.storage[("claimkey",) + claim.key] = cid
        ctx.emit("ClaimSubmitted", claimId=cid, claimant=claim.claimant, accused=claim.accused,
                 kind=claim.kind.name, evidenceHash=claim.evidence.digest(), deposit=deposit)
        return cid

    @external
    def adjudicate(self, ctx: CallContext, claim_id: int, verdict: Verdict) -> Verdict:
        """Record the verdict computed by the evidence oracle (authority only)."""
        self._auth(ctx)
        rec = self.storage.get(("claim", claim_id))
        if rec is None:
            raise UnknownClaim(str(claim_id))
        if rec.verdict is not Verdict.Pending:
            return rec.verdict
        if verdict is Verdict.Pending:
            raise InvalidParams("verdict must be Valid or Invalid")
        coin = self.storage["coin"]
        if verdict is Verdict.Valid:
            key = ("score", rec.claim.accused)
            score = self.storage.get(key, self.storage[("param", "initial_score")])
            self.storage[key] = score - self.storage[("param", "penalty")]
            ctx.call(coin, "transfer", rec.claim.claimant, rec.deposit)
        else:
            ctx.call(coin, "transfer", self.storage["treasury"], rec.deposit)
        self.storage[("claim", claim_id)] = ClaimRecord(rec.claim_id, rec.claim, rec.deposit, verdict)
        ctx.emit("ClaimAdjudicated", claimId=claim_id, accused=rec.claim.accused, kind=rec.claim.kind.name,
                 verdict=verdict.name)
        return verdict

    @view
    def param(self, ctx: CallContext, name: str) -> int:
        return self.storage[("param", name)]

    @view
    def score(self, ctx: CallContext, svc: bytes) -> int:
        return self.storage.get(("score", svc), self.storage[("param", "initial_score")])

    @view
    def claim(self, ctx: CallContext, claim_id: int) -> ClaimRecord:
        rec = self.storage.get(("claim", claim_id))
        if rec is None:
            raise UnknownClaim(str(claim_id))
        return rec

    @view
    def claims(self, ctx: CallContext) -> list[ClaimRecord]:
        return [self.storage[("claim", i)] for i in range(self.storage["nclaims"])]


# -- shared checks ------------------------------------------------------------


def journal_ref(world: World, chain: int, index: int) -> JournalRef:
    return JournalRef(chain, index, world.read_journal(chain, index)[0].content_hash())


def log_ref(log: EventLog, topic: str, offset: int) -> LogRef:
    return LogRef(topic, offset, log.get(topic, offset).content_hash())


def _entries(world: World, chain: int, event: str, listing: int | None = None):
    for e in world.read_journal(chain):
        if e.event == event and (listing is None or e.payload.get("listing") == listing):
            yield e


def listing_params(world: World, dep: Deployment, lid: int) -> ListingParams | None:
    for e in _entries(world, dep.asset_chain, "ListingCreated", lid):
        return e.payload["params"]
    return None


def all_bids(world: World, dep: Deployment, p: ListingParams):
    bids = []
    for c in p.coin_chains:
        m = dep.markets[c]
        if world.view(c, m, "hasListing", p.listing_id):
            bids.extend(world.view(c, m, "bids", p.listing_id))
    return bids


def stall_timeout(world: World, dep: Deployment, p: ListingParams) -> int:
    t = world.view(dep.gov_chain, dep.governance, "param", "stall_timeout")
    return t if t >= 0 else (p.feedback_time - p.conclude_time) // 2


def _bid_entry(world: World, chain: int, lid: int, index: int):
    found = None
    for e in world.read_journal(chain):
        if e.payload.get("listing") == lid and e.payload.get("index") == index and e.event in ("BidPlaced", "BidRevealed"):
            found = e
    return found


def unfair_findings(world: World, dep: Deployment, lid: int) -> list[tuple[bytes, list[JournalRef]]]:
    """(accused, evidence refs) for each relayer that declared or relayed a wrong outcome."""
    p = listing_params(world, dep, lid)
    if p is None:
        return []
    correct = compute_winner(p, all_bids(world, dep, p))
    out: list[tuple[bytes, list[JournalRef]]] = []
    accused: set[bytes] = set()
    declared = None
    for e in _entries(world, dep.asset_chain, "OutcomeDeclared", lid):
        declared = Outcome.from_json(e.payload["outcome"])
        if declared != correct:
            refs = [journal_ref(world, dep.asset_chain, e.index)]
            for w in correct.winners:
                be = _bid_entry(world, w.chain, lid, w.index)
                if be is not None:
                    refs.append(journal_ref(world, w.chain, be.index))
            out.append((e.payload["declaredBy"], refs))
            accused.add(e.payload["declaredBy"])
    for c in p.coin_chains:
        for e in _entries(world, c, "ListingClosed", lid):
            relayed = Outcome.from_json(e.payload["outcome"])
            who = e.payload["closedBy"]
            if relayed != correct and who not in accused:
                out.append((who, [journal_ref(world, c, e.index)]))
                accused.add(who)
    return out


def required_actions(world: World, dep: Deployment, p: ListingParams) -> list[tuple[str, int, int, int | None]]:
    """(action, chain, deadline, timestamp-or-None) for every relayer duty of a listing.

    Deadlines and timestamps are in the acting chain's clock; comparing them
    across chains is covered by the 2-delta slack applied by callers.
    """
    lid = p.listing_id
    a = dep.asset_chain
    duties: list[tuple[str, int, int, int | None]] = []
    for c in p.coin_chains:
        first = next(_entries(world, c, "AuctionStarted", lid), None)
        duties.append(("AuctionStarted", c, p.start_time, first.timestamp if first else None))
    decl = next(_entries(world, a, "OutcomeDeclared", lid), None)
    duties.append(("OutcomeDeclared", a, p.conclude_time, decl.timestamp if decl else None))
    if decl is not None:
        for c in p.coin_chains:
            first = next(_entries(world, c, "ListingClosed", lid), None)
            duties.append(("ListingClosed", c, p.conclude_time, first.timestamp if first else None))
        outcome = Outcome.from_json(decl.payload["outcome"])
        settled = {e.payload["slot"]: e.timestamp for e in _entries(world, a, "AssetSettled", lid)}
        for slot, w in enumerate(outcome.winners):
            s = next((e for e in _entries(world, w.chain, "Settled", lid) if e.payload["index"] == w.index), None)
            if s is not None:
                duties.append((f"AssetSettled:{slot}", a, s.timestamp, settled.get(slot)))
    return duties


def overdue(world: World, dep: Deployment, p: ListingParams, now: int | None = None):
    """First required action that missed deadline + timeout + 2*delta, if any."""
    now = world.now if now is None else now
    slack = stall_timeout(world, dep, p) + 2 * world.delta
    for action, chain, deadline, ts in required_actions(world, dep, p):
        limit = deadline + slack
        if (ts is None and now > limit) or (ts is not None and ts > limit):
            return action, chain, deadline, ts, limit
    return None


def bad_did_record(world: World, vdr: VdrStore, chain: int, index: int):
    """The Verified journal entry at (chain, index) and whether its proof fails re-verification."""
    entries = world.read_journal(chain, index)
    if not entries or entries[0].event != "Verified":
        return None, False
    e = entries[0]
    rec = world.view(chain, e.contract, "record", e.payload["didId"])
    if rec is None:
        return e, False
    # revocations count only if they were in force a full delta before the signing tx
    return e, not proof_valid(vdr, rec.proof, at=e.timestamp - world.delta)


def recompute_attestation(world: World, dep: Deployment, payload: dict) -> Reputation:
    upto = dict(payload["upto"])
    rows = feedback_table(world, dep.coin_chains, upto)
    return aggregate(rows, payload["vendor"], payload["registries"])


# -- the evidence oracle -----------------------------------------------------------


def evaluate_claim(world: World, dep: Deployment, log: EventLog, vdr: VdrStore | None, claim: Claim) -> Verdict:
    """Re-fetch the cited records and re-run the relevant check."""
    ev = claim.evidence
    for ref in ev.journal:
        entries = world.read_journal(ref.chain, ref.index) if 0 <= ref.chain < len(world.chains) else []
        if not entries or entries[0].content_hash() != ref.hash:
            return Verdict.Invalid
    for ref in ev.log:
        rec = log.get(ref.topic, ref.offset)
        if rec is None or rec.content_hash() != ref.hash:
            return Verdict.Invalid
    try:
        ok = _KIND_CHECKS[claim.kind](world, dep, log, vdr, claim)
    except (KeyError, IndexError, TypeError, ValueError):
        ok = False
    return Verdict.Valid if ok else Verdict.Invalid


def _check_unfair(world, dep, log, vdr, claim: Claim) -> bool:
    lid = claim.evidence.listing
    if lid is None:
        return False
    cited = {(r.chain, r.index) for r in claim.evidence.journal}
    for who, refs in unfair_findings(world, dep, lid):
        if who == claim.accused and (refs[0].chain, refs[0].index) in cited:
            return True
    return False


def _check_stall(world, dep, log, vdr, claim: Claim) -> bool:
    lid = claim.evidence.listing
    p = listing_params(world, dep, lid) if lid is not None else None
    if p is None or claim.accused != p.lead_svc:
        return False
    if unfair_findings(world, dep, lid):
        return False
    found = overdue(world, dep, p)
    if found is None:
        return False
    action, chain, deadline, _, _ = found
    return claim.evidence.fact("action") == action and claim.evidence.fact("deadline") == deadline


def _check_bad_did(world, dep, log, vdr, claim: Claim) -> bool:
    ev = claim.evidence
    if ev.fact("what") == "reputation":
        ref = ev.log[0]
        rec = log.get(ref.topic, ref.offset)
        p = rec.payload
        if rec.kind != "ReputationAttestation" or p["svc"] != claim.accused:
            return False
        stated = Reputation(p["vendor"], p["count"], p["total"])
        if not verify_payload(world.keyring, claim.accused, attestation_payload(stated, p["registries"], dict(p["upto"])),
                              p["signature"]):
            return False
        return recompute_attestation(world, dep, p) != stated
    if vdr is None:
        return False
    ref = ev.journal[0]
    entry, bad = bad_did_record(world, vdr, ref.chain, ref.index)
    return entry is not None and bad and entry.payload["verifier"] == claim.accused


_KIND_CHECKS = {
    MisbehaviorKind.UnfairConclusion: _check_unfair,
    MisbehaviorKind.Stall: _check_stall,
    MisbehaviorKind.BadDidOrScore: _check_bad_did,
}


# -- auditors -------------------------------------------------------------------


@dataclass
class Auditor:
    name: str
    dep: Deployment
    log: EventLog
    vdr: VdrStore | None = None
    account: bytes = b""
    submitted: dict[Any, int] = field(default_factory=dict)
    rejected: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.account:
            self.account = self.dep.world.keyring.account(self.name)

    @property
    def world(self) -> World:
        return self.dep.world

    def _claim(self, accused: bytes, kind: MisbehaviorKind, evidence: Evidence) -> Claim:
        return Claim(self.account, accused, kind, evidence)

    def listings(self) -> list[int]:
        return [e.payload["listing"] for e in _entries(self.world, self.dep.asset_chain, "ListingCreated")]

    def scan_unfair_conclusion(self, lid: int) -> list[Claim]:
        claims = []
        for who, refs in unfair_findings(self.world, self.dep, lid):
            claims.append(self._claim(who, MisbehaviorKind.UnfairConclusion, Evidence(lid, tuple(refs))))
        return claims

    def scan_stall(self, lid: int) -> Claim | None:
        w, dep = self.world, self.dep
        p = listing_params(w, dep, lid)
        if p is None or unfair_findings(w, dep, lid):
            return None
        found = overdue(w, dep, p)
        if found is None:
            return None
        action, chain, deadline, ts, limit = found
        created = next(_entries(w, dep.asset_chain, "ListingCreated", lid))
        refs = (journal_ref(w, dep.asset_chain, created.index),)
        facts = (("action", action), ("chain", chain), ("deadline", deadline), ("limit", limit),
                 ("observed", ts if ts is not None else -1))
        return self._claim(p.lead_svc, MisbehaviorKind.Stall, Evidence(lid, refs, (), facts))

    def scan_bad_did(self) -> list[Claim]:
        claims = []
        w = self.world
        for rec in self.log.records(IDENTITY_TOPIC):
            p = rec.payload
            if rec.kind == "DidVerifiedEvent" and self.vdr is not None:
                entry, bad = bad_did_record(w, self.vdr, p["chain"], p["journalIndex"])
                if entry is not None and bad:
                    ev = Evidence(None, (journal_ref(w, p["chain"], p["journalIndex"]),),
                                  (log_ref(self.log, IDENTITY_TOPIC, rec.offset),), (("what", "did"),))
                    claims.append(self._claim(entry.payload["verifier"], MisbehaviorKind.BadDidOrScore, ev))
            elif rec.kind == "ReputationAttestation":
                stated = Reputation(p["vendor"], p["count"], p["total"])
                if recompute_attestation(w, self.dep, p) != stated:
                    recomputed = recompute_attestation(w, self.dep, p)
                    ev = Evidence(None, (), (log_ref(self.log, IDENTITY_TOPIC, rec.offset),),
                                  (("what", "reputation"), ("recount", recomputed.count), ("retotal", recomputed.total)))
                    claims.append(self._claim(p["svc"], MisbehaviorKind.BadDidOrScore, ev))
        return claims

    def scan(self) -> list[Claim]:
        """One pass over every listing and identity record; returns claims not yet filed."""
        found: list[tuple[Any, Claim]] = []
        for lid in self.listings():
            for c in self.scan_unfair_conclusion(lid):
                found.append((("unfair", lid, c.accused), c))
            s = self.scan_stall(lid)
            if s is not None:
                found.append((("stall", lid, s.accused), s))
        for c in self.scan_bad_did():
            found.append((("bad", c.evidence.digest()), c))
        return [c for k, c in found if k not in self.submitted]

    def step(self) -> list[int]:
        ids = []
        for claim in self.scan():
            key = self._key(claim)
            r = self.world.call(self.dep.gov_chain, self.account, self.dep.governance, "submitClaim", claim)
            if r.ok:
                self.submitted[key] = r.return_value
                ids.append(r.return_value)
            elif "DuplicateClaim" in r.outcome:
                self.submitted[key] = -1
            else:
                self.rejected.append(r.outcome)
        return ids

    @staticmethod
    def _key(claim: Claim):
        if claim.kind is MisbehaviorKind.UnfairConclusion:
            return ("unfair", claim.evidence.listing, claim.accused)
        if claim.kind is MisbehaviorKind.Stall:
            return ("stall", claim.evidence.listing, claim.accused)
        return ("bad", claim.evidence.digest())


def adjudicate_pending(dep: Deployment, log: EventLog, vdr: VdrStore | None) -> list[tuple[int, Verdict]]:
    """Governance authority: evaluate and record every pending claim."""
    w = dep.world
    out = []
    for rec in w.view(dep.gov_chain, dep.governance, "claims"):
        if rec.verdict is Verdict.Pending:
            verdict = evaluate_claim(w, dep, log, vdr, rec.claim)
            w.call(dep.gov_chain, dep.authority, dep.governance, "adjudicate", rec.claim_id, verdict).raise_for_revert()
            out.append((rec.claim_id, verdict))
    return out


def claims_report(world: World, dep: Deployment) -> list[dict]:
    kr = world.keyring
    return [
        {"claimId": r.claim_id, "accused": kr.label(r.claim.accused), "kind": r.claim.kind.name, "verdict": r.verdict.name}
        for r in world.view(dep.gov_chain, dep.governance, "claims")
    ]
