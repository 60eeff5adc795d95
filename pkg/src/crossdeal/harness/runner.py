"""Deterministic round-robin scenario runner."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from ..audit import Auditor, adjudicate_pending, claims_report
from ..ccsvc import CrossChainService, Honest, SignBadDid
from ..crypto import hexdigest
from ..errors import InvariantViolation
from ..eventlog import EventLog
from ..identity import DisclosureProof, IdentityFixture, VdrStore, setup_identity
from ..market.auction import ListingParams
from ..simchain import GasSchedule, World
from ..system import ASSET_CHAIN, Deployment, build_world, deploy_system
from .agents import BidderAgent, VendorAgent
from .probes import ProbeSet, Secret, deal_outcomes
from .scenario import ListingSpec, ScenarioConfig

AUDITOR_FUNDS = 1_000


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    world: World
    dep: Deployment
    log: EventLog
    vdr: VdrStore
    svcs: list[CrossChainService]
    bidders: list[BidderAgent]
    vendor: VendorAgent
    auditors: list[Auditor]
    identity: IdentityFixture | None
    rounds: int = 0
    probes: dict[str, str] = field(default_factory=dict)
    claims: list[dict] = field(default_factory=list)
    outcomes: dict[int, str] = field(default_factory=dict)
    violation: InvariantViolation | None = None
    hiding_scans: int = 0
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violation is None

    def summary(self) -> dict[str, Any]:
        return {
            "seed": self.config.seed,
            "rounds": self.rounds,
            "world": self.world.digest(),
            "log": self.log.digest(),
            "outcomes": {str(k): v for k, v in sorted(self.outcomes.items())},
            "claims": self.claims,
            "probes": dict(sorted(self.probes.items())),
        }

    def digest(self) -> str:
        return hexdigest(self.summary())

    def receipts(self):
        for agent in [self.vendor, *self.bidders]:
            yield from agent.receipts


def _forge(proof: DisclosureProof) -> DisclosureProof:
    # swap the revealed value while keeping the original salt and signature
    name, value, salt = proof.revealed[0]
    return DisclosureProof(proof.did, ((name, value + "-forged", salt),) + proof.revealed[1:])


class ForgingBidder(BidderAgent):
    """Submits a proof whose revealed attribute does not open its commitment."""

    def step(self) -> None:
        if self.credential is not None and "did" not in self.done:
            proof = _forge(self.credential.prove(["name"]))
            r = self.call(self.chain, self.dep.registries[self.chain], "submit", proof, self.did_verifier)
            if r.ok:
                self.done.add("did")
        for p in self._listings():
            self._act(p)


def build_params(spec: ListingSpec, dep: Deployment, vendor: bytes, asset_id: str, svcs: tuple[bytes, ...],
                 cred_def: str | None) -> ListingParams:
    return ListingParams(
        vendor=vendor,
        asset_chain=ASSET_CHAIN,
        asset_id=asset_id,
        coin_chains=spec.coin_chains or dep.coin_chains,
        trusted_svcs=svcs,
        listing_type=spec.type,
        start_time=spec.start_time,
        reveal_time=spec.reveal_time,
        conclude_time=spec.conclude_time,
        feedback_time=spec.feedback_time,
        initial_price=spec.initial_price,
        abort_penalty=spec.abort_penalty,
        num_winners=spec.num_winners,
        require_did=spec.require_did,
        trusted_registries=dep.trusted_registries() if cred_def else (),
        cred_def=cred_def,
        dutch_steps=spec.dutch_steps,
        reserve_price=spec.reserve_price,
        svc_fee=spec.svc_fee,
        gov_fee=spec.gov_fee,
        treasury=dep.treasury if spec.gov_fee else b"",
        settle_grace=spec.settle_grace,
    )


def setup_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    cfg.validate()
    schedule = GasSchedule.zero() if cfg.gas == "zero" else GasSchedule()
    world = build_world(cfg.coin_chains, cfg.delta, cfg.seed, schedule)
    dep = deploy_system(world)
    kr = world.keyring
    log = EventLog(clock=lambda: world.now)
    vdr = VdrStore(kr, clock=lambda: world.now, seed=cfg.seed)

    a = cfg.agents
    forged = set(a.forged)
    need_identity = a.did != "none" or any(s.require_did for s in cfg.listings) or any(
        isinstance(s.plan, SignBadDid) for s in cfg.svcs)
    identity = setup_identity(vdr, kr.account("issuer")) if need_identity else None

    svcs = []
    for s in cfg.svcs:
        plan = s.plan
        if isinstance(plan, SignBadDid) and len(plan.holder) != 20:
            plan = SignBadDid(kr.account(plan.holder.decode()))
        svc = CrossChainService(s.name, dep, log, plan, s.takeover_delay, vdr, s.faults)
        vdr.register_role(svc.account, "verifier")
        world.call(dep.gov_chain, dep.authority, dep.governance, "registerSvc", svc.account).raise_for_revert()
        svcs.append(svc)
    svc_ids = tuple(s.account for s in svcs)

    vendor = VendorAgent("vendor", dep, vote_mode=a.vendor_vote, rng=random.Random(f"{cfg.seed}:vendor"))
    cred_def = identity.cred_def_id if identity else None
    for i, spec in enumerate(cfg.listings):
        asset_id = f"asset-{i}"
        world.call(ASSET_CHAIN, dep.authority, dep.asset, "mintAsset", vendor.account, asset_id,
                   spec.num_winners).raise_for_revert()
        vendor.listings.append(build_params(spec, dep, vendor.account, asset_id, svc_ids, cred_def))

    bidders = []
    for ci, c in enumerate(dep.coin_chains):
        for i in range(a.bidders_per_chain):
            name = f"bidder-{c}-{i}"
            cls = ForgingBidder if name in forged else BidderAgent
            b = cls(name, dep, chain=c, rank=ci * a.bidders_per_chain + i, strategy=a.strategy, spread=a.spread,
                    rng=random.Random(f"{cfg.seed}:{name}"), skip_reveal=a.skip_reveal, winner_vote=a.winner_vote,
                    patience=a.patience, give_feedback=a.feedback, did_verifier=svc_ids[0])
            dep.mint(c, b.account, a.funds)
            if identity is not None and (a.did == "all" or (a.did == "half" and i % 2 == 0) or name in forged):
                b.credential = identity.issue(b.account, {"name": name, "dob": "2000-01-01"})
            bidders.append(b)

    auditors = []
    for k in range(cfg.auditors):
        aud = Auditor(f"auditor-{k}", dep, log, vdr)
        dep.mint(dep.gov_chain, aud.account, AUDITOR_FUNDS)
        auditors.append(aud)

    return ScenarioResult(cfg, world, dep, log, vdr, svcs, bidders, vendor, auditors, identity)


def _secrets(bidders: list[BidderAgent]):
    def collect() -> list[Secret]:
        out = []
        for b in bidders:
            for lid, plan in b.plans.items():
                if plan.salt:
                    out.append(Secret(lid, b.chain, plan.value, plan.salt))
        return out
    return collect


def _trace(svcs: list[CrossChainService]):
    def collect() -> list:
        acts = [(a.tick, s.name, a.export()) for s in svcs for a in s.trace]
        return sorted(acts, key=lambda x: (x[0], x[1]))
    return collect


def fault_free(cfg: ScenarioConfig) -> bool:
    return all(isinstance(s.plan, Honest) and s.faults.empty for s in cfg.svcs)


def single_honest_live(cfg: ScenarioConfig) -> bool:
    return any(isinstance(s.plan, Honest) and not s.faults.drop for s in cfg.svcs)


def run_scenario(cfg: ScenarioConfig, raise_on_violation: bool = True,
                 prepare: Callable[[ScenarioResult], None] | None = None) -> ScenarioResult:
    """Build, run and probe one scenario; deterministic in ``cfg.seed``.

    ``prepare`` may adjust agents after setup and before the first round.
    """
    res = setup_scenario(cfg)
    if prepare is not None:
        prepare(res)
    world, dep = res.world, res.dep
    probes = ProbeSet(dep, res.log, cfg.probes, _secrets(res.bidders), _trace(res.svcs), dt=cfg.dt)
    try:
        rounds = 0
        end = cfg.end_time
        while world.now <= end and rounds < cfg.max_rounds:
            res.vendor.step()
            for b in res.bidders:
                b.step()
            for s in res.svcs:
                s.step()
            if res.auditors and rounds % cfg.audit_every == 0:
                for aud in res.auditors:
                    aud.step()
            probes.step()
            world.advance_time(cfg.dt)
            rounds += 1
        res.rounds = rounds
        if cfg.attest_reputation:
            lead = res.svcs[0]
            lead.aggregate_reputation(res.vendor.account, dep.trusted_registries())
        for aud in res.auditors:
            aud.step()
        if res.auditors:
            adjudicate_pending(dep, res.log, res.vdr)
        res.claims = claims_report(world, dep)
        res.outcomes = deal_outcomes(dep)
        probes.final(single_honest_live(cfg), fault_free(cfg), res.claims)
    except InvariantViolation as exc:
        res.violation = exc
        if raise_on_violation:
            raise
    finally:
        res.probes = dict(probes.results)
        res.hiding_scans = probes.hiding_scans
    return res


def run_many(cfgs, raise_on_violation: bool = False) -> list[ScenarioResult]:
    return [run_scenario(c, raise_on_violation) for c in cfgs]


def with_overrides(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    return replace(cfg, **kw)
