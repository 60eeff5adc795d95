"""Three packaged scenarios: a plain marketplace sale, DID-gated ticket sales
and reputation aggregation that ignores feedback from unverified accounts."""

from __future__ import annotations

from fractions import Fraction

from ..identity import proof_valid, rsc_is_verified
from ..market.auction import ListingType
from ..market.reputation import aggregate, feedback_table
from .runner import ScenarioResult, run_scenario
from .scenario import AgentSpec, ListingSpec, ScenarioConfig

USE_CASES = ("marketplace", "ticketScalping", "sybilReputation")


def marketplace_config(seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(seed=seed)


def ticket_config(seed: int = 0) -> ScenarioConfig:
    tickets = ListingSpec(type=ListingType.Fixed, num_winners=2, require_did=True, initial_price=25, abort_penalty=5)
    return ScenarioConfig(seed=seed, listings=(tickets,), agents=AgentSpec(bidders_per_chain=3, did="half"))


def sybil_config(seed: int = 0) -> ScenarioConfig:
    listings = tuple(ListingSpec(type=ListingType.Fixed, coin_chains=(c,)) for c in (2, 3, 4))
    return ScenarioConfig(seed=seed, coin_chains=3, listings=listings,
                          agents=AgentSpec(bidders_per_chain=1, did="all"), attest_reputation=True)


def run_marketplace(seed: int = 0) -> ScenarioResult:
    return run_scenario(marketplace_config(seed))


def run_ticket_scalping(seed: int = 0) -> ScenarioResult:
    """Only DID holders can buy; each buyer redeems by disclosing the name on the DID."""
    res = run_scenario(ticket_config(seed))
    w, dep = res.world, res.dep
    rejected = sorted(b.name for b in res.bidders if any("DidRequired" in x for x in b.rejections))
    redemptions = {}
    lid = 0
    outcome = w.view(dep.asset_chain, dep.asset, "outcome", lid)
    for slot, win in enumerate(outcome.winners):
        owner = w.view(dep.asset_chain, dep.asset, "slotOwner", lid, slot)
        holder = next(b for b in res.bidders if b.account == win.bidder)
        proof = holder.credential.prove(["name"])
        # at the door: the DID must verify, name the holder and be registered on chain
        ok = (owner == holder.account and proof_valid(res.vdr, proof) and proof.values()["name"] == holder.name
              and rsc_is_verified(w, holder.chain, dep.registries[holder.chain], holder.account))
        redemptions[holder.name] = ok
    res.extras.update(rejected=rejected, redemptions=redemptions)
    return res


SYBIL_SCORES = {"bidder-2-0": 5, "bidder-3-0": 5, "bidder-4-0": 3}
SYBILS = ("bidder-2-0", "bidder-3-0")


def _sybil_prepare(res: ScenarioResult) -> None:
    for b in res.bidders:
        b.score = SYBIL_SCORES.get(b.name)
        if b.name in SYBILS:
            b.credential = None


def brute_force_reputation(res: ScenarioResult) -> tuple[int, Fraction]:
    """Filtered mean straight from the journals, without the aggregation helper."""
    trusted = set(res.dep.trusted_registries())
    scores = []
    for c in res.dep.coin_chains:
        for e in res.world.read_journal(c):
            p = e.payload
            if (e.event == "FeedbackStored" and p["vendor"] == res.vendor.account and p["didBacked"]
                    and p["registry"] is not None and tuple(p["registry"]) in trusted):
                scores.append(p["score"])
    return len(scores), (Fraction(sum(scores), len(scores)) if scores else Fraction(0))


def run_sybil_reputation(seed: int = 0) -> ScenarioResult:
    res = run_scenario(sybil_config(seed), prepare=_sybil_prepare)
    rows = feedback_table(res.world, res.dep.coin_chains)
    rep = aggregate(rows, res.vendor.account, res.dep.trusted_registries())
    count, mean = brute_force_reputation(res)
    res.extras.update(
        feedback=[(r.chain, r.score, r.did_backed) for r in rows],
        aggregate={"count": rep.count, "mean": rep.mean},
        brute_force={"count": count, "mean": float(mean)},
        unfiltered_mean=(sum(r.score for r in rows) / len(rows)) if rows else 0.0,
    )
    return res


def run_use_case(kind: str, seed: int = 0) -> ScenarioResult:
    runners = {"marketplace": run_marketplace, "ticketScalping": run_ticket_scalping,
               "sybilReputation": run_sybil_reputation}
    if kind not in runners:
        raise ValueError(f"unknown use case {kind!r}; choose from {', '.join(USE_CASES)}")
    return runners[kind](seed)
