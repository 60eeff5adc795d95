"""Seeded random scenario generator for schedule fuzzing."""

from __future__ import annotations

import random

from ..ccsvc import Honest, MisreportWinner, SignBadDid, Stage, StallAt
from ..eventlog import FaultPlan, listing_topic
from ..market.auction import ListingType
from .scenario import AgentSpec, ListingSpec, ScenarioConfig, SvcSpec

TYPES = tuple(ListingType)
STALL_STAGES = (Stage.Idle, Stage.Bidding, Stage.Revealing, Stage.OutcomeRelayed, Stage.AwaitVotes)


def random_faults(rng: random.Random, allow_drop: bool) -> FaultPlan:
    topic = listing_topic(0)
    f = FaultPlan()
    for _ in range(rng.randint(0, 3)):
        off = rng.randint(0, 12)
        roll = rng.random()
        if roll < 0.4:
            f.delay[(topic, off)] = rng.randint(1, 3)
        elif roll < 0.7:
            f.duplicate.add((topic, off))
        elif allow_drop:
            f.drop.add((topic, off))
    return f


def random_plan(rng: random.Random):
    roll = rng.random()
    if roll < 0.5:
        return Honest()
    if roll < 0.7:
        return MisreportWinner()
    if roll < 0.9:
        return StallAt(rng.choice(STALL_STAGES))
    return SignBadDid(b"bidder-2-0")


def random_config(seed: int, honest_backup: bool = False, faults: bool = True) -> ScenarioConfig:
    """A small randomized scenario; ``honest_backup`` guarantees one honest, drop-free relayer."""
    rng = random.Random(f"fuzz:{seed}")
    kind = TYPES[seed % len(TYPES)]
    ending = rng.randint(16, 24)
    spec = ListingSpec(
        type=kind,
        start=rng.randint(2, 4),
        bidding=rng.randint(6, 10),
        reveal=rng.randint(4, 8),
        ending=ending,
        settle_grace=ending // 2 + 10,
        initial_price=rng.randint(5, 15),
        abort_penalty=rng.randint(0, 4),
        num_winners=rng.randint(1, 3) if kind is ListingType.Fixed else 1,
        svc_fee=rng.choice((0, 0, 1)),
        gov_fee=rng.choice((0, 0, 1)),
    )
    agents = AgentSpec(
        bidders_per_chain=rng.randint(0, 3),
        strategy=rng.choice(("ladder", "random")),
        spread=rng.randint(0, 10),
        funds=1_000,
        skip_reveal=rng.choice((0.0, 0.0, 0.3)),
        winner_vote=rng.choice(("commit", "commit", "random")),
        vendor_vote=rng.choice(("commit", "commit", "random")),
        patience=rng.randint(1, 4),
    )
    n_svcs = rng.randint(1, 3)
    svcs = []
    for i in range(n_svcs):
        plan = random_plan(rng)
        f = random_faults(rng, allow_drop=True) if faults and rng.random() < 0.5 else FaultPlan()
        svcs.append(SvcSpec(f"svc{i}", plan, rng.randint(0, ending // 3), f))
    if honest_backup and not any(isinstance(s.plan, Honest) and not s.faults.drop for s in svcs):
        f = random_faults(rng, allow_drop=False) if faults else FaultPlan()
        pos = rng.randint(0, len(svcs))
        svcs.insert(pos, SvcSpec(f"svc{n_svcs}", Honest(), rng.randint(0, ending // 3), f))
    return ScenarioConfig(seed=seed, listings=(spec,), agents=agents, svcs=tuple(svcs), auditors=0,
                          probes=("conservation", "atomicity", "liveness"))
