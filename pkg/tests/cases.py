"""Scenario configurations shared by the audit and acceptance tests."""

from __future__ import annotations

from crossdeal.ccsvc import MisreportReputation, MisreportWinner, SignBadDid, Stage, StallAt
from crossdeal.harness.scenario import AgentSpec, ScenarioConfig, SvcSpec

# one misbehavior per config, each expected to yield exactly one Valid claim
MISBEHAVIOR = {
    "unfair": (ScenarioConfig(svcs=(SvcSpec("svc0", MisreportWinner()), SvcSpec("svc1"))), "UnfairConclusion"),
    "stall": (ScenarioConfig(svcs=(SvcSpec("svc0", StallAt(Stage.Revealing)), SvcSpec("svc1", takeover_delay=26))),
              "Stall"),
    "stall-alone": (ScenarioConfig(svcs=(SvcSpec("svc0", StallAt(Stage.Bidding)),)), "Stall"),
    "bad-did": (ScenarioConfig(agents=AgentSpec(did="all", forged=("bidder-2-1",)),
                               svcs=(SvcSpec("svc0", SignBadDid(b"bidder-2-1")), SvcSpec("svc1"))), "BadDidOrScore"),
    "bad-score": (ScenarioConfig(attest_reputation=True, agents=AgentSpec(did="all"),
                                 svcs=(SvcSpec("svc0", MisreportReputation(2)),)), "BadDidOrScore"),
}

# misbehavior that is tolerated or absent, so no claim is due
CLEAN = {
    "standby-on-time": ScenarioConfig(svcs=(SvcSpec("svc0", StallAt(Stage.Revealing)), SvcSpec("svc1", takeover_delay=6))),
    "honest-rejects-forger": ScenarioConfig(agents=AgentSpec(did="all", forged=("bidder-2-1",))),
    "honest-reputation": ScenarioConfig(attest_reputation=True, agents=AgentSpec(did="all")),
}
