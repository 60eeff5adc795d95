"""Scenario configuration: dataclasses, JSON loading and schema validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from ..ccsvc import Honest, MisbehaviorPlan, MisreportReputation, MisreportWinner, SignBadDid, Stage, StallAt
from ..errors import ConfigError
from ..eventlog import FaultPlan
from ..market.auction import ListingType

SCHEMA_VERSION = 1
ALL_PROBES = ("conservation", "atomicity", "hiding", "liveness", "audit")


def load_schema() -> dict:
    text = resources.files("crossdeal.harness").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class ListingSpec:
    """Listing timing is relative: start, then phase lengths."""

    type: ListingType = ListingType.SealedFirst
    start: int = 4
    bidding: int = 16
    reveal: int = 12
    ending: int = 40
    settle_grace: int = 30
    initial_price: int = 10
    abort_penalty: int = 2
    num_winners: int = 1
    require_did: bool = False
    dutch_steps: int = 10
    reserve_price: int | None = None
    svc_fee: int = 0
    gov_fee: int = 0
    coin_chains: tuple[int, ...] | None = None

    @property
    def start_time(self) -> int:
        return self.start

    @property
    def reveal_time(self) -> int:
        return self.start + self.bidding if self.type.sealed else self.start

    @property
    def conclude_time(self) -> int:
        return self.start + self.bidding + (self.reveal if self.type.sealed else 0)

    @property
    def feedback_time(self) -> int:
        return self.conclude_time + self.ending

    @property
    def asset_deadline(self) -> int:
        return self.feedback_time + self.settle_grace


@dataclass(frozen=True)
class AgentSpec:
    bidders_per_chain: int = 8
    strategy: str = "ladder"
    spread: int = 20
    funds: int = 10_000
    did: str = "none"
    skip_reveal: float = 0.0
    winner_vote: str = "commit"
    vendor_vote: str = "commit"
    patience: int = 6
    feedback: bool = True
    # bidder labels that submit a DID proof with a tampered opening
    forged: tuple[str, ...] = ()


@dataclass(frozen=True)
class SvcSpec:
    name: str
    plan: MisbehaviorPlan = field(default_factory=Honest)
    takeover_delay: int = 6
    faults: FaultPlan = field(default_factory=FaultPlan)


@dataclass(frozen=True)
class BenchmarkConfig:
    n: int = 1
    bidders_per_chain: int = 8
    auction_type: ListingType = ListingType.OpenIncreasing

    def __post_init__(self) -> None:
        if self.n < 1 or self.bidders_per_chain < 1:
            raise ConfigError("benchmark needs n >= 1 and at least one bidder per chain")

    @property
    def bids_per_chain(self) -> int:
        return self.bidders_per_chain * self.n * self.n


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    coin_chains: int = 2
    delta: int = 2
    gas: str = "default"
    dt: int = 1
    max_rounds: int = 2000
    listings: tuple[ListingSpec, ...] = (ListingSpec(),)
    agents: AgentSpec = AgentSpec()
    svcs: tuple[SvcSpec, ...] = (SvcSpec("svc0"),)
    auditors: int = 1
    audit_every: int = 5
    attest_reputation: bool = False
    probes: tuple[str, ...] = ALL_PROBES
    benchmark: BenchmarkConfig | None = None

    def validate(self) -> "ScenarioConfig":
        if self.coin_chains < 1:
            raise ConfigError("need at least one coin chain")
        if not self.svcs:
            raise ConfigError("need at least one relayer")
        names = [s.name for s in self.svcs]
        if len(set(names)) != len(names):
            raise ConfigError("relayer names must be unique")
        valid_chains = set(range(2, 2 + self.coin_chains))
        for spec in self.listings:
            chains = spec.coin_chains or tuple(sorted(valid_chains))
            if not set(chains) <= valid_chains:
                raise ConfigError(f"listing names unknown coin chains {sorted(set(chains) - valid_chains)}")
            if spec.num_winners > 1 and spec.type is not ListingType.Fixed:
                raise ConfigError("multiple winners only for fixed-price listings")
            if spec.abort_penalty > spec.initial_price:
                raise ConfigError("abort penalty above initial price")
        if self.agents.strategy not in ("ladder", "random"):
            raise ConfigError(f"unknown strategy {self.agents.strategy!r}")
        top = max((s.initial_price + self.agents.spread + 2 * self.agents.bidders_per_chain * self.coin_chains
                   for s in self.listings), default=0)
        if self.listings and self.agents.bidders_per_chain and self.agents.funds < top * len(self.listings):
            raise ConfigError("bidders are not funded for the prices they may bid")
        for p in self.probes:
            if p not in ALL_PROBES:
                raise ConfigError(f"unknown probe {p!r}")
        return self

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    @property
    def end_time(self) -> int:
        return max((s.asset_deadline for s in self.listings), default=0) + 4 * self.delta + 4


# -- JSON mapping ------------------------------------------------------------------


def _plan_from_json(doc: dict | None) -> MisbehaviorPlan:
    if not doc:
        return Honest()
    kind = doc["kind"]
    if kind == "Honest":
        return Honest()
    if kind == "MisreportWinner":
        t = doc.get("target")
        return MisreportWinner(tuple(t) if t else None)
    if kind == "StallAt":
        try:
            return StallAt(Stage[doc.get("stage", "Revealing")])
        except KeyError:
            raise ConfigError(f"unknown stage {doc.get('stage')!r}") from None
    if kind == "SignBadDid":
        return SignBadDid(doc.get("holder", "").encode())
    if kind == "MisreportReputation":
        return MisreportReputation(doc.get("bonus", 5))
    raise ConfigError(f"unknown plan {kind!r}")


def _plan_to_json(plan: MisbehaviorPlan) -> dict:
    if isinstance(plan, MisreportWinner):
        return {"kind": "MisreportWinner", "target": list(plan.target) if plan.target else None}
    if isinstance(plan, StallAt):
        return {"kind": "StallAt", "stage": plan.stage.name}
    if isinstance(plan, SignBadDid):
        return {"kind": "SignBadDid", "holder": plan.holder.decode()}
    if isinstance(plan, MisreportReputation):
        return {"kind": "MisreportReputation", "bonus": plan.bonus}
    return {"kind": "Honest"}


def _faults_from_json(doc: dict | None) -> FaultPlan:
    doc = doc or {}
    return FaultPlan(
        drop={(t, o) for t, o in doc.get("drop", [])},
        delay={(t, o): d for t, o, d in doc.get("delay", [])},
        duplicate={(t, o) for t, o in doc.get("duplicate", [])},
    )


def _faults_to_json(f: FaultPlan) -> dict:
    return {
        "drop": [list(x) for x in sorted(f.drop)],
        "delay": [[t, o, d] for (t, o), d in sorted(f.delay.items())],
        "duplicate": [list(x) for x in sorted(f.duplicate)],
    }


def config_from_json(doc: dict) -> ScenarioConfig:
    """Validate *doc* against the scenario schema and build a config."""
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"scenario {where}: {exc.message}") from None
    chains = doc.get("chains", {})
    listings = []
    for ld in doc.get("listings", [{"type": "sealed"}]):
        kw = dict(ld)
        kw["type"] = ListingType.parse(kw["type"])
        if "coin_chains" in kw:
            kw["coin_chains"] = tuple(kw["coin_chains"])
        listings.append(ListingSpec(**kw))
    ad = dict(doc.get("agents", {}))
    if "forged" in ad:
        ad["forged"] = tuple(ad["forged"])
    agents = AgentSpec(**ad)
    svcs = tuple(
        SvcSpec(s["name"], _plan_from_json(s.get("plan")), s.get("takeover_delay", 6), _faults_from_json(s.get("faults")))
        for s in doc.get("svcs", [{"name": "svc0"}])
    )
    bench = None
    if "benchmark" in doc:
        b = dict(doc["benchmark"])
        if "auction_type" in b:
            b["auction_type"] = ListingType.parse(b["auction_type"])
        bench = BenchmarkConfig(**b)
    cfg = ScenarioConfig(
        seed=doc.get("seed", 0),
        coin_chains=chains.get("coin_chains", 2),
        delta=chains.get("delta", 2),
        gas=chains.get("gas", "default"),
        dt=doc.get("dt", 1),
        max_rounds=doc.get("max_rounds", 2000),
        listings=tuple(listings),
        agents=agents,
        svcs=svcs,
        auditors=doc.get("auditors", 1),
        audit_every=doc.get("audit_every", 5),
        attest_reputation=doc.get("attest_reputation", False),
        probes=tuple(doc.get("probes", ALL_PROBES)),
        benchmark=bench,
    )
    return cfg.validate()


def config_to_json(cfg: ScenarioConfig) -> dict:
    listings = []
    for s in cfg.listings:
        d = asdict(s)
        d["type"] = s.type.value
        if s.coin_chains is None:
            del d["coin_chains"]
        else:
            d["coin_chains"] = list(s.coin_chains)
        listings.append(d)
    doc: dict[str, Any] = {
        "version": SCHEMA_VERSION,
        "seed": cfg.seed,
        "dt": cfg.dt,
        "max_rounds": cfg.max_rounds,
        "chains": {"coin_chains": cfg.coin_chains, "delta": cfg.delta, "gas": cfg.gas},
        "listings": listings,
        "agents": dict(asdict(cfg.agents), forged=list(cfg.agents.forged)),
        "svcs": [
            {"name": s.name, "plan": _plan_to_json(s.plan), "takeover_delay": s.takeover_delay,
             "faults": _faults_to_json(s.faults)}
            for s in cfg.svcs
        ],
        "auditors": cfg.auditors,
        "audit_every": cfg.audit_every,
        "attest_reputation": cfg.attest_reputation,
        "probes": list(cfg.probes),
    }
    if cfg.benchmark is not None:
        doc["benchmark"] = {"n": cfg.benchmark.n, "bidders_per_chain": cfg.benchmark.bidders_per_chain,
                            "auction_type": cfg.benchmark.auction_type.value}
    return doc


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return config_from_json(doc)
