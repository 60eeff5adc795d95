from __future__ import annotations

from dataclasses import replace

from crossdeal.ccsvc import MAX_RETRIES, CrossChainService, MisreportWinner, Stage, StallAt, deal_stage, distort_outcome
from crossdeal.eventlog import EventLog, FaultPlan, listing_topic
from crossdeal.harness.runner import run_scenario
from crossdeal.harness.scenario import AgentSpec, ScenarioConfig, SvcSpec
from crossdeal.market.auction import ListingParams, ListingType, compute_winner
from crossdeal.system import ASSET_CHAIN


def kinds(log, lid=0):
    return [r.kind for r in log.records(listing_topic(lid))]


def test_relayer_deploys_auctions_and_publishes_creation(market):
    m = market
    w, dep = m.world, m.dep
    log = EventLog(lambda: w.now)
    svc = CrossChainService("svc0", dep, log)
    w.call(ASSET_CHAIN, dep.authority, dep.asset, "mintAsset", m.vendor, "x")
    p = ListingParams(m.vendor, ASSET_CHAIN, "x", dep.coin_chains, (svc.account,), ListingType.OpenIncreasing,
                      5, 5, 20, 40, 10, 2)
    w.call(ASSET_CHAIN, m.vendor, dep.asset, "createListing", p).raise_for_revert()
    svc.step()
    assert kinds(log) == ["AuctionCreationEvent"]
    svc.step()
    for c in dep.coin_chains:
        assert w.view(c, dep.markets[c], "hasListing", 0)
    assert svc.deals[0].stage is Stage.AuctionDeployed
    w.advance_time(6)
    svc.step()
    assert svc.deals[0].stage is Stage.Bidding


def test_bid_events_published_once_despite_duplicates_and_two_relayers():
    faults = FaultPlan(duplicate={(listing_topic(0), k) for k in range(10)})
    cfg = ScenarioConfig(agents=AgentSpec(bidders_per_chain=3),
                         svcs=(SvcSpec("svc0", faults=faults), SvcSpec("svc1", faults=faults)), auditors=0)
    res = run_scenario(cfg)
    entries = [(c, e.index) for c in res.dep.coin_chains for e in res.world.read_journal(c)
               if e.event in ("BidPlaced", "BidRevealed")]
    published = [(r.payload["chain"], r.payload["journalIndex"]) for r in res.log.records(listing_topic(0))
                 if r.kind == "BiddingAuctionEvent"]
    assert len(entries) == 12
    assert sorted(published) == sorted(entries)
    assert res.outcomes == {0: "Settled"}


def test_standby_takes_over_from_stalled_lead():
    cfg = ScenarioConfig(svcs=(SvcSpec("svc0", StallAt(Stage.Revealing)), SvcSpec("svc1", takeover_delay=4)), auditors=0)
    res = run_scenario(cfg)
    assert res.outcomes == {0: "Settled"}
    closers = {e.payload["closedBy"] for c in res.dep.coin_chains for e in res.world.read_journal(c)
               if e.event == "ListingClosed"}
    assert closers == {res.svcs[1].account}


def test_misreporting_lead_declares_a_loser():
    res = run_scenario(replace(ScenarioConfig(svcs=(SvcSpec("svc0", MisreportWinner()),)), auditors=0, probes=()))
    w, dep = res.world, res.dep
    p = w.view(ASSET_CHAIN, dep.asset, "params", 0)
    declared = w.view(ASSET_CHAIN, dep.asset, "outcome", 0)
    honest = compute_winner(p, res.svcs[0].all_bids(p))
    assert declared != honest and len(declared.winners) == 1


def test_distort_outcome_prefers_the_target():
    res = run_scenario(replace(ScenarioConfig(), auditors=0, probes=()))
    p = res.world.view(ASSET_CHAIN, res.dep.asset, "params", 0)
    bids = res.svcs[0].all_bids(p)
    honest = compute_winner(p, bids)
    loser = next(b for b in bids if b.ref not in honest.refs and b.revealed)
    o = distort_outcome(p, bids, honest, loser.ref)
    assert o.refs == (loser.ref,)
    assert distort_outcome(p, [], honest, None) == honest


def test_failed_calls_are_retried_a_bounded_number_of_times(market):
    m = market
    svc = CrossChainService("svc0", m.dep, EventLog())
    for _ in range(MAX_RETRIES + 3):
        svc._call(("k",), 2, m.dep.markets[2], "expire", 99)
    assert len(svc.trace) == MAX_RETRIES
    assert all(a.outcome.startswith("revert") for a in svc.trace)


def test_stage_follows_chain_state():
    res = run_scenario(replace(ScenarioConfig(), auditors=0))
    p = res.world.view(ASSET_CHAIN, res.dep.asset, "params", 0)
    assert deal_stage(res.world, res.dep, p) is Stage.Settled
    assert res.svcs[0].deals[0].stage is Stage.Settled
    assert res.svcs[0].collect_fee() == 0
