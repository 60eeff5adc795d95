"""Scalability sweep: n concurrent auctions, each bidder placing n bids on each.

Per coin chain the sweep places ``bidders_per_chain * n * n`` bids. Sealed
auctions reveal only each bidder's last bid per auction, so reveals per
chain are ``bidders_per_chain * n``.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

from ..crypto import bid_commitment, hexdigest
from ..errors import ConfigError
from ..market.auction import ListingParams, ListingType
from ..system import ASSET_CHAIN, build_world, deploy_system
from .report import ReportRow, mean_halfwidth
from .scenario import BenchmarkConfig

START, REVEAL, CONCLUDE, FEEDBACK = 10, 1_000, 2_000, 3_000
SUPPORTED = (ListingType.Fixed, ListingType.OpenIncreasing, ListingType.SealedFirst, ListingType.SealedSecond)


@dataclass(frozen=True)
class BenchPoint:
    n: int
    chain: int
    event: str
    count: int
    gas_mean: float
    gas_hw: float
    time_mean_ms: float
    time_hw_ms: float

    def as_row(self) -> ReportRow:
        return ReportRow(f"chain {self.chain}", f"{self.event} n={self.n}", self.count, self.gas_mean,
                         self.gas_hw, self.time_mean_ms, self.time_hw_ms)


@dataclass(frozen=True)
class BenchResult:
    config: BenchmarkConfig
    points: tuple[BenchPoint, ...]
    world_digest: str

    def digest(self) -> str:
        """Digest of everything except wall-clock timings."""
        return hexdigest([self.world_digest, [(p.n, p.chain, p.event, p.count, p.gas_mean, p.gas_hw) for p in self.points]])

    def point(self, chain: int, event: str) -> BenchPoint:
        return next(p for p in self.points if p.chain == chain and p.event == event)


def run_benchmark(config: BenchmarkConfig, coin_chains: int = 2, seed: int = 0) -> BenchResult:
    t = config.auction_type
    if t not in SUPPORTED:
        raise ConfigError(f"benchmark does not support {t.value} listings (one bid per chain)")
    n, k = config.n, config.bidders_per_chain
    world = build_world(coin_chains, delta=2, seed=seed)
    dep = deploy_system(world)
    kr = world.keyring
    svc, vendor = kr.account("svc0"), kr.account("vendor")
    rng = random.Random(f"bench:{seed}:{n}:{t.value}")
    sealed = t.sealed
    lids = []
    for a in range(n):
        asset_id = f"bench-asset-{a}"
        world.call(ASSET_CHAIN, dep.authority, dep.asset, "mintAsset", vendor, asset_id).raise_for_revert()
        p = ListingParams(vendor, ASSET_CHAIN, asset_id, dep.coin_chains, (svc,), t, START,
                          REVEAL if sealed else START, CONCLUDE, FEEDBACK, initial_price=10, abort_penalty=2)
        r = world.call(ASSET_CHAIN, vendor, dep.asset, "createListing", p)
        r.raise_for_revert()
        lid = r.return_value
        lids.append(lid)
        for c in dep.coin_chains:
            world.call(c, svc, dep.markets[c], "startAuction", p.with_id(lid)).raise_for_revert()
    world.advance_time(START + 2 * world.delta)

    bidders = {c: [kr.account(f"bench-bidder-{c}-{i}") for i in range(k)] for c in dep.coin_chains}
    for c, accts in bidders.items():
        for b in accts:
            dep.mint(c, b, 10 * (n * n * (k * n + 10) + 100))

    samples: dict[tuple[int, str], list[tuple[int, float]]] = {}
    last: dict[tuple[int, int, bytes], tuple[int, int, bytes]] = {}
    for c in dep.coin_chains:
        m = dep.markets[c]
        bids = samples.setdefault((c, "bid"), [])
        price = {lid: 10 for lid in lids}
        for rnd in range(n):
            for lid in lids:
                for b in bidders[c]:
                    if t is ListingType.Fixed:
                        r = world.call(c, b, m, "bidFixed", lid)
                    elif t is ListingType.OpenIncreasing:
                        price[lid] += 1
                        r = world.call(c, b, m, "bidOpen", lid, price[lid])
                    else:
                        value = 10 + rng.randint(0, 50)
                        salt = rng.randbytes(16)
                        r = world.call(c, b, m, "bidSealed", lid, bid_commitment(value, salt))
                        last[(c, lid, b)] = (r.return_value, value, salt)
                    r.raise_for_revert()
                    bids.append((r.gas_used, r.wall_ms))
    if sealed:
        world.advance_time(REVEAL - world.now + 2 * world.delta)
        for c in dep.coin_chains:
            m = dep.markets[c]
            reveals = samples.setdefault((c, "reveal"), [])
            for lid in lids:
                for b in bidders[c]:
                    idx, value, salt = last[(c, lid, b)]
                    r = world.call(c, b, m, "revealBid", lid, idx, value, salt)
                    r.raise_for_revert()
                    reveals.append((r.gas_used, r.wall_ms))

    points = []
    for (c, ev), xs in sorted(samples.items()):
        gm, gh = mean_halfwidth([g for g, _ in xs])
        tm, th = mean_halfwidth([w for _, w in xs])
        points.append(BenchPoint(n, c, ev, len(xs), gm, gh, tm, th))
    return BenchResult(config, tuple(points), world.digest())


def _run(args) -> BenchResult:
    cfg, chains, seed = args
    return run_benchmark(cfg, chains, seed)


def run_sweep(auction_type: ListingType, ns, bidders_per_chain: int = 8, coin_chains: int = 2, seed: int = 0,
              parallel: bool = False, workers: int | None = None) -> list[BenchResult]:
    """One benchmark per n; ``parallel`` runs the independent worlds in worker processes."""
    jobs = [(BenchmarkConfig(n, bidders_per_chain, auction_type), coin_chains, seed) for n in ns]
    if not parallel:
        return [_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run, jobs))


def sweep_rows(results: list[BenchResult]) -> list[ReportRow]:
    return [p.as_row() for r in results for p in r.points]


def sweep_table(results: list[BenchResult]) -> list[dict]:
    return [asdict(p) for r in results for p in r.points]
