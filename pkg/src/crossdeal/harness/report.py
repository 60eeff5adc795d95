"""Per-step cost tables built from chain journals, and their text renderings."""

from __future__ import annotations

import csv
import io
import math
import statistics
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from typing import Callable, Iterable, Sequence

from ..simchain import JournalEntry, World

COLUMNS = ("entity", "event", "count", "gas_mean", "gas_hw", "time_mean_ms", "time_hw_ms")


@dataclass(frozen=True)
class ReportRow:
    entity: str
    event: str
    count: int
    gas_mean: float
    gas_hw: float
    time_mean_ms: float
    time_hw_ms: float


def mean_halfwidth(samples: Sequence[float]) -> tuple[float, float]:
    """Mean and normal-approximation 95% half-width (zero for a single sample)."""
    if not samples:
        return 0.0, 0.0
    mean = statistics.fmean(samples)
    if len(samples) < 2:
        return mean, 0.0
    return mean, 1.96 * statistics.stdev(samples) / math.sqrt(len(samples))


@dataclass(frozen=True)
class StepSpec:
    entity: str
    label: str
    events: tuple[str, ...]
    # samples from several chains belonging to one listing are summed into one
    grouped: bool = False
    where: Callable[[JournalEntry], bool] = lambda e: True


LISTING_STEPS = (
    StepSpec("vendor", "add asset", ("ListingCreated",)),
    StepSpec("relayer", "start auction", ("AuctionStarted",), grouped=True),
    StepSpec("bidder", "bid", ("BidPlaced",)),
    StepSpec("vendor", "end bidding phase", ("BiddingEnded",)),
    StepSpec("relayer", "start reveal phase", ("RevealStarted",), grouped=True),
    StepSpec("bidder", "reveal bid", ("BidRevealed",)),
    StepSpec("vendor", "determine winner", ("ConclusionRequested",)),
    StepSpec("relayer", "close auction", ("ListingClosed",), grouped=True),
    StepSpec("bidder", "commit result", ("VoteCast",), where=lambda e: e.payload["role"] == "winner"),
    StepSpec("vendor", "finalize auction", ("VoteCast",), where=lambda e: e.payload["role"] == "vendor"),
    StepSpec("bidder", "withdraw", ("Withdrawn", "AssetWithdrawn")),
    StepSpec("bidder", "feedback", ("FeedbackStored",)),
)


def tx_costs(world: World) -> dict[tuple[int, int], tuple[int, float]]:
    """(chain, tx id) -> (gas, wall-clock ms)."""
    out = {}
    for chain in world.chains:
        for tx_id, gas in chain.gas_used_log:
            out[(chain.id, tx_id)] = (gas, chain.wall_ms.get(tx_id, 0.0))
    return out


def step_samples(world: World, spec: StepSpec, costs=None) -> list[tuple[int, float]]:
    costs = costs if costs is not None else tx_costs(world)
    singles: list[tuple[int, float]] = []
    groups: dict[object, list[tuple[int, float]]] = defaultdict(list)
    for chain in world.chains:
        for e in chain.journal:
            if e.event not in spec.events or not spec.where(e):
                continue
            cost = costs.get((chain.id, e.tx_id), (0, 0.0))
            if spec.grouped:
                groups[e.payload.get("listing")].append(cost)
            else:
                singles.append(cost)
    if spec.grouped:
        return [(sum(g for g, _ in v), sum(t for _, t in v)) for _, v in sorted(groups.items(), key=lambda kv: str(kv[0]))]
    return singles


def listing_report(world: World, steps: Iterable[StepSpec] = LISTING_STEPS) -> list[ReportRow]:
    """One row per protocol step with event counts, gas and simulator time."""
    costs = tx_costs(world)
    rows = []
    for spec in steps:
        samples = step_samples(world, spec, costs)
        gm, gh = mean_halfwidth([g for g, _ in samples])
        tm, th = mean_halfwidth([t for _, t in samples])
        rows.append(ReportRow(spec.entity, spec.label, len(samples), gm, gh, tm, th))
    return rows


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_report(rows: Sequence[ReportRow], fmt: str = "pretty", with_time: bool = True) -> str:
    """Render rows as CSV (round-trippable) or an aligned text table."""
    cols = COLUMNS if with_time else COLUMNS[:5]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(v) for v in astuple(r)[: len(cols)]])
        return buf.getvalue()
    if fmt != "pretty":
        raise ValueError(f"unknown format {fmt!r}")
    head = ["entity", "event", "#", "gas", "gas ±", "time ms", "time ±"][: len(cols)]
    body = []
    for r in rows:
        cells = [r.entity, r.event, str(r.count), f"{r.gas_mean:.1f}", f"{r.gas_hw:.1f}",
                 f"{r.time_mean_ms:.3f}", f"{r.time_hw_ms:.3f}"]
        body.append(cells[: len(cols)])
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(h.ljust(wd) for h, wd in zip(head, widths)).rstrip()]
    lines.append("  ".join("-" * wd for wd in widths))
    for cells in body:
        lines.append("  ".join(c.ljust(wd) if i < 2 else c.rjust(wd) for i, (c, wd) in enumerate(zip(cells, widths))))
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[ReportRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    types = {f.name: f.type for f in fields(ReportRow)}
    rows = []
    for rec in reader:
        vals = dict(zip(header, rec))
        kw = {}
        for name in COLUMNS:
            t = types[name]
            if name not in vals:
                kw[name] = 0.0
            elif t in ("int", int):
                kw[name] = int(vals[name])
            elif t in ("float", float):
                kw[name] = float(vals[name])
            else:
                kw[name] = vals[name]
        rows.append(ReportRow(**kw))
    return rows


def recount(world: World, event: str, where: Callable[[JournalEntry], bool] = lambda e: True) -> int:
    """Independent journal recount used to cross-check report rows."""
    return sum(1 for c in world.chains for e in c.journal if e.event == event and where(e))
