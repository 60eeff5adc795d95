"""Asset-chain contract: listings, asset custody and the declared outcome.

The asset chain is permissioned and gas-free. It holds the listed units in
custody from ``createListing`` until each winning slot is either settled to
its winner or returned to the vendor. Settlement needs a certificate: the
winner's and the vendor's signed commit votes for that slot, exactly as they
were cast on the winner's coin chain. A signed abort from either party
returns the unit; so does the asset deadline passing.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import (
    AssetNotOwned,
    BadSignature,
    InvalidOutcome,
    InvalidParams,
    ListingActive,
    NotWinner,
    OutsideWindow,
    Unauthorized,
    UnknownListing,
)
from ..simchain import CallContext, Contract, external, register_kind, view
from .auction import ListingParams, Outcome, vote_payload


@dataclass(frozen=True)
class SignedVote:
    voter: bytes
    vote: str
    signature: bytes


@register_kind("asset")
class AssetContract(Contract):
    def setup(self, ctx: CallContext, authority: bytes | None = None) -> None:
        self.storage["authority"] = authority if authority is not None else ctx.caller
        self.storage["nlistings"] = 0

    def _units(self, asset_id: str, owner: bytes) -> int:
        return self.storage.get(("units", asset_id, owner), 0)

    def _give(self, asset_id: str, owner: bytes, n: int) -> None:
        self.storage[("units", asset_id, owner)] = self._units(asset_id, owner) + n

    def _params(self, lid: int) -> ListingParams:
        p = self.storage.get(("params", lid))
        if p is None:
            raise UnknownListing(f"no listing {lid}")
        return p

    # -- assets ------------------------------------------------------------

    @external
    def mintAsset(self, ctx: CallContext, owner: bytes, asset_id: str, units: int = 1) -> None:
        if ctx.caller != self.storage["authority"]:
            raise Unauthorized("only the fixture authority mints assets")
        if units < 1:
            raise InvalidParams("units must be positive")
        self._give(asset_id, owner, units)
        ctx.emit("AssetMinted", assetId=asset_id, owner=owner, units=units)

    @external
    def createListing(self, ctx: CallContext, params: ListingParams) -> int:
        if ctx.caller != params.vendor:
            raise Unauthorized("only the vendor lists its asset")
        if params.asset_chain != ctx.chain_id:
            raise InvalidParams("listing names a different asset chain")
        lid = self.storage["nlistings"]
        params = params.with_id(lid).validate()
        have = self._units(params.asset_id, ctx.caller)
        if have < params.num_winners:
            raise AssetNotOwned(f"vendor holds {have} of {params.asset_id}, needs {params.num_winners}")
        self.storage[("units", params.asset_id, ctx.caller)] = have - params.num_winners
        self.storage[("params", lid)] = params
        self.storage["nlistings"] = lid + 1
        ctx.emit("ListingCreated", listing=lid, params=params, vendor=ctx.caller)
        return lid

    # -- phase markers -----------------------------------------------------

    def _marker(self, ctx: CallContext, lid: int, name: str, not_before: int) -> bool:
        p = self._params(lid)
        if ctx.caller != p.vendor and ctx.caller not in p.trusted_svcs:
            raise Unauthorized(f"{name} is for the vendor or its relayers")
        if ctx.now < not_before:
            raise OutsideWindow(f"{name} not before {not_before}")
        if (name, lid) in self.storage:
            return False
        self.storage[(name, lid)] = ctx.now
        ctx.emit(name, listing=lid, by=ctx.caller)
        return True

    @external
    def endBidding(self, ctx: CallContext, lid: int) -> bool:
        p = self._params(lid)
        return self._marker(ctx, lid, "BiddingEnded", p.reveal_time)

    @external
    def requestConclusion(self, ctx: CallContext, lid: int) -> bool:
        p = self._params(lid)
        return self._marker(ctx, lid, "ConclusionRequested", p.conclude_time)

    # -- outcome and settlement ------------------------------------------------

    @external
    def finAuction(self, ctx: CallContext, lid: int, outcome: Outcome) -> bool:
        p = self._params(lid)
        if ctx.caller != p.vendor and ctx.caller not in p.trusted_svcs:
            raise Unauthorized("only the vendor or a trusted relayer concludes")
        if not (p.conclude_time <= ctx.now < p.feedback_time):
            raise OutsideWindow("conclusion window is [conclude, feedback)")
        prior = self.storage.get(("outcome", lid))
        if prior is not None:
            if prior != outcome:
                raise InvalidOutcome("a different outcome is already declared")
            return False
        if outcome.listing_id != lid or len(outcome.winners) > p.num_winners:
            raise InvalidOutcome("outcome does not fit the listing")
        if any(w.chain not in p.coin_chains for w in outcome.winners) or len(set(outcome.refs)) != len(outcome.refs):
            raise InvalidOutcome("winner on an unknown chain or listed twice")
        self.storage[("outcome", lid)] = outcome
        ctx.emit("OutcomeDeclared", listing=lid, outcome=outcome.to_json(), declaredBy=ctx.caller)
        unsold = p.num_winners - len(outcome.winners)
        if unsold:
            self._give(p.asset_id, p.vendor, unsold)
            ctx.emit("AssetReturned", listing=lid, slot=-1, units=unsold, reason="unsold")
        return True

    def _resolve(self, ctx: CallContext, p: ListingParams, slot: int, votes: list[SignedVote]) -> str | None:
        lid = p.listing_id
        outcome = self.storage.get(("outcome", lid))
        if outcome is None:
            raise InvalidOutcome("no outcome declared yet")
        if not 0 <= slot < len(outcome.winners):
            raise NotWinner(f"no winning slot {slot}")
        if ("slot", lid, slot) in self.storage:
            return None
        if ctx.now >= p.asset_deadline:
            raise OutsideWindow("asset deadline passed")
        w = outcome.winners[slot]
        commits: set[bytes] = set()
        for v in votes:
            if v.voter not in (w.bidder, p.vendor):
                raise BadSignature("vote from a non-participant")
            payload = vote_payload(lid, w.chain, w.index, w.bidder, w.price, v.vote)
            if not ctx.verify(v.voter, payload, v.signature):
                raise BadSignature("vote signature does not verify")
            if v.vote == "abort":
                self.storage[("slot", lid, slot)] = p.vendor
                self._give(p.asset_id, p.vendor, 1)
                ctx.emit("AssetReturned", listing=lid, slot=slot, units=1, reason="abort")
                return "returned"
            commits.add(v.voter)
        if commits == {w.bidder, p.vendor}:
            self.storage[("slot", lid, slot)] = w.bidder
            ctx.emit("AssetSettled", listing=lid, slot=slot, winner=w.bidder, by=ctx.caller)
            return "settled"
        return None

    @external
    def recordResponse(self, ctx: CallContext, lid: int, slot: int, votes: list[SignedVote]) -> str | None:
        """Relay signed votes for one winning slot from its coin chain."""
        p = self._params(lid)
        if ctx.caller not in p.trusted_svcs:
            raise Unauthorized("only trusted relayers forward responses")
        return self._resolve(ctx, p, slot, votes)

    @external
    def withdrawAsset(self, ctx: CallContext, lid: int, slot: int, votes: list[SignedVote] | None = None) -> bool:
        """Winner takes its unit, optionally settling it with its own certificate."""
        p = self._params(lid)
        outcome = self.storage.get(("outcome", lid))
        if outcome is None or not 0 <= slot < len(outcome.winners) or outcome.winners[slot].bidder != ctx.caller:
            raise NotWinner("caller did not win this slot")
        if ("slot", lid, slot) not in self.storage and votes:
            self._resolve(ctx, p, slot, votes)
        if self.storage.get(("slot", lid, slot)) != ctx.caller:
            raise ListingActive("slot not settled to the caller")
        if ("taken", lid, slot) in self.storage:
            return False
        self.storage[("taken", lid, slot)] = True
        self._give(p.asset_id, ctx.caller, 1)
        ctx.emit("AssetWithdrawn", listing=lid, slot=slot, winner=ctx.caller, assetId=p.asset_id)
        return True

    @external
    def expire(self, ctx: CallContext, lid: int) -> int:
        """Return every unresolved unit to the vendor once the asset deadline passes."""
        p = self._params(lid)
        if ctx.now < p.asset_deadline:
            raise OutsideWindow(f"asset deadline {p.asset_deadline} not reached")
        outcome = self.storage.get(("outcome", lid))
        returned = 0
        if outcome is None:
            if ("unsold", lid) in self.storage:
                return 0
            self.storage[("unsold", lid)] = True
            self.storage[("outcome", lid)] = Outcome(lid)
            returned = p.num_winners
            self._give(p.asset_id, p.vendor, returned)
            ctx.emit("AssetReturned", listing=lid, slot=-1, units=returned, reason="unconcluded")
            return returned
        for slot in range(len(outcome.winners)):
            if ("slot", lid, slot) not in self.storage:
                self.storage[("slot", lid, slot)] = p.vendor
                self._give(p.asset_id, p.vendor, 1)
                ctx.emit("AssetReturned", listing=lid, slot=slot, units=1, reason="timeout")
                returned += 1
        return returned

    # -- views ---------------------------------------------------------------

    @view
    def unitsOf(self, ctx: CallContext, asset_id: str, owner: bytes) -> int:
        return self._units(asset_id, owner)

    @view
    def params(self, ctx: CallContext, lid: int) -> ListingParams:
        return self._params(lid)

    @view
    def outcome(self, ctx: CallContext, lid: int) -> Outcome | None:
        return self.storage.get(("outcome", lid))

    @view
    def slotOwner(self, ctx: CallContext, lid: int, slot: int) -> bytes | None:
        """Who a winning slot went to (winner or vendor), or None while open."""
        return self.storage.get(("slot", lid, slot))

    @view
    def listingCount(self, ctx: CallContext) -> int:
        return self.storage["nlistings"]

    @view
    def resolved(self, ctx: CallContext, lid: int) -> bool:
        outcome = self.storage.get(("outcome", lid))
        if outcome is None:
            return False
        return all(("slot", lid, s) in self.storage for s in range(len(outcome.winners)))
