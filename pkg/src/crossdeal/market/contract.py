"""Per-coin-chain market contract: bid books, escrow, votes and settlement.

One instance per coin chain serves every listing. Relayers register a
listing with :meth:`MarketContract.startAuction` (first writer wins), bidders
escrow coins through the chain's coin contract, and after a relayer closes
the auction with the declared outcome each winning bid becomes a sub-deal
that settles once both the winner and the vendor have signed a commit vote.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..crypto import bid_commitment
from ..errors import (
    AlreadyHasFirstBid,
    AlreadyStarted,
    AlreadyVoted,
    BadSignature,
    BidTooLow,
    DidRequired,
    DuplicateFeedback,
    HashMismatch,
    InvalidOutcome,
    InvalidParams,
    ListingActive,
    LocalOutcomeMismatch,
    NotEnding,
    NotParticipant,
    NotWinner,
    OutsideWindow,
    Unauthorized,
    UnknownListing,
    WrongType,
)
from ..simchain import CallContext, Contract, external, register_kind, view
from .auction import (
    VOTES,
    Bid,
    FeedbackEntry,
    ListingParams,
    ListingType,
    Outcome,
    Phase,
    local_outcome_ok,
    vote_payload,
)


@dataclass(frozen=True)
class SubDeal:
    """One winning bid awaiting the winner's and the vendor's votes."""

    index: int
    winner: bytes
    price: int
    winner_vote: str | None = None
    vendor_vote: str | None = None
    status: str = "pending"  # pending | settled | aborted

    def vote_of(self, role: str) -> str | None:
        return self.winner_vote if role == "winner" else self.vendor_vote


@register_kind("market")
class MarketContract(Contract):
    def setup(self, ctx: CallContext, coin: bytes) -> None:
        self.storage["coin"] = coin

    # -- internal helpers --------------------------------------------------

    def _params(self, lid: int) -> ListingParams:
        p = self.storage.get(("params", lid))
        if p is None:
            raise UnknownListing(f"listing {lid} not started on chain {self.chain.id}")
        return p

    def _phase(self, lid: int) -> Phase:
        return self.storage[("phase", lid)]

    def _set_phase(self, lid: int, phase: Phase) -> None:
        assert phase >= self._phase(lid), "phase moves forward only"
        self.storage[("phase", lid)] = phase

    def _bids(self, lid: int) -> list[Bid]:
        n = self.storage.get(("nbids", lid), 0)
        return [self.storage[("bid", lid, i)] for i in range(n)]

    def _pull(self, ctx: CallContext, src: bytes, amount: int) -> None:
        ctx.call(self.storage["coin"], "transferFrom", src, ctx.this, amount)

    def _pay(self, ctx: CallContext, dst: bytes, amount: int) -> None:
        if amount > 0:
            ctx.call(self.storage["coin"], "transfer", dst, amount)

    def _add_escrow(self, lid: int, bidder: bytes, amount: int) -> None:
        key = ("escrow", lid, bidder)
        self.storage[key] = self.storage.get(key, 0) + amount

    def _take_escrow(self, lid: int, bidder: bytes, amount: int) -> int:
        key = ("escrow", lid, bidder)
        have = self.storage.get(key, 0)
        amount = min(amount, have)
        self.storage[key] = have - amount
        return amount

    def _window(self, ctx: CallContext, lo: int, hi: int, what: str) -> None:
        if not (lo <= ctx.now < hi):
            raise OutsideWindow(f"{what} allowed in [{lo}, {hi}), now {ctx.now}")

    def _open_for_bids(self, ctx: CallContext, lid: int) -> ListingParams:
        p = self._params(lid)
        if self._phase(lid) >= Phase.Concluding:
            raise OutsideWindow("listing is closed")
        return p

    def _did_ok(self, ctx: CallContext, p: ListingParams, account: bytes) -> tuple[int, bytes] | None:
        """First trusted registry on this chain holding a verified DID for *account*."""
        for chain, rsc in p.trusted_registries:
            if chain != ctx.chain_id or rsc not in self.chain.contracts:
                continue
            if ctx.call(rsc, "isVerified", account, p.cred_def, p.trusted_svcs):
                return (chain, rsc)
        return None

    def _did_guard(self, ctx: CallContext, p: ListingParams) -> bool:
        if not p.require_did:
            return False
        if self._did_ok(ctx, p, ctx.caller) is None:
            raise DidRequired("bidder has no verified DID from a trusted registry")
        return True

    def _record_bid(self, ctx: CallContext, lid: int, *, escrow: int, value=None, commitment=None,
                    did_backed=False) -> int:
        n = self.storage.get(("nbids", lid), 0)
        self._pull(ctx, ctx.caller, escrow)
        bid = Bid(lid, ctx.chain_id, n, ctx.caller, ctx.now, escrow, value, commitment, False, did_backed)
        self.storage[("bid", lid, n)] = bid
        self.storage[("nbids", lid)] = n + 1
        self._add_escrow(lid, ctx.caller, escrow)
        payload = dict(listing=lid, chain=ctx.chain_id, index=n, bidder=ctx.caller, placedAt=ctx.now, escrowed=escrow)
        if commitment is not None:
            payload["commitment"] = commitment
        else:
            payload["value"] = value
        ctx.emit("BidPlaced", **payload)
        return n

    def _finish_if_resolved(self, ctx: CallContext, lid: int) -> None:
        deals = [self.storage[("deal", lid, i)] for i in self.storage[("winners", lid)]]
        if any(d.status == "pending" for d in deals):
            return
        final = Phase.Finalized if any(d.status == "settled" for d in deals) else Phase.Aborted
        self._set_phase(lid, final)
        ctx.emit("ListingFinalized", listing=lid, chain=ctx.chain_id, phase=final.name)

    def _settle(self, ctx: CallContext, p: ListingParams, deal: SubDeal) -> SubDeal:
        lid = p.listing_id
        taken = self._take_escrow(lid, deal.winner, deal.price)
        assert taken == deal.price, "winner escrow must cover the clearing price"
        svc = self.storage[("closer", lid)]
        svc_fee = min(p.svc_fee, deal.price)
        gov_fee = min(p.gov_fee, deal.price - svc_fee)
        if not p.treasury:
            gov_fee = 0
        net = deal.price - svc_fee - gov_fee
        self._pay(ctx, p.vendor, net)
        self._pay(ctx, svc, svc_fee)
        self._pay(ctx, p.treasury, gov_fee)
        ctx.emit("Settled", listing=lid, chain=ctx.chain_id, index=deal.index, winner=deal.winner,
                 price=deal.price, vendorNet=net, svc=svc, svcFee=svc_fee, govFee=gov_fee)
        return replace(deal, status="settled")

    def _abort_deal(self, ctx: CallContext, p: ListingParams, deal: SubDeal, reason: str,
                    penalize_winner: bool) -> SubDeal:
        forfeited = 0
        if penalize_winner:
            forfeited = self._take_escrow(p.listing_id, deal.winner, p.abort_penalty)
            self._pay(ctx, p.vendor, forfeited)
        ctx.emit("AbortedEvent", listing=p.listing_id, chain=ctx.chain_id, index=deal.index,
                 winner=deal.winner, reason=reason, forfeited=forfeited)
        return replace(deal, status="aborted")

    def _expire_if_due(self, ctx: CallContext, lid: int) -> bool:
        p = self._params(lid)
        phase = self._phase(lid)
        if phase.terminal or ctx.now < p.feedback_time:
            return False
        if phase < Phase.Concluding:
            # never concluded: every escrow becomes refundable, penalties included
            self._set_phase(lid, Phase.Aborted)
            ctx.emit("AbortedEvent", listing=lid, chain=ctx.chain_id, index=-1, winner=b"",
                     reason="unconcluded", forfeited=0)
            ctx.emit("ListingFinalized", listing=lid, chain=ctx.chain_id, phase=Phase.Aborted.name)
            return True
        for i in self.storage[("winners", lid)]:
            deal = self.storage[("deal", lid, i)]
            if deal.status == "pending":
                lazy = deal.winner_vote is None
                self.storage[("deal", lid, i)] = self._abort_deal(ctx, p, deal, "vote-timeout", lazy)
        self._finish_if_resolved(ctx, lid)
        return True

    # -- lifecycle -----------------------------------------------------------

    @external
    def startAuction(self, ctx: CallContext, params: ListingParams) -> bool:
        if ctx.caller not in params.trusted_svcs:
            raise Unauthorized("only a listing's relayers may start its auction")
        params.validate()
        if ctx.chain_id not in params.coin_chains:
            raise InvalidParams(f"chain {ctx.chain_id} is not a coin chain of this listing")
        lid = params.listing_id
        if lid < 0:
            raise InvalidParams("listing id missing")
        existing = self.storage.get(("params", lid))
        if existing is not None:
            if existing != params:
                raise AlreadyStarted(f"listing {lid} started with different parameters")
            return False
        self.storage[("params", lid)] = params
        self.storage[("phase", lid)] = Phase.Bidding
        ctx.emit("AuctionStarted", listing=lid, chain=ctx.chain_id, by=ctx.caller)
        return True

    @external
    def startReveal(self, ctx: CallContext, lid: int) -> bool:
        p = self._params(lid)
        if ctx.caller not in p.trusted_svcs and ctx.caller != p.vendor:
            raise Unauthorized("only relayers or the vendor mark the reveal phase")
        if not p.listing_type.sealed:
            raise WrongType("no reveal phase for open listings")
        self._window(ctx, p.reveal_time, p.conclude_time, "startReveal")
        if self._phase(lid) != Phase.Bidding:
            return False
        self._set_phase(lid, Phase.Reveal)
        ctx.emit("RevealStarted", listing=lid, chain=ctx.chain_id, by=ctx.caller)
        return True

    @external
    def bidFixed(self, ctx: CallContext, lid: int) -> int:
        p = self._open_for_bids(ctx, lid)
        if p.listing_type is not ListingType.Fixed:
            raise WrongType("bidFixed on a non-fixed listing")
        self._window(ctx, p.start_time, p.conclude_time, "bidFixed")
        did = self._did_guard(ctx, p)
        return self._record_bid(ctx, lid, escrow=p.initial_price, value=p.initial_price, did_backed=did)

    @external
    def bidOpen(self, ctx: CallContext, lid: int, value: int) -> int:
        p = self._open_for_bids(ctx, lid)
        t = p.listing_type
        if t not in (ListingType.OpenIncreasing, ListingType.OpenDecreasing):
            raise WrongType("bidOpen on a non-open listing")
        self._window(ctx, p.start_time, p.conclude_time, "bidOpen")
        if not isinstance(value, int) or value < 0:
            raise BidTooLow("bid value must be a non-negative integer")
        if t is ListingType.OpenIncreasing:
            highest = self.storage.get(("highest", lid), p.initial_price - 1)
            if value <= highest:
                raise BidTooLow(f"{value} does not exceed {highest}")
        else:
            if self.storage.get(("nbids", lid), 0):
                raise AlreadyHasFirstBid("descending-price listing already has its bid on this chain")
            price = p.scheduled_price(ctx.now)
            if value < price:
                raise BidTooLow(f"{value} below scheduled price {price}")
        did = self._did_guard(ctx, p)
        idx = self._record_bid(ctx, lid, escrow=value, value=value, did_backed=did)
        if t is ListingType.OpenIncreasing:
            self.storage[("highest", lid)] = value
        return idx

    @external
    def bidSealed(self, ctx: CallContext, lid: int, commitment: bytes) -> int:
        p = self._open_for_bids(ctx, lid)
        if not p.listing_type.sealed:
            raise WrongType("bidSealed on an open listing")
        self._window(ctx, p.start_time, p.reveal_time, "bidSealed")
        if not isinstance(commitment, bytes) or len(commitment) != 32:
            raise HashMismatch("commitment must be 32 bytes")
        did = self._did_guard(ctx, p)
        return self._record_bid(ctx, lid, escrow=p.abort_penalty, commitment=commitment, did_backed=did)

    @external
    def revealBid(self, ctx: CallContext, lid: int, index: int, value: int, salt: bytes) -> None:
        p = self._params(lid)
        if not p.listing_type.sealed:
            raise WrongType("revealBid on an open listing")
        self._window(ctx, p.reveal_time, p.conclude_time, "revealBid")
        if self._phase(lid) >= Phase.Concluding:
            raise OutsideWindow("listing is closed")
        bid = self.storage.get(("bid", lid, index))
        if bid is None:
            raise UnknownListing(f"no bid {index}")
        if bid.bidder != ctx.caller:
            raise Unauthorized("only the bidder reveals a bid")
        if bid.revealed:
            raise AlreadyVoted("bid already revealed")
        ctx.charge("hash_op")
        if not isinstance(value, int) or value < 0 or bid_commitment(value, salt) != bid.commitment:
            raise HashMismatch("value and salt do not open the commitment")
        if value < p.abort_penalty:
            raise BidTooLow("revealed value below the escrowed penalty")
        extra = value - p.abort_penalty
        self._pull(ctx, ctx.caller, extra)
        self._add_escrow(lid, ctx.caller, extra)
        self.storage[("bid", lid, index)] = replace(bid, value=value, revealed=True, escrowed=value)
        key = ("nrevealed", lid)
        self.storage[key] = self.storage.get(key, 0) + 1
        ctx.emit("BidRevealed", listing=lid, chain=ctx.chain_id, index=index, bidder=ctx.caller, value=value)

    @external
    def closeAuction(self, ctx: CallContext, lid: int, outcome: Outcome) -> bool:
        """Record the declared outcome for this chain's bids and move to ending."""
        p = self._params(lid)
        if ctx.caller not in p.trusted_svcs:
            raise Unauthorized("only a listing's relayers may close it")
        self._window(ctx, p.conclude_time, p.feedback_time, "closeAuction")
        phase = self._phase(lid)
        if phase >= Phase.Concluding:
            if self.storage[("outcome", lid)] != outcome:
                raise InvalidOutcome("already closed with a different outcome")
            return False
        bids = self._bids(lid)
        ctx.charge("hash_op", len(bids))
        problem = local_outcome_ok(p, ctx.chain_id, bids, outcome)
        if problem:
            raise LocalOutcomeMismatch(problem)
        self.storage[("outcome", lid)] = outcome
        self.storage[("closer", lid)] = ctx.caller
        # unrevealed sealed bids forfeit their penalty to the vendor
        forfeits: dict[bytes, int] = {}
        if p.listing_type.sealed:
            for b in bids:
                if not b.revealed:
                    forfeits[b.bidder] = forfeits.get(b.bidder, 0) + p.abort_penalty
        total = 0
        for bidder in sorted(forfeits):
            total += self._take_escrow(lid, bidder, forfeits[bidder])
        self._pay(ctx, p.vendor, total)
        local = outcome.on_chain(ctx.chain_id)
        for w in local:
            self.storage[("deal", lid, w.index)] = SubDeal(w.index, w.bidder, w.price)
        self.storage[("winners", lid)] = tuple(w.index for w in local)
        ctx.emit("ListingClosed", listing=lid, chain=ctx.chain_id, winners=[w.index for w in local],
                 outcome=outcome.to_json(), closedBy=ctx.caller, forfeited=total)
        self._set_phase(lid, Phase.Concluding)
        if not local:
            self._set_phase(lid, Phase.Finalized)
            ctx.emit("ListingFinalized", listing=lid, chain=ctx.chain_id, phase=Phase.Finalized.name)
        return True

    @external
    def commitResult(self, ctx: CallContext, lid: int, index: int, vote: str, signature: bytes) -> str:
        p = self._params(lid)
        if self._expire_if_due(ctx, lid):
            return "expired"
        if self._phase(lid) != Phase.Concluding:
            raise NotEnding(f"listing {lid} is not awaiting votes")
        deal = self.storage.get(("deal", lid, index))
        if deal is None:
            raise NotParticipant(f"bid {index} did not win")
        if ctx.caller == deal.winner:
            role = "winner"
        elif ctx.caller == p.vendor:
            role = "vendor"
        else:
            raise NotParticipant("caller is neither winner nor vendor")
        if vote not in VOTES:
            raise InvalidParams(f"vote must be one of {VOTES}")
        if deal.status != "pending" or deal.vote_of(role) is not None:
            raise AlreadyVoted(f"{role} vote already settled")
        payload = vote_payload(lid, ctx.chain_id, index, deal.winner, deal.price, vote)
        if not ctx.verify(ctx.caller, payload, signature):
            raise BadSignature("vote signature does not verify")
        deal = replace(deal, **{f"{role}_vote": vote})
        ctx.emit("VoteCast", listing=lid, chain=ctx.chain_id, index=index, voter=ctx.caller, role=role,
                 vote=vote, winner=deal.winner, price=deal.price, signature=signature)
        if vote == "abort":
            deal = self._abort_deal(ctx, p, deal, f"{role}-abort", penalize_winner=(role == "winner"))
        elif deal.winner_vote == "commit" and deal.vendor_vote == "commit":
            deal = self._settle(ctx, p, deal)
        self.storage[("deal", lid, index)] = deal
        if deal.status != "pending":
            self._finish_if_resolved(ctx, lid)
        return deal.status

    @external
    def expire(self, ctx: CallContext, lid: int) -> bool:
        """Apply the feedback-time timer; anyone may call it."""
        return self._expire_if_due(ctx, lid)

    @external
    def withdraw(self, ctx: CallContext, lid: int) -> int:
        self._params(lid)
        self._expire_if_due(ctx, lid)
        if not self._phase(lid).terminal:
            raise ListingActive(f"listing {lid} is still running")
        key = ("escrow", lid, ctx.caller)
        amount = self.storage.get(key, 0)
        if amount == 0:
            return 0
        self.storage[key] = 0
        self._pay(ctx, ctx.caller, amount)
        ctx.emit("Withdrawn", listing=lid, chain=ctx.chain_id, bidder=ctx.caller, amount=amount)
        return amount

    @external
    def feedback(self, ctx: CallContext, lid: int, index: int, score: int, comment_hash: bytes,
                 did_ref: tuple[int, bytes] | None = None) -> bool:
        p = self._params(lid)
        self._window(ctx, p.conclude_time, p.feedback_time, "feedback")
        deal = self.storage.get(("deal", lid, index))
        if deal is None or deal.winner != ctx.caller or deal.status != "settled":
            raise NotWinner("only a settled winning bidder leaves feedback")
        if not isinstance(score, int) or not 1 <= score <= 5:
            raise InvalidParams("score must be in 1..5")
        if ("feedback", lid, index) in self.storage:
            raise DuplicateFeedback(f"feedback for bid {index} already stored")
        backed = False
        registry = None
        if did_ref is not None:
            chain, rsc = did_ref
            if (chain, rsc) in p.trusted_registries and chain == ctx.chain_id and rsc in self.chain.contracts:
                backed = bool(ctx.call(rsc, "isVerified", ctx.caller, p.cred_def, p.trusted_svcs))
                registry = (chain, rsc) if backed else None
        entry = FeedbackEntry(lid, ctx.chain_id, index, ctx.caller, score, comment_hash, backed, registry)
        self.storage[("feedback", lid, index)] = entry
        ctx.emit("FeedbackStored", listing=lid, chain=ctx.chain_id, index=index, rater=ctx.caller,
                 vendor=p.vendor, score=score, commentHash=comment_hash, didBacked=backed, registry=registry)
        return backed

    # -- views -----------------------------------------------------------

    @view
    def params(self, ctx: CallContext, lid: int) -> ListingParams:
        return self._params(lid)

    @view
    def hasListing(self, ctx: CallContext, lid: int) -> bool:
        return ("params", lid) in self.storage

    @view
    def phase(self, ctx: CallContext, lid: int) -> Phase:
        self._params(lid)
        return self._phase(lid)

    @view
    def bids(self, ctx: CallContext, lid: int) -> list[Bid]:
        return self._bids(lid)

    @view
    def bid(self, ctx: CallContext, lid: int, index: int) -> Bid:
        return self.storage[("bid", lid, index)]

    @view
    def escrowOf(self, ctx: CallContext, lid: int, bidder: bytes) -> int:
        return self.storage.get(("escrow", lid, bidder), 0)

    @view
    def outcome(self, ctx: CallContext, lid: int) -> Outcome | None:
        return self.storage.get(("outcome", lid))

    @view
    def deal(self, ctx: CallContext, lid: int, index: int) -> SubDeal | None:
        return self.storage.get(("deal", lid, index))

    @view
    def deals(self, ctx: CallContext, lid: int) -> list[SubDeal]:
        return [self.storage[("deal", lid, i)] for i in self.storage.get(("winners", lid), ())]

    @view
    def feedbackOf(self, ctx: CallContext, lid: int, index: int) -> FeedbackEntry | None:
        return self.storage.get(("feedback", lid, index))

    @view
    def liveEscrow(self, ctx: CallContext) -> int:
        return sum(v for k, v in self.storage.items() if isinstance(k, tuple) and k[0] == "escrow")

    @view
    def listings(self, ctx: CallContext) -> list[int]:
        return sorted(k[1] for k in self.storage._data if isinstance(k, tuple) and k[0] == "params")
