"""Exception hierarchy.

Anything deriving from :class:`Revert` aborts the enclosing chain transaction
and surfaces in the receipt; everything else is raised to the caller.
"""

from __future__ import annotations


class CrossDealError(Exception):
    """Base class for all package errors."""


class ConfigError(CrossDealError, ValueError):
    pass


class InvariantViolation(CrossDealError):
    def __init__(self, probe: str, detail: str, trace: list | None = None):
        super().__init__(f"{probe}: {detail}")
        self.probe = probe
        self.detail = detail
        self.trace = trace or []


# -- chain-level call errors (raised, never wrapped in a receipt) ----------


class NoSuchContract(CrossDealError):
    pass


class NoSuchMethod(CrossDealError):
    pass


class UnknownKind(CrossDealError):
    pass


# -- contract reverts -------------------------------------------------------


class Revert(CrossDealError):
    """A contract refused the transaction; state is rolled back."""

    @property
    def reason(self) -> str:
        msg = str(self)
        name = type(self).__name__
        return f"{name}: {msg}" if msg else name


class Unauthorized(Revert):
    pass


class InsufficientFunds(Revert):
    pass


class ReadOnlyViolation(Revert):
    pass


class UnknownListing(Revert):
    pass


class BadTimers(Revert):
    pass


class AssetNotOwned(Revert):
    pass


class EmptySvcSet(Revert):
    pass


class WrongType(Revert):
    pass


class OutsideWindow(Revert):
    pass


class DidRequired(Revert):
    pass


class BidTooLow(Revert):
    pass


class AlreadyHasFirstBid(Revert):
    pass


class HashMismatch(Revert):
    pass


class InvalidOutcome(Revert):
    pass


class LocalOutcomeMismatch(Revert):
    pass


class NotEnding(Revert):
    pass


class NotParticipant(Revert):
    pass


class AlreadyVoted(Revert):
    pass


class BadSignature(Revert):
    pass


class ListingActive(Revert):
    pass


class NotWinner(Revert):
    pass


class DuplicateFeedback(Revert):
    pass


class DuplicateClaim(Revert):
    pass


class UnknownClaim(Revert):
    pass


class UnknownRecord(Revert):
    pass


# -- off-chain component errors --------------------------------------------


class OffsetBeyondEnd(CrossDealError):
    pass


class AlreadyRegistered(CrossDealError):
    pass


class EmptyAttributes(CrossDealError):
    pass


class SchemaMismatch(CrossDealError):
    pass


class UnknownSchema(CrossDealError):
    pass


class InvalidProof(CrossDealError):
    pass


class InvalidParams(Revert):
    pass


class AlreadyStarted(Revert):
    pass
