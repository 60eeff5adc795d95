"""Listings, auctions, escrow and reputation."""

from .auction import (
    Bid,
    FeedbackEntry,
    ListingParams,
    ListingType,
    Outcome,
    Phase,
    Winner,
    compute_winner,
    eligible,
    local_outcome_ok,
    vote_payload,
)

__all__ = [
    "Bid",
    "FeedbackEntry",
    "ListingParams",
    "ListingType",
    "Outcome",
    "Phase",
    "Winner",
    "compute_winner",
    "eligible",
    "local_outcome_ok",
    "vote_payload",
]
