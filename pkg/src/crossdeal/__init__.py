"""Deterministic multi-chain marketplace: escrowed auctions settled across simulated chains."""

from .simchain import GasSchedule, World, create_world

__version__ = "0.1.0"

__all__ = ["GasSchedule", "World", "create_world", "__version__"]
