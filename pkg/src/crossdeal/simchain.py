"""Deterministic simulation of independent account-model chains.

A :class:`World` owns a set of :class:`Chain` objects sharing one
:class:`UniversalClock`. Each chain keeps its own contracts, journal and gas
log, and timestamps events with ``clock.now + skew`` where the per-chain skew
is fixed for the lifetime of the world and bounded by ``delta``.

Contracts are plain Python classes registered under a *kind*. Public entry
points are marked with :func:`external` (state-changing, metered) or
:func:`view` (pure reads). All persistent contract state lives in
:class:`Storage`, which meters first writes and updates separately and keeps
an undo log so that a reverting transaction leaves no trace.
"""

from __future__ import annotations

import dataclasses
import importlib
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Iterable

from .crypto import KeyRing, canonical, canonical_json, hexdigest, sha256
from .errors import (
    ConfigError,
    NoSuchContract,
    NoSuchMethod,
    ReadOnlyViolation,
    Revert,
    UnknownKind,
)

AccountId = bytes
ChainId = int

GAS_OPS = ("base_call", "storage_new", "storage_update", "hash_op", "event_emit", "coin_transfer")


@dataclass(frozen=True)
class GasSchedule:
    base_call: int = 21000
    storage_new: int = 20000
    storage_update: int = 5000
    hash_op: int = 30
    event_emit: int = 375
    coin_transfer: int = 9000

    @classmethod
    def zero(cls) -> "GasSchedule":
        """Schedule for permissioned (Fabric-like) chains: nothing costs gas."""
        return cls(0, 0, 0, 0, 0, 0)

    @property
    def is_zero(self) -> bool:
        return all(getattr(self, op) == 0 for op in GAS_OPS)

    def validate(self) -> "GasSchedule":
        if self.is_zero:
            return self
        for op in GAS_OPS:
            if getattr(self, op) <= 0:
                raise ConfigError(f"gas schedule entry {op} must be positive")
        if self.storage_new <= self.storage_update:
            raise ConfigError("storage_new must exceed storage_update")
        return self

    def cost(self, op: str) -> int:
        return getattr(self, op)


DEFAULT_SCHEDULE = GasSchedule()


class UniversalClock:
    def __init__(self, delta: int, skews: dict[int, int], now: int = 0):
        if delta < 0:
            raise ConfigError("delta must be >= 0")
        for cid, s in skews.items():
            if abs(s) > delta:
                raise ConfigError(f"skew {s} of chain {cid} exceeds delta {delta}")
        self.now = now
        self.delta = delta
        self.skews = dict(skews)

    def advance(self, dt: int) -> None:
        if dt < 0:
            raise ValueError("time only moves forward")
        self.now += dt

    def chain_time(self, chain: int) -> int:
        return self.now + self.skews[chain]


def account_address(label: str) -> AccountId:
    """Keyless address derived from a label (fixtures, treasuries)."""
    return sha256(b"label:" + label.encode())[:20]


def contract_address(creator: AccountId, nonce: int) -> AccountId:
    return sha256(b"create:" + creator + nonce.to_bytes(8, "big"))[:20]


@dataclass(frozen=True)
class JournalEntry:
    chain: int
    index: int
    timestamp: int
    contract: AccountId
    event: str
    payload: dict
    tx_id: int

    def export(self) -> dict:
        return {
            "chain": self.chain,
            "index": self.index,
            "timestamp": self.timestamp,
            "contract": "0x" + self.contract.hex(),
            "event": self.event,
            "payload_hash": hexdigest(self.payload),
        }

    def content_hash(self) -> str:
        return hexdigest((self.chain, self.index, self.timestamp, self.contract, self.event, self.payload))


@dataclass
class TxReceipt:
    tx_id: int
    chain: int
    caller: AccountId
    contract: AccountId
    method: str
    gas_used: int
    events: list[JournalEntry]
    error: Revert | None = None
    return_value: Any = None
    trace: list[tuple[str, int]] = field(default_factory=list)
    wall_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def outcome(self) -> str:
        return "success" if self.error is None else f"revert({self.error.reason})"

    def raise_for_revert(self) -> "TxReceipt":
        if self.error is not None:
            raise self.error
        return self


_MISSING = object()


class _Tx:
    __slots__ = ("id", "chain", "schedule", "trace", "undo", "events", "now")

    def __init__(self, tx_id: int, chain: "Chain"):
        self.id = tx_id
        self.chain = chain
        self.schedule = chain.schedule
        self.trace: list[tuple[str, int]] = []
        self.undo: list[tuple[dict, Any, Any]] = []
        self.events: list[tuple[AccountId, str, dict]] = []
        self.now = chain.time()

    def charge(self, op: str, times: int = 1) -> None:
        cost = self.schedule.cost(op)
        for _ in range(times):
            self.trace.append((op, cost))

    def write(self, table: dict, key: Any, value: Any) -> None:
        self.undo.append((table, key, table.get(key, _MISSING)))
        table[key] = value

    def rollback(self) -> None:
        for table, key, old in reversed(self.undo):
            if old is _MISSING:
                table.pop(key, None)
            else:
                table[key] = old
        self.undo.clear()
        self.events.clear()

    @property
    def gas(self) -> int:
        return sum(c for _, c in self.trace)


class Storage:
    """Contract key/value storage; values must be immutable."""

    __slots__ = ("_chain", "_data")

    def __init__(self, chain: "Chain"):
        self._chain = chain
        self._data: dict[Any, Any] = {}

    def __getitem__(self, key: Any) -> Any:
        return self._data[key]

    def __contains__(self, key: Any) -> bool:
        return key in self._data

    def get(self, key: Any, default: Any = None) -> Any:
        return self._data.get(key, default)

    def __setitem__(self, key: Any, value: Any) -> None:
        tx = self._chain._writable_tx()
        tx.charge("storage_update" if key in self._data else "storage_new")
        tx.write(self._data, key, value)

    def set_unmetered(self, key: Any, value: Any) -> None:
        """Write without a storage charge (the caller charges a flat fee)."""
        self._chain._writable_tx().write(self._data, key, value)

    def items(self) -> Iterable[tuple[Any, Any]]:
        return self._data.items()

    def __len__(self) -> int:
        return len(self._data)


def external(fn: Callable) -> Callable:
    fn._external = True
    return fn


def view(fn: Callable) -> Callable:
    fn._view = True
    return fn


CONTRACT_KINDS: dict[str, type["Contract"]] = {}
_KIND_MODULES = (
    "crossdeal.stablecoin",
    "crossdeal.market.contract",
    "crossdeal.market.asset",
    "crossdeal.identity",
    "crossdeal.audit",
)


def register_kind(kind: str):
    def deco(cls: type["Contract"]) -> type["Contract"]:
        cls.kind = kind
        CONTRACT_KINDS[kind] = cls
        return cls

    return deco


def _contract_class(kind: str) -> type["Contract"]:
    if kind not in CONTRACT_KINDS:
        for mod in _KIND_MODULES:
            try:
                importlib.import_module(mod)
            except ModuleNotFoundError as exc:
                if exc.name != mod:
                    raise
    try:
        return CONTRACT_KINDS[kind]
    except KeyError:
        raise UnknownKind(kind) from None


class Contract:
    kind: ClassVar[str] = "abstract"

    def __init__(self, chain: "Chain", address: AccountId):
        self.chain = chain
        self.address = address
        self.storage = Storage(chain)

    def setup(self, ctx: "CallContext", *args: Any, **kwargs: Any) -> None:
        pass

    def snapshot(self) -> dict:
        return {"kind": self.kind, "storage": canonical(self.storage._data)}


class CallContext:
    """What a contract method sees: caller, chain time, and metered helpers."""

    __slots__ = ("world", "chain", "tx", "caller", "this")

    def __init__(self, world: "World", chain: "Chain", tx: _Tx | None, caller: AccountId, this: AccountId):
        self.world = world
        self.chain = chain
        self.tx = tx
        self.caller = caller
        self.this = this

    @property
    def now(self) -> int:
        return self.tx.now if self.tx is not None else self.chain.time()

    @property
    def chain_id(self) -> int:
        return self.chain.id

    @property
    def keyring(self) -> KeyRing:
        return self.world.keyring

    def charge(self, op: str, times: int = 1) -> None:
        if self.tx is None:
            return
        self.tx.charge(op, times)

    def verify(self, account: AccountId, payload: Any, signature: bytes) -> bool:
        from .crypto import verify_payload

        self.charge("hash_op", 2)
        return verify_payload(self.world.keyring, account, payload, signature)

    def emit(self, event: str, **payload: Any) -> None:
        if self.tx is None:
            raise ReadOnlyViolation("cannot emit from a view")
        self.tx.charge("event_emit")
        self.tx.events.append((self.this, event, payload))

    def call(self, address: AccountId, method: str, *args: Any, **kwargs: Any) -> Any:
        contract = self.chain.contracts.get(address)
        if contract is None:
            raise NoSuchContract(address.hex())
        fn = _resolve(contract, method, allow_view=True)
        sub = CallContext(self.world, self.chain, self.tx, self.this, address)
        if getattr(fn, "_view", False):
            return fn(sub, *args, **kwargs)
        if self.tx is None:
            raise ReadOnlyViolation(f"{method} called from a view")
        return fn(sub, *args, **kwargs)


def _resolve(contract: Contract, method: str, allow_view: bool) -> Callable:
    fn = getattr(contract, method, None)
    if fn is None or not (getattr(fn, "_external", False) or (allow_view and getattr(fn, "_view", False))):
        raise NoSuchMethod(f"{contract.kind}.{method}")
    return fn


class Chain:
    def __init__(self, world: "World", chain_id: int, schedule: GasSchedule):
        self.world = world
        self.id = chain_id
        self.schedule = schedule
        self.balances: dict[AccountId, int] = {}
        self.contracts: dict[AccountId, Contract] = {}
        self.journal: list[JournalEntry] = []
        self.nonce: dict[AccountId, int] = {}
        self.gas_used_log: list[tuple[int, int]] = []
        # wall-clock measurements are kept apart: they never enter digests
        self.wall_ms: dict[int, float] = {}
        self.tx_methods: dict[int, str] = {}
        self._tx: _Tx | None = None
        self._readonly = 0

    def time(self) -> int:
        return self.world.clock.chain_time(self.id)

    def _writable_tx(self) -> _Tx:
        if self._tx is None or self._readonly:
            raise ReadOnlyViolation("storage write outside a transaction")
        return self._tx

    def contract(self, address: AccountId) -> Contract:
        try:
            return self.contracts[address]
        except KeyError:
            raise NoSuchContract(address.hex()) from None

    def snapshot(self) -> dict:
        return {
            "id": self.id,
            "schedule": canonical(self.schedule),
            "balances": canonical(self.balances),
            "nonce": canonical(self.nonce),
            "contracts": [[canonical(a), c.snapshot()] for a, c in sorted(self.contracts.items())],
            "journal": [canonical(e) for e in self.journal],
            "gas_used_log": canonical(self.gas_used_log),
        }

    def state_digest(self) -> str:
        """Digest of state proper: contracts, balances, nonces and journal."""
        return hexdigest(
            {
                "balances": self.balances,
                "nonce": self.nonce,
                "contracts": [[a, c.snapshot()] for a, c in sorted(self.contracts.items())],
                "journal": self.journal,
            }
        )


class World:
    """A set of chains under one clock. Mutations are serialized by a lock."""

    def __init__(
        self,
        chain_count: int,
        delta: int,
        schedule: GasSchedule = DEFAULT_SCHEDULE,
        seed: int = 0,
        chain_schedules: dict[int, GasSchedule] | None = None,
    ):
        if chain_count < 1:
            raise ConfigError("a world needs at least one chain")
        if delta < 0:
            raise ConfigError("delta must be >= 0")
        schedule.validate()
        self.seed = seed
        rng = random.Random(seed)
        skews = {c: rng.randint(-delta, delta) for c in range(chain_count)}
        self.clock = UniversalClock(delta, skews)
        self.schedule = schedule
        overrides = chain_schedules or {}
        self.chains = []
        for c in range(chain_count):
            sched = overrides.get(c, schedule).validate()
            self.chains.append(Chain(self, c, sched))
        self.keyring = KeyRing(seed)
        self._next_tx = 0
        self._lock = threading.RLock()

    # -- time ---------------------------------------------------------------

    @property
    def now(self) -> int:
        return self.clock.now

    @property
    def delta(self) -> int:
        return self.clock.delta

    def advance_time(self, dt: int) -> None:
        with self._lock:
            self.clock.advance(dt)

    def chain(self, chain_id: int) -> Chain:
        try:
            return self.chains[chain_id]
        except IndexError:
            raise ConfigError(f"no chain {chain_id}") from None

    def chain_time(self, chain_id: int) -> int:
        return self.clock.chain_time(chain_id)

    # -- transactions ---------------------------------------------------------

    def _begin(self, chain: Chain) -> _Tx:
        tx = _Tx(self._next_tx, chain)
        self._next_tx += 1
        chain._tx = tx
        return tx

    def _finish(self, chain: Chain, tx: _Tx, error: Revert | None, method: str, t0: float) -> list[JournalEntry]:
        entries: list[JournalEntry] = []
        if error is None:
            for addr, event, payload in tx.events:
                entry = JournalEntry(chain.id, len(chain.journal), tx.now, addr, event, payload, tx.id)
                chain.journal.append(entry)
                entries.append(entry)
        chain._tx = None
        chain.gas_used_log.append((tx.id, tx.gas))
        chain.tx_methods[tx.id] = method
        chain.wall_ms[tx.id] = (time.perf_counter() - t0) * 1000.0
        return entries

    def deploy_tx(self, chain_id: int, deployer: AccountId, kind: str, *init_args: Any, **init_kwargs: Any) -> TxReceipt:
        cls = _contract_class(kind)
        with self._lock:
            chain = self.chain(chain_id)
            t0 = time.perf_counter()
            tx = self._begin(chain)
            nonce = chain.nonce.get(deployer, 0)
            address = contract_address(deployer, nonce)
            error = None
            try:
                tx.charge("base_call")
                tx.write(chain.nonce, deployer, nonce + 1)
                contract = cls(chain, address)
                tx.write(chain.contracts, address, contract)
                contract.setup(CallContext(self, chain, tx, deployer, address), *init_args, **init_kwargs)
            except Revert as exc:
                tx.rollback()
                error = exc
            events = self._finish(chain, tx, error, f"deploy:{kind}", t0)
            return TxReceipt(
                tx.id, chain_id, deployer, address, f"deploy:{kind}", tx.gas, events, error,
                address if error is None else None, list(tx.trace), chain.wall_ms[tx.id],
            )

    def deploy(self, chain_id: int, deployer: AccountId, kind: str, *init_args: Any, **init_kwargs: Any) -> AccountId:
        receipt = self.deploy_tx(chain_id, deployer, kind, *init_args, **init_kwargs)
        receipt.raise_for_revert()
        return receipt.return_value

    def call(self, chain_id: int, caller: AccountId, contract: AccountId, method: str, *args: Any, **kwargs: Any) -> TxReceipt:
        with self._lock:
            chain = self.chain(chain_id)
            target = chain.contract(contract)
            fn = _resolve(target, method, allow_view=False)
            t0 = time.perf_counter()
            tx = self._begin(chain)
            error = None
            result = None
            try:
                tx.charge("base_call")
                result = fn(CallContext(self, chain, tx, caller, contract), *args, **kwargs)
            except Revert as exc:
                tx.rollback()
                error = exc
            except BaseException:
                tx.rollback()
                chain._tx = None
                raise
            events = self._finish(chain, tx, error, method, t0)
            return TxReceipt(
                tx.id, chain_id, caller, contract, method, tx.gas, events, error,
                result if error is None else None, list(tx.trace), chain.wall_ms[tx.id],
            )

    def view(self, chain_id: int, contract: AccountId, method: str, *args: Any, **kwargs: Any) -> Any:
        """Run a read-only method; any storage write raises ReadOnlyViolation."""
        chain = self.chain(chain_id)
        target = chain.contract(contract)
        fn = getattr(target, method, None)
        if fn is None or not getattr(fn, "_view", False):
            raise NoSuchMethod(f"{target.kind}.{method} is not a view")
        chain._readonly += 1
        try:
            return fn(CallContext(self, chain, None, b"\x00" * 20, contract), *args, **kwargs)
        finally:
            chain._readonly -= 1

    # -- reads ----------------------------------------------------------------

    def read_journal(self, chain_id: int, from_index: int = 0) -> list[JournalEntry]:
        if from_index < 0:
            raise ValueError("from_index must be >= 0")
        return self.chain(chain_id).journal[from_index:]

    def contract(self, chain_id: int, address: AccountId) -> Contract:
        return self.chain(chain_id).contract(address)

    # -- serialization ------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "seed": self.seed,
            "clock": {"now": self.clock.now, "delta": self.clock.delta, "skews": canonical(self.clock.skews)},
            "chains": [c.snapshot() for c in self.chains],
        }

    def serialize(self) -> str:
        return canonical_json(self.snapshot())

    def digest(self) -> str:
        return hexdigest(self.snapshot())

    def export_journal(self) -> str:
        import json

        lines = []
        for chain in self.chains:
            for entry in chain.journal:
                lines.append(json.dumps(entry.export(), sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def create_world(chain_count: int, delta: int, schedule: GasSchedule = DEFAULT_SCHEDULE, seed: int = 0,
                 chain_schedules: dict[int, GasSchedule] | None = None) -> World:
    return World(chain_count, delta, schedule, seed, chain_schedules)


def dataclass_replace(obj: Any, **changes: Any) -> Any:
    return dataclasses.replace(obj, **changes)
