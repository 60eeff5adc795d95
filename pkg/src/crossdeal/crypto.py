"""Canonical encoding, hashing, commitments and the signature stand-in.

Everything that gets hashed, signed or compared across runs goes through
:func:`canonical` first so that field order and container types never leak
into digests.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import hmac
import json
from fractions import Fraction
from typing import Any, Protocol


def canonical(obj: Any) -> Any:
    """Reduce *obj* to plain JSON types with a stable ordering."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return repr(obj)
    if isinstance(obj, (bytes, bytearray)):
        return "0x" + bytes(obj).hex()
    if isinstance(obj, enum.Enum):
        return obj.name
    if isinstance(obj, Fraction):
        return str(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: canonical(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        if all(isinstance(k, str) for k in obj):
            return {k: canonical(v) for k, v in sorted(obj.items())}
        pairs = [[canonical(k), canonical(v)] for k, v in obj.items()]
        pairs.sort(key=lambda kv: _dumps(kv[0]))
        return pairs
    if isinstance(obj, (list, tuple)):
        return [canonical(x) for x in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted((canonical(x) for x in obj), key=_dumps)
    if hasattr(obj, "to_canonical"):
        return canonical(obj.to_canonical())
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def _dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def canonical_json(obj: Any) -> str:
    return _dumps(canonical(obj))


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def digest(obj: Any) -> bytes:
    """32-byte digest of the canonical form of *obj*."""
    return sha256(canonical_json(obj).encode())


def hexdigest(obj: Any) -> str:
    return digest(obj).hex()


def hash160(data: bytes) -> bytes:
    return sha256(b"h160:" + data)[:20]


def bid_commitment(value: int, salt: bytes) -> bytes:
    """Sealed-bid commitment H(value || salt)."""
    if value < 0:
        raise ValueError("bid value must be non-negative")
    return sha256(value.to_bytes(32, "big") + salt)


def attribute_commitment(name: str, value: str, salt: bytes) -> bytes:
    return sha256(b"attr:" + name.encode() + b"\x00" + value.encode() + b"\x00" + salt)


# -- signatures --------------------------------------------------------------


class SignatureScheme(Protocol):
    def sign(self, account: bytes, message: bytes) -> bytes: ...

    def verify(self, account: bytes, message: bytes, signature: bytes) -> bool: ...


class KeyRing:
    """Deterministic keyed-hash signatures standing in for ECDSA.

    Keys are derived from ``(seed, label)``. The ring keeps the secrets so it
    can act as the public verification oracle; participants only ever obtain
    a :class:`Signer` for their own account, so nobody can produce another
    account's tags.
    """

    def __init__(self, seed: int):
        self._seed = seed.to_bytes(16, "big", signed=True)
        self._secrets: dict[bytes, bytes] = {}
        self._labels: dict[bytes, str] = {}

    def account(self, label: str) -> bytes:
        secret = sha256(b"key:" + self._seed + label.encode())
        public = sha256(b"pub:" + secret)
        acct = sha256(b"acct:" + public)[:20]
        self._secrets.setdefault(acct, secret)
        self._labels.setdefault(acct, label)
        return acct

    def signer(self, account: bytes) -> "Signer":
        if account not in self._secrets:
            raise KeyError(f"no key for account {account.hex()}")
        return Signer(self, account)

    def label(self, account: bytes) -> str:
        return self._labels.get(account, account.hex()[:10])

    def sign(self, account: bytes, message: bytes) -> bytes:
        return hmac.new(self._secrets[account], message, hashlib.sha256).digest()

    def verify(self, account: bytes, message: bytes, signature: bytes) -> bool:
        secret = self._secrets.get(account)
        if secret is None or not isinstance(signature, (bytes, bytearray)):
            return False
        expected = hmac.new(secret, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, bytes(signature))


@dataclasses.dataclass(frozen=True)
class Signer:
    ring: KeyRing
    account: bytes

    def sign(self, payload: Any) -> bytes:
        return self.ring.sign(self.account, digest(payload))

    def __repr__(self) -> str:
        return f"Signer({self.ring.label(self.account)})"


def verify_payload(scheme: SignatureScheme, account: bytes, payload: Any, signature: bytes) -> bool:
    return scheme.verify(account, digest(payload), signature)
