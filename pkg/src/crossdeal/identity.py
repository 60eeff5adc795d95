"""DID issuance and verification with salted-hash selective disclosure.

Roles live in a permissioned registry (:class:`VdrStore`): issuers register
as trust anchors and publish schemas and credential definitions; verifiers
register as trustees. An issuer hands a holder a :class:`Did` carrying one
commitment per attribute plus the private salts. The holder later opens any
subset of attributes in a :class:`DisclosureProof`, submits it to a
:class:`RegistrationContract` on some chain, and a verifier posts a signed
confirmation there.
"""

from __future__ import annotations

import enum
import random
import threading
from dataclasses import dataclass, field
from typing import Callable

from .crypto import KeyRing, attribute_commitment, hash160, hexdigest, verify_payload
from .errors import (
    AlreadyRegistered,
    BadSignature,
    EmptyAttributes,
    InvalidProof,
    SchemaMismatch,
    Unauthorized,
    UnknownRecord,
    UnknownSchema,
)
from .simchain import CallContext, Contract, external, register_kind, view


class Role(enum.Enum):
    Trustee = "trustee"
    TrustAnchor = "trust-anchor"


ROLE_FOR = {"issuer": Role.TrustAnchor, "verifier": Role.Trustee}


@dataclass(frozen=True)
class Schema:
    schema_id: str
    attributes: tuple[str, ...]
    issuer: bytes


@dataclass(frozen=True)
class CredDef:
    cred_def_id: str
    schema_id: str
    issuer: bytes
    tag: str
    revocable: bool = True


@dataclass(frozen=True)
class Did:
    did_id: str
    holder: bytes
    cred_def_id: str
    schema_id: str
    issuer: bytes
    commitments: tuple[tuple[str, bytes], ...]
    signature: bytes = b""

    def signed_part(self) -> tuple:
        return ("did", self.did_id, self.holder, self.cred_def_id, self.schema_id, self.issuer, self.commitments)

    def commitment(self, name: str) -> bytes | None:
        return dict(self.commitments).get(name)


@dataclass(frozen=True)
class DisclosureProof:
    did: Did
    revealed: tuple[tuple[str, str, bytes], ...]  # (name, value, salt)

    def values(self) -> dict[str, str]:
        return {n: v for n, v, _ in self.revealed}


@dataclass
class Credential:
    """Holder-side wallet entry: the DID plus the private openings."""

    did: Did
    values: dict[str, str]
    salts: dict[str, bytes]

    def prove(self, reveal: list[str] | tuple[str, ...] = ()) -> DisclosureProof:
        for name in reveal:
            if name not in self.values:
                raise SchemaMismatch(f"attribute {name!r} not in credential")
        return DisclosureProof(self.did, tuple((n, self.values[n], self.salts[n]) for n in reveal))


class VdrStore:
    """Permissioned registry of roles, schemas, credential definitions and revocations."""

    def __init__(self, keyring: KeyRing, clock: Callable[[], int] = lambda: 0, seed: int = 0):
        self.keyring = keyring
        self._clock = clock
        self._rng = random.Random(f"vdr:{seed}")
        self.roles: dict[bytes, Role] = {}
        self.schemas: dict[str, Schema] = {}
        self.cred_defs: dict[str, CredDef] = {}
        self.revoked: dict[str, int] = {}
        self._issued = 0
        self._lock = threading.Lock()

    # step 1
    def register_role(self, participant: bytes, requested: str | Role) -> Role:
        role = requested if isinstance(requested, Role) else ROLE_FOR.get(requested) or Role(requested)
        with self._lock:
            if participant in self.roles:
                raise AlreadyRegistered(self.keyring.label(participant))
            self.roles[participant] = role
        return role

    def _require(self, participant: bytes, role: Role) -> None:
        if self.roles.get(participant) is not role:
            raise Unauthorized(f"{self.keyring.label(participant)} lacks role {role.value}")

    # step 3
    def create_schema(self, issuer: bytes, attributes: list[str] | tuple[str, ...]) -> str:
        self._require(issuer, Role.TrustAnchor)
        attrs = tuple(attributes)
        if not attrs:
            raise EmptyAttributes("a schema needs at least one attribute")
        if len(set(attrs)) != len(attrs):
            raise SchemaMismatch("attribute names must be unique")
        with self._lock:
            sid = f"schema:{len(self.schemas)}:{hexdigest((issuer, attrs))[:12]}"
            self.schemas[sid] = Schema(sid, attrs, issuer)
        return sid

    def create_cred_def(self, issuer: bytes, schema_id: str, tag: str = "default", revocable: bool = True) -> str:
        self._require(issuer, Role.TrustAnchor)
        if schema_id not in self.schemas:
            raise UnknownSchema(schema_id)
        with self._lock:
            cid = f"creddef:{len(self.cred_defs)}:{hexdigest((issuer, schema_id, tag))[:12]}"
            self.cred_defs[cid] = CredDef(cid, schema_id, issuer, tag, revocable)
        return cid

    # step 4
    def issue_did(self, issuer: bytes, cred_def_id: str, holder: bytes, values: dict[str, str]) -> Credential:
        cd = self.cred_defs.get(cred_def_id)
        if cd is None:
            raise UnknownSchema(cred_def_id)
        if cd.issuer != issuer:
            raise Unauthorized("credential definition belongs to another issuer")
        self._require(issuer, Role.TrustAnchor)
        schema = self.schemas[cd.schema_id]
        if set(values) != set(schema.attributes):
            raise SchemaMismatch(f"values must cover exactly {schema.attributes}")
        with self._lock:
            n = self._issued
            self._issued += 1
            salts = {a: self._rng.randbytes(16) for a in schema.attributes}
        commitments = tuple((a, attribute_commitment(a, str(values[a]), salts[a])) for a in schema.attributes)
        did_id = f"did:cd:{hexdigest((issuer, holder, cred_def_id, n))[:24]}"
        unsigned = Did(did_id, holder, cred_def_id, cd.schema_id, issuer, commitments)
        sig = self.keyring.signer(issuer).sign(unsigned.signed_part())
        did = Did(did_id, holder, cred_def_id, cd.schema_id, issuer, commitments, sig)
        return Credential(did, {a: str(values[a]) for a in schema.attributes}, salts)

    def revoke(self, issuer: bytes, did_id: str, cred_def_id: str) -> int:
        cd = self.cred_defs.get(cred_def_id)
        if cd is None or cd.issuer != issuer:
            raise Unauthorized("only the issuing trust anchor revokes")
        if not cd.revocable:
            raise Unauthorized("credential definition is not revocable")
        with self._lock:
            self.revoked.setdefault(did_id, self._clock())
        return self.revoked[did_id]

    def is_revoked(self, did_id: str, at: int | None = None) -> bool:
        t = self.revoked.get(did_id)
        if t is None:
            return False
        return at is None or t <= at


def verify_disclosure(vdr: VdrStore, proof: DisclosureProof, at: int | None = None) -> None:
    """Check a proof against the registry; raise InvalidProof on any defect."""
    did = proof.did
    cd = vdr.cred_defs.get(did.cred_def_id)
    if cd is None or cd.schema_id != did.schema_id or did.schema_id not in vdr.schemas:
        raise InvalidProof("unknown schema or credential definition")
    if cd.issuer != did.issuer or vdr.roles.get(did.issuer) is not Role.TrustAnchor:
        raise InvalidProof("issuer is not the credential definition's trust anchor")
    if not verify_payload(vdr.keyring, did.issuer, did.signed_part(), did.signature):
        raise InvalidProof("issuer signature does not verify")
    schema = vdr.schemas[did.schema_id]
    if tuple(a for a, _ in did.commitments) != schema.attributes:
        raise InvalidProof("commitments do not match the schema")
    seen = set()
    for name, value, salt in proof.revealed:
        if name in seen:
            raise InvalidProof(f"attribute {name!r} opened twice")
        seen.add(name)
        expected = did.commitment(name)
        if expected is None or attribute_commitment(name, value, salt) != expected:
            raise InvalidProof(f"opening of {name!r} does not match its commitment")
    if vdr.is_revoked(did.did_id, at):
        raise InvalidProof("credential revoked")


def proof_valid(vdr: VdrStore, proof: DisclosureProof, at: int | None = None) -> bool:
    try:
        verify_disclosure(vdr, proof, at)
    except InvalidProof:
        return False
    return True


@dataclass
class Session:
    holder: bytes
    verifier: bytes
    did_id: str
    accepted: bool
    reason: str = ""


def request_verification(vdr: VdrStore, holder: bytes, verifier: bytes, did: Did) -> Session:
    """Steps 5-7: the verifier checks the registry before accepting a submission."""
    if vdr.roles.get(verifier) is not Role.Trustee:
        return Session(holder, verifier, did.did_id, False, "verifier is not a trustee")
    if did.holder != holder:
        return Session(holder, verifier, did.did_id, False, "DID belongs to another holder")
    cd = vdr.cred_defs.get(did.cred_def_id)
    if cd is None or did.schema_id not in vdr.schemas or cd.schema_id != did.schema_id:
        return Session(holder, verifier, did.did_id, False, "UnknownSchema")
    if vdr.is_revoked(did.did_id):
        return Session(holder, verifier, did.did_id, False, "revoked")
    return Session(holder, verifier, did.did_id, True)


def confirmation_payload(did_id: str, schema_id: str, cred_def_id: str, result: bool) -> tuple:
    return ("did-verification", did_id, schema_id, cred_def_id, bool(result))


@dataclass(frozen=True)
class RscRecord:
    holder: bytes
    holder_hash: bytes
    proof: DisclosureProof
    status: str = "Pending"  # Pending | Verified | Rejected | Revoked
    verifier: bytes = b""
    signature: bytes = b""
    submitted_at: int = 0
    decided_at: int = -1
    requested: bytes = b""


@register_kind("registration")
class RegistrationContract(Contract):
    """On-chain endpoint where holders submit DIDs and verifiers confirm them."""

    def setup(self, ctx: CallContext, authority: bytes | None = None) -> None:
        self.storage["authority"] = authority if authority is not None else ctx.caller

    @external
    def submit(self, ctx: CallContext, proof: DisclosureProof, verifier: bytes = b"") -> str:
        did = proof.did
        if did.holder != ctx.caller:
            raise Unauthorized("holders submit their own DIDs")
        key = ("rec", did.did_id)
        prior = self.storage.get(key)
        if prior is not None and prior.status in ("Pending", "Verified"):
            return did.did_id
        ctx.charge("hash_op")
        rec = RscRecord(ctx.caller, hash160(ctx.caller), proof, submitted_at=ctx.now, requested=verifier)
        self.storage[key] = rec
        ctx.emit("DidSubmitted", didId=did.did_id, holder=rec.holder_hash, credDefId=did.cred_def_id, verifier=verifier,
                 schemaId=did.schema_id, proofHash=hexdigest(proof), revealed=proof.values())
        return did.did_id

    @external
    def confirm(self, ctx: CallContext, did_id: str, result: bool, signature: bytes) -> str:
        rec = self.storage.get(("rec", did_id))
        if rec is None:
            raise UnknownRecord(did_id)
        if rec.status != "Pending":
            return rec.status
        if rec.requested and ctx.caller != rec.requested:
            raise Unauthorized("submission addressed to another verifier")
        did = rec.proof.did
        payload = confirmation_payload(did_id, did.schema_id, did.cred_def_id, result)
        if not ctx.verify(ctx.caller, payload, signature):
            raise BadSignature("confirmation signature does not verify")
        status = "Verified" if result else "Rejected"
        self.storage[("rec", did_id)] = RscRecord(rec.holder, rec.holder_hash, rec.proof, status, ctx.caller,
                                                  signature, rec.submitted_at, ctx.now, rec.requested)
        if result:
            ids = self.storage.get(("holder", rec.holder), ())
            self.storage[("holder", rec.holder)] = ids + (did_id,)
        ctx.emit(status, didId=did_id, holder=rec.holder_hash, credDefId=did.cred_def_id,
                 schemaId=did.schema_id, verifier=ctx.caller, signature=signature)
        return status

    @external
    def revoke(self, ctx: CallContext, did_id: str) -> bool:
        if ctx.caller != self.storage["authority"]:
            raise Unauthorized("only the registry authority mirrors revocations")
        rec = self.storage.get(("rec", did_id))
        if rec is None or rec.status == "Revoked":
            return False
        self.storage[("rec", did_id)] = RscRecord(rec.holder, rec.holder_hash, rec.proof, "Revoked", rec.verifier,
                                                  rec.signature, rec.submitted_at, rec.decided_at, rec.requested)
        ctx.emit("Revoked", didId=did_id)
        return True

    @view
    def record(self, ctx: CallContext, did_id: str) -> RscRecord | None:
        return self.storage.get(("rec", did_id))

    @view
    def isVerified(self, ctx: CallContext, holder: bytes, cred_def_id: str | None = None,
                   verifiers: tuple[bytes, ...] | None = None) -> bool:
        ctx.charge("hash_op")
        for did_id in self.storage.get(("holder", holder), ()):
            rec = self.storage[("rec", did_id)]
            if rec.status != "Verified":
                continue
            if cred_def_id is not None and rec.proof.did.cred_def_id != cred_def_id:
                continue
            if verifiers is not None and rec.verifier not in verifiers:
                continue
            return True
        return False

    def records(self) -> list[RscRecord]:
        return [v for k, v in self.storage.items() if isinstance(k, tuple) and k[0] == "rec"]


def rsc_is_verified(world, chain: int, rsc: bytes, holder: bytes, cred_def_id: str | None = None,
                    verifiers: tuple[bytes, ...] | None = None) -> bool:
    return world.view(chain, rsc, "isVerified", holder, cred_def_id, verifiers)


@dataclass
class IdentityFixture:
    """Issuer, schema and credential definition ready for issuing DIDs."""

    vdr: VdrStore
    issuer: bytes
    schema_id: str
    cred_def_id: str
    credentials: dict[bytes, Credential] = field(default_factory=dict)

    def issue(self, holder: bytes, values: dict[str, str]) -> Credential:
        cred = self.vdr.issue_did(self.issuer, self.cred_def_id, holder, values)
        self.credentials[holder] = cred
        return cred


def setup_identity(vdr: VdrStore, issuer: bytes, attributes=("name", "dob")) -> IdentityFixture:
    if issuer not in vdr.roles:
        vdr.register_role(issuer, "issuer")
    sid = vdr.create_schema(issuer, list(attributes))
    cid = vdr.create_cred_def(issuer, sid, tag="default")
    return IdentityFixture(vdr, issuer, sid, cid)
