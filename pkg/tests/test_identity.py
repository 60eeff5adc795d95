from __future__ import annotations

from dataclasses import replace

import pytest

from crossdeal.ccsvc import CrossChainService, SignBadDid
from crossdeal.errors import AlreadyRegistered, EmptyAttributes, InvalidProof, SchemaMismatch, Unauthorized, UnknownSchema
from crossdeal.eventlog import IDENTITY_TOPIC, EventLog
from crossdeal.identity import (
    DisclosureProof,
    Role,
    VdrStore,
    confirmation_payload,
    proof_valid,
    request_verification,
    rsc_is_verified,
    setup_identity,
    verify_disclosure,
)
from crossdeal.system import build_world, deploy_system


@pytest.fixture
def env():
    w = build_world(1, delta=0)
    dep = deploy_system(w)
    kr = w.keyring
    vdr = VdrStore(kr, lambda: w.now)
    issuer, verifier, holder = kr.account("issuer"), kr.account("svc0"), kr.account("alice")
    vdr.register_role(verifier, "verifier")
    fx = setup_identity(vdr, issuer)
    cred = fx.issue(holder, {"name": "alice", "dob": "2000-01-01"})
    return w, dep, vdr, fx, cred, verifier, holder


def test_roles(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    assert vdr.roles[fx.issuer] is Role.TrustAnchor
    assert vdr.roles[verifier] is Role.Trustee
    with pytest.raises(AlreadyRegistered):
        vdr.register_role(verifier, "issuer")
    with pytest.raises(Unauthorized):
        vdr.create_schema(verifier, ["x"])


def test_schema_and_cred_def_checks(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    with pytest.raises(EmptyAttributes):
        vdr.create_schema(fx.issuer, [])
    with pytest.raises(SchemaMismatch):
        vdr.create_schema(fx.issuer, ["a", "a"])
    with pytest.raises(UnknownSchema):
        vdr.create_cred_def(fx.issuer, "schema:missing")
    with pytest.raises(SchemaMismatch):
        fx.issue(holder, {"name": "x"})


def test_honest_proof_verifies(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    proof = cred.prove(["name"])
    verify_disclosure(vdr, proof)
    assert proof.values() == {"name": "alice"}
    assert request_verification(vdr, holder, verifier, cred.did).accepted


def tampered(cred, field):
    proof = cred.prove(["name"])
    did = proof.did
    name, value, salt = proof.revealed[0]
    if field == "value":
        return DisclosureProof(did, ((name, "mallory", salt),))
    if field == "salt":
        return DisclosureProof(did, ((name, value, bytes(16)),))
    if field == "signature":
        return DisclosureProof(replace(did, signature=bytes(len(did.signature))), proof.revealed)
    if field == "schemaId":
        return DisclosureProof(replace(did, schema_id="schema:999:forged"), proof.revealed)
    raise ValueError(field)


@pytest.mark.parametrize("field", ["value", "salt", "signature", "schemaId"])
def test_single_field_tamper_rejected(env, field):
    w, dep, vdr, fx, cred, verifier, holder = env
    bad = tampered(cred, field)
    with pytest.raises(InvalidProof):
        verify_disclosure(vdr, bad)
    assert not proof_valid(vdr, bad)


def test_unknown_schema_fails_verifier_check(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    s = request_verification(vdr, holder, verifier, replace(cred.did, schema_id="schema:none"))
    assert not s.accepted and s.reason == "UnknownSchema"
    assert not request_verification(vdr, holder, fx.issuer, cred.did).accepted


def test_revocation_is_time_aware(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    w.advance_time(5)
    vdr.revoke(fx.issuer, cred.did.did_id, fx.cred_def_id)
    assert proof_valid(vdr, cred.prove(["name"]), at=4)
    assert not proof_valid(vdr, cred.prove(["name"]), at=5)
    with pytest.raises(Unauthorized):
        vdr.revoke(verifier, cred.did.did_id, fx.cred_def_id)


def relay(w, dep, vdr, plan=None):
    return CrossChainService("svc0", dep, EventLog(lambda: w.now), plan, vdr=vdr)


def test_registration_flow_emits_verified(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    rsc = dep.registries[2]
    svc = relay(w, dep, vdr)
    r = w.call(2, holder, rsc, "submit", cred.prove(["name"]), verifier)
    assert r.ok and r.events[-1].event == "DidSubmitted"
    assert not rsc_is_verified(w, 2, rsc, holder)
    svc.step()
    events = [e.event for e in w.read_journal(2)]
    assert events[-1] == "Verified"
    assert rsc_is_verified(w, 2, rsc, holder, fx.cred_def_id, (verifier,))
    assert not rsc_is_verified(w, 2, rsc, holder, fx.cred_def_id, (holder,))
    svc.step()
    assert [rec.kind for rec in svc.log.records(IDENTITY_TOPIC)] == ["DidVerifiedEvent"]


def test_registration_rejects_forged_proof(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    rsc = dep.registries[2]
    svc = relay(w, dep, vdr)
    w.call(2, holder, rsc, "submit", tampered(cred, "value"), verifier).raise_for_revert()
    svc.step()
    assert w.read_journal(2)[-1].event == "Rejected"
    assert not rsc_is_verified(w, 2, rsc, holder)


def test_bad_did_plan_signs_forged_proof(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    rsc = dep.registries[2]
    svc = relay(w, dep, vdr, SignBadDid(holder))
    w.call(2, holder, rsc, "submit", tampered(cred, "salt"), verifier).raise_for_revert()
    svc.step()
    assert rsc_is_verified(w, 2, rsc, holder)


def test_confirm_guards(env):
    w, dep, vdr, fx, cred, verifier, holder = env
    rsc = dep.registries[2]
    did = cred.did
    other = w.keyring.account("other")
    assert "Unauthorized" in w.call(2, other, rsc, "submit", cred.prove()).outcome
    w.call(2, holder, rsc, "submit", cred.prove(["name"]), verifier)
    good = w.keyring.signer(verifier).sign(confirmation_payload(did.did_id, did.schema_id, did.cred_def_id, True))
    assert "Unauthorized" in w.call(2, other, rsc, "confirm", did.did_id, True, good).outcome
    assert "BadSignature" in w.call(2, verifier, rsc, "confirm", did.did_id, True, b"x" * 32).outcome
    assert "UnknownRecord" in w.call(2, verifier, rsc, "confirm", "did:none", True, good).outcome
    assert w.call(2, verifier, rsc, "confirm", did.did_id, True, good).return_value == "Verified"
    assert w.call(2, dep.authority, rsc, "revoke", did.did_id).return_value is True
    assert not rsc_is_verified(w, 2, rsc, holder)
