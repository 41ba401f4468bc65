import numpy as np
import pytest
from Crypto.Cipher import AES
from Crypto.Hash import CMAC
from hypothesis import given
from hypothesis import strategies as st

from aiotsim import security
from aiotsim.identity import DeviceId, IdType
from aiotsim.nas import CommandOp, CommandRequest, CommandResponse, CommandStatus, Kind, NasMessage, SecFlag
from aiotsim.security import (
    CredentialStore,
    Direction,
    DuplicateId,
    Ownership,
    SecurityProfile,
    Verdict,
    device_auth_tag,
    protect_payload,
    unprotect_payload,
    verify_and_update,
)

ZERO_ID = DeviceId(IdType.NETWORK_ASSIGNED, 0, bytes(12))
DEV = DeviceId(IdType.THIRD_PARTY_ENTERPRISE, 0x123, bytes.fromhex("A1B2C3D4E5F60718293A4B5C"))
KEY = bytes(range(16))
CHALLENGE = bytes.fromhex("0011223344556677")


def store_with(device_id=DEV, key=KEY):
    store = CredentialStore()
    store.provision([(device_id, key, Ownership.OPERATOR)])
    return store


def test_tag_t0(security_vectors):
    assert device_auth_tag(bytes(16), bytes(8), ZERO_ID, 0) == security_vectors["mac_t0"]


def test_tag_keyed(security_vectors):
    assert device_auth_tag(KEY, CHALLENGE, DEV, 7) == security_vectors["mac_k1"]


def test_keystream_vectors(security_vectors):
    zeros = bytes(35)
    assert protect_payload(KEY, CHALLENGE, 0, Direction.R2D, zeros) == security_vectors["keystream_r2d"]
    assert protect_payload(KEY, CHALLENGE, 7, Direction.D2R, zeros) == security_vectors["keystream_d2r"]


def test_rfc4493_cmac_example():
    key = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")
    msg = bytes.fromhex("6bc1bee22e409f96e93d7e117393172a")
    mac = CMAC.new(key, ciphermod=AES)
    mac.update(msg)
    assert mac.hexdigest() == "070a16b46b4d4144f79bdd9dd04a287c"


@given(st.binary(min_size=16, max_size=16), st.binary(min_size=8, max_size=8), st.integers(0, 2**32 - 1))
def test_tag_matches_reference(key, challenge, counter):
    mac = CMAC.new(key, ciphermod=AES)
    mac.update(challenge + DEV.to_bytes() + counter.to_bytes(4, "big"))
    assert device_auth_tag(key, challenge, DEV, counter) == mac.digest()[:4]


def test_seeded_challenge(security_vectors):
    rng = np.random.default_rng(np.random.SeedSequence(42, spawn_key=(0, 1)))
    assert security.make_challenge(rng) == security_vectors["challenge_seed42_task1"]


def test_challenges_distinct_across_tasks():
    seen = {security.make_challenge(np.random.default_rng(np.random.SeedSequence(5, spawn_key=(0, t))))
            for t in range(10_000)}
    assert len(seen) == 10_000


def test_profile_invariants():
    with pytest.raises(ValueError):
        SecurityProfile(auth=False, confidentiality=True)
    with pytest.raises(ValueError):
        SecurityProfile(auth=False, anti_replay=True)
    assert SecurityProfile().flags_for(Kind.INVENTORY_REQUEST) == SecFlag(0)
    assert security.FULL.flags_for(Kind.INVENTORY_REQUEST) == SecFlag.AUTH | SecFlag.REPLAY
    assert security.FULL.flags_for(Kind.COMMAND_REQUEST) == SecFlag.AUTH | SecFlag.REPLAY | SecFlag.CONF


def test_verify_accept_then_replay():
    store = store_with()
    tag = device_auth_tag(KEY, CHALLENGE, DEV, 1)
    assert verify_and_update(store, DEV, CHALLENGE, 1, tag) is Verdict.ACCEPT
    assert verify_and_update(store, DEV, CHALLENGE, 1, tag) is Verdict.REPLAY


def test_replay_allowed_without_anti_replay():
    store = store_with()
    tag = device_auth_tag(KEY, CHALLENGE, DEV, 1)
    assert verify_and_update(store, DEV, CHALLENGE, 1, tag, anti_replay=False).accepted
    assert verify_and_update(store, DEV, CHALLENGE, 1, tag, anti_replay=False).accepted


@pytest.mark.parametrize("bit", range(32))
def test_single_bit_flip_rejected(bit):
    store = store_with()
    tag = bytearray(device_auth_tag(KEY, CHALLENGE, DEV, 1))
    tag[bit // 8] ^= 1 << (bit % 8)
    assert verify_and_update(store, DEV, CHALLENGE, 1, bytes(tag)) is Verdict.BAD_TAG


def test_unknown_device():
    assert verify_and_update(CredentialStore(), DEV, CHALLENGE, 1, bytes(4)) is Verdict.UNKNOWN_DEVICE


def test_provision_counts_and_partition():
    store = CredentialStore()
    ids = [DeviceId(IdType.NETWORK_ASSIGNED, 1, bytes([i]) * 12) for i in range(3)]
    owners = [Ownership.OPERATOR, Ownership.EXTERNAL_AAA, Ownership.OPERATOR]
    assert store.provision(zip(ids, [KEY] * 3, owners)) == 3
    assert store.managed_by(Ownership.OPERATOR) == sorted([ids[0], ids[2]])
    assert store.managed_by(Ownership.EXTERNAL_AAA) == [ids[1]]
    assert store.provision([]) == 0


def test_provision_duplicate_is_atomic():
    store = store_with()
    other = DeviceId(IdType.NETWORK_ASSIGNED, 2, bytes(12))
    with pytest.raises(DuplicateId):
        store.provision([(other, KEY, Ownership.OPERATOR), (DEV, KEY, Ownership.OPERATOR)])
    assert other not in store and len(store) == 1


def test_protect_empty_and_identity():
    assert protect_payload(KEY, CHALLENGE, 1, Direction.D2R, b"") == b""
    body = b"sensor reading"
    ct = protect_payload(KEY, CHALLENGE, 3, Direction.D2R, body)
    assert len(ct) == len(body) and ct != body
    assert unprotect_payload(KEY, CHALLENGE, 3, Direction.D2R, ct) == body


def test_direction_separates_keystreams():
    body = bytes(16)
    assert protect_payload(KEY, CHALLENGE, 1, Direction.R2D, body) != \
        protect_payload(KEY, CHALLENGE, 1, Direction.D2R, body)


def test_seal_open_command_roundtrip():
    req = NasMessage(9, CommandRequest(DEV, CommandOp.WRITE, 0x10, b"hello", CHALLENGE),
                     SecFlag.AUTH | SecFlag.CONF)
    sealed = security.seal_request(req, KEY)
    assert sealed.body.op is None and len(sealed.body.sealed) == 2 + 5
    assert security.open_request(sealed, KEY) == req

    resp = NasMessage(9, CommandResponse(DEV, CommandOp.READ, CommandStatus.OK, b"\x00\x19", 4, bytes(4)),
                      SecFlag.AUTH | SecFlag.CONF)
    sealed = security.seal_response(resp, KEY, CHALLENGE)
    assert security.open_response(sealed, KEY, CHALLENGE) == resp
