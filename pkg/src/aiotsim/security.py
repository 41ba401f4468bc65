"""NAS-layer security between the AIOTF and devices.

Authentication is a single challenge/response: the request carries an
8-byte nonce and the device answers with a 4-byte truncated AES-CMAC over
``challenge ‖ device_id (wire form) ‖ counter``.  Confidentiality XORs the
command fields with an AES-CTR keystream whose initial counter block is
``challenge ‖ counter ‖ direction ‖ 000000``.  Anti-replay relies on the
device counter strictly increasing.

Requests in the reader-to-device direction carry no MAC; only device
responses are authenticated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from cryptography.hazmat.primitives import cmac
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import AiotSimError
from .identity import DeviceId
from .nas import (
    CHALLENGE_LEN,
    TAG_LEN,
    CommandRequest,
    CommandResponse,
    Kind,
    NasMessage,
    SecFlag,
    decode_command_fields,
    encode_command_fields,
)

KEY_LEN = 16
COUNTER_MAX = (1 << 32) - 1


class Direction(enum.IntEnum):
    R2D = 0
    D2R = 1


class Ownership(enum.Enum):
    OPERATOR = "operator"
    EXTERNAL_AAA = "external_aaa"


class DuplicateId(AiotSimError):
    def __init__(self, device_id: DeviceId):
        self.device_id = device_id
        super().__init__(f"device {device_id} already provisioned")


@dataclass(frozen=True)
class SecurityProfile:
    auth: bool = False
    confidentiality: bool = False
    anti_replay: bool = False

    def __post_init__(self):
        if self.confidentiality and not self.auth:
            raise ValueError("confidentiality requires auth")
        if self.anti_replay and not self.auth:
            raise ValueError("anti_replay requires auth")

    def flags_for(self, kind: Kind) -> SecFlag:
        """Envelope flags for a message of ``kind`` under this profile.

        Inventory messages have nothing to cipher, so CONF only ever
        appears on command messages.
        """
        flags = SecFlag(0)
        if self.auth:
            flags |= SecFlag.AUTH
        if self.anti_replay:
            flags |= SecFlag.REPLAY
        if self.confidentiality and kind in (Kind.COMMAND_REQUEST, Kind.COMMAND_RESPONSE):
            flags |= SecFlag.CONF
        return flags

    @classmethod
    def from_flags(cls, flags: SecFlag) -> SecurityProfile:
        return cls(bool(flags & SecFlag.AUTH), bool(flags & SecFlag.CONF), bool(flags & SecFlag.REPLAY))


OFF = SecurityProfile()
FULL = SecurityProfile(True, True, True)


def make_challenge(rng) -> bytes:
    """Draw an 8-byte nonce from a numpy ``Generator``."""
    return rng.bytes(CHALLENGE_LEN)


def _mac_input(challenge: bytes, device_id: DeviceId, counter: int) -> bytes:
    return challenge + device_id.to_bytes() + counter.to_bytes(4, "big")


def device_auth_tag(key: bytes, challenge: bytes, device_id: DeviceId, counter: int) -> bytes:
    mac = cmac.CMAC(algorithms.AES(key))
    mac.update(_mac_input(challenge, device_id, counter))
    return mac.finalize()[:TAG_LEN]


def _keystream_block(challenge: bytes, counter: int, direction: Direction) -> bytes:
    return challenge + counter.to_bytes(4, "big") + bytes([int(direction)]) + b"\x00\x00\x00"


def protect_payload(key: bytes, challenge: bytes, counter: int, direction: Direction, body: bytes) -> bytes:
    if not body:
        return b""
    enc = Cipher(algorithms.AES(key), modes.CTR(_keystream_block(challenge, counter, direction))).encryptor()
    return enc.update(body) + enc.finalize()


# CTR mode is an involution
unprotect_payload = protect_payload


@dataclass
class DeviceCredential:
    device_id: DeviceId
    key: bytes
    ownership: Ownership = Ownership.OPERATOR
    last_counter: int = 0

    def __post_init__(self):
        if len(self.key) != KEY_LEN:
            raise ValueError("device key must be 16 bytes")


class CredentialStore:
    """Network-side device credentials, split by who manages the device."""

    def __init__(self):
        self._entries: dict[DeviceId, DeviceCredential] = {}

    def __len__(self):
        return len(self._entries)

    def __contains__(self, device_id):
        return device_id in self._entries

    def get(self, device_id: DeviceId) -> DeviceCredential | None:
        return self._entries.get(device_id)

    def provision(self, entries) -> int:
        """Add ``(device_id, key, ownership)`` entries atomically."""
        fresh = {}
        for device_id, key, ownership in entries:
            if device_id in self._entries or device_id in fresh:
                raise DuplicateId(device_id)
            fresh[device_id] = DeviceCredential(device_id, bytes(key), Ownership(ownership))
        self._entries.update(fresh)
        return len(fresh)

    def managed_by(self, ownership: Ownership) -> list[DeviceId]:
        return sorted(d for d, c in self._entries.items() if c.ownership is Ownership(ownership))


class Verdict(enum.Enum):
    ACCEPT = "Accept"
    UNKNOWN_DEVICE = "UnknownDevice"
    BAD_TAG = "BadTag"
    REPLAY = "Replay"

    @property
    def accepted(self) -> bool:
        return self is Verdict.ACCEPT


def verify_and_update(
    store: CredentialStore,
    device_id: DeviceId,
    challenge: bytes,
    counter: int,
    tag: bytes | None,
    anti_replay: bool = True,
) -> Verdict:
    cred = store.get(device_id)
    if cred is None:
        return Verdict.UNKNOWN_DEVICE
    if tag is None or device_auth_tag(cred.key, challenge, device_id, counter) != tag:
        return Verdict.BAD_TAG
    if anti_replay and counter <= cred.last_counter:
        return Verdict.REPLAY
    cred.last_counter = max(cred.last_counter, counter)
    return Verdict.ACCEPT


# -- sealing of command fields --------------------------------------------------

# Requests are sealed under counter 0: the per-task challenge already
# separates keystreams between tasks.
R2D_COUNTER = 0


def seal_request(msg: NasMessage, key: bytes) -> NasMessage:
    body = msg.body
    plain = encode_command_fields(body.op, body.address, body.payload)
    sealed = protect_payload(key, body.challenge, R2D_COUNTER, Direction.R2D, plain)
    return replace(msg, body=CommandRequest(body.target, challenge=body.challenge, sealed=sealed))


def open_request(msg: NasMessage, key: bytes) -> NasMessage:
    """Recover the clear command fields; raises :class:`DecodeError` on garbage."""
    body = msg.body
    plain = unprotect_payload(key, body.challenge, R2D_COUNTER, Direction.R2D, body.sealed)
    op, address, payload = decode_command_fields(plain, response=False)
    return replace(msg, body=CommandRequest(body.target, op, address, payload, body.challenge))


def seal_response(msg: NasMessage, key: bytes, challenge: bytes) -> NasMessage:
    body = msg.body
    plain = encode_command_fields(body.op, body.status, body.payload)
    sealed = protect_payload(key, challenge, body.counter, Direction.D2R, plain)
    return replace(
        msg,
        body=CommandResponse(body.device_id, counter=body.counter, auth_tag=body.auth_tag, sealed=sealed),
    )


def open_response(msg: NasMessage, key: bytes, challenge: bytes) -> NasMessage:
    body = msg.body
    plain = unprotect_payload(key, challenge, body.counter, Direction.D2R, body.sealed)
    op, status, payload = decode_command_fields(plain, response=True)
    return replace(
        msg,
        body=CommandResponse(body.device_id, op, status, payload, body.counter, body.auth_tag),
    )

