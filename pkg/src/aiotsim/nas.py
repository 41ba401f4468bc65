"""Bit-exact codec for the end-to-end AIOTF <-> device NAS messages.

Wire layout (all integers big-endian)::

    kind(1) task_id(4) flags(1) body...

Bodies, in field order:

    InventoryRequest   mask, challenge_present(1) [challenge(8)]
    InventoryResponse  device_id(14) counter(4) tag_present(1) [tag(4)]
    CommandRequest     target(14) CMD challenge_present(1) [challenge(8)]
    CommandResponse    device_id(14) CMD counter(4) tag_present(1) [tag(4)]

``mask`` is ``prefix_bits(1)`` followed by ``ceil(prefix_bits/8)`` prefix
bytes; bit 7 of the prefix-bits byte flags an owner filter, which follows as
3 bytes (id type, owner code << 4).

``CMD`` in clear is ``op(1) address|status(1) len(1) payload(len)``.  With the
CONF flag it is ``ciphered_length(1) ciphertext`` where the ciphertext covers
``op address|status payload`` (so ``ciphered_length = 2 + len(payload)``).
Every PDU fits in 64 bytes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import AiotSimError
from .identity import DEVICE_PART_LEN, HEADER_LEN, WIRE_LEN, DeviceId, IdMask, owner_header, parse_owner_header

MAX_PDU = 64
MAX_PAYLOAD = 32
CHALLENGE_LEN = 8
TAG_LEN = 4
_OWNER_BIT = 0x80


class Kind(enum.IntEnum):
    INVENTORY_REQUEST = 1
    INVENTORY_RESPONSE = 2
    COMMAND_REQUEST = 3
    COMMAND_RESPONSE = 4


class CommandOp(enum.IntEnum):
    READ = 1
    WRITE = 2
    ACTIVATE = 3
    DEACTIVATE = 4


class CommandStatus(enum.IntEnum):
    OK = 0
    NOT_SUPPORTED = 1
    MEMORY_ERROR = 2
    DEACTIVATED = 3


class SecFlag(enum.IntFlag):
    AUTH = 0x01
    CONF = 0x02
    REPLAY = 0x04


NO_FLAGS = SecFlag(0)
_ALL_FLAGS = SecFlag.AUTH | SecFlag.CONF | SecFlag.REPLAY


class EncodeError(AiotSimError):
    pass


class DecodeReason(enum.Enum):
    TRUNCATED = "Truncated"
    UNKNOWN_KIND = "UnknownKind"
    BAD_LENGTH = "BadLength"
    BAD_VALUE = "BadValue"
    TRAILING_BYTES = "TrailingBytes"
    OVERSIZE = "Oversize"


class DecodeError(AiotSimError):
    def __init__(self, reason: DecodeReason, offset: int, detail: str = ""):
        self.reason = reason
        self.offset = offset
        super().__init__(f"{reason.value} at offset {offset}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class InventoryRequest:
    mask: IdMask = field(default_factory=IdMask)
    challenge: bytes | None = None

    KIND = Kind.INVENTORY_REQUEST


@dataclass(frozen=True)
class InventoryResponse:
    device_id: DeviceId
    counter: int
    auth_tag: bytes | None = None

    KIND = Kind.INVENTORY_RESPONSE


@dataclass(frozen=True)
class CommandRequest:
    """Command to a single device.

    ``sealed`` holds the ciphertext of ``op‖address‖payload`` when the
    message carries the CONF flag; the clear fields are then left at their
    defaults.
    """

    target: DeviceId
    op: CommandOp | None = None
    address: int = 0
    payload: bytes = b""
    challenge: bytes | None = None
    sealed: bytes | None = None

    KIND = Kind.COMMAND_REQUEST


@dataclass(frozen=True)
class CommandResponse:
    device_id: DeviceId
    op: CommandOp | None = None
    status: CommandStatus | None = None
    payload: bytes = b""
    counter: int = 0
    auth_tag: bytes | None = None
    sealed: bytes | None = None

    KIND = Kind.COMMAND_RESPONSE


Body = InventoryRequest | InventoryResponse | CommandRequest | CommandResponse


@dataclass(frozen=True)
class SecurityEnvelope:
    flags: SecFlag
    ciphered_length: int = 0


@dataclass(frozen=True)
class NasMessage:
    task_id: int
    body: Body
    flags: SecFlag = NO_FLAGS

    @property
    def kind(self) -> Kind:
        return self.body.KIND

    @property
    def security(self) -> SecurityEnvelope:
        sealed = getattr(self.body, "sealed", None)
        return SecurityEnvelope(self.flags, len(sealed) if sealed is not None else 0)


# -- validation shared by encoder and decoder ---------------------------------


def _check(msg: NasMessage) -> str | None:
    """Return a description of the first invariant violation, or None."""
    flags = SecFlag(msg.flags)
    if flags & ~_ALL_FLAGS:
        return "unknown security flag bits"
    if flags & (SecFlag.CONF | SecFlag.REPLAY) and not flags & SecFlag.AUTH:
        return "CONF and REPLAY require AUTH"
    if not 0 <= msg.task_id < 1 << 32:
        return "task id out of range"
    body = msg.body
    auth = bool(flags & SecFlag.AUTH)
    conf = bool(flags & SecFlag.CONF)
    if isinstance(body, InventoryRequest | InventoryResponse) and conf:
        return "inventory messages carry no ciphered fields"
    if isinstance(body, InventoryRequest | CommandRequest):
        if (body.challenge is not None) != auth:
            return "challenge presence must match AUTH"
        if body.challenge is not None and len(body.challenge) != CHALLENGE_LEN:
            return "challenge must be 8 bytes"
    else:
        if (body.auth_tag is not None) != auth:
            return "auth tag presence must match AUTH"
        if body.auth_tag is not None and len(body.auth_tag) != TAG_LEN:
            return "auth tag must be 4 bytes"
        if not 0 <= body.counter < 1 << 32:
            return "counter out of range"
    if isinstance(body, CommandRequest | CommandResponse):
        if conf != (body.sealed is not None):
            return "sealed content presence must match CONF"
        if conf:
            if not 2 <= len(body.sealed) <= 2 + MAX_PAYLOAD:
                return "ciphered length out of range"
            if body.op is not None or body.payload or getattr(body, "address", 0):
                return "sealed message must not carry clear command fields"
            if isinstance(body, CommandResponse) and body.status is not None:
                return "sealed message must not carry a clear status"
        else:
            if not isinstance(body.op, CommandOp):
                return "missing command op"
            if len(body.payload) > MAX_PAYLOAD:
                return f"payload exceeds {MAX_PAYLOAD} bytes"
            if isinstance(body, CommandRequest) and not 0 <= body.address < 256:
                return "address out of range"
            if isinstance(body, CommandResponse) and not isinstance(body.status, CommandStatus):
                return "missing command status"
    return None


# -- encoder -------------------------------------------------------------------


def encode_mask(mask: IdMask) -> bytes:
    head = mask.prefix_bits | (_OWNER_BIT if mask.owner_filter is not None else 0)
    out = bytes([head]) + mask.prefix_value
    if mask.owner_filter is not None:
        out += owner_header(*mask.owner_filter)
    return out


def encode_command_fields(op: CommandOp, second: int, payload: bytes) -> bytes:
    """Plaintext of the sealed region: op, address or status, payload."""
    return bytes([int(op), int(second)]) + payload


def _opt(value: bytes | None) -> bytes:
    return b"\x00" if value is None else b"\x01" + value


def encode_nas(msg: NasMessage) -> bytes:
    problem = _check(msg)
    if problem:
        raise EncodeError(problem)
    body = msg.body
    out = bytearray([int(msg.kind)])
    out += msg.task_id.to_bytes(4, "big")
    out.append(int(msg.flags))
    if isinstance(body, InventoryRequest):
        out += encode_mask(body.mask)
        out += _opt(body.challenge)
    elif isinstance(body, InventoryResponse):
        out += body.device_id.to_bytes()
        out += body.counter.to_bytes(4, "big")
        out += _opt(body.auth_tag)
    else:
        out += (body.target if isinstance(body, CommandRequest) else body.device_id).to_bytes()
        if body.sealed is not None:
            out.append(len(body.sealed))
            out += body.sealed
        else:
            second = body.address if isinstance(body, CommandRequest) else body.status
            out += bytes([int(body.op), int(second), len(body.payload)]) + body.payload
        if isinstance(body, CommandRequest):
            out += _opt(body.challenge)
        else:
            out += body.counter.to_bytes(4, "big")
            out += _opt(body.auth_tag)
    if len(out) > MAX_PDU:
        raise EncodeError(f"encoded size {len(out)} exceeds {MAX_PDU} bytes")
    return bytes(out)


# -- decoder -------------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(DecodeReason.TRUNCATED, len(self.data), f"need {n} bytes at {self.pos}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def byte(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def device_id(self) -> DeviceId:
        start = self.pos
        raw = self.take(WIRE_LEN)
        try:
            return DeviceId.from_bytes(raw)
        except ValueError as exc:
            raise DecodeError(DecodeReason.BAD_VALUE, start, str(exc)) from None

    def optional(self, n: int) -> bytes | None:
        start = self.pos
        present = self.byte()
        if present == 0:
            return None
        if present != 1:
            raise DecodeError(DecodeReason.BAD_VALUE, start, "presence byte must be 0 or 1")
        return self.take(n)

    def enum(self, cls):
        start = self.pos
        value = self.byte()
        try:
            return cls(value)
        except ValueError:
            raise DecodeError(DecodeReason.BAD_VALUE, start, f"invalid {cls.__name__} {value}") from None


def decode_mask(r: _Reader) -> IdMask:
    start = r.pos
    head = r.byte()
    bits = head & ~_OWNER_BIT
    if bits > 8 * DEVICE_PART_LEN:
        raise DecodeError(DecodeReason.BAD_LENGTH, start, f"prefix bits {bits} > 96")
    value = r.take((bits + 7) // 8)
    owner = None
    if head & _OWNER_BIT:
        ostart = r.pos
        try:
            owner = parse_owner_header(r.take(HEADER_LEN))
        except ValueError as exc:
            raise DecodeError(DecodeReason.BAD_VALUE, ostart, str(exc)) from None
    try:
        return IdMask(bits, value, owner)
    except ValueError as exc:
        raise DecodeError(DecodeReason.BAD_VALUE, start, str(exc)) from None


def _command_fields(r: _Reader, second_cls=None):
    op = r.enum(CommandOp)
    second = r.enum(second_cls) if second_cls else r.byte()
    start = r.pos
    n = r.byte()
    if n > MAX_PAYLOAD:
        raise DecodeError(DecodeReason.BAD_LENGTH, start, f"payload length {n}")
    return op, second, r.take(n)


def _sealed(r: _Reader) -> bytes:
    start = r.pos
    n = r.byte()
    if not 2 <= n <= 2 + MAX_PAYLOAD:
        raise DecodeError(DecodeReason.BAD_LENGTH, start, f"ciphered length {n}")
    return r.take(n)


def decode_nas(data: bytes) -> NasMessage:
    """Decode a PDU; any malformed input raises :class:`DecodeError`."""
    data = bytes(data)
    if len(data) > MAX_PDU:
        raise DecodeError(DecodeReason.OVERSIZE, MAX_PDU, f"{len(data)} bytes")
    r = _Reader(data)
    kind_byte = r.byte()
    try:
        kind = Kind(kind_byte)
    except ValueError:
        raise DecodeError(DecodeReason.UNKNOWN_KIND, 0, f"kind {kind_byte}") from None
    task_id = r.u32()
    flags_byte = r.byte()
    if flags_byte & ~int(_ALL_FLAGS):
        raise DecodeError(DecodeReason.BAD_VALUE, 5, "unknown security flag bits")
    flags = SecFlag(flags_byte)
    conf = bool(flags & SecFlag.CONF)

    if kind is Kind.INVENTORY_REQUEST:
        body = InventoryRequest(decode_mask(r), r.optional(CHALLENGE_LEN))
    elif kind is Kind.INVENTORY_RESPONSE:
        body = InventoryResponse(r.device_id(), r.u32(), r.optional(TAG_LEN))
    elif kind is Kind.COMMAND_REQUEST:
        target = r.device_id()
        if conf:
            sealed = _sealed(r)
            body = CommandRequest(target, challenge=r.optional(CHALLENGE_LEN), sealed=sealed)
        else:
            op, address, payload = _command_fields(r)
            body = CommandRequest(target, op, address, payload, r.optional(CHALLENGE_LEN))
    else:
        device_id = r.device_id()
        if conf:
            sealed = _sealed(r)
            body = CommandResponse(device_id, counter=r.u32(), auth_tag=r.optional(TAG_LEN), sealed=sealed)
        else:
            op, status, payload = _command_fields(r, CommandStatus)
            body = CommandResponse(device_id, op, status, payload, r.u32(), r.optional(TAG_LEN))

    if r.pos != len(data):
        raise DecodeError(DecodeReason.TRAILING_BYTES, r.pos)
    msg = NasMessage(task_id, body, flags)
    problem = _check(msg)
    if problem:
        raise DecodeError(DecodeReason.BAD_VALUE, 5, problem)
    return msg


def decode_command_fields(plain: bytes, response: bool):
    """Parse the plaintext of a sealed region into ``(op, address|status, payload)``."""
    r = _Reader(plain)
    op = r.enum(CommandOp)
    second = r.enum(CommandStatus) if response else r.byte()
    return op, second, plain[2:]
