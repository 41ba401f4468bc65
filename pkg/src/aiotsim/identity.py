"""Two-part device identifiers, id masks and task id allocation.

Canonical text form is ``<T>-<OOO>-<24 hex>``: one digit for the id type,
three hex digits of owner code, then the 96-bit device part.  The binary
(wire) form is 14 bytes: id type, owner code shifted left by 4 (the low
nibble is zero padding), then the 12-byte device part.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass

from .errors import ParseError

DEVICE_PART_LEN = 12
OWNER_CODE_LIMIT = 1 << 12
HEADER_LEN = 2
WIRE_LEN = HEADER_LEN + DEVICE_PART_LEN
_HEX = frozenset("0123456789abcdefABCDEF")


class IdType(enum.IntEnum):
    NETWORK_ASSIGNED = 1
    THIRD_PARTY_ENTERPRISE = 2


@dataclass(frozen=True, order=True)
class DeviceId:
    id_type: IdType
    owner_code: int
    device_part: bytes

    def __post_init__(self):
        if not isinstance(self.id_type, IdType):
            object.__setattr__(self, "id_type", IdType(self.id_type))
        if not 0 <= self.owner_code < OWNER_CODE_LIMIT:
            raise ValueError(f"owner code {self.owner_code} out of range")
        if len(self.device_part) != DEVICE_PART_LEN:
            raise ValueError(f"device part must be {DEVICE_PART_LEN} bytes, got {len(self.device_part)}")
        object.__setattr__(self, "device_part", bytes(self.device_part))

    def __str__(self) -> str:
        return format_device_id(self)

    def to_bytes(self) -> bytes:
        return owner_header(self.id_type, self.owner_code) + self.device_part

    @classmethod
    def from_bytes(cls, data: bytes) -> DeviceId:
        """Inverse of :meth:`to_bytes`; raises ``ValueError`` on bad input."""
        if len(data) != WIRE_LEN:
            raise ValueError("device id wire form must be 14 bytes")
        id_type, owner = parse_owner_header(data[:HEADER_LEN])
        return cls(id_type, owner, bytes(data[HEADER_LEN:]))


def owner_header(id_type: IdType, owner_code: int) -> bytes:
    """Two bytes: id type in the high nibble, 12-bit owner code below it."""
    return (int(id_type) << 12 | owner_code).to_bytes(HEADER_LEN, "big")


def parse_owner_header(data: bytes) -> tuple[IdType, int]:
    raw = int.from_bytes(data[:HEADER_LEN], "big")
    try:
        id_type = IdType(raw >> 12)
    except ValueError:
        raise ValueError(f"unknown id type {raw >> 12}") from None
    return id_type, raw & 0xFFF


def parse_device_id(text: str) -> DeviceId:
    if len(text) < 1 or text[0] not in "12":
        raise ParseError("id type must be 1 or 2", offset=0)
    if len(text) < 2 or text[1] != "-":
        raise ParseError("expected '-'", offset=1)
    owner = text[2:5]
    if len(owner) != 3 or not set(owner) <= _HEX:
        raise ParseError("owner code must be 3 hex digits", offset=2)
    if len(text) < 6 or text[5] != "-":
        raise ParseError("expected '-'", offset=5)
    part = text[6:]
    bad = next((i for i, c in enumerate(part) if c not in _HEX), None)
    if bad is not None:
        raise ParseError("device part must be hex", offset=6 + bad)
    if len(part) != 2 * DEVICE_PART_LEN:
        raise ParseError(f"device part must be {2 * DEVICE_PART_LEN} hex chars, got {len(part)} (length)", offset=6)
    # three hex digits can never reach 4096, so no range check is needed here
    return DeviceId(IdType(int(text[0])), int(owner, 16), bytes.fromhex(part))


def format_device_id(device_id: DeviceId) -> str:
    return f"{int(device_id.id_type)}-{device_id.owner_code:03X}-{device_id.device_part.hex().upper()}"


@dataclass(frozen=True)
class IdMask:
    """Prefix filter over the device part, optionally pinned to an owner."""

    prefix_bits: int = 0
    prefix_value: bytes = b""
    owner_filter: tuple[IdType, int] | None = None

    def __post_init__(self):
        if not 0 <= self.prefix_bits <= 8 * DEVICE_PART_LEN:
            raise ValueError("prefix_bits must be in 0..96")
        nbytes = (self.prefix_bits + 7) // 8
        if len(self.prefix_value) != nbytes:
            raise ValueError(f"prefix_value must be {nbytes} bytes")
        spare = 8 * nbytes - self.prefix_bits
        if spare and self.prefix_value[-1] & ((1 << spare) - 1):
            raise ValueError("prefix_value bits beyond prefix_bits must be zero")
        object.__setattr__(self, "prefix_value", bytes(self.prefix_value))
        if self.owner_filter is not None:
            id_type, owner = self.owner_filter
            if not 0 <= owner < OWNER_CODE_LIMIT:
                raise ValueError("owner filter code out of range")
            object.__setattr__(self, "owner_filter", (IdType(id_type), owner))

    @classmethod
    def from_prefix(cls, prefix: bytes, bits: int | None = None, owner_filter=None) -> IdMask:
        """Build a mask from leading bytes, zeroing bits past ``bits``."""
        bits = 8 * len(prefix) if bits is None else bits
        nbytes = (bits + 7) // 8
        value = bytearray(prefix[:nbytes])
        spare = 8 * nbytes - bits
        if spare:
            value[-1] &= 0xFF ^ ((1 << spare) - 1)
        return cls(bits, bytes(value), owner_filter)


def matches_mask(device_id: DeviceId, mask: IdMask) -> bool:
    if mask.owner_filter is not None and mask.owner_filter != (device_id.id_type, device_id.owner_code):
        return False
    bits = mask.prefix_bits
    if bits == 0:
        return True
    full, rem = divmod(bits, 8)
    if device_id.device_part[:full] != mask.prefix_value[:full]:
        return False
    if rem:
        keep = 0xFF ^ ((1 << (8 - rem)) - 1)
        return device_id.device_part[full] & keep == mask.prefix_value[full]
    return True


class TaskIdAllocator:
    """Monotonic 32-bit task ids, never reused within one allocator."""

    LIMIT = 1 << 32

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)

    def next(self) -> int:
        value = next(self._counter)
        if value >= self.LIMIT:
            raise OverflowError("task id space exhausted")
        return value
