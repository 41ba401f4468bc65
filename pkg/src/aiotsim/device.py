"""A-IoT device: capability profile, energy store and trigger handling.

Devices keep no registration or RRC context.  They only ever speak in
response to a reader trigger (no autonomous traffic), and the only
per-task memory is the inventoried flag that silences a device once it has
been read in a task.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import security
from .identity import DeviceId, matches_mask
from .nas import (
    MAX_PAYLOAD,
    CommandOp,
    CommandRequest,
    CommandResponse,
    CommandStatus,
    DecodeError,
    InventoryRequest,
    InventoryResponse,
    Kind,
    NasMessage,
    SecFlag,
)


class DeviceType(enum.Enum):
    TYPE1 = "Type1"
    TYPE2A = "Type2a"
    TYPE2B = "Type2b"


class TxMode(enum.Enum):
    BACKSCATTER = "Backscatter"
    ACTIVE_INTERNAL = "ActiveInternal"


@dataclass(frozen=True)
class DeviceProfile:
    device_type: DeviceType
    peak_power_uw: float
    tx_mode: TxMode
    amplifies: bool

    def __post_init__(self):
        t = self.device_type
        if t is DeviceType.TYPE1:
            ok = self.peak_power_uw <= 1 and self.tx_mode is TxMode.BACKSCATTER and not self.amplifies
        elif t is DeviceType.TYPE2A:
            ok = self.peak_power_uw <= 500 and self.tx_mode is TxMode.BACKSCATTER and self.amplifies
        else:
            ok = self.peak_power_uw <= 500 and self.tx_mode is TxMode.ACTIVE_INTERNAL and self.amplifies
        if not ok:
            raise ValueError(f"profile inconsistent with {t.value}")

    @classmethod
    def for_type(cls, device_type: DeviceType | str) -> DeviceProfile:
        device_type = DeviceType(device_type)
        return _DEFAULT_PROFILES[device_type]

    @property
    def coverage_multiplier(self) -> float:
        return COVERAGE_MULTIPLIER[self.device_type]

    @property
    def threshold_scale(self) -> float:
        return THRESHOLD_SCALE[self.device_type]


_DEFAULT_PROFILES = {
    DeviceType.TYPE1: DeviceProfile(DeviceType.TYPE1, 1.0, TxMode.BACKSCATTER, False),
    DeviceType.TYPE2A: DeviceProfile(DeviceType.TYPE2A, 300.0, TxMode.BACKSCATTER, True),
    DeviceType.TYPE2B: DeviceProfile(DeviceType.TYPE2B, 300.0, TxMode.ACTIVE_INTERNAL, True),
}

# Amplifying devices reach further and wake up on less stored energy.
COVERAGE_MULTIPLIER = {DeviceType.TYPE1: 1.0, DeviceType.TYPE2A: 1.5, DeviceType.TYPE2B: 2.0}
THRESHOLD_SCALE = {DeviceType.TYPE1: 1.0, DeviceType.TYPE2A: 0.5, DeviceType.TYPE2B: 0.25}


@dataclass(frozen=True)
class EnergyParams:
    """Linear charging model, energies in nanojoules, rate in nJ per µs."""

    charge_rate: float = 1.0
    capacity: float = 1000.0
    threshold: float = 100.0
    response_cost: float = 10.0
    initial: float = 0.0

    def __post_init__(self):
        if min(self.charge_rate, self.capacity, self.threshold, self.response_cost, self.initial) < 0:
            raise ValueError("energy parameters must be non-negative")
        if self.initial > self.capacity:
            raise ValueError("initial energy exceeds capacity")


@dataclass
class DeviceState:
    id: DeviceId
    profile: DeviceProfile
    key: bytes | None = None
    energy: EnergyParams = field(default_factory=EnergyParams)
    stored_nj: float = 0.0
    memory: dict[int, bytes] = field(default_factory=dict)
    sensors: dict[int, bytes] = field(default_factory=dict)
    active: bool = True
    nas_counter: int = 0
    inventoried_tasks: set[int] = field(default_factory=set)
    position: tuple[float, float] | None = None

    @property
    def charge_threshold(self) -> float:
        return self.energy.threshold * self.profile.threshold_scale

    @property
    def energized(self) -> bool:
        return self.stored_nj >= self.charge_threshold

    def energize(self, carrier_us: int) -> DeviceState:
        if carrier_us < 0:
            raise ValueError("carrier duration must be non-negative")
        if carrier_us:
            self.stored_nj = min(self.energy.capacity, self.stored_nj + self.energy.charge_rate * carrier_us)
        return self

    def forget_task(self, task_id: int) -> None:
        self.inventoried_tasks.discard(task_id)

    def on_trigger(self, request: NasMessage, frame_size: int, rng):
        """Handle a reader trigger.

        Returns ``(slot, response, self)`` or None when the device stays
        silent (not energized, not addressed, already read in this task,
        out of counter space, or unable to open the request).  A
        deactivated device ignores inventory but still answers commands,
        with status Deactivated for anything but Activate.
        """
        if not self.energized or not self.active and request.kind is not Kind.COMMAND_REQUEST:
            return None
        if request.task_id in self.inventoried_tasks:
            return None
        if self.nas_counter >= security.COUNTER_MAX:
            return None
        body = request.body
        auth = bool(request.flags & SecFlag.AUTH)
        if auth and self.key is None:
            return None
        if isinstance(body, InventoryRequest):
            if not matches_mask(self.id, body.mask):
                return None
            counter = self.nas_counter + 1
            tag = security.device_auth_tag(self.key, body.challenge, self.id, counter) if auth else None
            response = NasMessage(request.task_id, InventoryResponse(self.id, counter, tag), request.flags)
        elif isinstance(body, CommandRequest):
            if body.target != self.id:
                return None
            if body.sealed is not None:
                try:
                    request = security.open_request(request, self.key)
                except DecodeError:
                    return None
            counter = self.nas_counter + 1
            reply = self.apply_command(request.body)
            tag = security.device_auth_tag(self.key, body.challenge, self.id, counter) if auth else None
            reply = CommandResponse(self.id, reply.op, reply.status, reply.payload, counter, tag)
            response = NasMessage(request.task_id, reply, request.flags)
            if request.flags & SecFlag.CONF:
                response = security.seal_response(response, self.key, body.challenge)
        else:
            return None
        self.nas_counter = counter
        self.stored_nj = max(0.0, self.stored_nj - self.energy.response_cost)
        slot = int(rng.integers(frame_size)) if frame_size > 1 else 0
        return slot, response, self

    def apply_command(self, cmd: CommandRequest) -> CommandResponse:
        """Execute a clear command; outcomes are reported in the status."""
        op = cmd.op

        def reply(status, payload=b""):
            return CommandResponse(self.id, op, status, payload)

        if not self.active and op is not CommandOp.ACTIVATE:
            return reply(CommandStatus.DEACTIVATED)
        if op is CommandOp.READ:
            if cmd.address in self.sensors:
                return reply(CommandStatus.OK, self.sensors[cmd.address])
            if cmd.address in self.memory:
                return reply(CommandStatus.OK, self.memory[cmd.address])
            return reply(CommandStatus.NOT_SUPPORTED)
        if op is CommandOp.WRITE:
            if len(cmd.payload) > MAX_PAYLOAD:
                return reply(CommandStatus.MEMORY_ERROR)
            self.memory[cmd.address] = bytes(cmd.payload)
            return reply(CommandStatus.OK)
        self.active = op is CommandOp.ACTIVATE
        return reply(CommandStatus.OK)

