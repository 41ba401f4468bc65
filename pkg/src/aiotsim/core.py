"""Simulated 5G core for A-IoT services.

Covers the AIOTF task lifecycle, NEF authorization of AF requests, NRF
based AIOTF selection, reader selection, the four AIOTF <-> reader
transport options, and aggregation of device responses into reports.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import security
from .errors import AiotSimError
from .identity import DeviceId, IdMask, matches_mask
from .nas import (
    CommandOp,
    CommandResponse,
    DecodeError,
    Kind,
    NasMessage,
    SecFlag,
    decode_nas,
)
from .reader import Gnb, ReaderKind, ReaderNode, ServiceType
from .security import CredentialStore, SecurityProfile, Verdict


class TaskStatus(enum.Enum):
    PENDING = "Pending"
    DISPATCHED = "Dispatched"
    COLLECTING = "Collecting"
    DONE = "Done"
    FAILED = "Failed"


_NEXT_STATUS = {
    TaskStatus.PENDING: {TaskStatus.DISPATCHED, TaskStatus.FAILED},
    TaskStatus.DISPATCHED: {TaskStatus.COLLECTING, TaskStatus.FAILED},
    TaskStatus.COLLECTING: {TaskStatus.DONE, TaskStatus.FAILED},
    TaskStatus.DONE: set(),
    TaskStatus.FAILED: set(),
}


class SelectionMode(enum.Enum):
    STATIC = "Static"
    DYNAMIC = "Dynamic"


class ArchOption(enum.Enum):
    TOP1_DIRECT = "Top1Direct"
    TOP1_INDIRECT = "Top1Indirect"
    TOP2_CONTROL_PLANE = "Top2ControlPlane"
    TOP2_USER_PLANE = "Top2UserPlane"

    @property
    def topology(self) -> int:
        return 1 if self in (ArchOption.TOP1_DIRECT, ArchOption.TOP1_INDIRECT) else 2

    @property
    def reader_kind(self) -> ReaderKind:
        return ReaderKind.RAN if self.topology == 1 else ReaderKind.UE


# -- errors -----------------------------------------------------------------------


class TaskFailure(AiotSimError):
    """A task-level failure; the name of the subclass is the failure reason."""

    @property
    def reason(self) -> str:
        return type(self).__name__


class UnknownAf(TaskFailure):
    pass


class ScopeViolation(TaskFailure):
    pass


class NoAiotfForArea(TaskFailure):
    pass


class UnknownUeReader(TaskFailure):
    pass


class EmptyReaderList(TaskFailure):
    pass


# -- AF side ------------------------------------------------------------------------


@dataclass(frozen=True)
class CommandSpec:
    op: CommandOp
    address: int = 0
    payload: bytes = b""


@dataclass(frozen=True)
class AfRequest:
    af_id: str
    service: ServiceType
    area: str | None = None
    ue_reader_ids: tuple[int, ...] = ()
    mask: IdMask = field(default_factory=IdMask)
    targets: tuple[DeviceId, ...] = ()
    command: CommandSpec | None = None
    security: SecurityProfile = field(default_factory=SecurityProfile)
    selection: SelectionMode = SelectionMode.STATIC
    estimated_devices: int | None = None
    at_us: int = 0


@dataclass(frozen=True)
class AfScope:
    areas: frozenset[str]
    services: frozenset[ServiceType] = frozenset(ServiceType)


def nef_authorize_af(request: AfRequest, af_registry: dict[str, AfScope], area: str | None = None) -> None:
    """Raise :class:`UnknownAf` or :class:`ScopeViolation`; return None when allowed.

    ``area`` is the resolved area when the AF named UE readers instead.
    """
    scope = af_registry.get(request.af_id)
    if scope is None:
        raise UnknownAf(f"AF {request.af_id!r} is not registered")
    if request.service not in scope.services:
        raise ScopeViolation(f"AF {request.af_id!r} may not request {request.service.value}")
    area = request.area if area is None else area
    if area not in scope.areas:
        raise ScopeViolation(f"AF {request.af_id!r} may not address area {area!r}")


# -- NRF / AIOTF selection ----------------------------------------------------------


@dataclass
class NrfRegistry:
    entries: dict[int, frozenset[str]] = field(default_factory=dict)

    def register(self, aiotf_id: int, service_areas) -> None:
        if aiotf_id in self.entries:
            raise ValueError(f"AIOTF {aiotf_id} already registered")
        self.entries[aiotf_id] = frozenset(service_areas)


def resolve_area(request: AfRequest, ue_locations: dict[int, str]) -> str:
    if request.area is not None:
        return request.area
    first = request.ue_reader_ids[0]
    if first not in ue_locations:
        raise UnknownUeReader(f"UE reader {first} has no known location")
    return ue_locations[first]


def select_aiotf(registry: NrfRegistry, area: str | None = None, ue_reader_id: int | None = None,
                 ue_locations: dict[int, str] | None = None) -> int:
    """Lowest-id AIOTF serving the area (resolving a UE reader to its area first).

    This NRF service-area lookup is one proposed selection method; the
    standard procedure is not settled.
    """
    if area is None:
        if ue_locations is None or ue_reader_id not in ue_locations:
            raise UnknownUeReader(f"UE reader {ue_reader_id} has no known location")
        area = ue_locations[ue_reader_id]
    for aiotf_id in sorted(registry.entries):
        if area in registry.entries[aiotf_id]:
            return aiotf_id
    raise NoAiotfForArea(f"no AIOTF serves area {area!r}")


# -- reader selection ---------------------------------------------------------------


def select_readers(request: AfRequest, area: str, readers: dict[int, ReaderNode], mode: SelectionMode,
                   gnbs: dict[int, Gnb], candidates=(), coverage_test=None) -> list[int]:
    """Pick the readers that will run a task, ordered by reader id.

    Only RAN readers and authorized UE readers are eligible.  In dynamic
    mode (UE readers only) the serving gNB drops readers that cover none of
    ``candidates``, standing in for refinement on radio conditions.
    """

    def eligible(r: ReaderNode) -> bool:
        if r.kind is ReaderKind.RAN:
            return True
        gnb = gnbs.get(r.serving_gnb)
        return r.authorized and gnb is not None and r.reader_id in gnb.authorized_readers

    if mode is SelectionMode.STATIC:
        if request.ue_reader_ids:
            chosen = [readers[i] for i in request.ue_reader_ids if i in readers]
        else:
            chosen = [r for r in readers.values() if r.area_id == area]
        picked = [r for r in chosen if eligible(r)]
    else:
        picked = [r for r in readers.values() if r.kind is ReaderKind.UE and r.area_id == area and eligible(r)]
        if coverage_test is not None:
            picked = [r for r in picked if any(coverage_test(r, d) for d in candidates)]
    ids = sorted({r.reader_id for r in picked})
    if not ids:
        raise EmptyReaderList(f"no eligible reader for area {area!r}")
    return ids


# -- transport paths ----------------------------------------------------------------


@dataclass(frozen=True)
class Hop:
    node_kind: str
    label: str


@dataclass(frozen=True)
class TransportPath:
    arch_option: ArchOption
    hops: tuple[Hop, ...]

    def links(self) -> list[str]:
        """Link names, AIOTF side first, e.g. ``AIOTF-AMF``."""
        names = ["AIOTF"] + [h.node_kind for h in self.hops]
        return [f"{a}-{b}" for a, b in zip(names, names[1:])]


TRANSPORT_PATHS = {
    ArchOption.TOP1_DIRECT: TransportPath(ArchOption.TOP1_DIRECT, (Hop("RAN", "AIOTF-RAN direct"),)),
    ArchOption.TOP1_INDIRECT: TransportPath(ArchOption.TOP1_INDIRECT, (Hop("AMF", "SBI"), Hop("RAN", "NGAP"))),
    ArchOption.TOP2_CONTROL_PLANE: TransportPath(
        ArchOption.TOP2_CONTROL_PLANE, (Hop("AMF", "SBI"), Hop("gNB", "NGAP"), Hop("UE", "RRC"))
    ),
    ArchOption.TOP2_USER_PLANE: TransportPath(
        ArchOption.TOP2_USER_PLANE, (Hop("UPF", "N4/N6 user plane"), Hop("UE", "PDU session"))
    ),
}


class Amf:
    """Pure relay towards RAN nodes and gNBs; no mobility management."""

    def __init__(self):
        self.routes: dict[int, str] = {}

    def add_route(self, reader: ReaderNode) -> None:
        if reader.kind is ReaderKind.RAN:
            self.routes[reader.reader_id] = f"RAN-{reader.reader_id}"
        else:
            self.routes[reader.reader_id] = f"gNB-{reader.serving_gnb}"

    def next_hop(self, reader_id: int) -> str:
        return self.routes[reader_id]


def hop_nodes(path: TransportPath, reader: ReaderNode, amf: Amf | None = None) -> list[str]:
    """Concrete node names along the downstream path to ``reader``.

    With an AMF on the path, the node after it comes from the AMF's
    routing table.
    """
    names = []
    for hop in path.hops:
        if names and names[-1] == "AMF" and amf is not None:
            names.append(amf.next_hop(reader.reader_id))
        elif hop.node_kind == "RAN":
            names.append(f"RAN-{reader.reader_id}")
        elif hop.node_kind == "gNB":
            names.append(f"gNB-{reader.serving_gnb}")
        elif hop.node_kind == "UE":
            names.append(f"UE-{reader.reader_id}")
        else:
            names.append(hop.node_kind)
    return names


@dataclass(frozen=True)
class HopEvent:
    offset_us: int
    link: str
    node: str
    label: str
    direction: str
    payload: bytes


def dispatch_and_route(path: TransportPath, reader: ReaderNode, nas_bytes: bytes, latencies: dict[str, int],
                       upstream: bool = False, amf: Amf | None = None) -> list[HopEvent]:
    """One event per hop, offsets cumulative from the sending end.

    The NAS bytes are carried unchanged across every hop; only the
    encapsulation label differs.
    """
    links = path.links()
    nodes = ["AIOTF"] + hop_nodes(path, reader, amf)
    order = range(len(path.hops))
    if upstream:
        order = reversed(order)
    events, t = [], 0
    for i in order:
        t += latencies[links[i]]
        node = nodes[i] if upstream else nodes[i + 1]
        events.append(HopEvent(t, links[i], node, path.hops[i].label, "up" if upstream else "down", nas_bytes))
    return events


# -- tasks and aggregation ------------------------------------------------------------


@dataclass
class DeviceReport:
    device_id: DeviceId
    reader_id: int
    area_id: str
    auth_verified: bool
    data: bytes | None = None
    status: str | None = None


@dataclass
class AiotTask:
    task_id: int
    request: AfRequest
    status: TaskStatus = TaskStatus.PENDING
    failure: str | None = None
    aiotf_id: int | None = None
    readers: list[int] = field(default_factory=list)
    challenge: bytes | None = None
    results: list[DeviceReport] = field(default_factory=list)
    duplicates_collapsed: int = 0
    security_rejects: int = 0

    @property
    def service(self) -> ServiceType:
        return self.request.service

    @property
    def profile(self) -> SecurityProfile:
        return self.request.security

    def advance(self, status: TaskStatus) -> None:
        if status not in _NEXT_STATUS[self.status]:
            raise ValueError(f"illegal task transition {self.status.value} -> {status.value}")
        self.status = status

    def fail(self, failure: TaskFailure | str) -> None:
        self.failure = failure.reason if isinstance(failure, TaskFailure) else str(failure)
        self.advance(TaskStatus.FAILED)


@dataclass(frozen=True)
class Arrival:
    nas_bytes: bytes
    reader_id: int
    time_us: int = 0


def provision_devices(store: CredentialStore, entries) -> int:
    return store.provision(entries)


def _verify(task: AiotTask, msg: NasMessage, store: CredentialStore) -> tuple[bool, NasMessage]:
    profile = task.profile
    body = msg.body
    sealed = isinstance(body, CommandResponse) and body.sealed is not None
    if not profile.auth:
        return not sealed, msg
    verdict = security.verify_and_update(
        store, body.device_id, task.challenge, body.counter, body.auth_tag, profile.anti_replay
    )
    if verdict is not Verdict.ACCEPT:
        return False, msg
    if sealed:
        try:
            msg = security.open_response(msg, store.get(body.device_id).key, task.challenge)
        except DecodeError:
            return False, msg
    elif profile.confidentiality and msg.kind is Kind.COMMAND_RESPONSE:
        # command responses must come back sealed when confidentiality is on
        return False, msg
    return True, msg


def aggregate(task: AiotTask, arrivals, store: CredentialStore, readers: dict[int, ReaderNode],
              last_reader: dict[DeviceId, int] | None = None) -> AiotTask:
    """Verify, deduplicate and record responses; the task ends ``Done``.

    Arrivals are taken in (arrival time, reader id) order and the first
    verified response per device wins.  Responses that cannot be verified
    count as security rejects and never reach the results.
    """
    expected = Kind.INVENTORY_RESPONSE if task.service is ServiceType.INVENTORY else Kind.COMMAND_RESPONSE
    seen = {r.device_id for r in task.results}
    for arrival in sorted(arrivals, key=lambda a: (a.time_us, a.reader_id)):
        try:
            msg = decode_nas(arrival.nas_bytes)
        except DecodeError:
            task.security_rejects += 1
            continue
        if msg.task_id != task.task_id or msg.kind is not expected:
            task.security_rejects += 1
            continue
        if task.profile.auth and not msg.flags & SecFlag.AUTH:
            task.security_rejects += 1
            continue
        device_id = msg.body.device_id
        if device_id in seen:
            task.duplicates_collapsed += 1
            continue
        ok, msg = _verify(task, msg, store)
        if not ok:
            task.security_rejects += 1
            continue
        seen.add(device_id)
        reader = readers[arrival.reader_id]
        report = DeviceReport(device_id, reader.reader_id, reader.area_id, task.profile.auth)
        if isinstance(msg.body, CommandResponse):
            report.data = msg.body.payload
            report.status = status_label(msg.body.status)
        task.results.append(report)
        if last_reader is not None:
            last_reader[device_id] = reader.reader_id
    if task.status is not TaskStatus.DONE:
        task.advance(TaskStatus.DONE)
    return task


def status_label(status) -> str:
    return "".join(w.capitalize() for w in status.name.split("_"))


def matched_devices(request: AfRequest, devices):
    """Devices addressed by the request, independent of coverage."""
    if request.service is ServiceType.COMMAND:
        wanted = set(request.targets)
        return [d for d in devices if d.id in wanted]
    return [d for d in devices if matches_mask(d.id, request.mask)]
