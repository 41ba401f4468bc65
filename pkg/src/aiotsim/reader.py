"""A-IoT RAN readers (topology 1) and UE readers (topology 2)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import AiotSimError
from .nas import decode_nas
from .radio import ContentionPlan, Coverage, FrameOutcome, estimate_remaining, next_frame_size, run_frame

COMMAND_RETRY_BUDGET = 8


class ReaderKind(enum.Enum):
    RAN = "RanReader"
    UE = "UeReader"


class ServiceType(enum.Enum):
    INVENTORY = "Inventory"
    COMMAND = "Command"


class AuthorizationError(AiotSimError):
    pass


class NotFound(AiotSimError, KeyError):
    pass


@dataclass
class ReaderNode:
    reader_id: int
    kind: ReaderKind
    area_id: str
    coverage: Coverage = field(default_factory=Coverage)
    serving_gnb: int | None = None
    authorized: bool = False

    def __post_init__(self):
        if (self.kind is ReaderKind.UE) != (self.serving_gnb is not None):
            raise ValueError("serving gNB is required for, and only for, UE readers")
        if self.kind is ReaderKind.RAN:
            self.authorized = True

    @property
    def ue_id(self) -> int:
        return self.reader_id


@dataclass
class Gnb:
    """Base station controlling the radio resources of its UE readers."""

    gnb_id: int
    area_id: str | None = None
    authorized_readers: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class FrameBounds:
    min_frame: int = 4
    max_frame: int = 1024
    termination_empty_frames: int = 3
    max_frames: int = 1000
    command_retries: int = COMMAND_RETRY_BUDGET


@dataclass(frozen=True)
class AssistanceInfo:
    service_type: ServiceType
    d2r_response_size: int
    estimated_device_count: int
    session_id: int
    device_capability: str | None = None
    estimated_responses: int | None = None

    def __post_init__(self):
        if self.service_type is ServiceType.INVENTORY and self.estimated_device_count < 1:
            raise ValueError("inventory needs an estimated device count >= 1")


class SubscriptionStore:
    """UE subscription data; here only the A-IoT reader indicator."""

    def __init__(self, entries=None):
        self._flags: dict[int, bool] = dict(entries or {})

    def __contains__(self, ue_id):
        return ue_id in self._flags

    def reader_indicator(self, ue_id: int) -> bool:
        try:
            return self._flags[ue_id]
        except KeyError:
            raise NotFound(f"no subscription for UE {ue_id}") from None


def authorize_ue_reader(subscriptions: SubscriptionStore, reader: ReaderNode, gnb: Gnb | None = None) -> bool:
    """Check the subscription indicator at registration and cache the result.

    A positive result is handed to the serving gNB as well.
    """
    ok = subscriptions.reader_indicator(reader.ue_id)
    reader.authorized = ok
    if gnb is not None:
        if ok:
            gnb.authorized_readers.add(reader.reader_id)
        else:
            gnb.authorized_readers.discard(reader.reader_id)
    return ok


def may_execute(reader: ReaderNode, gnb: Gnb | None) -> bool:
    if reader.kind is ReaderKind.RAN:
        return True
    return reader.authorized and gnb is not None and reader.reader_id in gnb.authorized_readers


def allocate_resources(reader: ReaderNode, info: AssistanceInfo, bounds: FrameBounds = FrameBounds(),
                       gnb: Gnb | None = None) -> ContentionPlan:
    """Turn AIOTF assistance information into a contention plan.

    UE readers are only served when their gNB holds them as authorized.
    """
    if not may_execute(reader, gnb):
        raise AuthorizationError(f"reader {reader.reader_id} is not authorized")
    if info.service_type is ServiceType.COMMAND:
        return ContentionPlan(1, 1, 1, bounds.command_retries, bounds.command_retries, stop_on_first_success=True)
    size = max(bounds.min_frame, min(bounds.max_frame, info.estimated_device_count))
    return ContentionPlan(size, bounds.min_frame, bounds.max_frame, bounds.termination_empty_frames, bounds.max_frames)


@dataclass(frozen=True)
class Collected:
    nas_bytes: bytes
    reader_id: int
    frame_index: int
    slot_index: int


def run_frames(reader: ReaderNode, plan: ContentionPlan, request_bytes: bytes, devices, frame_rng,
               slot_us: int = 1000, capture_probability: float = 0.0):
    """Yield ``(frame_index, FrameOutcome)`` until the plan terminates.

    ``frame_rng(i)`` returns the random generator for frame ``i``.  The
    request is broadcast as the same bytes every frame and decoded once per
    frame by the devices.
    """
    request = decode_nas(request_bytes)
    size = plan.initial_frame_size
    empty_run = 0
    for index in range(plan.max_frames):
        outcome, _ = run_frame(devices, request, size, frame_rng(index), slot_us, capture_probability)
        yield index, outcome
        if plan.stop_on_first_success and outcome.successes:
            return
        empty_run = empty_run + 1 if outcome.all_empty else 0
        if empty_run >= plan.termination_empty_frames:
            return
        size = next_frame_size(estimate_remaining(outcome), plan)


def execute_task(reader: ReaderNode, plan: ContentionPlan, request_bytes: bytes, devices, frame_rng,
                 gnb: Gnb | None = None, slot_us: int = 1000, capture_probability: float = 0.0):
    """Run the whole radio phase and return ``(responses, frames)``.

    Response bytes are passed upstream exactly as the devices produced them.
    """
    if not may_execute(reader, gnb):
        raise AuthorizationError(f"reader {reader.reader_id} is not authorized")
    responses: list[Collected] = []
    frames: list[FrameOutcome] = []
    for index, outcome in run_frames(reader, plan, request_bytes, devices, frame_rng, slot_us, capture_probability):
        frames.append(outcome)
        for slot_index, slot in enumerate(outcome.slots):
            if slot.nas_bytes is not None:
                responses.append(Collected(slot.nas_bytes, reader.reader_id, index, slot_index))
    return responses, frames
