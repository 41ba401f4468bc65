"""Framed slotted ALOHA between a reader and the devices it covers."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .identity import DeviceId
from .nas import NasMessage, encode_nas

SCHOUTE_FACTOR = 2.39


class SlotKind(enum.Enum):
    EMPTY = "E"
    SUCCESS = "S"
    COLLISION = "C"


@dataclass(frozen=True)
class Slot:
    kind: SlotKind
    device_id: DeviceId | None = None
    nas_bytes: bytes | None = None
    count: int = 0


EMPTY_SLOT = Slot(SlotKind.EMPTY)


@dataclass(frozen=True)
class FrameOutcome:
    frame_size: int
    slots: tuple[Slot, ...]

    def __post_init__(self):
        if len(self.slots) != self.frame_size:
            raise ValueError("slot count must equal frame size")

    def count(self, kind: SlotKind) -> int:
        return sum(1 for s in self.slots if s.kind is kind)

    @property
    def successes(self) -> list[Slot]:
        return [s for s in self.slots if s.kind is SlotKind.SUCCESS]

    @property
    def collisions(self) -> int:
        return self.count(SlotKind.COLLISION)

    @property
    def empties(self) -> int:
        return self.count(SlotKind.EMPTY)

    @property
    def all_empty(self) -> bool:
        return all(s.kind is SlotKind.EMPTY for s in self.slots)

    def summary(self) -> str:
        return "".join(s.kind.value for s in self.slots)


@dataclass(frozen=True)
class ContentionPlan:
    initial_frame_size: int
    min_frame: int = 4
    max_frame: int = 1024
    termination_empty_frames: int = 3
    max_frames: int = 1000
    stop_on_first_success: bool = False

    def __post_init__(self):
        if self.initial_frame_size < 1:
            raise ValueError("initial frame size must be >= 1")
        if not self.min_frame <= self.initial_frame_size <= self.max_frame:
            raise ValueError("require min_frame <= initial_frame_size <= max_frame")
        if self.termination_empty_frames < 1 or self.max_frames < 1:
            raise ValueError("termination counts must be >= 1")


def run_frame(coverage_devices, request: NasMessage, frame_size: int, rng, slot_us: int = 1000,
              capture_probability: float = 0.0):
    """Run one inventory frame over the devices in coverage.

    Devices are energized for the frame duration and then triggered in the
    order given.  Devices alone in their slot are marked inventoried for
    the request's task.  Returns ``(FrameOutcome, coverage_devices)``.
    """
    if frame_size < 1:
        raise ValueError("frame size must be >= 1")
    carrier = frame_size * slot_us
    buckets: dict[int, list] = {}
    for dev in coverage_devices:
        dev.energize(carrier)
        picked = dev.on_trigger(request, frame_size, rng)
        if picked is not None:
            slot, response, _ = picked
            buckets.setdefault(slot, []).append((dev, response))

    slots = [EMPTY_SLOT] * frame_size
    for index in sorted(buckets):
        senders = buckets[index]
        winner = None
        if len(senders) == 1:
            winner = senders[0]
        elif capture_probability > 0 and rng.random() < capture_probability:
            winner = senders[int(rng.integers(len(senders)))]
        if winner is None:
            slots[index] = Slot(SlotKind.COLLISION, count=len(senders))
        else:
            dev, response = winner
            dev.inventoried_tasks.add(request.task_id)
            slots[index] = Slot(SlotKind.SUCCESS, dev.id, encode_nas(response), count=len(senders))
    return FrameOutcome(frame_size, tuple(slots)), coverage_devices


def estimate_remaining(outcome: FrameOutcome) -> float:
    """Schoute backlog estimate from the collision slots of a frame."""
    return SCHOUTE_FACTOR * outcome.collisions


def next_frame_size(n_hat: float, plan: ContentionPlan) -> int:
    # round half up: Python's round() is banker's rounding
    size = math.floor(n_hat + 0.5)
    return max(plan.min_frame, min(plan.max_frame, size))


class CoverageMode(enum.Enum):
    SET = "set"
    RADIUS = "radius"


@dataclass(frozen=True)
class Coverage:
    """Which devices a reader can reach: an explicit id set or a disc."""

    device_ids: frozenset = frozenset()
    center: tuple[float, float] | None = None
    radius_m: float | None = None

    @property
    def mode(self) -> CoverageMode:
        return CoverageMode.RADIUS if self.radius_m is not None else CoverageMode.SET


def in_coverage(reader, device) -> bool:
    cov = reader.coverage
    if cov.mode is CoverageMode.SET:
        return device.id in cov.device_ids
    if device.position is None:
        return False
    dist = math.dist(cov.center, device.position)
    return dist <= cov.radius_m * device.profile.coverage_multiplier
