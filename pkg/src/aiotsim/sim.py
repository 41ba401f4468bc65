"""Deterministic discrete-event harness.

A single virtual clock in microseconds advances only through scheduled
events.  Network behaviour is written as generator processes that yield
delays.  All randomness comes from one seed forked into independent
substreams keyed by (purpose, task, reader, ...), so adding a reader never
perturbs the draws of another.
"""

from __future__ import annotations

import hashlib
import heapq
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import core, security
from .core import TRANSPORT_PATHS, AfRequest, AiotTask, Amf, Arrival, NrfRegistry, TaskFailure, TaskStatus
from .identity import TaskIdAllocator, format_device_id
from .nas import MAX_PAYLOAD, CommandRequest, InventoryRequest, Kind, NasMessage, SecFlag, encode_nas
from .radio import in_coverage
from .reader import (
    AssistanceInfo,
    AuthorizationError,
    Gnb,
    NotFound,
    ReaderKind,
    ServiceType,
    SubscriptionStore,
    allocate_resources,
    authorize_ue_reader,
    run_frames,
)
from .scenario import ScenarioConfig, af_request_to_dict
from .security import CredentialStore, Ownership

# substream purposes
_CHALLENGE, _FRAME, _DROP = 0, 1, 2

# encoded sizes without the optional tag: header 6, id 14, counter 4, tag presence 1
INVENTORY_RESPONSE_SIZE = 25
COMMAND_RESPONSE_SIZE = 28 + MAX_PAYLOAD
TAG_OVERHEAD = 4


class Scheduler:
    """Min-heap event loop; ties run in scheduling order."""

    def __init__(self):
        self.now = 0
        self._heap = []
        self._seq = itertools.count()

    def at(self, time: int, fn, *args, **kwargs) -> None:
        if time < self.now:
            raise ValueError("cannot schedule in the past")
        heapq.heappush(self._heap, (time, next(self._seq), fn, args, kwargs))

    def after(self, delay: int, fn, *args, **kwargs) -> None:
        self.at(self.now + delay, fn, *args, **kwargs)

    def spawn(self, process) -> None:
        """Drive a generator that yields non-negative integer delays."""

        def step():
            try:
                delay = next(process)
            except StopIteration:
                return
            self.after(int(delay), step)

        self.after(0, step)

    def run(self) -> int:
        while self._heap:
            time, _, fn, args, kwargs = heapq.heappop(self._heap)
            self.now = time
            fn(*args, **kwargs)
        return self.now


def payload_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


class TraceWriter:
    """Line-delimited JSON trace with a monotonic-clock guard."""

    def __init__(self, stream=None):
        self.stream = stream
        self.last_time = 0
        self.count = 0

    def emit(self, record: dict) -> None:
        if record["simTime"] < self.last_time:
            raise RuntimeError("trace time went backwards")
        self.last_time = record["simTime"]
        self.count += 1
        if self.stream is not None:
            self.stream.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


@dataclass
class ReaderStats:
    reader_id: int
    frames: int = 0
    slots: int = 0
    collisions: int = 0
    successes: int = 0
    empty_slots: int = 0


@dataclass
class TaskRecord:
    task: AiotTask
    request_index: int
    started_us: int
    ended_us: int = 0
    devices_matched: int = 0
    readers: dict[int, ReaderStats] = field(default_factory=dict)
    messages_per_hop: dict[str, int] = field(default_factory=dict)
    arrivals: list[Arrival] = field(default_factory=list)

    def hop(self, link: str) -> None:
        self.messages_per_hop[link] = self.messages_per_hop.get(link, 0) + 1

    def metrics(self) -> dict:
        t = self.task
        stats = self.readers.values()
        reported = len(t.results)
        return {
            "task_id": t.task_id,
            "request_index": self.request_index,
            "af": t.request.af_id,
            "service": t.service.value,
            "status": t.status.value,
            "failure": t.failure,
            "aiotf": t.aiotf_id,
            "selected_readers": list(t.readers),
            "duration_slots": sum(r.slots for r in stats),
            "duration_sim_us": self.ended_us - self.started_us,
            "devices_matched": self.devices_matched,
            "devices_reported": reported,
            "missed": self.devices_matched - reported,
            "duplicates_collapsed": t.duplicates_collapsed,
            "frames": sum(r.frames for r in stats),
            "collisions": sum(r.collisions for r in stats),
            "empty_slots": sum(r.empty_slots for r in stats),
            "security_rejects": t.security_rejects,
            "messages_per_hop": dict(sorted(self.messages_per_hop.items())),
            "readers": [vars(r).copy() for _, r in sorted(self.readers.items())],
            "results": [
                {
                    "device": format_device_id(r.device_id),
                    "reader": r.reader_id,
                    "area": r.area_id,
                    "auth_verified": r.auth_verified,
                    "data": None if r.data is None else r.data.hex().upper(),
                    "status": r.status,
                }
                for r in t.results
            ],
        }


@dataclass
class RunResult:
    metrics: dict
    records: list[TaskRecord]
    trace_text: str | None = None

    def metrics_json(self) -> str:
        return json.dumps(self.metrics, sort_keys=True, indent=2) + "\n"

    def task(self, task_id: int) -> TaskRecord:
        return next(r for r in self.records if r.task.task_id == task_id)


class Simulation:
    """One scenario run: network nodes, stores and the AF request queue."""

    def __init__(self, config: ScenarioConfig, seed: int | None = None, trace_stream=None):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.sched = Scheduler()
        self.trace = TraceWriter(trace_stream)
        self.task_ids = TaskIdAllocator()
        self.path = TRANSPORT_PATHS[config.arch_option]
        self.lat = config.latencies
        self.bounds = config.contention.bounds
        self.queue: list[AfRequest] = list(config.tasks)
        self.records: list[TaskRecord] = []

        self.store = CredentialStore()
        net_keys = {c.device_id: c.key for c in config.credentials}
        self.devices = sorted((d.build(net_keys.get(d.id)) for d in config.devices), key=lambda d: d.id)
        self.readers = {r.reader_id: r.build() for r in sorted(config.readers, key=lambda r: r.reader_id)}
        self.gnbs = {gid: Gnb(gid, area) for gid, area in config.gnbs.items()}
        self.subscriptions = SubscriptionStore(config.subscriptions)
        self.nrf = NrfRegistry()
        self.amf = Amf()
        self.last_reader = {}
        self.coverage = {rid: [d for d in self.devices if in_coverage(r, d)] for rid, r in self.readers.items()}

    def rng(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))

    def emit(self, event: str, node: str, task_id: int | None = None, payload: bytes | None = None, **extra):
        record = {"simTime": self.sched.now, "eventKind": event, "node": node, "taskId": task_id}
        if payload is not None:
            record["digest"] = payload_digest(payload)
        record.update(extra)
        self.trace.emit(record)

    def submit(self, request: AfRequest) -> None:
        """Queue an AF request behind those already queued."""
        self.queue.append(request)

    def run(self) -> RunResult:
        self.sched.spawn(self._main())
        self.sched.run()
        return RunResult(self._metrics(), self.records)

    # -- processes ---------------------------------------------------------------------

    def _main(self):
        self._startup()
        # UE readers register once, at scenario start
        yield self.lat["registration"]
        for rid, reader in self.readers.items():
            if reader.kind is not ReaderKind.UE:
                continue
            try:
                outcome = "authorized" if authorize_ue_reader(
                    self.subscriptions, reader, self.gnbs[reader.serving_gnb]) else "rejected"
            except NotFound:
                reader.authorized = False
                outcome = "NotFound"
            self.emit("reader_authorization", "AMF", reader=rid, outcome=outcome)

        yield self.lat["startup"]
        index = 0
        while index < len(self.queue):
            request = self.queue[index]
            if request.at_us > self.sched.now:
                yield request.at_us - self.sched.now
            yield from self._service_flow(request, index)
            index += 1

    def _startup(self) -> None:
        cfg = self.config
        count = core.provision_devices(self.store, [(c.device_id, c.key, c.ownership) for c in cfg.credentials])
        self.emit("provision", "AIOTF", devices=count,
                  operator=len(self.store.managed_by(Ownership.OPERATOR)),
                  externalAaa=len(self.store.managed_by(Ownership.EXTERNAL_AAA)))
        for aiotf_id, areas in sorted(cfg.aiotfs.items()):
            self.nrf.register(aiotf_id, areas)
            self.emit("nrf_register", "NRF", aiotf=aiotf_id, areas=sorted(areas))
        for reader in self.readers.values():
            self.amf.add_route(reader)

    def _service_flow(self, request: AfRequest, index: int):
        task = AiotTask(self.task_ids.next(), request)
        rec = TaskRecord(task, index, self.sched.now)
        self.records.append(rec)
        self.emit("af_request", f"AF:{request.af_id}", task.task_id, service=request.service.value)
        yield self.lat["nef"]
        ue_locations = {r.reader_id: r.area_id for r in self.readers.values() if r.kind is ReaderKind.UE}
        matched = core.matched_devices(request, self.devices)
        try:
            area = core.resolve_area(request, ue_locations)
            core.nef_authorize_af(request, self.config.afs, area)
            self.emit("nef_authorized", "NEF", task.task_id, area=area)
            yield self.lat["nrf"]
            task.aiotf_id = core.select_aiotf(self.nrf, area=area)
            self.emit("aiotf_selected", "NRF", task.task_id, aiotf=task.aiotf_id)
            yield self.lat["aiotf"]
            task.readers = core.select_readers(
                request, area, self.readers, request.selection, self.gnbs, matched, in_coverage
            )
        except TaskFailure as exc:
            task.fail(exc)
            rec.ended_us = self.sched.now
            node = "NEF" if task.aiotf_id is None else f"AIOTF-{task.aiotf_id}"
            self.emit("task_failed", node, task.task_id, reason=task.failure)
            return
        aiotf = f"AIOTF-{task.aiotf_id}"
        self.emit("readers_selected", aiotf, task.task_id, readers=task.readers)
        in_reach = {d.id for rid in task.readers for d in self.coverage[rid]}
        rec.devices_matched = sum(1 for d in matched if d.id in in_reach)

        if request.security.auth:
            task.challenge = security.make_challenge(self.rng(_CHALLENGE, task.task_id))
        task.advance(TaskStatus.DISPATCHED)

        if request.service is ServiceType.INVENTORY:
            flags = request.security.flags_for(Kind.INVENTORY_REQUEST)
            pdu = encode_nas(NasMessage(task.task_id, InventoryRequest(request.mask, task.challenge), flags))
            info = self._assistance(task, len(matched))
            for rid in task.readers:
                yield from self._reader_run(task, rec, rid, pdu, info, (task.task_id, rid))
        else:
            info = self._assistance(task, len(request.targets))
            for n, target in enumerate(request.targets):
                pdu = self._command_pdu(task, target)
                if pdu is None:
                    self.emit("command_skipped", aiotf, task.task_id, device=format_device_id(target),
                              reason="NoCredential")
                    continue
                # try the reader that last heard this device first
                order = sorted(task.readers, key=lambda r: (r != self.last_reader.get(target), r))
                for rid in order:
                    if (yield from self._reader_run(task, rec, rid, pdu, info, (task.task_id, rid, n))):
                        break

        if task.status is TaskStatus.DISPATCHED:
            task.fail("NoReaderExecuted")
            rec.ended_us = self.sched.now
            self.emit("task_failed", aiotf, task.task_id, reason=task.failure)
            return
        last = max((a.time_us for a in rec.arrivals), default=self.sched.now)
        yield max(0, last - self.sched.now) + self.lat["aiotf"]
        core.aggregate(task, rec.arrivals, self.store, self.readers, self.last_reader)
        self.emit("aggregation", aiotf, task.task_id, reported=len(task.results),
                  duplicates=task.duplicates_collapsed, securityRejects=task.security_rejects)
        yield self.lat["nef"]
        rec.ended_us = self.sched.now
        self.emit("af_report", "NEF", task.task_id, status=task.status.value, reported=len(task.results))

    def _assistance(self, task: AiotTask, matched: int) -> AssistanceInfo:
        request = task.request
        tag = TAG_OVERHEAD if request.security.auth else 0
        if request.service is ServiceType.INVENTORY:
            estimate = request.estimated_devices or max(1, matched)
            size = INVENTORY_RESPONSE_SIZE + tag
        else:
            estimate = max(1, matched)
            size = COMMAND_RESPONSE_SIZE + tag
        return AssistanceInfo(request.service, size, estimate, task.task_id, estimated_responses=estimate)

    def _command_pdu(self, task: AiotTask, target) -> bytes | None:
        req = task.request
        flags = req.security.flags_for(Kind.COMMAND_REQUEST)
        body = CommandRequest(target, req.command.op, req.command.address, req.command.payload, task.challenge)
        msg = NasMessage(task.task_id, body, flags)
        if flags & SecFlag.CONF:
            cred = self.store.get(target)
            if cred is None:
                return None
            msg = security.seal_request(msg, cred.key)
        return encode_nas(msg)

    def _dropped(self, *key) -> bool:
        p = self.config.drop_probability
        return p > 0 and self.rng(_DROP, *key).random() < p

    def _reader_run(self, task: AiotTask, rec: TaskRecord, rid: int, pdu: bytes, info, key):
        """Deliver the request to one reader, run its frames and ship responses up.

        Returns True when at least one response was collected.
        """
        reader = self.readers[rid]
        prev = 0
        hops = core.dispatch_and_route(self.path, reader, pdu, self.lat, amf=self.amf)
        for i, hop in enumerate(hops):
            yield hop.offset_us - prev
            prev = hop.offset_us
            rec.hop(hop.link)
            self.emit("hop", hop.node, task.task_id, pdu, link=hop.link, direction=hop.direction,
                      encapsulationLabel=hop.label)
            if self._dropped(*key, 0, i):
                self.emit("hop_dropped", hop.node, task.task_id, link=hop.link)
                return False
        yield self.lat["ran"]
        ran_node = f"RAN-{rid}" if reader.kind is ReaderKind.RAN else f"gNB-{reader.serving_gnb}"
        try:
            plan = allocate_resources(reader, info, self.bounds, self.gnbs.get(reader.serving_gnb))
        except AuthorizationError:
            self.emit("allocation_refused", ran_node, task.task_id, reader=rid)
            return False
        self.emit("allocation", ran_node, task.task_id, reader=rid, initialFrameSize=plan.initial_frame_size,
                  maxFrames=plan.max_frames)
        if task.status is TaskStatus.DISPATCHED:
            task.advance(TaskStatus.COLLECTING)

        stats = rec.readers.setdefault(rid, ReaderStats(rid))
        node = f"RAN-{rid}" if reader.kind is ReaderKind.RAN else f"UE-{rid}"
        collected = 0
        frames = run_frames(
            reader, plan, pdu, self.coverage[rid], lambda i: self.rng(_FRAME, *key, i),
            self.config.slot_us, self.config.contention.capture_probability,
        )
        for index, outcome in frames:
            yield outcome.frame_size * self.config.slot_us
            successes = outcome.successes
            stats.frames += 1
            stats.slots += outcome.frame_size
            stats.collisions += outcome.collisions
            stats.successes += len(successes)
            stats.empty_slots += outcome.empties
            self.emit("frame", node, task.task_id, reader=rid, frameIndex=index, frameSize=outcome.frame_size,
                      slots=outcome.summary(), successes=len(successes), collisions=outcome.collisions,
                      empty=outcome.empties)
            for n, slot in enumerate(successes):
                collected += 1
                self._ship_up(task, rec, reader, slot.nas_bytes, key + (index, n))
        return collected > 0

    def _ship_up(self, task: AiotTask, rec: TaskRecord, reader, data: bytes, key) -> None:
        hops = core.dispatch_and_route(self.path, reader, data, self.lat, upstream=True, amf=self.amf)
        start = self.sched.now
        for i, hop in enumerate(hops):
            when = start + hop.offset_us
            rec.hop(hop.link)
            self.sched.at(when, self.emit, "hop", hop.node, task.task_id, data, link=hop.link,
                          direction=hop.direction, encapsulationLabel=hop.label)
            if self._dropped(*key, 1, i):
                self.sched.at(when, self.emit, "hop_dropped", hop.node, task.task_id, link=hop.link)
                return
        rec.arrivals.append(Arrival(data, reader.reader_id, start + hops[-1].offset_us))

    def _metrics(self) -> dict:
        tasks = [r.metrics() for r in self.records]
        keys = ("devices_matched", "devices_reported", "missed", "duplicates_collapsed", "frames", "collisions",
                "empty_slots", "security_rejects", "duration_slots")
        totals = {k: sum(t[k] for t in tasks) for k in keys}
        totals["tasks"] = len(tasks)
        totals["tasks_done"] = sum(1 for t in tasks if t["status"] == TaskStatus.DONE.value)
        totals["tasks_failed"] = sum(1 for t in tasks if t["status"] == TaskStatus.FAILED.value)
        totals["trace_records"] = self.trace.count
        totals["sim_end_us"] = self.sched.now
        config = self.config.to_dict()
        config["seed"] = self.seed
        config["tasks"] += [af_request_to_dict(r) for r in self.queue[len(self.config.tasks):]]
        return {"seed": self.seed, "config": config, "tasks": tasks, "totals": totals}


def run(config: ScenarioConfig, seed: int | None = None, trace_stream=None, extra_requests=()) -> RunResult:
    """Run a scenario; identical (config, seed) give byte-identical outputs."""
    sim = Simulation(config, seed, trace_stream)
    for request in extra_requests:
        sim.submit(request)
    return sim.run()


def run_to_text(config: ScenarioConfig, seed: int | None = None, extra_requests=()) -> RunResult:
    """Like :func:`run` but captures the trace in memory."""
    buf = io.StringIO()
    result = run(config, seed, buf, extra_requests)
    result.trace_text = buf.getvalue()
    return result
