"""Scenario configuration: JSON loading, cross-validation and default echo.

The on-disk format is documented in ``docs/scenario-format.md``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import AfRequest, AfScope, ArchOption, CommandSpec, SelectionMode
from .device import DeviceProfile, DeviceState, DeviceType, EnergyParams
from .errors import ConfigError, DanglingReference, InvariantViolation, ParseError
from .identity import DeviceId, IdMask, IdType, format_device_id, parse_device_id
from .nas import MAX_PAYLOAD, CommandOp
from .radio import Coverage
from .reader import FrameBounds, ReaderKind, ReaderNode, ServiceType
from .security import KEY_LEN, Ownership, SecurityProfile

DEFAULT_LATENCIES = {
    "AIOTF-RAN": 100,
    "AIOTF-AMF": 50,
    "AMF-RAN": 100,
    "AMF-gNB": 100,
    "gNB-UE": 200,
    "AIOTF-UPF": 50,
    "UPF-UE": 300,
    "nef": 10,
    "nrf": 10,
    "aiotf": 10,
    "ran": 10,
    "registration": 100,
    "startup": 1000,
}

SEED_LIMIT = 1 << 64


@dataclass(frozen=True)
class Contention:
    bounds: FrameBounds = field(default_factory=FrameBounds)
    capture_probability: float = 0.0


@dataclass
class DeviceDecl:
    id: DeviceId
    device_type: DeviceType
    energy: EnergyParams
    key: bytes | None
    sensors: dict[int, bytes]
    memory: dict[int, bytes]
    position: tuple[float, float] | None
    active: bool

    def build(self, network_key: bytes | None) -> DeviceState:
        return DeviceState(
            id=self.id,
            profile=DeviceProfile.for_type(self.device_type),
            key=self.key if self.key is not None else network_key,
            energy=self.energy,
            stored_nj=self.energy.initial,
            memory=dict(self.memory),
            sensors=dict(self.sensors),
            active=self.active,
            position=self.position,
        )


@dataclass(frozen=True)
class ReaderDecl:
    reader_id: int
    kind: ReaderKind
    area_id: str
    coverage: Coverage
    serving_gnb: int | None

    def build(self) -> ReaderNode:
        return ReaderNode(self.reader_id, self.kind, self.area_id, self.coverage, self.serving_gnb)


@dataclass(frozen=True)
class CredentialDecl:
    device_id: DeviceId
    key: bytes
    ownership: Ownership


@dataclass
class ScenarioConfig:
    seed: int
    arch_option: ArchOption
    slot_us: int
    latencies: dict[str, int]
    drop_probability: float
    contention: Contention
    devices: list[DeviceDecl]
    readers: list[ReaderDecl]
    gnbs: dict[int, str | None]
    aiotfs: dict[int, frozenset[str]]
    subscriptions: dict[int, bool]
    credentials: list[CredentialDecl]
    afs: dict[str, AfScope]
    tasks: list[AfRequest]
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: dict) -> ScenarioConfig:
        return _build(doc)

    def to_dict(self) -> dict:
        """Normalized document with every default filled in."""
        return _echo(self)

    def with_tasks(self, extra) -> ScenarioConfig:
        cfg = _build(self.to_dict())
        cfg.tasks.extend(extra)
        return cfg


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises :class:`ParseError` for malformed JSON, :class:`DanglingReference`
    and :class:`InvariantViolation` for semantic problems, and ``OSError``
    when the file cannot be read.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a JSON object", line=1)
    return _build(doc)


# -- field helpers ----------------------------------------------------------------------


def _get(doc: dict, key: str, kind, default=None, where: str = ""):
    value = doc.get(key)
    if value is None:
        return default
    if not isinstance(value, kind) or (isinstance(value, bool) and kind is not bool):
        raise InvariantViolation(f"{where}{key}: expected {_kind_name(kind)}")
    return value


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return "/".join(k.__name__ for k in kind)
    return kind.__name__


def _enum(cls, value, what: str):
    try:
        return cls(value)
    except ValueError:
        choices = ", ".join(str(m.value) for m in cls)
        raise InvariantViolation(f"{what}: {value!r} not one of {choices}") from None


def _command_op(name, what: str) -> CommandOp:
    ops = {op.name.capitalize(): op for op in CommandOp}
    if name not in ops:
        raise InvariantViolation(f"{what}: {name!r} not one of {', '.join(ops)}")
    return ops[name]


def _device_id(text, what: str) -> DeviceId:
    if not isinstance(text, str):
        raise InvariantViolation(f"{what}: device id must be a string")
    try:
        return parse_device_id(text)
    except ParseError as exc:
        raise InvariantViolation(f"{what}: {exc}") from None


def _hex(text, what: str, length: int | None = None, limit: int | None = None) -> bytes:
    if not isinstance(text, str):
        raise InvariantViolation(f"{what}: expected hex string")
    try:
        data = bytes.fromhex(text)
    except ValueError:
        raise InvariantViolation(f"{what}: invalid hex") from None
    if length is not None and len(data) != length:
        raise InvariantViolation(f"{what}: expected {length} bytes, got {len(data)}")
    if limit is not None and len(data) > limit:
        raise InvariantViolation(f"{what}: at most {limit} bytes")
    return data


def _address(key, what: str) -> int:
    try:
        value = int(key, 0) if isinstance(key, str) else int(key)
    except ValueError:
        raise InvariantViolation(f"{what}: bad address {key!r}") from None
    if not 0 <= value < 256:
        raise InvariantViolation(f"{what}: address {value} out of range")
    return value


def _byte_map(doc, what: str) -> dict[int, bytes]:
    if not isinstance(doc, dict):
        raise InvariantViolation(f"{what}: expected an object")
    return {_address(k, what): _hex(v, what, limit=MAX_PAYLOAD) for k, v in doc.items()}


def _point(value, what: str):
    if value is None:
        return None
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise InvariantViolation(f"{what}: expected [x, y]")
    return (float(value[0]), float(value[1]))


def _profile(doc, what: str) -> SecurityProfile:
    doc = doc or {}
    try:
        return SecurityProfile(
            bool(doc.get("auth", False)), bool(doc.get("confidentiality", False)), bool(doc.get("anti_replay", False))
        )
    except ValueError as exc:
        raise InvariantViolation(f"{what}: {exc}") from None


def _mask(doc, what: str) -> IdMask:
    if doc is None:
        return IdMask()
    bits = _get(doc, "prefix_bits", int, 0, what)
    prefix = _hex(doc.get("prefix", ""), what)
    owner = doc.get("owner")
    owner_filter = None
    if owner is not None:
        owner_filter = (_enum(IdType, owner.get("type"), what + "owner.type"), owner.get("code"))
    try:
        return IdMask(bits, prefix, owner_filter)
    except (ValueError, TypeError) as exc:
        raise InvariantViolation(f"{what}: {exc}") from None


# -- parsing of an AF request (scenario task or command-file line) ------------------


def parse_af_request(doc: dict, where: str = "task: ") -> AfRequest:
    if not isinstance(doc, dict):
        raise InvariantViolation(f"{where}expected an object")
    af = doc.get("af")
    if not isinstance(af, str):
        raise InvariantViolation(f"{where}af must be a string")
    service = _enum(ServiceType, doc.get("service", "Inventory"), where + "service")
    area = _get(doc, "area", str, None, where)
    ue_readers = tuple(_get(doc, "ue_readers", list, [], where))
    if any(not isinstance(u, int) or isinstance(u, bool) for u in ue_readers):
        raise InvariantViolation(f"{where}ue_readers must be integers")
    if (area is None) == (not ue_readers):
        raise InvariantViolation(f"{where}exactly one of area or ue_readers is required")
    targets = tuple(_device_id(t, where + "targets") for t in _get(doc, "targets", list, [], where))
    command = None
    if service is ServiceType.COMMAND:
        cmd = _get(doc, "command", dict, None, where)
        if cmd is None or not targets:
            raise InvariantViolation(f"{where}command tasks need 'command' and 'targets'")
        command = CommandSpec(
            _command_op(cmd.get("op"), where + "command.op"),
            _address(cmd.get("address", 0), where + "command.address"),
            _hex(cmd.get("payload", ""), where + "command.payload", limit=MAX_PAYLOAD),
        )
    estimate = _get(doc, "estimated_devices", int, None, where)
    if estimate is not None and estimate < 1:
        raise InvariantViolation(f"{where}estimated_devices must be >= 1")
    at_us = _get(doc, "at_us", int, 0, where)
    if at_us < 0:
        raise InvariantViolation(f"{where}at_us must be >= 0")
    return AfRequest(
        af_id=af,
        service=service,
        area=area,
        ue_reader_ids=ue_readers,
        mask=_mask(doc.get("mask"), where + "mask: "),
        targets=targets,
        command=command,
        security=_profile(doc.get("security"), where + "security"),
        selection=_enum(SelectionMode, doc.get("selection", "Static"), where + "selection"),
        estimated_devices=estimate,
        at_us=at_us,
    )


def af_request_to_dict(req: AfRequest) -> dict:
    out = {
        "af": req.af_id,
        "service": req.service.value,
        "selection": req.selection.value,
        "security": {
            "auth": req.security.auth,
            "confidentiality": req.security.confidentiality,
            "anti_replay": req.security.anti_replay,
        },
        "mask": {"prefix_bits": req.mask.prefix_bits, "prefix": req.mask.prefix_value.hex().upper()},
        "at_us": req.at_us,
    }
    if req.mask.owner_filter is not None:
        out["mask"]["owner"] = {"type": int(req.mask.owner_filter[0]), "code": req.mask.owner_filter[1]}
    if req.area is not None:
        out["area"] = req.area
    else:
        out["ue_readers"] = list(req.ue_reader_ids)
    if req.targets:
        out["targets"] = [format_device_id(t) for t in req.targets]
    if req.command is not None:
        out["command"] = {
            "op": req.command.op.name.capitalize(),
            "address": req.command.address,
            "payload": req.command.payload.hex().upper(),
        }
    if req.estimated_devices is not None:
        out["estimated_devices"] = req.estimated_devices
    return out


# -- whole-document build -------------------------------------------------------------------


def _list(doc, key) -> list:
    value = doc.get(key, [])
    if not isinstance(value, list):
        raise InvariantViolation(f"{key}: expected a list")
    return value


def _int_id(value, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise InvariantViolation(f"{what}: id must be a non-negative integer")
    return value


def _build(doc: dict) -> ScenarioConfig:
    seed = _get(doc, "seed", int, 0)
    if not 0 <= seed < SEED_LIMIT:
        raise InvariantViolation("seed must be an unsigned 64-bit integer")
    arch = _enum(ArchOption, doc.get("arch_option", "Top1Direct"), "arch_option")
    slot_us = _get(doc, "slot_us", int, 1000)
    if slot_us < 1:
        raise InvariantViolation("slot_us must be >= 1")

    latencies = dict(DEFAULT_LATENCIES)
    lat_doc = _get(doc, "latencies_us", dict, {})
    for key, value in lat_doc.items():
        if key not in DEFAULT_LATENCIES:
            raise InvariantViolation(f"latencies_us: unknown entry {key!r}")
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise InvariantViolation(f"latencies_us.{key}: must be an integer >= 1")
        latencies[key] = value

    drop = _get(doc, "drop_probability", (int, float), 0.0)
    if not 0.0 <= drop <= 1.0:
        raise InvariantViolation("drop_probability must be in [0, 1]")

    c = _get(doc, "contention", dict, {})
    try:
        bounds = FrameBounds(
            min_frame=_get(c, "min_frame", int, 4, "contention."),
            max_frame=_get(c, "max_frame", int, 1024, "contention."),
            termination_empty_frames=_get(c, "termination_empty_frames", int, 3, "contention."),
            max_frames=_get(c, "max_frames", int, 1000, "contention."),
            command_retries=_get(c, "command_retries", int, 8, "contention."),
        )
    except TypeError as exc:
        raise InvariantViolation(f"contention: {exc}") from None
    if not 1 <= bounds.min_frame <= bounds.max_frame:
        raise InvariantViolation("contention: require 1 <= min_frame <= max_frame")
    if min(bounds.termination_empty_frames, bounds.max_frames, bounds.command_retries) < 1:
        raise InvariantViolation("contention: frame counts must be >= 1")
    capture = _get(c, "capture_probability", (int, float), 0.0, "contention.")
    if not 0.0 <= capture <= 1.0:
        raise InvariantViolation("contention.capture_probability must be in [0, 1]")

    # devices
    devices: list[DeviceDecl] = []
    seen_ids: set[DeviceId] = set()
    for i, d in enumerate(_list(doc, "devices")):
        what = f"devices[{i}]"
        if not isinstance(d, dict):
            raise InvariantViolation(f"{what}: expected an object")
        dev_id = _device_id(d.get("id"), what + ".id")
        if dev_id in seen_ids:
            raise InvariantViolation(f"{what}: duplicate device id {dev_id}")
        seen_ids.add(dev_id)
        e = _get(d, "energy", dict, {}, what + ".")
        try:
            energy = EnergyParams(**{k: float(v) for k, v in e.items()})
        except (TypeError, ValueError) as exc:
            raise InvariantViolation(f"{what}.energy: {exc}") from None
        key = d.get("key")
        devices.append(
            DeviceDecl(
                id=dev_id,
                device_type=_enum(DeviceType, d.get("type", "Type1"), what + ".type"),
                energy=energy,
                key=None if key is None else _hex(key, what + ".key", KEY_LEN),
                sensors=_byte_map(d.get("sensors", {}), what + ".sensors"),
                memory=_byte_map(d.get("memory", {}), what + ".memory"),
                position=_point(d.get("position"), what + ".position"),
                active=bool(d.get("active", True)),
            )
        )

    # credentials
    credentials: list[CredentialDecl] = []
    cred_ids: set[DeviceId] = set()
    for i, cdoc in enumerate(_list(doc, "credentials")):
        what = f"credentials[{i}]"
        dev_id = _device_id(cdoc.get("device"), what + ".device")
        if dev_id not in seen_ids:
            raise DanglingReference(format_device_id(dev_id), what)
        if dev_id in cred_ids:
            raise InvariantViolation(f"{what}: duplicate credential for {dev_id}")
        cred_ids.add(dev_id)
        credentials.append(
            CredentialDecl(
                dev_id,
                _hex(cdoc.get("key"), what + ".key", KEY_LEN),
                _enum(Ownership, cdoc.get("ownership", "operator"), what + ".ownership"),
            )
        )
    for dev in devices:
        if dev.key is None and dev.id not in cred_ids:
            raise DanglingReference(format_device_id(dev.id), "device has no key and no credential entry")

    # gNBs, NRF registrations, subscriptions, AFs
    gnbs: dict[int, str | None] = {}
    for i, g in enumerate(_list(doc, "gnbs")):
        gid = _int_id(g.get("id"), f"gnbs[{i}]")
        if gid in gnbs:
            raise InvariantViolation(f"gnbs[{i}]: duplicate id {gid}")
        gnbs[gid] = g.get("area")

    aiotfs: dict[int, frozenset[str]] = {}
    for i, a in enumerate(_list(doc, "aiotfs")):
        aid = _int_id(a.get("id"), f"aiotfs[{i}]")
        if aid in aiotfs:
            raise InvariantViolation(f"aiotfs[{i}]: duplicate id {aid}")
        areas = a.get("service_areas", [])
        if not isinstance(areas, list) or not all(isinstance(x, str) for x in areas):
            raise InvariantViolation(f"aiotfs[{i}].service_areas: expected a list of strings")
        aiotfs[aid] = frozenset(areas)
    if not aiotfs:
        raise InvariantViolation("at least one AIOTF must be declared")

    subscriptions: dict[int, bool] = {}
    for i, s in enumerate(_list(doc, "subscriptions")):
        subscriptions[_int_id(s.get("ue"), f"subscriptions[{i}]")] = bool(s.get("aiot_reader", False))

    afs: dict[str, AfScope] = {}
    for i, a in enumerate(_list(doc, "afs")):
        af_id = a.get("id")
        if not isinstance(af_id, str):
            raise InvariantViolation(f"afs[{i}].id: expected a string")
        if af_id in afs:
            raise InvariantViolation(f"afs[{i}]: duplicate id {af_id!r}")
        services = a.get("services", [s.value for s in ServiceType])
        afs[af_id] = AfScope(
            frozenset(a.get("areas", [])),
            frozenset(_enum(ServiceType, s, f"afs[{i}].services") for s in services),
        )

    # readers
    readers: list[ReaderDecl] = []
    reader_ids: set[int] = set()
    for i, r in enumerate(_list(doc, "readers")):
        what = f"readers[{i}]"
        rid = _int_id(r.get("id"), what)
        if rid in reader_ids:
            raise InvariantViolation(f"{what}: duplicate reader id {rid}")
        reader_ids.add(rid)
        kind = _enum(ReaderKind, r.get("kind", arch.reader_kind.value), what + ".kind")
        if kind is not arch.reader_kind:
            raise InvariantViolation(f"{what}: {kind.value} does not fit {arch.value}")
        area = r.get("area")
        if not isinstance(area, str):
            raise InvariantViolation(f"{what}.area: expected a string")
        gnb = r.get("gnb")
        if kind is ReaderKind.UE:
            if gnb is None:
                raise InvariantViolation(f"{what}: UE readers need a serving gnb")
            if gnb not in gnbs:
                raise DanglingReference(f"gnb {gnb}", what)
        elif gnb is not None:
            raise InvariantViolation(f"{what}: RAN readers take no serving gnb")
        cov = r.get("coverage", {})
        if "radius_m" in cov:
            radius = cov["radius_m"]
            if not isinstance(radius, (int, float)) or radius < 0:
                raise InvariantViolation(f"{what}.coverage.radius_m: expected a non-negative number")
            coverage = Coverage(center=_point(cov.get("center", [0, 0]), what + ".coverage.center"),
                                radius_m=float(radius))
        else:
            ids = set()
            for t in cov.get("devices", []):
                dev_id = _device_id(t, what + ".coverage")
                if dev_id not in seen_ids:
                    raise DanglingReference(format_device_id(dev_id), what + ".coverage")
                ids.add(dev_id)
            coverage = Coverage(device_ids=frozenset(ids))
        readers.append(ReaderDecl(rid, kind, area, coverage, gnb))

    tasks = []
    for i, t in enumerate(_list(doc, "tasks")):
        req = parse_af_request(t, f"tasks[{i}]: ")
        check_references(req, afs, reader_ids, seen_ids, f"tasks[{i}]")
        tasks.append(req)

    return ScenarioConfig(
        seed=seed,
        arch_option=arch,
        slot_us=slot_us,
        latencies=latencies,
        drop_probability=float(drop),
        contention=Contention(bounds, float(capture)),
        devices=devices,
        readers=readers,
        gnbs=gnbs,
        aiotfs=aiotfs,
        subscriptions=subscriptions,
        credentials=credentials,
        afs=afs,
        tasks=tasks,
        raw=doc,
    )


def check_references(req: AfRequest, afs, reader_ids, device_ids, where: str, check_af: bool = True) -> None:
    if check_af and req.af_id not in afs:
        raise DanglingReference(f"af {req.af_id!r}", where)
    for u in req.ue_reader_ids:
        if u not in reader_ids:
            raise DanglingReference(f"reader {u}", where)
    for t in req.targets:
        if t not in device_ids:
            raise DanglingReference(format_device_id(t), where)


def _echo(cfg: ScenarioConfig) -> dict:
    b = cfg.contention.bounds
    devices = []
    for d in cfg.devices:
        entry = {
            "id": format_device_id(d.id),
            "type": d.device_type.value,
            "energy": {
                "charge_rate": d.energy.charge_rate,
                "capacity": d.energy.capacity,
                "threshold": d.energy.threshold,
                "response_cost": d.energy.response_cost,
                "initial": d.energy.initial,
            },
            "sensors": {f"0x{a:02X}": v.hex().upper() for a, v in sorted(d.sensors.items())},
            "memory": {f"0x{a:02X}": v.hex().upper() for a, v in sorted(d.memory.items())},
            "active": d.active,
        }
        if d.key is not None:
            entry["key"] = d.key.hex().upper()
        if d.position is not None:
            entry["position"] = list(d.position)
        devices.append(entry)
    readers = []
    for r in cfg.readers:
        entry = {"id": r.reader_id, "kind": r.kind.value, "area": r.area_id}
        if r.serving_gnb is not None:
            entry["gnb"] = r.serving_gnb
        if r.coverage.radius_m is not None:
            entry["coverage"] = {"center": list(r.coverage.center), "radius_m": r.coverage.radius_m}
        else:
            entry["coverage"] = {"devices": sorted(format_device_id(x) for x in r.coverage.device_ids)}
        readers.append(entry)
    return {
        "seed": cfg.seed,
        "arch_option": cfg.arch_option.value,
        "slot_us": cfg.slot_us,
        "latencies_us": dict(sorted(cfg.latencies.items())),
        "drop_probability": cfg.drop_probability,
        "contention": {
            "min_frame": b.min_frame,
            "max_frame": b.max_frame,
            "termination_empty_frames": b.termination_empty_frames,
            "max_frames": b.max_frames,
            "command_retries": b.command_retries,
            "capture_probability": cfg.contention.capture_probability,
        },
        "devices": devices,
        "readers": readers,
        "gnbs": [{"id": g, "area": a} for g, a in sorted(cfg.gnbs.items())],
        "aiotfs": [{"id": a, "service_areas": sorted(s)} for a, s in sorted(cfg.aiotfs.items())],
        "subscriptions": [{"ue": u, "aiot_reader": f} for u, f in sorted(cfg.subscriptions.items())],
        "credentials": [
            {"device": format_device_id(c.device_id), "key": c.key.hex().upper(), "ownership": c.ownership.value}
            for c in cfg.credentials
        ],
        "afs": [
            {"id": a, "areas": sorted(s.areas), "services": sorted(x.value for x in s.services)}
            for a, s in sorted(cfg.afs.items())
        ],
        "tasks": [af_request_to_dict(t) for t in cfg.tasks],
    }


def read_af_commands(path: str | Path) -> list[AfRequest]:
    """Parse a line-delimited JSON file of AF requests (blank lines skipped)."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=lineno) from None
            try:
                out.append(parse_af_request(doc, f"line {lineno}: "))
            except ConfigError as exc:
                raise InvariantViolation(str(exc)) from None
    return out
