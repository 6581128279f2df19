"""Canonical data model for 5G core control-plane messages.

Messages arrive as JSONL (one object per line) with a nested JSON
payload.  Ingestion flattens the payload into an ordered list of
dot-path attributes so that every parameter is individually
addressable by the downstream encoders and the attribute graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Union


class MessageFormatError(ValueError):
    """Raised on malformed records; carries line number and field path."""

    def __init__(self, reason: str, lineno: int | None = None, path: str = ""):
        self.reason = reason
        self.lineno = lineno
        self.path = path
        loc = []
        if lineno is not None:
            loc.append(f"line {lineno}")
        if path:
            loc.append(f"field '{path}'")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(f"{reason}{suffix}")


class NetworkFunctionKind(str, Enum):
    """Closed set of entity kinds appearing in the control plane."""

    AMF = "AMF"
    AUSF = "AUSF"
    NRF = "NRF"
    SMF = "SMF"
    UDM = "UDM"
    PCF = "PCF"
    UDR = "UDR"
    UPF = "UPF"
    GNB = "GNB"
    UE = "UE"

    @classmethod
    def parse(cls, s: str, lineno: int | None = None, path: str = "") -> "NetworkFunctionKind":
        try:
            return cls(s)
        except ValueError:
            raise MessageFormatError(f"unknown NF kind {s!r}", lineno, path) from None


#: Core network functions (excludes radio/user equipment).
CORE_NF_KINDS = (
    NetworkFunctionKind.AMF,
    NetworkFunctionKind.AUSF,
    NetworkFunctionKind.NRF,
    NetworkFunctionKind.SMF,
    NetworkFunctionKind.UDM,
    NetworkFunctionKind.PCF,
    NetworkFunctionKind.UDR,
    NetworkFunctionKind.UPF,
)


class Protocol(str, Enum):
    SBI = "SBI"
    NGAP = "NGAP"
    NAS = "NAS"
    PFCP = "PFCP"

    @classmethod
    def parse(cls, s: str, lineno: int | None = None, path: str = "") -> "Protocol":
        try:
            return cls(s)
        except ValueError:
            raise MessageFormatError(f"unknown proto {s!r}", lineno, path) from None


class LabelKind(str, Enum):
    BENIGN = "benign"
    REPLAY_DOS = "replay_dos"
    PARAM_TAMPER = "param_tamper"
    DDOS_COORD = "ddos_coord"
    SEQ_VIOLATION = "seq_violation"


#: Attribute values are either text (str) or numeric (finite float).
#: JSON strings are never coerced to numbers, so digit-like identifiers
#: stay textual.
AttrValue = Union[str, float]


@dataclass(frozen=True)
class EntityRef:
    """Identity of a communicating entity; (id, kind) is the key everywhere."""

    id: str
    kind: NetworkFunctionKind

    def __post_init__(self):
        if not self.id:
            raise MessageFormatError("entity id must be non-empty")

    @property
    def key(self) -> str:
        return f"{self.id}|{self.kind.value}"


@dataclass(frozen=True)
class Attribute:
    """One flattened payload parameter: dot-path name plus text/numeric value."""

    name: str
    value: AttrValue

    def __post_init__(self):
        if not self.name or any(not seg for seg in self.name.split(".")):
            raise MessageFormatError(f"invalid attribute name {self.name!r}")
        if isinstance(self.value, bool):
            raise MessageFormatError("boolean attribute values not supported", path=self.name)
        if isinstance(self.value, int):
            object.__setattr__(self, "value", float(self.value))
        if isinstance(self.value, float) and not math.isfinite(self.value):
            raise MessageFormatError("non-finite number", path=self.name)
        if not isinstance(self.value, (str, float)):
            raise MessageFormatError(
                f"unsupported value type {type(self.value).__name__}", path=self.name
            )

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, float)


def canonical_value_key(value: AttrValue) -> str:
    """Stable string key for a value; text and numeric never collide."""
    if isinstance(value, str):
        return "t:" + value
    return "n:" + repr(float(value))


@dataclass(frozen=True)
class Label:
    """Ground truth attached by the generator; never consulted by models."""

    kind: LabelKind
    proc: str


@dataclass
class ControlMessage:
    msg_id: int
    ts: float
    recv: EntityRef
    send: EntityRef
    proto: Protocol
    attrs: tuple[Attribute, ...] = field(default_factory=tuple)
    label: Label | None = None

    def __post_init__(self):
        if isinstance(self.msg_id, bool) or not isinstance(self.msg_id, int) or self.msg_id < 0:
            raise MessageFormatError(f"msg_id must be a non-negative integer, got {self.msg_id!r}")
        if not isinstance(self.ts, (int, float)) or not math.isfinite(self.ts) or self.ts < 0:
            raise MessageFormatError(f"ts must be a finite number >= 0, got {self.ts!r}")
        self.ts = float(self.ts)
        self.attrs = tuple(self.attrs)


_MAX_DEPTH = 32


def flatten_payload(payload: dict, max_depth: int = _MAX_DEPTH) -> tuple[Attribute, ...]:
    """Flatten a nested JSON payload into dot-path attributes.

    Map keys are visited in lexicographic order, arrays by index (the
    segment is the zero-based index), so the result is a deterministic
    function of the payload.  Null and boolean values are rejected.
    """
    if not isinstance(payload, dict):
        raise MessageFormatError(f"payload must be an object, got {type(payload).__name__}")
    out: list[Attribute] = []

    def visit(node, path: str, depth: int):
        if depth > max_depth:
            raise MessageFormatError(f"payload nesting deeper than {max_depth}", path=path)
        if isinstance(node, dict):
            for key in sorted(node.keys()):
                if not isinstance(key, str) or not key:
                    raise MessageFormatError("payload keys must be non-empty strings", path=path)
                visit(node[key], f"{path}.{key}" if path else key, depth + 1)
        elif isinstance(node, list):
            for i, item in enumerate(node):
                visit(item, f"{path}.{i}" if path else str(i), depth + 1)
        elif isinstance(node, bool) or node is None:
            raise MessageFormatError("null/boolean payload values not supported", path=path)
        elif isinstance(node, str):
            out.append(Attribute(path, node))
        elif isinstance(node, (int, float)):
            if not math.isfinite(node):
                raise MessageFormatError("non-finite number", path=path)
            out.append(Attribute(path, float(node)))
        else:
            raise MessageFormatError(
                f"unsupported payload value type {type(node).__name__}", path=path
            )

    visit(payload, "", 0)
    return tuple(out)


def nest_attributes(attrs: Iterable[Attribute]) -> dict:
    """Rebuild the nested payload from flattened attributes.

    Inverse of flatten_payload for payloads whose map keys are not all
    decimal strings (those are indistinguishable from array indices; a
    node whose keys are exactly 0..n-1 becomes an array).
    """
    tree: dict = {}
    for attr in attrs:
        segs = attr.name.split(".")
        node = tree
        for seg in segs[:-1]:
            nxt = node.setdefault(seg, {})
            if not isinstance(nxt, dict):
                raise MessageFormatError(f"path conflict at {seg!r}", path=attr.name)
            node = nxt
        if segs[-1] in node:
            raise MessageFormatError("duplicate attribute path", path=attr.name)
        node[segs[-1]] = attr.value

    def materialize(node):
        if not isinstance(node, dict):
            return node
        keys = list(node.keys())
        if keys and all(k.isdigit() for k in keys):
            idx = sorted(int(k) for k in keys)
            if idx == list(range(len(keys))):
                return [materialize(node[str(i)]) for i in idx]
        return {k: materialize(v) for k, v in sorted(node.items())}

    return materialize(tree)


def _require(obj: dict, key: str, lineno: int | None) -> object:
    if key not in obj:
        raise MessageFormatError("missing required field", lineno, key)
    return obj[key]


def _parse_entity(obj: object, lineno: int | None, path: str) -> EntityRef:
    if not isinstance(obj, dict):
        raise MessageFormatError("entity must be an object", lineno, path)
    ent_id = _require(obj, "id", lineno)
    kind = _require(obj, "nf", lineno)
    if not isinstance(ent_id, str) or not ent_id:
        raise MessageFormatError("entity id must be a non-empty string", lineno, f"{path}.id")
    if not isinstance(kind, str):
        raise MessageFormatError("entity nf must be a string", lineno, f"{path}.nf")
    return EntityRef(ent_id, NetworkFunctionKind.parse(kind, lineno, f"{path}.nf"))


def parse_jsonl_record(line: str, lineno: int | None = None) -> ControlMessage:
    """Parse and validate one JSONL dataset record."""

    def reject_constant(s: str):
        raise MessageFormatError(f"non-finite number {s}", lineno)

    try:
        obj = json.loads(line, parse_constant=reject_constant)
    except json.JSONDecodeError as e:
        raise MessageFormatError(f"malformed JSON: {e.msg}", lineno) from None
    if not isinstance(obj, dict):
        raise MessageFormatError("record must be a JSON object", lineno)

    msg_id = _require(obj, "msg_id", lineno)
    if isinstance(msg_id, bool) or not isinstance(msg_id, int):
        raise MessageFormatError("msg_id must be an integer", lineno, "msg_id")
    ts = _require(obj, "ts", lineno)
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        raise MessageFormatError("ts must be a number", lineno, "ts")
    recv = _parse_entity(_require(obj, "recv", lineno), lineno, "recv")
    send = _parse_entity(_require(obj, "send", lineno), lineno, "send")
    proto_s = _require(obj, "proto", lineno)
    if not isinstance(proto_s, str):
        raise MessageFormatError("proto must be a string", lineno, "proto")
    proto = Protocol.parse(proto_s, lineno, "proto")
    payload = _require(obj, "payload", lineno)

    label = None
    if obj.get("label") is not None:
        lab = obj["label"]
        if not isinstance(lab, dict):
            raise MessageFormatError("label must be an object", lineno, "label")
        try:
            kind = LabelKind(lab.get("kind"))
        except ValueError:
            raise MessageFormatError(
                f"unknown label kind {lab.get('kind')!r}", lineno, "label.kind"
            ) from None
        label = Label(kind, str(lab.get("proc", "")))

    try:
        attrs = flatten_payload(payload)
        return ControlMessage(msg_id, ts, recv, send, proto, attrs, label)
    except MessageFormatError as e:
        if e.lineno is None and lineno is not None:
            raise MessageFormatError(e.reason, lineno, e.path) from None
        raise


def message_to_dict(msg: ControlMessage) -> dict:
    out = {
        "msg_id": msg.msg_id,
        "ts": msg.ts,
        "recv": {"id": msg.recv.id, "nf": msg.recv.kind.value},
        "send": {"id": msg.send.id, "nf": msg.send.kind.value},
        "proto": msg.proto.value,
        "payload": nest_attributes(msg.attrs),
    }
    if msg.label is not None:
        out["label"] = {"kind": msg.label.kind.value, "proc": msg.label.proc}
    return out


def serialize_message(msg: ControlMessage) -> str:
    return json.dumps(message_to_dict(msg), separators=(",", ":"), ensure_ascii=False)


def write_jsonl(messages: Iterable[ControlMessage], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for msg in messages:
            f.write(serialize_message(msg))
            f.write("\n")


def read_jsonl(path: str | Path) -> list[ControlMessage]:
    messages = []
    seen_ids = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            msg = parse_jsonl_record(line, lineno)
            if msg.msg_id in seen_ids:
                raise MessageFormatError(f"duplicate msg_id {msg.msg_id}", lineno, "msg_id")
            seen_ids.add(msg.msg_id)
            messages.append(msg)
    return messages


def strip_labels(messages: Iterable[ControlMessage]) -> list[ControlMessage]:
    """Copy of the stream with ground truth removed."""
    return [
        ControlMessage(m.msg_id, m.ts, m.recv, m.send, m.proto, m.attrs, None) for m in messages
    ]
