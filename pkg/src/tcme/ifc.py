"""Channel-level information flow control with deny-by-default semantics.

Every movement of bytes between environment boundaries goes through a
:class:`FlowGuard`, which consults the frozen :class:`FlowPolicy` and appends
an :class:`AuditRecord`. Records hold sizes and labels, never payload bytes.
"""

from __future__ import annotations

import csv
import io
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Union

from . import canonical


class FlowError(Exception):
    pass


class UnknownLabel(FlowError):
    pass


class FlowDenied(FlowError):
    pass


class PolicyError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class PartyPrivate:
    party_id: str

    def __str__(self):
        return f"PartyPrivate[{self.party_id}]"


@dataclass(frozen=True, order=True)
class _Singleton:
    name: str

    def __str__(self):
        return self.name


Public = _Singleton("Public")
ModelInternal = _Singleton("ModelInternal")
ConstrainedOutput = _Singleton("ConstrainedOutput")

Label = Union[PartyPrivate, _Singleton]
_SINGLETONS = {s.name: s for s in (Public, ModelInternal, ConstrainedOutput)}


def label_to_tree(label: Label):
    if isinstance(label, PartyPrivate):
        return canonical.tagged("PartyPrivate", party_id=label.party_id)
    return canonical.tagged(label.name)


def label_from_tree(node) -> Label:
    kind = node.get(canonical.TYPE_KEY) if isinstance(node, dict) else None
    if kind == "PartyPrivate":
        return PartyPrivate(node["party_id"])
    if kind in _SINGLETONS:
        return _SINGLETONS[kind]
    raise canonical.EncodingError(f"unknown label node {kind!r}")


def _sort_key(label: Label):
    return (0, label.name, "") if isinstance(label, _Singleton) else (1, "", label.party_id)


@dataclass(frozen=True)
class FlowPolicy:
    parties: tuple[str, ...]
    allowed_edges: frozenset[tuple[Label, Label]]

    def __post_init__(self):
        object.__setattr__(self, "parties", tuple(self.parties))
        object.__setattr__(self, "allowed_edges", frozenset(self.allowed_edges))
        for src, dst in self.allowed_edges:
            for label in (src, dst):
                self.require_known(label)
            if src == ModelInternal and dst != ConstrainedOutput:
                raise PolicyError(f"model internals may only flow to ConstrainedOutput, not {dst}")
            if isinstance(src, PartyPrivate) and isinstance(dst, PartyPrivate) and src != dst:
                raise PolicyError(f"direct party-to-party edge {src} -> {dst} is forbidden")

    def labels(self) -> list[Label]:
        return [Public, ModelInternal, ConstrainedOutput] + [PartyPrivate(p) for p in self.parties]

    def is_known(self, label) -> bool:
        if isinstance(label, PartyPrivate):
            return label.party_id in self.parties
        return isinstance(label, _Singleton) and label.name in _SINGLETONS

    def require_known(self, label) -> None:
        if not self.is_known(label):
            raise UnknownLabel(f"label {label} is not defined for this manifest")

    def sorted_edges(self) -> list[tuple[Label, Label]]:
        return sorted(self.allowed_edges, key=lambda e: (_sort_key(e[0]), _sort_key(e[1])))

    def to_tree(self):
        return canonical.tagged(
            "FlowPolicy",
            parties=list(self.parties),
            edges=[[label_to_tree(a), label_to_tree(b)] for a, b in self.sorted_edges()],
        )

    @classmethod
    def from_tree(cls, node) -> FlowPolicy:
        node = canonical.expect(node, "FlowPolicy")
        edges = {(label_from_tree(a), label_from_tree(b)) for a, b in node["edges"]}
        return cls(tuple(node["parties"]), frozenset(edges))


def default_policy(manifest_or_parties) -> FlowPolicy:
    """The 2N+2 edge policy: inputs into the model, model out through the grammar, output back to parties."""
    parties = getattr(manifest_or_parties, "party_ids", manifest_or_parties)
    parties = tuple(parties)
    edges = {(PartyPrivate(p), ModelInternal) for p in parties}
    edges.add((Public, ModelInternal))
    edges.add((ModelInternal, ConstrainedOutput))
    edges |= {(ConstrainedOutput, PartyPrivate(p)) for p in parties}
    return FlowPolicy(parties, frozenset(edges))


ALLOW = "allow"
DENY = "deny"


@dataclass(frozen=True)
class AuditRecord:
    timestamp: float
    session_id: str
    source: Label
    sink: Label
    decision: str
    byte_count: int

    def csv_row(self) -> list[str]:
        return [
            f"{self.timestamp:.6f}",
            self.session_id,
            str(self.source),
            str(self.sink),
            self.decision,
            str(self.byte_count),
        ]


AUDIT_CSV_HEADER = ["ts", "session", "from", "to", "decision", "bytes"]


def audit_csv(records: Iterable[AuditRecord], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(AUDIT_CSV_HEADER)
    for record in records:
        writer.writerow(record.csv_row())
    return buf.getvalue()


class AuditLog:
    """Append-only per-session decision log."""

    def __init__(self, session_id: str, clock=time.time):
        self.session_id = session_id
        self._records: list[AuditRecord] = []
        self._clock = clock

    def append(self, source: Label, sink: Label, decision: str, byte_count: int) -> None:
        self._records.append(
            AuditRecord(self._clock(), self.session_id, source, sink, decision, byte_count)
        )

    def export(self) -> list[AuditRecord]:
        return list(self._records)

    def __len__(self):
        return len(self._records)


class AuditRegistry:
    """Lookup of audit logs by session id for :func:`export_audit`."""

    def __init__(self):
        self._logs: dict[str, AuditLog] = {}
        self._lock = threading.Lock()

    def open(self, session_id: str, clock=time.time) -> AuditLog:
        with self._lock:
            if session_id in self._logs:
                raise FlowError(f"audit log for session {session_id} already exists")
            log = self._logs[session_id] = AuditLog(session_id, clock)
        return log

    def export_audit(self, session_id: str) -> list[AuditRecord]:
        with self._lock:
            log = self._logs.get(session_id)
        if log is None:
            raise KeyError(f"unknown session {session_id}")
        return log.export()

    def session_ids(self) -> list[str]:
        with self._lock:
            return list(self._logs)

    def forget(self, session_id: str) -> None:
        with self._lock:
            self._logs.pop(session_id, None)


AUDIT = AuditRegistry()


def export_audit(session_id: str, registry: AuditRegistry | None = None) -> list[AuditRecord]:
    return (registry or AUDIT).export_audit(session_id)


def check_flow(policy: FlowPolicy, source: Label, sink: Label, log: AuditLog | None = None, byte_count: int = 0) -> str:
    """Return ``"allow"`` iff ``(source, sink)`` is a declared edge.

    Unknown labels are logged as a deny and then raise :class:`UnknownLabel`.
    """
    known = policy.is_known(source) and policy.is_known(sink)
    decision = ALLOW if known and (source, sink) in policy.allowed_edges else DENY
    if log is not None:
        log.append(source, sink, decision, byte_count)
    if not known:
        policy.require_known(source)
        policy.require_known(sink)
    return decision


@dataclass
class FlowGuard:
    """The only way session code moves data across a boundary."""

    policy: FlowPolicy
    log: AuditLog
    denied: list[tuple[Label, Label]] = field(default_factory=list)

    def transfer(self, source: Label, sink: Label, payload):
        size = len(payload.encode("utf-8")) if isinstance(payload, str) else len(payload)
        if check_flow(self.policy, source, sink, self.log, size) != ALLOW:
            self.denied.append((source, sink))
            raise FlowDenied(f"flow {source} -> {sink} denied")
        return payload
