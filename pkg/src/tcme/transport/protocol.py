"""Sans-IO protocol state machines for the environment and for parties.

Message flow for one party (N parties run this concurrently)::

    party -> env   HELLO    party id, client nonce, HMAC under the pre-shared key
    env   -> party HELLO    server nonce, HMAC confirmation
    env   -> party PROPOSE  canonical manifest bytes
    party -> env   APPROVE  signed approval of the manifest digest
    party -> env   INPUT    sealed, padded canonical JSON of the input value
    env   -> party RESULT   sealed outcome (or ABORT / ERROR)

Both the TCP endpoint and the simulated network drive these classes, so the
bytes on the wire are identical in both.
"""

from __future__ import annotations

import hmac
import itertools
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .. import canonical
from ..constraints import ConstraintError, validate_input
from ..ifc import AuditRegistry
from ..manifest import (
    ComputationManifest,
    PartyApproval,
    canonical_encode,
    decode,
    digest,
    verify_approval,
)
from ..session import DuplicateSubmission, InputRejected, Session, SessionError, SessionResult
from .channel import (
    MAC_SIZE,
    NONCE_SIZE,
    SecureChannel,
    derive_key,
    hello_ack_mac,
    hello_mac,
)
from .frames import Frame, FrameError, MsgType, decode_frame, encode_frame


def to_wire(value: Any) -> Any:
    if isinstance(value, (tuple, list)):
        return [to_wire(v) for v in value]
    if isinstance(value, dict):
        return {str(k): to_wire(v) for k, v in value.items()}
    return value


def session_id_for(manifest: ComputationManifest) -> bytes:
    return digest(manifest)[:16]


@dataclass
class Outgoing:
    conn: Any
    data: bytes
    close: bool = False


class SessionRegistry:
    """Manifests awaiting a session, keyed by 16-byte session id. Each id is single-use."""

    def __init__(self):
        self._waiting: dict[bytes, ComputationManifest] = {}
        self._retired: set[bytes] = set()

    def register(self, manifest: ComputationManifest, session_id: bytes | None = None) -> bytes:
        sid = session_id or session_id_for(manifest)
        if sid in self._waiting or sid in self._retired:
            raise ValueError("session id already used")
        self._waiting[sid] = manifest
        return sid

    def get(self, sid: bytes) -> ComputationManifest | None:
        return self._waiting.get(sid)

    def retire(self, sid: bytes) -> None:
        self._waiting.pop(sid, None)
        self._retired.add(sid)

    def __contains__(self, sid: bytes) -> bool:
        return sid in self._waiting

    def __len__(self):
        return len(self._waiting)


@dataclass
class _Conn:
    party_id: str | None = None
    session_id: bytes | None = None
    channel: SecureChannel | None = None
    approved: bool = False


@dataclass
class _Pending:
    manifest: ComputationManifest
    conns: dict[str, Any] = field(default_factory=dict)
    channels: dict[str, SecureChannel] = field(default_factory=dict)
    approvals: dict[str, PartyApproval] = field(default_factory=dict)
    inputs: list[tuple[str, Any]] = field(default_factory=list)
    session: Session | None = None


def _error(conn, sid: bytes, message: str) -> Outgoing:
    return Outgoing(conn, encode_frame(Frame(MsgType.ERROR, sid, message.encode())), close=True)


class EnvironmentCore:
    """Environment side. Feed it raw frames, send what it returns."""

    def __init__(
        self,
        registry: SessionRegistry,
        psks: Mapping[str, bytes],
        public_keys: Mapping[str, object],
        backend_factory: Callable[[ComputationManifest], Any],
        *,
        audit: AuditRegistry | None = None,
        clock: Callable[[], float] | None = None,
        randbytes: Callable[[int], bytes] = os.urandom,
    ):
        self.registry = registry
        self._psks = dict(psks)
        self._public_keys = dict(public_keys)
        self._backend_factory = backend_factory
        self.audit = audit or AuditRegistry()
        if clock is None:
            ticks = itertools.count()
            clock = lambda: float(next(ticks))  # noqa: E731  logical time keeps audit logs reproducible
        self._clock = clock
        self._randbytes = randbytes
        self._conns: dict[Any, _Conn] = {}
        self._pending: dict[bytes, _Pending] = {}
        self.results: dict[bytes, SessionResult] = {}

    def connection_lost(self, conn) -> None:
        self._conns.pop(conn, None)

    def on_frame(self, conn, data: bytes) -> list[Outgoing]:
        state = self._conns.setdefault(conn, _Conn())
        try:
            frame = decode_frame(data)
        except FrameError as exc:
            return [_error(conn, bytes(16), f"malformed frame: {type(exc).__name__}")]
        handler = {
            MsgType.HELLO: self._hello,
            MsgType.APPROVE: self._approve,
            MsgType.INPUT: self._input,
        }.get(frame.msg_type)
        if handler is None:
            return [_error(conn, frame.session_id, f"unexpected {frame.msg_type.name}")]
        if frame.msg_type is not MsgType.HELLO and (
            state.channel is None or state.session_id != frame.session_id
        ):
            return [_error(conn, frame.session_id, "not authenticated for this session")]
        return handler(conn, state, frame)

    def _hello(self, conn, state: _Conn, frame: Frame) -> list[Outgoing]:
        sid = frame.session_id
        if state.channel is not None:
            return [_error(conn, sid, "already authenticated")]
        manifest = self.registry.get(sid)
        if manifest is None:
            return [_error(conn, sid, "unknown session")]
        p = frame.payload
        if len(p) < 1 or len(p) != 1 + p[0] + NONCE_SIZE + MAC_SIZE:
            return [_error(conn, sid, "malformed HELLO")]
        party_id = p[1 : 1 + p[0]].decode("utf-8", "replace")
        client_nonce = p[1 + p[0] : 1 + p[0] + NONCE_SIZE]
        mac = p[1 + p[0] + NONCE_SIZE :]
        psk = self._psks.get(party_id)
        if psk is None or party_id not in manifest.party_ids:
            return [_error(conn, sid, "authentication failed")]
        if not _ct_eq(mac, hello_mac(psk, sid, party_id, client_nonce)):
            return [_error(conn, sid, "authentication failed")]
        pending = self._pending.setdefault(sid, _Pending(manifest))
        if party_id in pending.conns:
            return [_error(conn, sid, "party already connected")]
        server_nonce = self._randbytes(NONCE_SIZE)
        key = derive_key(psk, sid, party_id, client_nonce, server_nonce)
        state.party_id, state.session_id = party_id, sid
        state.channel = SecureChannel(key, is_environment=True)
        pending.conns[party_id] = conn
        pending.channels[party_id] = state.channel
        ack = server_nonce + hello_ack_mac(psk, sid, party_id, client_nonce, server_nonce)
        return [
            Outgoing(conn, encode_frame(Frame(MsgType.HELLO, sid, ack))),
            Outgoing(conn, encode_frame(Frame(MsgType.PROPOSE, sid, canonical_encode(manifest)))),
        ]

    def _approve(self, conn, state: _Conn, frame: Frame) -> list[Outgoing]:
        sid = frame.session_id
        pending = self._pending.get(sid)
        if pending is None:
            return [_error(conn, sid, "unknown session")]
        try:
            approval = PartyApproval.decode(frame.payload)
            ok = approval.party_id == state.party_id and verify_approval(
                approval, digest(pending.manifest), self._public_keys[state.party_id]
            )
        except (canonical.EncodingError, ValueError, KeyError):
            ok = False
        if not ok:
            return [_error(conn, sid, "approval rejected")]
        pending.approvals[state.party_id] = approval
        state.approved = True
        return self._advance(sid, pending)

    def _input(self, conn, state: _Conn, frame: Frame) -> list[Outgoing]:
        sid = frame.session_id
        pending = self._pending.get(sid)
        if pending is None:
            return [_error(conn, sid, "unknown session")]
        if not state.approved:
            return [_error(conn, sid, "INPUT before APPROVE")]
        try:
            value = canonical.loads(state.channel.open(frame))
        except (FrameError, canonical.EncodingError) as exc:
            return [_error(conn, sid, f"input rejected: {type(exc).__name__}")]
        if any(p == state.party_id for p, _ in pending.inputs):
            return [_error(conn, sid, "duplicate INPUT")]
        pending.inputs.append((state.party_id, value))
        return self._advance(sid, pending)

    def _advance(self, sid: bytes, pending: _Pending) -> list[Outgoing]:
        manifest = pending.manifest
        if pending.session is None:
            if set(pending.approvals) != set(manifest.party_ids):
                return []
            pending.session = Session(
                manifest,
                self._backend_factory(manifest),
                session_id=sid.hex(),
                audit_registry=self.audit,
                clock=self._clock,
            )
        session = pending.session
        submitted = set(manifest.party_ids) - set(session.inputs_pending)
        for party_id, value in pending.inputs:
            if party_id in submitted:
                continue
            try:
                session.submit_input(party_id, value)
            except InputRejected:
                return self._finish(sid, pending, session.outcome)
            except DuplicateSubmission:
                continue
            except SessionError:
                return self._finish(sid, pending, session.outcome)
            submitted.add(party_id)
        if session.inputs_pending:
            return []
        return self._finish(sid, pending, session.run())

    def _finish(self, sid: bytes, pending: _Pending, result: SessionResult) -> list[Outgoing]:
        pending.session.teardown()
        self.results[sid] = result
        self.registry.retire(sid)
        del self._pending[sid]
        out = []
        for party_id, conn in pending.conns.items():
            channel = pending.channels[party_id]
            if result.released:
                body = canonical.dumps(
                    {"outcome": result.outcome, "output": result.output, "rounds_used": result.rounds_used}
                )
                frame = channel.seal(MsgType.RESULT, sid, body)
            else:
                frame = Frame(MsgType.ABORT, sid, result.reason.value.encode())
            out.append(Outgoing(conn, encode_frame(frame), close=True))
            self._conns.pop(conn, None)
        return out


def _ct_eq(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


@dataclass
class PartyOutcome:
    kind: str  # "result" | "abort" | "error"
    output: str | None = None
    reason: str | None = None


class PartyClient:
    """Party side. Validates its own input before anything is sent."""

    def __init__(
        self,
        party_id: str,
        psk: bytes,
        manifest: ComputationManifest,
        approval: PartyApproval,
        value: Any,
        *,
        session_id: bytes | None = None,
        randbytes: Callable[[int], bytes] = os.urandom,
    ):
        spec = manifest.party(party_id).constraint
        self.value = validate_input(spec, value)  # raises ConstraintError locally
        self.party_id = party_id
        self._psk = psk
        self.manifest = manifest
        self.approval = approval
        self.session_id = session_id or session_id_for(manifest)
        self._client_nonce = randbytes(NONCE_SIZE)
        self._channel: SecureChannel | None = None
        self.outcome: PartyOutcome | None = None
        self.sent_inputs = 0

    @property
    def done(self) -> bool:
        return self.outcome is not None

    def start(self) -> list[bytes]:
        pid = self.party_id.encode()
        payload = bytes([len(pid)]) + pid + self._client_nonce + hello_mac(
            self._psk, self.session_id, self.party_id, self._client_nonce
        )
        return [encode_frame(Frame(MsgType.HELLO, self.session_id, payload))]

    def on_frame(self, data: bytes) -> list[bytes]:
        try:
            frame = decode_frame(data)
        except FrameError as exc:
            self.outcome = PartyOutcome("error", reason=f"malformed frame from environment: {exc}")
            return []
        if frame.msg_type is MsgType.HELLO:
            return self._hello_ack(frame)
        if frame.msg_type is MsgType.PROPOSE:
            return self._propose(frame)
        if frame.msg_type is MsgType.RESULT and self._channel is not None:
            try:
                body = canonical.loads(self._channel.open(frame))
            except (FrameError, canonical.EncodingError) as exc:
                self.outcome = PartyOutcome("error", reason=f"result integrity: {exc}")
                return []
            self.outcome = PartyOutcome("result", output=body["output"])
            return []
        if frame.msg_type is MsgType.ABORT:
            self.outcome = PartyOutcome("abort", reason=frame.payload.decode("utf-8", "replace"))
            return []
        if frame.msg_type is MsgType.ERROR:
            self.outcome = PartyOutcome("error", reason=frame.payload.decode("utf-8", "replace"))
            return []
        self.outcome = PartyOutcome("error", reason=f"unexpected {frame.msg_type.name}")
        return []

    def _hello_ack(self, frame: Frame) -> list[bytes]:
        p = frame.payload
        if len(p) != NONCE_SIZE + MAC_SIZE:
            self.outcome = PartyOutcome("error", reason="malformed HELLO ack")
            return []
        server_nonce, mac = p[:NONCE_SIZE], p[NONCE_SIZE:]
        expected = hello_ack_mac(self._psk, self.session_id, self.party_id, self._client_nonce, server_nonce)
        if not _ct_eq(mac, expected):
            self.outcome = PartyOutcome("error", reason="environment failed authentication")
            return []
        key = derive_key(self._psk, self.session_id, self.party_id, self._client_nonce, server_nonce)
        self._channel = SecureChannel(key, is_environment=False)
        return []

    def _propose(self, frame: Frame) -> list[bytes]:
        if self._channel is None:
            self.outcome = PartyOutcome("error", reason="PROPOSE before handshake")
            return []
        try:
            offered = decode(frame.payload)
        except (canonical.EncodingError, ValueError):
            self.outcome = PartyOutcome("error", reason="malformed manifest")
            return []
        if digest(offered) != digest(self.manifest):
            self.outcome = PartyOutcome("error", reason="environment proposed a different manifest")
            return []
        sealed = self._channel.seal(MsgType.INPUT, self.session_id, canonical.dumps(to_wire(self.value)))
        self.sent_inputs += 1
        return [
            encode_frame(Frame(MsgType.APPROVE, self.session_id, self.approval.encode())),
            encode_frame(sealed),
        ]


__all__ = [
    "ConstraintError",
    "EnvironmentCore",
    "Outgoing",
    "PartyClient",
    "PartyOutcome",
    "SessionRegistry",
    "session_id_for",
    "to_wire",
]
