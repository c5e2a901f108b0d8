"""Single-use execution sessions.

Lifecycle: ``Committed -> Collecting -> Invoking -> Enforcing -> Released | Aborted``.
All data movement goes through the session's :class:`~tcme.ifc.FlowGuard`.
Nothing a session learns outlives it: :meth:`Session.teardown` overwrites the
inputs, the rendered prompt and raw model outputs.
"""

from __future__ import annotations

import enum
import os
import threading
import time
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from . import canonical
from .backends import DEFAULT_PARAMS, InvocationParams, invoke
from .constraints import ConstraintError, FilterPolicy, Rejected, filter_output, validate_input
from .ifc import (
    AUDIT,
    AuditRecord,
    AuditRegistry,
    ConstrainedOutput,
    FlowDenied,
    FlowGuard,
    FlowPolicy,
    ModelInternal,
    PartyPrivate,
    Public,
    audit_csv,
)
from .manifest import ComputationManifest, PartyApproval, digest, verify_approvals


class SessionError(Exception):
    pass


class ApprovalMissing(SessionError):
    pass


class PhaseError(SessionError):
    """Operation not permitted in the current phase (includes reuse after completion)."""


class SessionClosed(SessionError):
    """The session was torn down; nothing is readable any more."""


class UnknownParty(SessionError):
    pass


class DuplicateSubmission(SessionError):
    pass


class InputRejected(SessionError):
    """Validation failed; the whole session has been aborted with InvalidInput."""


class Phase(enum.Enum):
    COMMITTED = "Committed"
    COLLECTING = "Collecting"
    INVOKING = "Invoking"
    ENFORCING = "Enforcing"
    RELEASED = "Released"
    ABORTED = "Aborted"


class AbortReason(enum.Enum):
    INVALID_INPUT = "InvalidInput"
    BACKEND_FAILURE = "BackendFailure"
    OUTPUT_REJECTED = "OutputRejected"
    FLOW_VIOLATION = "FlowViolation"


@dataclass(frozen=True)
class SessionResult:
    outcome: str
    output: str | None
    reason: AbortReason | None
    rounds_used: int
    audit: tuple[AuditRecord, ...]

    @property
    def released(self) -> bool:
        return self.outcome == Phase.RELEASED.value

    def to_tree(self):
        return canonical.tagged(
            "SessionResult",
            outcome=self.outcome,
            output=self.output,
            reason=self.reason.value if self.reason else None,
            rounds_used=self.rounds_used,
            audit_csv=audit_csv(self.audit),
        )

    def encode(self) -> bytes:
        return canonical.dumps(self.to_tree())


@dataclass(frozen=True)
class Ack:
    party_id: str


_zeroize_lock = threading.Lock()
_zeroizations = 0


def zeroization_count() -> int:
    return _zeroizations


def _bump_zeroizations() -> None:
    global _zeroizations
    with _zeroize_lock:
        _zeroizations += 1


def _wipe(buf: bytearray) -> None:
    buf[:] = bytes(len(buf))


class Session:
    def __init__(
        self,
        manifest: ComputationManifest,
        backend,
        policy: FlowPolicy | None = None,
        *,
        session_id: str | None = None,
        audit_registry: AuditRegistry | None = None,
        clock=time.time,
        params: InvocationParams = DEFAULT_PARAMS,
    ):
        if getattr(backend, "kind", None) != manifest.model.backend_kind:
            raise SessionError(
                f"backend kind {getattr(backend, 'kind', None)!r} does not match manifest "
                f"{manifest.model.backend_kind!r}"
            )
        policy = manifest.flow_policy if policy is None else policy
        if not policy.allowed_edges <= manifest.flow_policy.allowed_edges:
            raise SessionError("session policy may only narrow the approved flow policy")
        self.manifest = manifest
        self.manifest_digest = digest(manifest)
        self.session_id = session_id or os.urandom(16).hex()
        self.phase = Phase.COMMITTED
        self._backend = backend
        self._params = params
        self._registry = audit_registry or AUDIT
        self._audit = self._registry.open(self.session_id, clock)
        self._guard = FlowGuard(policy, self._audit)
        self._inputs: dict[str, Any] = {}
        self._scratch: list[bytearray] = []
        self._output: str | None = None
        self._outcome: SessionResult | None = None
        self._torn_down = False
        self.zeroizations = 0

    # -- helpers

    def _ensure_open(self) -> None:
        if self._torn_down:
            raise SessionClosed(f"session {self.session_id} was torn down")

    def _keep(self, text: str) -> None:
        self._scratch.append(bytearray(text.encode("utf-8")))

    def _finish(self, phase: Phase, rounds: int, output: str | None = None, reason: AbortReason | None = None):
        self.phase = phase
        self._output = output
        self._outcome = SessionResult(phase.value, output, reason, rounds, tuple(self._audit.export()))
        return self._outcome

    def _abort(self, reason: AbortReason, rounds: int = 0) -> SessionResult:
        return self._finish(Phase.ABORTED, rounds, reason=reason)

    # -- public surface

    @property
    def audit(self) -> list[AuditRecord]:
        return self._audit.export()

    @property
    def inputs_pending(self) -> list[str]:
        return [p for p in self.manifest.party_ids if p not in self._inputs]

    @property
    def outcome(self) -> SessionResult | None:
        return self._outcome

    @property
    def result(self) -> str:
        self._ensure_open()
        if self.phase is not Phase.RELEASED:
            raise PhaseError(f"result is only readable once Released (phase is {self.phase.value})")
        return self._output

    def submit_input(self, party_id: str, value: Any) -> Ack:
        self._ensure_open()
        if self.phase not in (Phase.COMMITTED, Phase.COLLECTING):
            raise PhaseError(f"inputs are closed (phase is {self.phase.value})")
        if party_id not in self.manifest.party_ids:
            raise UnknownParty(f"party {party_id!r} is not part of this manifest")
        if party_id in self._inputs:
            raise DuplicateSubmission(f"party {party_id!r} already submitted")
        spec = self.manifest.party(party_id).constraint
        try:
            normalized = validate_input(spec, value)
        except ConstraintError as exc:
            self._abort(AbortReason.INVALID_INPUT)
            raise InputRejected(f"input from {party_id!r} rejected: {exc}") from None
        rendered = spec.render(normalized)
        self._keep(rendered)
        try:
            self._guard.transfer(PartyPrivate(party_id), ModelInternal, rendered)
        except FlowDenied:
            self._abort(AbortReason.FLOW_VIOLATION)
            raise
        self._inputs[party_id] = normalized
        self.phase = Phase.COLLECTING
        return Ack(party_id)

    def render_prompt(self) -> str:
        values = {}
        for p in self.manifest.party_inputs:
            values[p.placeholder] = p.constraint.render(self._inputs[p.party_id])
        return self.manifest.prompt.render(values)

    def run(self) -> SessionResult:
        self._ensure_open()
        if self.phase is not Phase.COLLECTING or self.inputs_pending:
            raise PhaseError(
                f"run needs every input collected (phase {self.phase.value}, pending {self.inputs_pending})"
            )
        self.phase = Phase.INVOKING
        prompt = self.render_prompt()
        self._keep(prompt)
        rounds = 0

        def call_model() -> str:
            nonlocal rounds
            self._guard.transfer(Public, ModelInternal, self.manifest.prompt.template)
            rounds += 1
            raw = invoke(self._backend, prompt, self._params)
            self._keep(raw)
            return raw

        try:
            first = call_model()
            self.phase = Phase.ENFORCING
            policy = FilterPolicy(max_retries=self.manifest.retry_limit)
            verdict = filter_output(self.manifest.output, first, policy, call_model)
        except FlowDenied:
            return self._abort(AbortReason.FLOW_VIOLATION, rounds)
        except Exception:
            # any backend failure; its message may quote model text, so it is dropped
            return self._abort(AbortReason.BACKEND_FAILURE, rounds)
        if isinstance(verdict, Rejected):
            return self._abort(AbortReason.OUTPUT_REJECTED, rounds)
        output = verdict.output
        try:
            self._guard.transfer(ModelInternal, ConstrainedOutput, output)
            for party_id in self.manifest.party_ids:
                self._guard.transfer(ConstrainedOutput, PartyPrivate(party_id), output)
        except FlowDenied:
            return self._abort(AbortReason.FLOW_VIOLATION, rounds)
        return self._finish(Phase.RELEASED, rounds, output=output)

    def teardown(self) -> None:
        """Zeroize everything derived from private inputs. Idempotent."""
        if self._torn_down:
            return
        for buf in self._scratch:
            _wipe(buf)
        self._scratch.clear()
        self._inputs.clear()
        self._output = None
        self._backend = None
        self._torn_down = True
        self.zeroizations += 1
        _bump_zeroizations()

    @property
    def closed(self) -> bool:
        return self._torn_down

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.teardown()


def new_session(
    manifest: ComputationManifest,
    approvals: Sequence[PartyApproval],
    backend,
    policy: FlowPolicy | None = None,
    *,
    party_registry: Mapping[str, object],
    **kwargs,
) -> Session:
    """Open a session once every party has approved this exact manifest."""
    if not verify_approvals(manifest, approvals, party_registry):
        raise ApprovalMissing("not every party has a valid approval for this manifest")
    return Session(manifest, backend, policy, **kwargs)


def submit_input(session: Session, party_id: str, value: Any) -> Ack:
    return session.submit_input(party_id, value)


def run(session: Session) -> SessionResult:
    return session.run()


def teardown(session: Session) -> None:
    session.teardown()


def run_local(
    manifest: ComputationManifest,
    approvals: Sequence[PartyApproval],
    backend,
    inputs: Mapping[str, Any],
    *,
    party_registry: Mapping[str, object],
    **kwargs,
) -> SessionResult:
    """Convenience: one full session in-process, torn down afterwards."""
    with new_session(manifest, approvals, backend, party_registry=party_registry, **kwargs) as session:
        for party_id, value in inputs.items():
            try:
                session.submit_input(party_id, value)
            except (InputRejected, FlowDenied):
                return session.outcome
        return session.run()
