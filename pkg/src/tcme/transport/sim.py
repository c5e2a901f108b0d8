"""Deterministic in-process network for protocol tests.

Each party has two FIFO links (to and from the environment). At every step a
seeded RNG picks one non-empty link and delivers its head frame, so a seed
fixes the interleaving exactly. Delivery is loss-free. Every frame crosses
the same codec as the TCP transport and is recorded in ``wire_log`` as a
passive observer would see it.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from ..ifc import AuditRecord
from ..manifest import ComputationManifest, PartyApproval
from ..session import SessionResult
from .frames import MsgType
from .protocol import EnvironmentCore, PartyClient, PartyOutcome, SessionRegistry

ENV = "env"


@dataclass
class WireEvent:
    src: str
    dst: str
    data: bytes

    @property
    def msg_type(self) -> MsgType:
        return MsgType(self.data[4])


@dataclass
class SimResult:
    result: SessionResult | None
    outcomes: dict[str, PartyOutcome]
    wire_log: list[WireEvent] = field(default_factory=list)
    audit: list[AuditRecord] = field(default_factory=list)

    def frame_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for ev in self.wire_log:
            counts[ev.msg_type.name] = counts.get(ev.msg_type.name, 0) + 1
        return counts

    @property
    def frame_total(self) -> int:
        return len(self.wire_log)


class SimNetwork:
    def __init__(self, environment: EnvironmentCore, parties: Sequence[PartyClient], seed: int = 0):
        self.env = environment
        self.parties = {p.party_id: p for p in parties}
        self.rng = random.Random(seed)
        self.links: dict[tuple[str, str], deque[bytes]] = {}
        for pid in self.parties:
            self.links[(pid, ENV)] = deque()
            self.links[(ENV, pid)] = deque()
        self.closed: set[str] = set()
        self.wire_log: list[WireEvent] = []

    def _send(self, src: str, dst: str, data: bytes) -> None:
        self.links[(src, dst)].append(data)

    def run(self, max_steps: int = 100_000) -> None:
        for pid, party in self.parties.items():
            for data in party.start():
                self._send(pid, ENV, data)
        for _ in range(max_steps):
            ready = sorted(k for k, q in self.links.items() if q)
            if not ready:
                return
            src, dst = ready[self.rng.randrange(len(ready))]
            data = self.links[(src, dst)].popleft()
            self.wire_log.append(WireEvent(src, dst, data))
            if dst == ENV:
                if src in self.closed:
                    continue
                for out in self.env.on_frame(src, data):
                    self._send(ENV, out.conn, out.data)
                    if out.close:
                        self.closed.add(out.conn)
                        self.env.connection_lost(out.conn)
            else:
                party = self.parties[dst]
                if party.done:
                    continue
                for reply in party.on_frame(data):
                    self._send(dst, ENV, reply)
        raise RuntimeError("simulation did not quiesce")


def sim_network(
    parties: Sequence[PartyClient], environment: EnvironmentCore, seed: int = 0
) -> SimNetwork:
    return SimNetwork(environment, parties, seed)


def simulate_session(
    manifest: ComputationManifest,
    approvals: Sequence[PartyApproval],
    public_keys: Mapping[str, Any],
    backend,
    inputs: Mapping[str, Any],
    *,
    seed: int = 0,
    psks: Mapping[str, bytes] | None = None,
) -> SimResult:
    """One complete session over the simulated network; fully determined by ``seed``."""
    rng = random.Random(seed)
    if psks is None:
        psks = {pid: rng.randbytes(32) for pid in manifest.party_ids}
    registry = SessionRegistry()
    sid = registry.register(manifest)
    env = EnvironmentCore(registry, psks, public_keys, lambda m: backend, randbytes=rng.randbytes)
    by_party = {a.party_id: a for a in approvals}
    clients = [
        PartyClient(pid, psks[pid], manifest, by_party[pid], inputs[pid], randbytes=rng.randbytes)
        for pid in manifest.party_ids
    ]
    net = SimNetwork(env, clients, seed=rng.randrange(2**32))
    net.run()
    result = env.results.get(sid)
    audit = env.audit.export_audit(sid.hex()) if result is not None else []
    return SimResult(result, {c.party_id: c.outcome for c in clients}, net.wire_log, audit)
