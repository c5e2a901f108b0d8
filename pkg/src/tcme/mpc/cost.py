"""Two-party protocol runner and cost accounting."""

from __future__ import annotations

import csv
import io
import random
from dataclasses import asdict, dataclass

import numpy as np

from .circuit import BooleanCircuit, build_overlap_circuit
from .garble import CIPHERTEXT_SIZE, ROWS, decode, evaluate, garble
from .ot import MESSAGES_PER_OT, ot_choose

# garbler sends tables + its input labels + decode map, all OTs run in parallel
GC_ROUNDS = 2


def run_two_party(circuit: BooleanCircuit, a_bits, b_bits, seed: int | None = None) -> list[int]:
    """Garbler holds ``a_bits``, evaluator holds ``b_bits``; returns the decoded output."""
    garbled, labels, decode_map = garble(circuit, seed)
    a_labels = labels.select_a(a_bits)
    rng = random.Random(None if seed is None else seed + 1)
    b_labels = [ot_choose(pair, int(bit), rng)[0] for pair, bit in zip(labels.b, b_bits)]
    return decode(evaluate(garbled, a_labels, b_labels), decode_map)


@dataclass(frozen=True)
class CostReport:
    n: int
    gate_count: int
    garbled_bytes: int
    ot_messages: int
    rounds: int
    tcme_frames: int | None = None
    tcme_bytes: int | None = None


CSV_FIELDS = ["n", "gate_count", "garbled_bytes", "ot_messages", "rounds", "tcme_frames", "tcme_bytes"]


def circuit_cost(n: int, circuit: BooleanCircuit) -> CostReport:
    garbled, _, decode_map = garble(circuit, seed=0)
    size = len(garbled.to_bytes()) + decode_map.size
    assert size == len(circuit.gates) * ROWS * CIPHERTEXT_SIZE + decode_map.size
    return CostReport(
        n=n,
        gate_count=len(circuit.gates),
        garbled_bytes=size,
        ot_messages=MESSAGES_PER_OT * circuit.inputs_b,
        rounds=GC_ROUNDS,
    )


def tcme_overlap_cost(n: int, seed: int = 0) -> tuple[int, int]:
    """Frames and wire bytes of one overlap session of size ``n`` on the simulated network."""
    from .. import templates
    from ..backends import OracleBackend
    from ..manifest import approve, generate_signing_key
    from ..transport.sim import simulate_session

    manifest = templates.overlap(n, nonce=bytes(16))
    keys = {p: generate_signing_key() for p in manifest.party_ids}
    approvals = [approve(manifest, p, k) for p, k in keys.items()]
    rng = np.random.default_rng(seed)
    inputs = {p: rng.integers(0, 2, n).tolist() for p in manifest.party_ids}
    sim = simulate_session(
        manifest, approvals, {p: k.public_key() for p, k in keys.items()}, OracleBackend(), inputs, seed=seed
    )
    if sim.result is None or not sim.result.released:
        raise RuntimeError("overlap session did not release a result")
    return sim.frame_total, sum(len(ev.data) for ev in sim.wire_log)


def cost_report(sizes, with_tcme: bool = True) -> list[CostReport]:
    rows = []
    for n in sizes:
        report = circuit_cost(n, build_overlap_circuit(n))
        if with_tcme:
            frames, nbytes = tcme_overlap_cost(n)
            report = CostReport(**{**asdict(report), "tcme_frames": frames, "tcme_bytes": nbytes})
        rows.append(report)
    return rows


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line; returns (slope, intercept, R^2)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot else 1.0
    return float(slope), float(intercept), r2


def reports_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})
    return buf.getvalue()


def summary(reports) -> str:
    slope, intercept, r2 = linear_fit([r.gate_count for r in reports], [r.garbled_bytes for r in reports])
    lines = [f"{'n':>6} {'gates':>7} {'GC bytes':>10} {'OT msgs':>8} {'rounds':>6} {'TCME frames':>11}"]
    for r in reports:
        lines.append(
            f"{r.n:>6} {r.gate_count:>7} {r.garbled_bytes:>10} {r.ot_messages:>8} {r.rounds:>6} "
            f"{'' if r.tcme_frames is None else r.tcme_frames:>11}"
        )
    lines.append(f"garbled_bytes ~ {slope:.1f} * gates + {intercept:.1f}  (R^2 = {r2:.6f})")
    return "\n".join(lines)
