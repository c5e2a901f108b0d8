"""Acceptance criteria 1-8. Each test carries a ``criterion`` marker; conftest prints one PASS/FAIL line per criterion.

Expected values come from independent computations (Python ``re``, integer
comparison, popcount, a raw-matrix edge walk), never from the code under test.
"""

import itertools
import os
import random
import re
import secrets
import time

import numpy as np
import pytest

from helpers import keys_for, mutate, random_manifest, reference
from tcme import templates
from tcme.backends import TOKEN_ENV, ConstantBackend, OracleBackend, RemoteBackend, ScriptedBackend
from tcme.constraints import (
    MAX_NUMBER_CHARS,
    Accepted,
    Enumeration,
    FilterPolicy,
    Number,
    Pattern,
    accepts,
    filter_output,
)
from tcme.experiments import (
    build_verification_prompt,
    gen_graph,
    gen_valid_coloring,
    run_experiment,
)
from tcme.ifc import ALLOW, DENY, AuditLog, AuditRegistry, PartyPrivate, audit_csv, check_flow, default_policy
from tcme.manifest import canonical_encode, decode, digest
from tcme.mpc import (
    build_comparator_circuit,
    build_overlap_circuit,
    cost_report,
    decode as gc_decode,
    evaluate,
    garble,
    int_to_bits,
    linear_fit,
    open_row,
    pointer,
    reports_csv,
)
from tcme.mpc.cost import summary
from tcme.session import run_local
from tcme.transport import simulate_session

# -- 1


@pytest.mark.criterion(1, "manifest determinism")
def test_c1_manifest_determinism(record_property):
    start = time.perf_counter()
    rng = random.Random(1)
    fields = set()
    for _ in range(1000):
        m = random_manifest(rng)
        raw = canonical_encode(m)
        again = decode(raw)
        assert again == m
        assert canonical_encode(again) == raw
        field, m2 = mutate(m, rng)
        fields.add(field)
        assert digest(m2) != digest(m), field
    elapsed = time.perf_counter() - start
    record_property("fields_mutated", len(fields))
    assert len(fields) == 8
    assert elapsed < 10


# -- 2

NUMBER_RE = {
    "integer": re.compile(r"-?[0-9]+", re.ASCII),
    "float": re.compile(r"-?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?", re.ASCII),
}


def reference_accepts(grammar, text: str) -> bool:
    t = text.strip()
    if isinstance(grammar, Enumeration):
        return re.fullmatch("|".join(re.escape(o) for o in sorted(grammar.allowed)), t) is not None
    if isinstance(grammar, Pattern):
        return reference(grammar.regex, t)
    if len(t) > MAX_NUMBER_CHARS or not NUMBER_RE[grammar.kind].fullmatch(t):
        return False
    v = int(t) if grammar.kind == "integer" else float(t)
    if v in (float("inf"), float("-inf")):
        return False
    return (grammar.min is None or v >= grammar.min) and (grammar.max is None or v <= grammar.max)


GRAMMARS = [
    Enumeration({"YES", "NO"}),
    Enumeration({"first", "second"}),
    Pattern("[0-9]{1,3}"),
    Pattern("(?:YES|NO)(?: [a-z]+)?"),
    Pattern("[[:upper:]][[:lower:]]*"),
    Number("float", 0, 5),
    Number("integer", -100, 100),
]

NEAR_MISS = "0123456789.-+eE YESNOyesfirstcd \n\t"


def adversarial_string(rng: random.Random) -> str:
    roll = rng.random()
    if roll < 0.45:
        return "".join(rng.choice(NEAR_MISS) for _ in range(rng.randrange(0, 9)))
    if roll < 0.6:
        return rng.choice(["YES", "NO", "first", "second", "3", "4.5", "YES ok", "Abc", " 42 ", "1e0", "5.0"])
    if roll < 0.8:
        return "".join(chr(rng.randrange(32, 127)) for _ in range(rng.randrange(0, 30)))
    return "".join(chr(rng.randrange(0, 0x3000)) for _ in range(rng.randrange(0, 12)))


@pytest.mark.criterion(2, "constraint safety")
def test_c2_constraint_safety(record_property):
    start = time.perf_counter()
    rng = random.Random(2)
    agreements = released = 0
    for grammar in GRAMMARS:
        # acceptor vs reference engine
        for _ in range(10_000):
            s = adversarial_string(rng)
            assert accepts(grammar, s) == reference_accepts(grammar, s), (grammar, s)
            agreements += 1
        # filter never releases an unaccepted string
        stream = [adversarial_string(rng) for _ in range(10_000)]
        pos = 0
        while pos < len(stream):
            retries = min(rng.randrange(0, 4), len(stream) - pos - 1)
            backend = ScriptedBackend(stream[pos + 1 : pos + 1 + retries])
            outcome = filter_output(grammar, stream[pos], FilterPolicy(retries), lambda: backend.invoke("p"))
            pos += 1 + retries
            if isinstance(outcome, Accepted):
                released += 1
                assert accepts(grammar, outcome.output)
                assert reference_accepts(grammar, outcome.output)
            else:
                assert outcome.attempts == retries + 1 and not hasattr(outcome, "output")
    elapsed = time.perf_counter() - start
    record_property("agreements", agreements)
    record_property("released", released)
    assert released > 0
    assert elapsed < 30


# -- 3


def declared(parties):
    edges = {(PartyPrivate(p), "M") for p in parties} | {("O", PartyPrivate(p)) for p in parties}
    return edges | {("P", "M"), ("M", "O")}


@pytest.mark.criterion(3, "IFC deny-by-default")
def test_c3_ifc_deny_by_default(record_property):
    from tcme.ifc import ConstrainedOutput, ModelInternal, Public

    short = {ModelInternal: "M", ConstrainedOutput: "O", Public: "P"}
    swept = 0
    for parties in [("A", "B"), ("A", "B", "C")]:
        policy = default_policy(parties)
        log = AuditLog("sweep")
        expected = declared(parties)
        for src, dst in itertools.product(policy.labels(), repeat=2):
            key = (short.get(src, src), short.get(dst, dst))
            decision = check_flow(policy, src, dst, log)
            assert decision == (ALLOW if key in expected else DENY), key
            swept += 1
        assert sum(r.decision == ALLOW for r in log.export()) == 2 * len(parties) + 2
    for n in range(2, 9):
        assert len(default_policy(tuple(f"p{i}" for i in range(n))).allowed_edges) == 2 * n + 2
    record_property("pairs_swept", swept)


# -- 4


def _setup(manifest):
    _, registry, approvals = keys_for(manifest)
    return manifest, approvals, registry


def _random_titles(rng) -> str:
    pool = ["graph kernels", "protein folding", "weather downscaling", "sparse attention", "robot grasping"]
    return "\n".join(rng.sample(pool, rng.randrange(1, 3)))


@pytest.mark.criterion(4, "statelessness and leak-freedom")
def test_c4_statelessness(record_property):
    start = time.perf_counter()
    rng = random.Random(4)
    cases = {
        "millionaires": _setup(templates.millionaires(nonce=bytes(16))),
        "overlap": _setup(templates.overlap(5, nonce=bytes(16))),
        "noncompetition": _setup(templates.noncompetition(3, nonce=bytes(16))),
        "audit": _setup(templates.audit(nonce=bytes(16))),
    }

    def inputs_for(name):
        if name == "millionaires":
            return {"A": rng.getrandbits(32), "B": rng.getrandbits(32)}
        if name == "overlap":
            return {p: [rng.getrandbits(1) for _ in range(5)] for p in ("company_a", "company_b")}
        if name == "noncompetition":
            return {f"group{i}": _random_titles(rng) for i in (1, 2, 3)}
        return {"business": "db: " + secrets.token_hex(8), "regulator": "no plaintext secrets"}

    for _ in range(1000):
        name = rng.choice(sorted(cases))
        m, approvals, registry = cases[name]
        inputs = inputs_for(name)
        order = list(inputs.items())
        results = []
        for ordering in (order, order[::-1]):
            backend = ConstantBackend("NO") if name == "audit" else OracleBackend()
            results.append(run_local(m, approvals, backend, dict(ordering), party_registry=registry,
                                     audit_registry=AuditRegistry()))
        assert results[0].output == results[1].output
        assert results[0].outcome == results[1].outcome == "Released"

    m, approvals, registry = cases["audit"]
    aborted = 0
    for i in range(1000):
        sentinel = secrets.token_hex(16)  # 32 bytes
        assert len(sentinel.encode()) == 32
        noisy = [sentinel, f"YES {sentinel}", f"{sentinel}NO", f"NO\n{sentinel}"]
        script = [rng.choice(noisy) for _ in range(m.retry_limit + 1)]
        if i % 4 == 0:
            script[-1] = "NO"  # some sessions recover on the last attempt
        audit = AuditRegistry()
        result = run_local(m, approvals, ScriptedBackend(script), {"business": "x", "regulator": "y"},
                           party_registry=registry, audit_registry=audit)
        aborted += not result.released
        assert sentinel.encode() not in result.encode()
        assert sentinel not in audit_csv(result.audit)
        for sid in audit.session_ids():
            assert sentinel not in audit_csv(audit.export_audit(sid))
    elapsed = time.perf_counter() - start
    record_property("aborted_sentinel_sessions", aborted)
    assert aborted >= 700
    assert elapsed < 60


# -- 5


@pytest.mark.criterion(5, "end-to-end correctness over the simulated network")
def test_c5_end_to_end(record_property):
    start = time.perf_counter()
    rng = random.Random(5)

    m, approvals, registry = _setup(templates.millionaires(nonce=bytes(16)))
    for i in range(1000):
        a, b = rng.getrandbits(32), rng.getrandbits(32)
        if i % 50 == 0:
            b = a
        sim = simulate_session(m, approvals, registry, OracleBackend(), {"A": a, "B": b}, seed=i)
        assert sim.result.output == ("first" if a > b else "second")
        assert {o.output for o in sim.outcomes.values()} == {sim.result.output}

    m, approvals, registry = _setup(templates.overlap(5, nonce=bytes(16)))
    for x, y in itertools.product(range(32), repeat=2):
        va, vb = [(x >> k) & 1 for k in range(5)], [(y >> k) & 1 for k in range(5)]
        sim = simulate_session(m, approvals, registry, OracleBackend(), {"company_a": va, "company_b": vb}, seed=x * 32 + y)
        assert float(sim.result.output) == sum(p * q for p, q in zip(va, vb))

    result = run_experiment(OracleBackend(), trials=1000, seed=5, via_network=True)
    assert result.matrix.accuracy == 1.0 and result.aborted == 0
    elapsed = time.perf_counter() - start
    record_property("coloring_tp_tn", f"{result.matrix.tp}/{result.matrix.tn}")
    assert elapsed < 120


# -- 6


def _trace(garbled, a_labels, b_labels):
    wires = list(a_labels) + list(b_labels)
    for index, (gate, table) in enumerate(zip(garbled.circuit.gates, garbled.tables)):
        x, y = gate.inputs2
        wires.append(open_row(table, index, wires[x], wires[y], 2 * pointer(wires[x]) + pointer(wires[y])))
    return wires


@pytest.mark.criterion(6, "garbled-circuit baseline equivalence")
def test_c6_mpc_equivalence(record_property):
    start = time.perf_counter()

    overlap = build_overlap_circuit(5)
    g, labels, dmap = garble(overlap, seed=6)
    for x, y in itertools.product(range(32), repeat=2):
        a, b = int_to_bits(x, 5), int_to_bits(y, 5)
        out = gc_decode(evaluate(g, labels.select_a(a), [p[v] for p, v in zip(labels.b, b)]), dmap)
        assert out == overlap.evaluate(a, b)
        assert sum(bit << k for k, bit in enumerate(out)) == bin(x & y).count("1")

    comparator = build_comparator_circuit(8)
    for x in range(256):
        g, labels, dmap = garble(comparator, seed=x)
        a_labels = labels.select_a(int_to_bits(x, 8))
        for y in range(256):
            b_labels = [p[v] for p, v in zip(labels.b, int_to_bits(y, 8))]
            assert gc_decode(evaluate(g, a_labels, b_labels), dmap) == [int(x > y)]

    rng = random.Random(6)
    sampled = 0
    while sampled < 10_000:
        c = rng.choice([build_overlap_circuit(rng.randrange(2, 40)), build_comparator_circuit(rng.choice([8, 16, 32]))])
        g, labels, _ = garble(c, seed=rng.getrandbits(32))
        a = [rng.getrandbits(1) for _ in range(c.inputs_a)]
        b = [rng.getrandbits(1) for _ in range(c.inputs_b)]
        wires = _trace(g, labels.select_a(a), [p[v] for p, v in zip(labels.b, b)])
        for index in rng.sample(range(len(c.gates)), min(len(c.gates), 50)):
            x, y = c.gates[index].inputs2
            opened = sum(open_row(g.tables[index], index, wires[x], wires[y], r) is not None for r in range(4))
            assert opened == 1
            sampled += 1
    elapsed = time.perf_counter() - start
    record_property("gates_sampled", sampled)
    assert elapsed < 300


# -- 7


@pytest.mark.criterion(7, "cost scaling")
def test_c7_cost_scaling(record_property, tmp_path):
    reports = cost_report([8, 32, 128, 512, 1024])
    path = tmp_path / "gc_cost.csv"
    path.write_text(reports_csv(reports))
    assert len(path.read_text().splitlines()) == 6
    slope, _, r2 = linear_fit([r.gate_count for r in reports], [r.garbled_bytes for r in reports])
    print(summary(reports))
    frames = {r.tcme_frames for r in reports}
    record_property("r2", f"{r2:.6f}")
    record_property("bytes_per_gate", f"{slope:.1f}")
    record_property("tcme_frames", sorted(frames))
    record_property("tcme_bytes", f"{reports[0].tcme_bytes}..{reports[-1].tcme_bytes}")
    assert r2 > 0.99
    assert len(frames) == 1
    assert {r.rounds for r in reports} == {2}


# -- 8


@pytest.mark.criterion(8, "experiment harness fidelity")
def test_c8_harness_fidelity(record_property):
    rng = np.random.default_rng(8)
    densities = []
    for _ in range(1000):
        g = gen_graph(15, 0.1, rng)
        edges = sum(g.adjacency[i][j] for i in range(15) for j in range(i + 1, 15))
        densities.append(edges / (15 * 14 / 2))
    mean = float(np.mean(densities))
    record_property("mean_density", f"{mean:.4f}")
    assert 0.08 <= mean <= 0.12

    graph = gen_graph(8, 0.3, rng)
    coloring = gen_valid_coloring(graph, rng) or {u: 1 for u in range(8)}
    prompt = build_verification_prompt(graph, coloring)
    assert "Only produce YES if coloring is correct" in prompt
    assert "Do not produce or show code" in prompt


REMOTE_ENDPOINT_ENV = "TCME_REMOTE_ENDPOINT"


@pytest.mark.criterion("8 (optional remote run)", "precision > recall against a production model")
def test_c8_optional_remote_run(record_property):
    if not (os.environ.get(TOKEN_ENV) and os.environ.get(REMOTE_ENDPOINT_ENV)):
        pytest.skip(f"set {TOKEN_ENV} and {REMOTE_ENDPOINT_ENV} to run against a remote model")
    model = os.environ.get("TCME_REMOTE_MODEL", "gemini-1.5-flash")
    provider = os.environ.get("TCME_REMOTE_PROVIDER", "openai")
    trials = int(os.environ.get("TCME_REMOTE_TRIALS", "200"))
    result = run_experiment(
        lambda: RemoteBackend(os.environ[REMOTE_ENDPOINT_ENV], model, provider=provider),
        trials=trials, seed=0, workers=4, rps=2.0,
    )
    m = result.matrix
    record_property("accuracy", m.accuracy)
    record_property("precision", m.precision)
    record_property("recall", m.recall)
    record_property("aborted", result.aborted)
    print("published reference: accuracy 35%, precision 83%, recall 14% (model and valid/invalid mix differ)")
    print(m.summary())
    assert m.precision is not None and m.recall is not None
    assert m.precision > m.recall
