import csv
import io
import itertools
import random

import pytest

from tcme.mpc import (
    CIPHERTEXT_SIZE,
    BooleanCircuit,
    CircuitError,
    CorruptionError,
    CostReport,
    Gate,
    OTError,
    OTReceiver,
    OTSender,
    bits_to_int,
    build_comparator_circuit,
    build_overlap_circuit,
    cost_report,
    decode,
    evaluate,
    garble,
    int_to_bits,
    linear_fit,
    open_row,
    ot_choose,
    pointer,
    reports_csv,
    run_two_party,
)
from tcme.mpc.cost import GC_ROUNDS, circuit_cost, summary
from tcme.mpc.garble import DECODE_ENTRY, ROWS
from tcme.mpc.ot import P


def vec(x: int, n: int) -> list[int]:
    return [(x >> i) & 1 for i in range(n)]


# -- circuits in the clear


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 1, 0, 0, 0], [0, 1, 1, 0, 0], 1), ([1, 1, 0, 0, 0], [1, 1, 0, 0, 0], 2), ([0] * 5, [0] * 5, 0),
     ([1] * 5, [1] * 5, 5)],
)
def test_overlap_plaintext_examples(a, b, expected):
    c = build_overlap_circuit(5)
    assert c.count("AND") >= 5
    assert bits_to_int(c.evaluate(a, b)) == expected


def test_overlap_exhaustive_small():
    for n in (1, 2, 3, 4):
        c = build_overlap_circuit(n)
        for x, y in itertools.product(range(2**n), repeat=2):
            assert bits_to_int(c.evaluate(vec(x, n), vec(y, n))) == bin(x & y).count("1")


def test_overlap_count_bits():
    assert len(build_overlap_circuit(5).output_wires) == 3
    c = build_overlap_circuit(5, count_bits=8)
    assert len(c.output_wires) == 8
    assert bits_to_int(c.evaluate([1] * 5, [1] * 5)) == 5
    with pytest.raises(CircuitError, match="count_bits"):
        build_overlap_circuit(8, count_bits=3)
    with pytest.raises(CircuitError):
        build_overlap_circuit(0)


def test_comparator_examples():
    c = build_comparator_circuit(8)
    assert c.evaluate(int_to_bits(7, 8), int_to_bits(2, 8)) == [1]
    assert c.evaluate(int_to_bits(9, 8), int_to_bits(9, 8)) == [0]
    assert c.evaluate(int_to_bits(2, 8), int_to_bits(7, 8)) == [0]
    with pytest.raises(CircuitError):
        build_comparator_circuit(12)


def test_comparator_32_bit_plaintext():
    rng = random.Random(2)
    c = build_comparator_circuit(32)
    for _ in range(1000):
        a, b = rng.getrandbits(32), rng.getrandbits(32)
        if rng.random() < 0.1:
            b = a
        assert c.evaluate(int_to_bits(a, 32), int_to_bits(b, 32)) == [int(a > b)]


def test_dump_parse_round_trip():
    for c in [build_overlap_circuit(7), build_comparator_circuit(8)]:
        text = c.dump()
        assert all(line.split()[0] in {"INPUTS", "GATE", "OUTPUTS"} for line in text.splitlines())
        again = BooleanCircuit.parse(text)
        assert again == c
        assert again.dump() == text


def test_not_gate_and_parse():
    c = BooleanCircuit.parse("INPUTS 1 1\nGATE NOT 0 0 2\nGATE AND 2 1 3\nOUTPUTS 3\n")
    assert [c.evaluate([a], [b])[0] for a, b in itertools.product((0, 1), repeat=2)] == [0, 1, 0, 0]
    assert c.gates[0] == Gate("NOT", (0,), 2)


@pytest.mark.parametrize(
    "text",
    [
        "GATE AND 0 1 2\nOUTPUTS 2",  # no INPUTS
        "INPUTS 1 1\nGATE AND 0 5 2\nOUTPUTS 2",  # undefined wire
        "INPUTS 1 1\nGATE AND 0 1 7\nOUTPUTS 7",  # non-dense output
        "INPUTS 1 1\nGATE NAND 0 1 2\nOUTPUTS 2",
        "INPUTS 1 1\nGATE NOT 0 1 2\nOUTPUTS 2",
        "INPUTS 1 1\nGATE AND 0 1\nOUTPUTS 2",
        "INPUTS 1 1\nBOGUS\n",
        "INPUTS 1 1\nOUTPUTS 9",
    ],
)
def test_parse_rejects(text):
    with pytest.raises(CircuitError):
        BooleanCircuit.parse(text)


def test_wrong_input_width():
    with pytest.raises(CircuitError):
        build_comparator_circuit(8).evaluate([0] * 7, [0] * 8)


# -- garbling


def test_garble_is_deterministic_under_seed():
    c = build_comparator_circuit(8)
    g1, l1, d1 = garble(c, seed=9)
    g2, l2, d2 = garble(c, seed=9)
    assert g1.to_bytes() == g2.to_bytes() and l1 == l2 and d1 == d2
    g3, l3, _ = garble(c, seed=10)
    assert g3.to_bytes() != g1.to_bytes()
    assert l3.a != l1.a


def test_label_pairs_distinct_with_opposite_pointers():
    _, labels, _ = garble(build_overlap_circuit(6), seed=1)
    for l0, l1 in labels.a + labels.b:
        assert l0 != l1 and len(l0) == len(l1) == 17
        assert pointer(l0) != pointer(l1)


def test_sizes():
    c = build_overlap_circuit(5)
    g, _, d = garble(c, seed=0)
    assert g.size == len(g.to_bytes()) == len(c.gates) * ROWS * CIPHERTEXT_SIZE
    assert CIPHERTEXT_SIZE == 33
    assert d.size == len(c.output_wires) * 2 * DECODE_ENTRY


def trace_labels(garbled, a_labels, b_labels):
    """Re-run evaluation keeping every wire label (the test plays the evaluator)."""
    wires = list(a_labels) + list(b_labels)
    for index, (gate, table) in enumerate(zip(garbled.circuit.gates, garbled.tables)):
        x, y = gate.inputs2
        wires.append(open_row(table, index, wires[x], wires[y], 2 * pointer(wires[x]) + pointer(wires[y])))
    return wires


def test_exactly_one_row_opens():
    rng = random.Random(4)
    checked = 0
    for trial in range(20):
        c = build_comparator_circuit(8) if trial % 2 else build_overlap_circuit(9)
        g, labels, _ = garble(c, seed=trial)
        a = [rng.getrandbits(1) for _ in range(c.inputs_a)]
        b = [rng.getrandbits(1) for _ in range(c.inputs_b)]
        wires = trace_labels(g, labels.select_a(a), [p[x] for p, x in zip(labels.b, b)])
        for index, gate in enumerate(c.gates):
            x, y = gate.inputs2
            opened = [open_row(g.tables[index], index, wires[x], wires[y], r) for r in range(ROWS)]
            assert sum(o is not None for o in opened) == 1
            checked += 1
    assert checked > 500


def test_garbled_overlap_exhaustive_n5():
    c = build_overlap_circuit(5)
    g, labels, d = garble(c, seed=123)
    for x, y in itertools.product(range(32), repeat=2):
        a, b = vec(x, 5), vec(y, 5)
        out = decode(evaluate(g, labels.select_a(a), [p[v] for p, v in zip(labels.b, b)]), d)
        assert bits_to_int(out) == bin(x & y).count("1")


def test_garbled_comparator_32_bit():
    c = build_comparator_circuit(32)
    rng = random.Random(32)
    g, labels, d = garble(c, seed=5)
    for _ in range(1000):
        x, y = rng.getrandbits(32), rng.getrandbits(32)
        out = decode(evaluate(g, labels.select_a(int_to_bits(x, 32)), [p[v] for p, v in zip(labels.b, int_to_bits(y, 32))]), d)
        assert out == [int(x > y)]


def test_mutations_never_give_a_silent_wrong_answer():
    c = build_overlap_circuit(5)
    rng = random.Random(6)
    a, b = [1, 1, 0, 1, 0], [1, 0, 0, 1, 1]
    errors = 0
    for seed in range(300):
        g, labels, d = garble(c, seed=seed)
        tables = list(g.tables)
        i = rng.randrange(len(tables))
        t = bytearray(tables[i])
        t[rng.randrange(len(t))] ^= 1 << rng.randrange(8)
        tables[i] = bytes(t)
        bad = type(g)(g.circuit, tuple(tables))
        try:
            out = decode(evaluate(bad, labels.select_a(a), [p[v] for p, v in zip(labels.b, b)]), d)
        except CorruptionError:
            errors += 1
            continue
        assert bits_to_int(out) == 2  # the flipped row was not on the evaluation path
    assert errors > 0


def test_corrupting_the_opened_row_is_detected():
    c = build_comparator_circuit(8)
    g, labels, d = garble(c, seed=1)
    a, b = int_to_bits(200, 8), int_to_bits(100, 8)
    a_l, b_l = labels.select_a(a), [p[v] for p, v in zip(labels.b, b)]
    wires = trace_labels(g, a_l, b_l)
    x, y = c.gates[0].inputs2
    row = 2 * pointer(wires[x]) + pointer(wires[y])
    t = bytearray(g.tables[0])
    t[row * CIPHERTEXT_SIZE] ^= 0x80
    bad = type(g)(c, (bytes(t),) + g.tables[1:])
    with pytest.raises(CorruptionError):
        evaluate(bad, a_l, b_l)


def test_foreign_output_label_is_detected():
    c = build_comparator_circuit(8)
    _, _, d = garble(c, seed=1)
    with pytest.raises(CorruptionError):
        decode([bytes(17)], d)


def test_evaluate_needs_one_label_per_wire():
    c = build_comparator_circuit(8)
    g, labels, _ = garble(c, seed=1)
    with pytest.raises(ValueError):
        evaluate(g, labels.select_a([0] * 8), [])


# -- oblivious transfer


def test_ot_choice_zero_and_one():
    rng = random.Random(0)
    pair = (b"label-zero-000000", b"label-one-1111111")
    assert ot_choose(pair, 0, rng)[0] == pair[0]
    assert ot_choose(pair, 1, rng)[0] == pair[1]


def test_ot_transcript_elements_are_group_members():
    rng = random.Random(1)
    for choice in (0, 1):
        _, tr = ot_choose((b"a" * 17, b"b" * 17), choice, rng)
        for x in (tr.c, tr.pk0, tr.transfer.r0, tr.transfer.r1):
            assert 1 < x < P - 1 and pow(x, (P - 1) // 2, P) == 1


def test_ot_rejects_bad_elements():
    sender = OTSender(b"a", b"b")
    sender.setup()
    for bad in [0, 1, P - 1, P, P + 5]:
        with pytest.raises(OTError):
            sender.transfer(bad)
    non_residue = next(x for x in range(2, 100) if pow(x, (P - 1) // 2, P) != 1)
    with pytest.raises(OTError):
        OTReceiver(0).respond(non_residue)


def test_ot_protocol_misuse():
    with pytest.raises(OTError):
        OTSender(b"a", b"bb")
    with pytest.raises(OTError):
        OTSender(b"a" * 33, b"b" * 33)
    with pytest.raises(OTError):
        OTSender(b"a", b"b").transfer(4)
    with pytest.raises(OTError):
        OTReceiver(2)
    r = OTReceiver(1)
    with pytest.raises(OTError):
        r.receive(None)


def test_ot_labels_evaluate_correctly_end_to_end():
    rng = random.Random(7)
    c = build_overlap_circuit(5)
    for trial in range(200):
        x, y = rng.getrandbits(5), rng.getrandbits(5)
        out = run_two_party(c, vec(x, 5), vec(y, 5), seed=trial)
        assert bits_to_int(out) == bin(x & y).count("1")


def test_comparator_two_party():
    c = build_comparator_circuit(8)
    for a, b in [(7, 2), (2, 7), (5, 5), (255, 0)]:
        assert run_two_party(c, int_to_bits(a, 8), int_to_bits(b, 8), seed=a) == [int(a > b)]


# -- cost accounting


@pytest.fixture(scope="module")
def reports():
    return cost_report([8, 32, 128], with_tcme=True)


def test_cost_report_invariant(reports):
    for r in reports:
        c = build_overlap_circuit(r.n)
        assert r.gate_count == len(c.gates)
        assert r.garbled_bytes == r.gate_count * 4 * 33 + len(c.output_wires) * 2 * DECODE_ENTRY
        assert r.ot_messages == 3 * r.n
        assert r.rounds == GC_ROUNDS == 2


def test_tcme_frames_constant(reports):
    assert {r.tcme_frames for r in reports} == {12}
    assert reports[0].tcme_bytes <= reports[-1].tcme_bytes


def test_linear_fit_known_line():
    slope, intercept, r2 = linear_fit([1, 2, 3, 4], [5, 7, 9, 11])
    assert slope == pytest.approx(2) and intercept == pytest.approx(3) and r2 == pytest.approx(1)
    assert linear_fit([1, 2, 3], [1, 3, 2])[2] == pytest.approx(0.25)


def test_csv_and_summary(reports):
    rows = list(csv.DictReader(io.StringIO(reports_csv(reports))))
    assert [int(r["n"]) for r in rows] == [8, 32, 128]
    assert rows[0].keys() == {"n", "gate_count", "garbled_bytes", "ot_messages", "rounds", "tcme_frames", "tcme_bytes"}
    assert "R^2" in summary(reports)
    assert reports_csv([CostReport(1, 1, 1, 3, 2)]).splitlines()[1] == "1,1,1,3,2,,"


@pytest.mark.xfail(
    strict=True,
    reason="popcount overhead grows with n: measured garbled-bytes ratio is ~139, outside 100 +/- 20%",
)
def test_bytes_ratio_1000_over_10():
    small = circuit_cost(10, build_overlap_circuit(10)).garbled_bytes
    large = circuit_cost(1000, build_overlap_circuit(1000)).garbled_bytes
    assert 80 <= large / small <= 120
