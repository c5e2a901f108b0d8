"""Four-row garbling with point-and-permute.

A wire label is a 16-byte key followed by one pointer byte. Each gate table
has four rows, placed by the pointer bits of the input labels; a row is the
output label plus a 16-byte zero tag, XORed with a pad derived from both input
labels, the gate index and the row index. The evaluator opens exactly one row
per gate and checks the tag, so corruption is detected instead of yielding a
wrong answer.

This is a desk-scale teaching implementation (no free-XOR, no half-gates,
semi-honest at best). Do not use it to protect real data.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

from .circuit import OPS, BooleanCircuit

KEY_SIZE = 16
LABEL_SIZE = KEY_SIZE + 1
TAG = bytes(16)
CIPHERTEXT_SIZE = LABEL_SIZE + len(TAG)
ROWS = 4
DECODE_ENTRY = 16


class CorruptionError(Exception):
    """No valid row, or an output label outside the decode map."""


def pointer(label: bytes) -> int:
    return label[KEY_SIZE] & 1


def _pad(la: bytes, lb: bytes, gate_index: int, row: int) -> bytes:
    data = la + lb + gate_index.to_bytes(8, "big") + bytes([row])
    return hashlib.blake2b(data, digest_size=CIPHERTEXT_SIZE).digest()


def _xor(x: bytes, y: bytes) -> bytes:
    return (int.from_bytes(x, "big") ^ int.from_bytes(y, "big")).to_bytes(len(x), "big")


def _label_hash(label: bytes) -> bytes:
    return hashlib.blake2b(b"decode" + label, digest_size=DECODE_ENTRY).digest()


@dataclass(frozen=True)
class GarbledCircuit:
    circuit: BooleanCircuit
    tables: tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        return b"".join(self.tables)

    @property
    def size(self) -> int:
        return len(self.tables) * ROWS * CIPHERTEXT_SIZE


@dataclass(frozen=True)
class DecodeMap:
    """Per output wire, hashes of (label_0, label_1). Only output wires are ever present."""

    entries: tuple[tuple[bytes, bytes], ...]

    @property
    def size(self) -> int:
        return len(self.entries) * 2 * DECODE_ENTRY


@dataclass(frozen=True)
class InputLabels:
    """The garbler's secret: (label_0, label_1) for every input wire."""

    a: tuple[tuple[bytes, bytes], ...]
    b: tuple[tuple[bytes, bytes], ...]

    def select_a(self, bits) -> list[bytes]:
        return [pair[int(x)] for pair, x in zip(self.a, bits)]


def garble(circuit: BooleanCircuit, seed: int | None = None) -> tuple[GarbledCircuit, InputLabels, DecodeMap]:
    rng = random.Random(seed)
    labels: list[tuple[bytes, bytes]] = []

    def fresh_pair() -> tuple[bytes, bytes]:
        p = rng.getrandbits(1)
        k0, k1 = rng.randbytes(KEY_SIZE), rng.randbytes(KEY_SIZE)
        while k1 == k0:
            k1 = rng.randbytes(KEY_SIZE)
        return (k0 + bytes([p]), k1 + bytes([p ^ 1]))

    for _ in range(circuit.inputs_a + circuit.inputs_b):
        labels.append(fresh_pair())
    tables = []
    for index, gate in enumerate(circuit.gates):
        out_pair = fresh_pair()
        labels.append(out_pair)
        x, y = gate.inputs2
        fn = OPS[gate.op]
        rows: list[bytes | None] = [None] * ROWS
        for va in (0, 1):
            for vb in (0, 1):
                if x == y and va != vb:
                    continue
                la, lb = labels[x][va], labels[y][vb]
                row = 2 * pointer(la) + pointer(lb)
                plaintext = out_pair[fn(va, vb)] + TAG
                rows[row] = _xor(plaintext, _pad(la, lb, index, row))
        # single-input gates leave two unreachable rows; fill them with noise
        tables.append(b"".join(r if r is not None else rng.randbytes(CIPHERTEXT_SIZE) for r in rows))
    n_in = circuit.inputs_a + circuit.inputs_b
    inputs = InputLabels(tuple(labels[: circuit.inputs_a]), tuple(labels[circuit.inputs_a : n_in]))
    decode_map = DecodeMap(tuple((_label_hash(labels[w][0]), _label_hash(labels[w][1])) for w in circuit.output_wires))
    return GarbledCircuit(circuit, tuple(tables)), inputs, decode_map


def open_row(table: bytes, gate_index: int, la: bytes, lb: bytes, row: int) -> bytes | None:
    """Decrypt one row; None when the tag does not verify."""
    ct = table[row * CIPHERTEXT_SIZE : (row + 1) * CIPHERTEXT_SIZE]
    pt = _xor(ct, _pad(la, lb, gate_index, row))
    if pt[LABEL_SIZE:] != TAG:
        return None
    return pt[:LABEL_SIZE]


def evaluate(garbled: GarbledCircuit, a_labels, b_labels) -> list[bytes]:
    circuit = garbled.circuit
    if len(a_labels) != circuit.inputs_a or len(b_labels) != circuit.inputs_b:
        raise ValueError("need exactly one label per input wire")
    wires = list(a_labels) + list(b_labels)
    for index, (gate, table) in enumerate(zip(circuit.gates, garbled.tables)):
        x, y = gate.inputs2
        la, lb = wires[x], wires[y]
        out = open_row(table, index, la, lb, 2 * pointer(la) + pointer(lb))
        if out is None:
            raise CorruptionError(f"gate {index}: no row decrypts under the held labels")
        wires.append(out)
    return [wires[w] for w in circuit.output_wires]


def decode(output_labels, decode_map: DecodeMap) -> list[int]:
    bits = []
    for i, (label, (h0, h1)) in enumerate(zip(output_labels, decode_map.entries)):
        h = _label_hash(label)
        if h == h0:
            bits.append(0)
        elif h == h1:
            bits.append(1)
        else:
            raise CorruptionError(f"output wire {i}: label not in decode map")
    return bits
