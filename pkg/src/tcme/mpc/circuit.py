"""Boolean circuits for the two-party baseline.

Wires are dense integers: garbler (A) inputs first, then evaluator (B)
inputs, then one new wire per gate in topological order. Multi-bit values
are little-endian lists of wires (bit 0 first).
"""

from __future__ import annotations

from dataclasses import dataclass, field

OPS = {
    "AND": lambda a, b: a & b,
    "XOR": lambda a, b: a ^ b,
    "OR": lambda a, b: a | b,
    "NOT": lambda a, b: 1 - a,
}


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    op: str
    in_wires: tuple[int, ...]
    out_wire: int

    @property
    def inputs2(self) -> tuple[int, int]:
        """Both table inputs; a NOT gate reads its one input twice."""
        return (self.in_wires[0], self.in_wires[-1])


@dataclass
class BooleanCircuit:
    inputs_a: int
    inputs_b: int
    gates: list[Gate]
    output_wires: list[int]

    def __post_init__(self):
        self.validate()

    @property
    def wire_count(self) -> int:
        return self.inputs_a + self.inputs_b + len(self.gates)

    @property
    def b_wires(self) -> range:
        return range(self.inputs_a, self.inputs_a + self.inputs_b)

    def validate(self) -> None:
        defined = self.inputs_a + self.inputs_b
        for g in self.gates:
            if g.op not in OPS:
                raise CircuitError(f"unknown op {g.op}")
            if len(g.in_wires) != (1 if g.op == "NOT" else 2):
                raise CircuitError(f"{g.op} gate has {len(g.in_wires)} inputs")
            if any(not 0 <= w < defined for w in g.in_wires):
                raise CircuitError(f"gate {g} reads an undefined wire (not topologically ordered)")
            if g.out_wire != defined:
                raise CircuitError(f"gate {g} output wire must be {defined} (dense numbering)")
            defined += 1
        if any(not 0 <= w < defined for w in self.output_wires):
            raise CircuitError("output wire out of range")

    def evaluate(self, a_bits, b_bits) -> list[int]:
        if len(a_bits) != self.inputs_a or len(b_bits) != self.inputs_b:
            raise CircuitError("wrong number of input bits")
        values = [int(x) for x in a_bits] + [int(x) for x in b_bits]
        for g in self.gates:
            x, y = g.inputs2
            values.append(OPS[g.op](values[x], values[y]))
        return [values[w] for w in self.output_wires]

    def count(self, op: str) -> int:
        return sum(g.op == op for g in self.gates)

    def dump(self) -> str:
        lines = [f"INPUTS {self.inputs_a} {self.inputs_b}"]
        for g in self.gates:
            x, y = g.inputs2
            lines.append(f"GATE {g.op} {x} {y} {g.out_wire}")
        lines.append("OUTPUTS " + " ".join(map(str, self.output_wires)))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> BooleanCircuit:
        inputs_a = inputs_b = None
        gates, outputs = [], []
        for lineno, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "INPUTS":
                    inputs_a, inputs_b = int(parts[1]), int(parts[2])
                elif parts[0] == "GATE":
                    op, x, y, out = parts[1], int(parts[2]), int(parts[3]), int(parts[4])
                    ins = (x,) if op == "NOT" else (x, y)
                    if op == "NOT" and x != y:
                        raise CircuitError("NOT gate must repeat its input")
                    gates.append(Gate(op, ins, out))
                elif parts[0] == "OUTPUTS":
                    outputs = [int(w) for w in parts[1:]]
                else:
                    raise CircuitError(f"unknown directive {parts[0]}")
            except (IndexError, ValueError) as exc:
                raise CircuitError(f"line {lineno}: {exc}") from None
        if inputs_a is None:
            raise CircuitError("missing INPUTS line")
        return cls(inputs_a, inputs_b, gates, outputs)


@dataclass
class CircuitBuilder:
    inputs_a: int
    inputs_b: int
    gates: list[Gate] = field(default_factory=list)

    @property
    def a(self) -> list[int]:
        return list(range(self.inputs_a))

    @property
    def b(self) -> list[int]:
        return list(range(self.inputs_a, self.inputs_a + self.inputs_b))

    def _gate(self, op: str, *ins: int) -> int:
        out = self.inputs_a + self.inputs_b + len(self.gates)
        self.gates.append(Gate(op, tuple(ins), out))
        return out

    def and_(self, x: int, y: int) -> int:
        return self._gate("AND", x, y)

    def xor(self, x: int, y: int) -> int:
        return self._gate("XOR", x, y)

    def or_(self, x: int, y: int) -> int:
        return self._gate("OR", x, y)

    def not_(self, x: int) -> int:
        return self._gate("NOT", x)

    def zero(self) -> int:
        return self.xor(0, 0)

    def add(self, x: list[int], y: list[int], width: int) -> list[int]:
        """Ripple-carry sum, keeping ``width`` result bits (caller guarantees no overflow)."""
        out, carry = [], None
        for i in range(width):
            bits = [w[i] for w in (x, y) if i < len(w)]
            if carry is not None:
                bits.append(carry)
            if not bits:
                break
            if len(bits) == 1:
                out.append(bits[0])
                carry = None
            elif len(bits) == 2:
                out.append(self.xor(*bits))
                carry = self.and_(*bits) if i + 1 < width else None
            else:
                a, b, c = bits
                t = self.xor(a, b)
                out.append(self.xor(t, c))
                carry = self.xor(self.and_(a, b), self.and_(c, t)) if i + 1 < width else None
        return out

    def build(self, outputs: list[int]) -> BooleanCircuit:
        return BooleanCircuit(self.inputs_a, self.inputs_b, list(self.gates), outputs)


def build_overlap_circuit(n: int, count_bits: int | None = None) -> BooleanCircuit:
    """sum_i (a_i AND b_i) as a ``count_bits``-wide little-endian count."""
    if n < 1:
        raise CircuitError("n must be >= 1")
    need = n.bit_length()
    count_bits = need if count_bits is None else count_bits
    if count_bits < need:
        raise CircuitError(f"count_bits={count_bits} cannot hold counts up to {n} (need {need})")
    cb = CircuitBuilder(n, n)
    # (wires, max value) per partial sum; pairwise adder tree
    terms = [([cb.and_(a, b)], 1) for a, b in zip(cb.a, cb.b)]
    while len(terms) > 1:
        nxt = []
        for i in range(0, len(terms) - 1, 2):
            (x, mx), (y, my) = terms[i], terms[i + 1]
            total = mx + my
            nxt.append((cb.add(x, y, total.bit_length()), total))
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    bits = terms[0][0]
    if len(bits) < count_bits:
        zero = cb.zero()
        bits = bits + [zero] * (count_bits - len(bits))
    return cb.build(bits)


def build_comparator_circuit(bits: int) -> BooleanCircuit:
    """Single output wire: 1 iff A > B (unsigned)."""
    if bits not in (8, 16, 32):
        raise CircuitError("bits must be 8, 16 or 32")
    cb = CircuitBuilder(bits, bits)
    a, b = cb.a, cb.b
    # carry c = "A > B on the bits seen so far"; if a_i != b_i then c = a_i else c stays
    c = cb.and_(cb.xor(a[0], b[0]), a[0])
    for i in range(1, bits):
        diff = cb.xor(a[i], b[i])
        c = cb.xor(c, cb.and_(diff, cb.xor(a[i], c)))
    return cb.build([c])


def int_to_bits(value: int, width: int) -> list[int]:
    return [(value >> i) & 1 for i in range(width)]


def bits_to_int(bits) -> int:
    return sum(int(b) << i for i, b in enumerate(bits))
