"""Input constraints and output grammars.

Party inputs are checked and normalized by :func:`validate_input`. Model
output passes through :func:`filter_output`, which only ever releases text
that the manifest's :class:`OutputGrammar` accepts.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Any, Callable, Union

from . import canonical
from ._regex import CharSet, Regex, RegexError, parse_class

MAX_NUMBER_CHARS = 20


class ConstraintError(ValueError):
    """An input violated its constraint. The message names the constraint."""


class GrammarError(ValueError):
    """An output grammar definition is invalid."""


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _coerce_int(value: Any, what: str) -> int:
    if _is_int(value):
        return value
    if isinstance(value, str):
        text = value.strip()
        body = text[1:] if text[:1] in "+-" else text
        if body.isascii() and body.isdigit():
            return int(text)
    raise ConstraintError(f"{what}: expected an integer, got {value!r}")


# ---------------------------------------------------------------- input specs


@dataclass(frozen=True)
class IntRange:
    bits: int = 32
    min: int | None = None
    max: int | None = None

    def __post_init__(self):
        if self.bits not in (8, 16, 32, 64):
            raise ConstraintError(f"IntRange: bits must be 8|16|32|64, got {self.bits}")
        signed = self.min is not None and self.min < 0
        lo, hi = (-(1 << (self.bits - 1)), (1 << (self.bits - 1)) - 1) if signed else (0, (1 << self.bits) - 1)
        if self.min is None:
            object.__setattr__(self, "min", lo)
        if self.max is None:
            object.__setattr__(self, "max", hi)
        if not (lo <= self.min <= self.max <= hi):
            raise ConstraintError(
                f"IntRange: need {lo} <= min <= max <= {hi} for {self.bits}-bit, got [{self.min}, {self.max}]"
            )

    def validate(self, value: Any) -> int:
        v = _coerce_int(value, f"IntRange[{self.bits}-bit]")
        if not (self.min <= v <= self.max):
            raise ConstraintError(f"IntRange[{self.bits}-bit]: {v} outside [{self.min}, {self.max}]")
        return v

    def render(self, value: int) -> str:
        return str(value)

    def to_tree(self):
        return canonical.tagged("IntRange", bits=self.bits, min=self.min, max=self.max)


@dataclass(frozen=True)
class IntList:
    min_len: int
    max_len: int
    element: IntRange

    def __post_init__(self):
        if not (0 <= self.min_len <= self.max_len):
            raise ConstraintError(f"IntList: need 0 <= min_len <= max_len, got {self.min_len}, {self.max_len}")

    def validate(self, value: Any) -> tuple[int, ...]:
        if isinstance(value, (str, bytes, dict)) or not hasattr(value, "__iter__"):
            raise ConstraintError(f"IntList: expected a sequence, got {type(value).__name__}")
        items = tuple(self.element.validate(v) for v in value)
        if not (self.min_len <= len(items) <= self.max_len):
            raise ConstraintError(f"IntList: length {len(items)} outside [{self.min_len}, {self.max_len}]")
        return items

    def render(self, value) -> str:
        return "[" + ", ".join(str(v) for v in value) + "]"

    def to_tree(self):
        return canonical.tagged(
            "IntList", min_len=self.min_len, max_len=self.max_len, element=self.element.to_tree()
        )


@dataclass(frozen=True)
class BitVector:
    len: int

    def __post_init__(self):
        if self.len < 0:
            raise ConstraintError("BitVector: len must be >= 0")

    def validate(self, value: Any) -> tuple[int, ...]:
        if isinstance(value, str):
            value = value.strip()
            if not set(value) <= {"0", "1"}:
                raise ConstraintError(f"BitVector[{self.len}]: string must contain only 0/1")
            bits = tuple(int(c) for c in value)
        elif hasattr(value, "__iter__") and not isinstance(value, (bytes, dict)):
            bits = []
            for b in value:
                if isinstance(b, bool):
                    b = int(b)
                if b not in (0, 1) or not _is_int(b):
                    raise ConstraintError(f"BitVector[{self.len}]: element {b!r} is not 0 or 1")
                bits.append(b)
            bits = tuple(bits)
        else:
            raise ConstraintError(f"BitVector[{self.len}]: expected a sequence of bits")
        if len(bits) != self.len:
            raise ConstraintError(f"BitVector[{self.len}]: wrong arity {len(bits)}")
        return bits

    def render(self, value) -> str:
        return "[" + ", ".join(str(v) for v in value) + "]"

    def to_tree(self):
        return canonical.tagged("BitVector", len=self.len)


@dataclass(frozen=True)
class Enum:
    allowed: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "allowed", frozenset(self.allowed))
        if not self.allowed:
            raise ConstraintError("Enum: allowed set must be nonempty")

    def validate(self, value: Any) -> str:
        if not isinstance(value, str) or value.strip() not in self.allowed:
            raise ConstraintError(f"Enum{sorted(self.allowed)}: {value!r} not allowed")
        return value.strip()

    def render(self, value: str) -> str:
        return value

    def to_tree(self):
        return canonical.tagged("Enum", allowed=sorted(self.allowed))


@dataclass(frozen=True)
class Text:
    max_len: int
    allowed_chars: str = "[[:print:]\\n]"

    def __post_init__(self):
        if self.max_len < 0:
            raise ConstraintError("Text: max_len must be >= 0")
        try:
            parse_class(self.allowed_chars)
        except RegexError as exc:
            raise ConstraintError(f"Text: bad allowed_chars: {exc}") from None

    @property
    def charset(self) -> CharSet:
        return parse_class(self.allowed_chars)

    def validate(self, value: Any) -> str:
        if not isinstance(value, str):
            raise ConstraintError(f"Text: expected a string, got {type(value).__name__}")
        text = unicodedata.normalize("NFC", value)
        if len(text) > self.max_len:
            raise ConstraintError(f"Text: length {len(text)} exceeds max_len {self.max_len}")
        cs = self.charset
        bad = [c for c in text if c not in cs]
        if bad:
            raise ConstraintError(f"Text: character {bad[0]!r} outside {self.allowed_chars}")
        return text

    def render(self, value: str) -> str:
        return value

    def to_tree(self):
        return canonical.tagged("Text", max_len=self.max_len, allowed_chars=self.allowed_chars)


@dataclass(frozen=True)
class AdjacencyMatrix:
    max_nodes: int

    def __post_init__(self):
        if self.max_nodes < 1:
            raise ConstraintError("AdjacencyMatrix: max_nodes must be >= 1")

    def validate(self, value: Any) -> tuple[tuple[int, ...], ...]:
        try:
            rows = tuple(tuple(int(x) if isinstance(x, bool) else x for x in row) for row in value)
        except TypeError:
            raise ConstraintError("AdjacencyMatrix: expected a nested list") from None
        n = len(rows)
        if not 1 <= n <= self.max_nodes:
            raise ConstraintError(f"AdjacencyMatrix: {n} nodes outside [1, {self.max_nodes}]")
        for i, row in enumerate(rows):
            if len(row) != n:
                raise ConstraintError(f"AdjacencyMatrix: row {i} has length {len(row)}, expected {n}")
            for j, x in enumerate(row):
                if not _is_int(x) or x not in (0, 1):
                    raise ConstraintError(f"AdjacencyMatrix: entry ({i},{j}) is not 0/1")
            if row[i]:
                raise ConstraintError(f"AdjacencyMatrix: self-loop at node {i}")
        for i in range(n):
            for j in range(i + 1, n):
                if rows[i][j] != rows[j][i]:
                    raise ConstraintError(f"AdjacencyMatrix: asymmetric at ({i},{j})")
        return rows

    def render(self, value) -> str:
        return "[" + ", ".join("[" + ", ".join(str(x) for x in row) + "]" for row in value) + "]"

    def to_tree(self):
        return canonical.tagged("AdjacencyMatrix", max_nodes=self.max_nodes)


@dataclass(frozen=True)
class ColorMap:
    max_nodes: int
    colors: int = 3

    def __post_init__(self):
        if self.max_nodes < 1:
            raise ConstraintError("ColorMap: max_nodes must be >= 1")
        if not 1 <= self.colors <= 3:
            raise ConstraintError("ColorMap: colors must be in 1..3")

    def validate(self, value: Any) -> tuple[tuple[int, int], ...]:
        items = value.items() if isinstance(value, dict) else value
        try:
            pairs = sorted(
                (_coerce_int(k, "ColorMap node"), _coerce_int(c, "ColorMap color")) for k, c in items
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConstraintError):
                raise
            raise ConstraintError("ColorMap: expected a node -> color mapping") from None
        n = len(pairs)
        if not 1 <= n <= self.max_nodes:
            raise ConstraintError(f"ColorMap: {n} nodes outside [1, {self.max_nodes}]")
        if [k for k, _ in pairs] != list(range(n)):
            raise ConstraintError("ColorMap: nodes must be exactly 0..n-1")
        for k, c in pairs:
            if not 1 <= c <= self.colors:
                raise ConstraintError(f"ColorMap: node {k} has color {c} outside 1..{self.colors}")
        return tuple(pairs)

    def render(self, value) -> str:
        return "{" + ", ".join(f"{k}: {c}" for k, c in value) + "}"

    def to_tree(self):
        return canonical.tagged("ColorMap", max_nodes=self.max_nodes, colors=self.colors)


ConstraintSpec = Union[IntRange, IntList, BitVector, Enum, Text, AdjacencyMatrix, ColorMap]


def validate_input(spec: ConstraintSpec, value: Any):
    """Return the canonical typed form of ``value`` or raise :class:`ConstraintError`.

    Idempotent: ``validate_input(s, validate_input(s, v)) == validate_input(s, v)``.
    """
    return spec.validate(value)


def constraint_from_tree(node) -> ConstraintSpec:
    kind = node.get(canonical.TYPE_KEY) if isinstance(node, dict) else None
    if kind == "IntRange":
        return IntRange(node["bits"], node["min"], node["max"])
    if kind == "IntList":
        return IntList(node["min_len"], node["max_len"], constraint_from_tree(node["element"]))
    if kind == "BitVector":
        return BitVector(node["len"])
    if kind == "Enum":
        return Enum(frozenset(node["allowed"]))
    if kind == "Text":
        return Text(node["max_len"], node["allowed_chars"])
    if kind == "AdjacencyMatrix":
        return AdjacencyMatrix(node["max_nodes"])
    if kind == "ColorMap":
        return ColorMap(node["max_nodes"], node["colors"])
    raise canonical.EncodingError(f"unknown constraint node {kind!r}")


# ------------------------------------------------------------- output grammars


@dataclass(frozen=True)
class FilterPolicy:
    max_retries: int = 0
    trim_whitespace: bool = True
    case_fold: bool = False

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def normalize(self, text: str) -> str:
        if self.trim_whitespace:
            text = text.strip()
        if self.case_fold:
            text = text.casefold()
        return text


DEFAULT_POLICY = FilterPolicy()


@dataclass(frozen=True)
class Enumeration:
    allowed: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "allowed", frozenset(self.allowed))
        if not self.allowed:
            raise GrammarError("Enumeration must be nonempty")

    def matches(self, text: str, policy: FilterPolicy = DEFAULT_POLICY) -> str | None:
        if policy.case_fold:
            for option in sorted(self.allowed):
                if option.casefold() == text:
                    return option
            return None
        return text if text in self.allowed else None

    def to_tree(self):
        return canonical.tagged("Enumeration", allowed=sorted(self.allowed))


class Pattern:
    """Anchored regular-language grammar."""

    def __init__(self, regex: str):
        try:
            self._compiled = Regex(regex)
        except RegexError as exc:
            raise GrammarError(f"Pattern {regex!r}: {exc}") from None
        self.regex = regex

    def matches(self, text: str, policy: FilterPolicy = DEFAULT_POLICY) -> str | None:
        return text if self._compiled.fullmatch(text) else None

    def to_tree(self):
        return canonical.tagged("Pattern", regex=self.regex)

    def __eq__(self, other):
        return isinstance(other, Pattern) and other.regex == self.regex

    def __hash__(self):
        return hash(("Pattern", self.regex))

    def __repr__(self):
        return f"Pattern({self.regex!r})"


def _scan_number(text: str, allow_float: bool) -> bool:
    """Hand-rolled scanner for ``-?digits`` and optionally ``.digits`` / exponent."""
    i, n = 0, len(text)
    if i < n and text[i] == "-":
        i += 1
    start = i
    while i < n and "0" <= text[i] <= "9":
        i += 1
    int_digits = i - start
    if not allow_float:
        return int_digits > 0 and i == n
    frac_digits = 0
    if i < n and text[i] == ".":
        i += 1
        fstart = i
        while i < n and "0" <= text[i] <= "9":
            i += 1
        frac_digits = i - fstart
    if int_digits == 0 and frac_digits == 0:
        return False
    if i < n and text[i] in "eE":
        i += 1
        if i < n and text[i] in "+-":
            i += 1
        estart = i
        while i < n and "0" <= text[i] <= "9":
            i += 1
        if i == estart:
            return False
    return i == n


@dataclass(frozen=True)
class Number:
    kind: str = "float"
    min: float | int | None = None
    max: float | int | None = None

    def __post_init__(self):
        if self.kind not in ("integer", "float"):
            raise GrammarError(f"Number kind must be integer|float, got {self.kind!r}")
        if self.min is not None and self.max is not None and self.min > self.max:
            raise GrammarError("Number: min > max")

    def matches(self, text: str, policy: FilterPolicy = DEFAULT_POLICY) -> str | None:
        if len(text) > MAX_NUMBER_CHARS or not _scan_number(text, self.kind == "float"):
            return None
        value = int(text) if self.kind == "integer" else float(text)
        if value != value or value in (float("inf"), float("-inf")):
            return None
        if self.min is not None and value < self.min:
            return None
        if self.max is not None and value > self.max:
            return None
        return text

    def to_tree(self):
        return canonical.tagged("Number", kind=self.kind, min=self.min, max=self.max)


OutputGrammar = Union[Enumeration, Pattern, Number]


def grammar_from_tree(node) -> OutputGrammar:
    kind = node.get(canonical.TYPE_KEY) if isinstance(node, dict) else None
    if kind == "Enumeration":
        return Enumeration(frozenset(node["allowed"]))
    if kind == "Pattern":
        return Pattern(node["regex"])
    if kind == "Number":
        return Number(node["kind"], node["min"], node["max"])
    raise canonical.EncodingError(f"unknown grammar node {kind!r}")


def accepts(grammar: OutputGrammar, text: str, policy: FilterPolicy = DEFAULT_POLICY) -> bool:
    """Full-string membership test of the normalized text."""
    return grammar.matches(policy.normalize(text), policy) is not None


@dataclass(frozen=True)
class Accepted:
    output: str
    attempts: int


@dataclass(frozen=True)
class Rejected:
    """Filter exhaustion. Deliberately carries no model text."""

    attempts: int


def filter_output(
    grammar: OutputGrammar,
    raw: str,
    policy: FilterPolicy,
    reinvoke: Callable[[], str],
) -> Accepted | Rejected:
    """Release the first output the grammar accepts, within ``1 + max_retries`` attempts.

    ``reinvoke`` re-runs the model on the identical prompt. Exceptions it
    raises propagate unchanged.
    """
    attempts = 1
    while True:
        released = grammar.matches(policy.normalize(raw), policy)
        if released is not None:
            return Accepted(released, attempts)
        if attempts > policy.max_retries:
            return Rejected(attempts)
        raw = reinvoke()
        attempts += 1
