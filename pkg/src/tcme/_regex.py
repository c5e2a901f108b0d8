"""A small regular-language engine for output grammars.

Only constructs that keep the language regular are accepted: literals,
escapes, bracket classes (with POSIX ``[:name:]`` members), ``.``, groups,
alternation and the usual quantifiers. Backreferences, lookaround and inline
anchors are rejected. Matching is always full-string and uses ASCII semantics
for ``\\d``, ``\\w`` and ``\\s``.

Patterns compile to a Thompson NFA which is simulated with a lazily built
DFA cache.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

MAX_REPEAT = 1000

_DIGIT = ((ord("0"), ord("9")),)
_WORD = ((ord("0"), ord("9")), (ord("A"), ord("Z")), (ord("_"), ord("_")), (ord("a"), ord("z")))
_SPACE = ((9, 13), (32, 32))
_POSIX = {
    "alpha": ((65, 90), (97, 122)),
    "digit": _DIGIT,
    "alnum": ((48, 57), (65, 90), (97, 122)),
    "upper": ((65, 90),),
    "lower": ((97, 122),),
    "space": _SPACE,
    "blank": ((9, 9), (32, 32)),
    "punct": tuple((ord(c), ord(c)) for c in string.punctuation),
    "xdigit": ((48, 57), (65, 70), (97, 102)),
    "print": ((32, 126),),
    "graph": ((33, 126),),
    "cntrl": ((0, 31), (127, 127)),
}
_SIMPLE_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "f": "\f", "v": "\v"}


class RegexError(ValueError):
    pass


@dataclass(frozen=True)
class CharSet:
    ranges: tuple[tuple[int, int], ...]
    negated: bool = False

    def __contains__(self, ch: str) -> bool:
        code = ord(ch)
        hit = any(lo <= code <= hi for lo, hi in self.ranges)
        return hit != self.negated


ANY_BUT_NEWLINE = CharSet(((10, 10),), negated=True)


# AST nodes are plain tuples:
#   ("set", CharSet) | ("cat", [nodes]) | ("alt", [nodes]) | ("rep", node, lo, hi|None) | ("empty",)


class _Parser:
    def __init__(self, pattern: str):
        self.src = pattern
        self.pos = 0

    def peek(self) -> str | None:
        return self.src[self.pos] if self.pos < len(self.src) else None

    def take(self) -> str:
        if self.pos >= len(self.src):
            raise RegexError("unexpected end of pattern")
        ch = self.src[self.pos]
        self.pos += 1
        return ch

    def parse(self):
        node = self.alternation()
        if self.pos != len(self.src):
            raise RegexError(f"unbalanced ')' at {self.pos}")
        return node

    def alternation(self):
        branches = [self.concat()]
        while self.peek() == "|":
            self.pos += 1
            branches.append(self.concat())
        return branches[0] if len(branches) == 1 else ("alt", branches)

    def concat(self):
        items = []
        while self.peek() is not None and self.peek() not in "|)":
            items.append(self.quantified())
        if not items:
            return ("empty",)
        return items[0] if len(items) == 1 else ("cat", items)

    def quantified(self):
        atom = self.atom()
        ch = self.peek()
        if ch == "*":
            self.pos += 1
            atom = ("rep", atom, 0, None)
        elif ch == "+":
            self.pos += 1
            atom = ("rep", atom, 1, None)
        elif ch == "?":
            self.pos += 1
            atom = ("rep", atom, 0, 1)
        elif ch == "{" and self._looks_like_bound():
            lo, hi = self.bound()
            atom = ("rep", atom, lo, hi)
        else:
            return atom
        nxt = self.peek()
        if nxt in ("?", "+"):
            raise RegexError("lazy/possessive quantifiers are not supported")
        if nxt == "*" or (nxt == "{" and self._looks_like_bound()):
            raise RegexError("stacked quantifiers; wrap the inner one in (?:...)")
        return atom

    def _looks_like_bound(self) -> bool:
        end = self.src.find("}", self.pos)
        if end < 0:
            return False
        body = self.src[self.pos + 1 : end]
        lo, _, hi = body.partition(",")
        return lo.isdigit() and (hi == "" or hi.isdigit())

    def bound(self) -> tuple[int, int | None]:
        end = self.src.index("}", self.pos)
        body = self.src[self.pos + 1 : end]
        self.pos = end + 1
        if "," in body:
            lo_s, hi_s = body.split(",", 1)
            lo, hi = int(lo_s), (int(hi_s) if hi_s else None)
        else:
            lo = hi = int(body)
        if hi is not None and hi < lo:
            raise RegexError(f"bad repetition bound {{{body}}}")
        if max(lo, hi or 0) > MAX_REPEAT:
            raise RegexError(f"repetition bound exceeds {MAX_REPEAT}")
        return lo, hi

    def atom(self):
        ch = self.take()
        if ch == "(":
            if self.peek() == "?":
                if self.src.startswith("?:", self.pos):
                    self.pos += 2
                else:
                    raise RegexError("only (?:...) groups are supported")
            node = self.alternation()
            if self.take() != ")":
                raise RegexError("missing ')'")
            return node
        if ch == "[":
            return ("set", self.bracket())
        if ch == ".":
            return ("set", ANY_BUT_NEWLINE)
        if ch == "\\":
            return ("set", self.escape())
        if ch in "*+?":
            raise RegexError(f"nothing to repeat at {self.pos - 1}")
        if ch in "^$":
            raise RegexError("anchors are implicit; '^'/'$' only allowed at the pattern ends")
        if ch == ")":
            raise RegexError("unbalanced ')'")
        return ("set", CharSet(((ord(ch), ord(ch)),)))

    def escape(self) -> CharSet:
        ch = self.take()
        if ch == "d":
            return CharSet(_DIGIT)
        if ch == "D":
            return CharSet(_DIGIT, negated=True)
        if ch == "w":
            return CharSet(_WORD)
        if ch == "W":
            return CharSet(_WORD, negated=True)
        if ch == "s":
            return CharSet(_SPACE)
        if ch == "S":
            return CharSet(_SPACE, negated=True)
        if ch in _SIMPLE_ESCAPES:
            code = ord(_SIMPLE_ESCAPES[ch])
            return CharSet(((code, code),))
        if ch.isdigit():
            raise RegexError("backreferences are not regular")
        if ch in string.punctuation or ch == " ":
            return CharSet(((ord(ch), ord(ch)),))
        raise RegexError(f"unsupported escape \\{ch}")

    def bracket(self) -> CharSet:
        negated = False
        if self.peek() == "^":
            negated = True
            self.pos += 1
        ranges: list[tuple[int, int]] = []
        first = True
        while True:
            ch = self.peek()
            if ch is None:
                raise RegexError("missing ']'")
            if ch == "]" and not first:
                self.pos += 1
                break
            first = False
            if self.src.startswith("[:", self.pos):
                end = self.src.find(":]", self.pos + 2)
                name = self.src[self.pos + 2 : end] if end > 0 else ""
                if name not in _POSIX:
                    raise RegexError(f"unknown POSIX class {name!r}")
                ranges.extend(_POSIX[name])
                self.pos = end + 2
                continue
            lo = self._class_char()
            if isinstance(lo, CharSet):
                if lo.negated:
                    raise RegexError("negated escapes inside brackets are not supported")
                ranges.extend(lo.ranges)
                continue
            if self.peek() == "-" and self.pos + 1 < len(self.src) and self.src[self.pos + 1] != "]":
                self.pos += 1
                hi = self._class_char()
                if isinstance(hi, CharSet):
                    raise RegexError("class escape cannot end a range")
                if hi < lo:
                    raise RegexError("reversed range in bracket expression")
                ranges.append((lo, hi))
            else:
                ranges.append((lo, lo))
        return CharSet(tuple(sorted(set(ranges))), negated)

    def _class_char(self) -> int | CharSet:
        ch = self.take()
        if ch == "\\":
            esc = self.escape()
            if len(esc.ranges) == 1 and esc.ranges[0][0] == esc.ranges[0][1] and not esc.negated:
                return esc.ranges[0][0]
            return esc
        if ch == "[" and self.peek() == ":":
            raise RegexError("malformed POSIX class")
        return ord(ch)


def parse_class(expr: str) -> CharSet:
    """Parse a single bracket expression such as ``[A-Za-z0-9 ]``."""
    if not (expr.startswith("[") and expr.endswith("]")):
        raise RegexError("character class must be a bracket expression")
    parser = _Parser(expr)
    parser.pos = 1
    cs = parser.bracket()
    if parser.pos != len(expr):
        raise RegexError("trailing characters after character class")
    return cs


@dataclass
class _NFA:
    # per state: list of (CharSet, target) and list of epsilon targets
    moves: list[list[tuple[CharSet, int]]] = field(default_factory=list)
    eps: list[list[int]] = field(default_factory=list)

    def new_state(self) -> int:
        self.moves.append([])
        self.eps.append([])
        return len(self.moves) - 1


def _build(nfa: _NFA, node) -> tuple[int, int]:
    kind = node[0]
    if kind == "empty":
        s = nfa.new_state()
        return s, s
    if kind == "set":
        s, t = nfa.new_state(), nfa.new_state()
        nfa.moves[s].append((node[1], t))
        return s, t
    if kind == "cat":
        start, end = _build(nfa, node[1][0])
        for part in node[1][1:]:
            s, t = _build(nfa, part)
            nfa.eps[end].append(s)
            end = t
        return start, end
    if kind == "alt":
        s, t = nfa.new_state(), nfa.new_state()
        for branch in node[1]:
            bs, bt = _build(nfa, branch)
            nfa.eps[s].append(bs)
            nfa.eps[bt].append(t)
        return s, t
    if kind == "rep":
        _, inner, lo, hi = node
        s = nfa.new_state()
        end = s
        for _ in range(lo):
            bs, bt = _build(nfa, inner)
            nfa.eps[end].append(bs)
            end = bt
        if hi is None:
            bs, bt = _build(nfa, inner)
            loop_exit = nfa.new_state()
            nfa.eps[end].extend([bs, loop_exit])
            nfa.eps[bt].extend([bs, loop_exit])
            return s, loop_exit
        final = nfa.new_state()
        nfa.eps[end].append(final)
        for _ in range(hi - lo):
            bs, bt = _build(nfa, inner)
            nfa.eps[end].append(bs)
            nfa.eps[bt].append(final)
            end = bt
        return s, final
    raise AssertionError(kind)


class Regex:
    """Compiled full-match regular expression."""

    def __init__(self, pattern: str):
        for ch in pattern:
            if not (32 <= ord(ch) <= 126):
                raise RegexError(f"pattern must be printable ASCII, found {ch!r}")
        self.pattern = pattern
        body = pattern
        if body.startswith("^"):
            body = body[1:]
        if body.endswith("$") and not body.endswith("\\$"):
            body = body[:-1]
        tree = _Parser(body).parse()
        self._nfa = _NFA()
        self._start, self._accept = _build(self._nfa, tree)
        self._closure_cache: dict[int, frozenset[int]] = {}
        self._dfa: dict[tuple[frozenset[int], str], frozenset[int]] = {}
        self._initial = self._closure((self._start,))

    def _closure(self, states) -> frozenset[int]:
        seen = set(states)
        stack = list(states)
        while stack:
            s = stack.pop()
            for t in self._nfa.eps[s]:
                if t not in seen:
                    seen.add(t)
                    stack.append(t)
        return frozenset(seen)

    def _step(self, current: frozenset[int], ch: str) -> frozenset[int]:
        key = (current, ch)
        cached = self._dfa.get(key)
        if cached is not None:
            return cached
        targets = [t for s in current for cs, t in self._nfa.moves[s] if ch in cs]
        nxt = self._closure(targets)
        if len(self._dfa) < 100_000:
            self._dfa[key] = nxt
        return nxt

    def fullmatch(self, text: str) -> bool:
        current = self._initial
        for ch in text:
            current = self._step(current, ch)
            if not current:
                return False
        return self._accept in current

    def __repr__(self) -> str:
        return f"Regex({self.pattern!r})"
