"""Shared builders for the test suite: random manifests, single-field mutations, key setup, regex oracle."""

from __future__ import annotations

import random
import re
import string
from dataclasses import replace

from tcme.constraints import (
    AdjacencyMatrix,
    BitVector,
    ColorMap,
    Enum,
    Enumeration,
    IntList,
    IntRange,
    Number,
    Pattern,
    Text,
)
from tcme.ifc import FlowPolicy, ModelInternal, default_policy
from tcme.manifest import ComputationManifest, ModelSpec, PartyInput, PromptTemplate, approve, generate_signing_key

LITERALS = ["Compare ", " and ", "; answer with one word. ", "Größe {{x}} ", "\n", "é→✓ ", "{{", "}}", "A=", ""]


def random_constraint(rng: random.Random):
    kind = rng.randrange(7)
    if kind == 0:
        bits = rng.choice([8, 16, 32, 64])
        if rng.random() < 0.3:
            lo = -rng.randrange(1, 1 << (bits - 1))
            return IntRange(bits, lo, rng.randrange(lo, 1 << (bits - 1)))
        hi = rng.randrange(1, 1 << bits)
        return IntRange(bits, rng.randrange(0, hi), hi)
    if kind == 1:
        lo = rng.randrange(0, 5)
        return IntList(lo, lo + rng.randrange(0, 10), IntRange(rng.choice([8, 16])))
    if kind == 2:
        return BitVector(rng.randrange(0, 64))
    if kind == 3:
        return Enum(frozenset(rng.sample(["YES", "NO", "MAYBE", "red", "grün", "x"], rng.randrange(1, 5))))
    if kind == 4:
        return Text(rng.randrange(0, 5000), rng.choice(["[[:print:]\\n]", "[a-z ]", "[[:alnum:]_-]"]))
    if kind == 5:
        return AdjacencyMatrix(rng.randrange(1, 40))
    return ColorMap(rng.randrange(1, 40), rng.randrange(1, 4))


def random_grammar(rng: random.Random):
    kind = rng.randrange(3)
    if kind == 0:
        return Enumeration(frozenset(rng.sample(["YES", "NO", "first", "second", "ok", "ÜBER"], rng.randrange(1, 4))))
    if kind == 1:
        return Pattern(rng.choice(["[0-9]{1,3}", "(YES|NO)", "[a-z]+(-[a-z]+)*", "\\d+\\.\\d{2}", "[[:upper:]]{2,5}"]))
    lo = rng.randrange(-100, 100)
    return Number(rng.choice(["integer", "float"]), lo, lo + rng.randrange(0, 1000))


def random_manifest(rng: random.Random) -> ComputationManifest:
    n_parties = rng.randrange(2, 5)
    parties = [f"p{i}_{rng.randrange(1000)}" for i in range(n_parties)]
    placeholders = [f"v{i}" for i in range(n_parties)]
    order = placeholders[:]
    rng.shuffle(order)
    template = "".join(rng.choice(LITERALS) + "{" + ph + "}" for ph in order) + rng.choice(LITERALS)
    backend = rng.choice(["remote", "scripted", "oracle"])
    wd = rng.randbytes(32) if backend == "remote" and rng.random() < 0.5 else None
    policy = default_policy(parties)
    if rng.random() < 0.3:
        # narrower policies are still valid manifests
        edges = set(policy.allowed_edges)
        edges.discard((ModelInternal, rng.choice(sorted(policy.labels(), key=str))))
        policy = FlowPolicy(tuple(parties), frozenset(edges))
    return ComputationManifest(
        model=ModelSpec(rng.choice(["gemma-2b-it", "m", "model/ß-1"]), backend, wd),
        prompt=PromptTemplate(template),
        party_inputs=tuple(PartyInput(p, ph, random_constraint(rng)) for p, ph in zip(parties, placeholders)),
        output=random_grammar(rng),
        flow_policy=policy,
        nonce=rng.randbytes(16),
        retry_limit=rng.randrange(0, 6),
    )


def _literal_positions(text: str) -> list[int]:
    out, i = [], 0
    while i < len(text):
        if text.startswith(("{{", "}}"), i):
            i += 2
        elif text[i] == "{":
            i = text.index("}", i) + 1
        else:
            out.append(i)
            i += 1
    return out


def _flip(text: str, rng: random.Random) -> str:
    """Change one literal character, leaving placeholders and brace escapes alone."""
    candidates = _literal_positions(text)
    if not candidates:
        return text + "!"
    i = rng.choice(candidates)
    return text[:i] + ("X" if text[i] != "X" else "Y") + text[i + 1 :]


def mutate(m: ComputationManifest, rng: random.Random) -> tuple[str, ComputationManifest]:
    """Change exactly one field; returns (field name, mutated manifest)."""
    field = rng.choice(["nonce", "retry_limit", "model_id", "backend", "prompt", "constraint", "output", "policy"])
    if field == "nonce":
        b = bytearray(m.nonce)
        b[rng.randrange(16)] ^= 1 << rng.randrange(8)
        return field, replace(m, nonce=bytes(b))
    if field == "retry_limit":
        return field, replace(m, retry_limit=m.retry_limit + rng.randrange(1, 4))
    if field == "model_id":
        return field, replace(m, model=replace(m.model, model_id=m.model.model_id + "x"))
    if field == "backend":
        kinds = [k for k in ("scripted", "oracle") if k != m.model.backend_kind]
        return field, replace(m, model=ModelSpec(m.model.model_id, rng.choice(kinds)))
    if field == "prompt":
        t = m.prompt.template
        return field, replace(m, prompt=PromptTemplate(_flip(t, rng)))
    if field == "constraint":
        i = rng.randrange(len(m.party_inputs))
        old = m.party_inputs[i]
        new = old.constraint
        while new == old.constraint:
            new = random_constraint(rng)
        inputs = list(m.party_inputs)
        inputs[i] = replace(old, constraint=new)
        return field, replace(m, party_inputs=tuple(inputs))
    if field == "output":
        new = m.output
        while new == m.output:
            new = random_grammar(rng)
        return field, replace(m, output=new)
    edges = set(m.flow_policy.allowed_edges)
    edges.remove(rng.choice(sorted(edges, key=lambda e: (str(e[0]), str(e[1])))))
    return field, replace(m, flow_policy=FlowPolicy(m.flow_policy.parties, frozenset(edges)))


def keys_for(manifest: ComputationManifest):
    """(signing keys, public-key registry, approvals from every party)."""
    keys = {p: generate_signing_key() for p in manifest.party_ids}
    registry = {p: k.public_key() for p, k in keys.items()}
    approvals = [approve(manifest, p, k) for p, k in keys.items()]
    return keys, registry, approvals


# -- reference regex: Python re in ASCII mode, with POSIX classes spelled out

POSIX_FOR_RE = {
    "alpha": "a-zA-Z",
    "digit": "0-9",
    "alnum": "0-9a-zA-Z",
    "upper": "A-Z",
    "lower": "a-z",
    "space": " \\t\\n\\r\\f\\v",
    "blank": " \\t",
    "punct": "".join("\\" + c for c in string.punctuation),
    "xdigit": "0-9A-Fa-f",
    "print": " -~",
    "graph": "!-~",
    "cntrl": "\\x00-\\x1f\\x7f",
}


def to_python(pattern: str) -> str:
    return re.sub(r"\[:(\w+):\]", lambda m: POSIX_FOR_RE[m.group(1)], pattern)


def reference(pattern: str, text: str) -> bool:
    return re.fullmatch(to_python(pattern), text, re.ASCII) is not None
