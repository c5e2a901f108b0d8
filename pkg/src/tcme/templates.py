"""Shipped manifest templates for the worked examples.

Each factory returns a fresh :class:`ComputationManifest`. Pass ``nonce`` to
make the result reproducible.
"""

from __future__ import annotations

import os

from .constraints import (
    AdjacencyMatrix,
    BitVector,
    ColorMap,
    Enumeration,
    IntRange,
    Number,
    Text,
)
from .manifest import ComputationManifest, ModelSpec, PartyInput, PromptTemplate

MILLIONAIRES_PROMPT = 'Say "first" if A is bigger than B and "second" otherwise? A={A} and B={B}.'

OVERLAP_PROMPT = (
    "Output the overlap across the ages of the clients according to the annotation scheme: "
    "{company_a} and {company_b}. Only output the overlap as a number"
)

AUDIT_PROMPT = (
    "Output YES only if private user data is stored in a way that would endanger the customer "
    "in case of compromise.\n"
    "System code and database access description:\n{system}\n"
    "Regulator requirements:\n{requirements}\n"
    "Output only YES or NO."
)

DAMAGE_PROMPT = (
    "Output YES only if the space is severely damaged.\n"
    "Condition of the space agreed at move-in:\n{baseline}\n"
    "End-of-day camera recording:\n{recording}\n"
    "Output only YES or NO."
)

NONCOMPETITION_HEADER = (
    "Each research group below lists its ongoing projects, one title per line. "
    "Output YES only if two different groups are working on the same project, otherwise output NO."
)

COLORING_PROMPT = (
    "You are an agent that receives a graph that is represented by the adjacency matrix. \n"
    "You job is to verify the coloring of the graph with 3 colors\n"
    "such that no two adjacent nodes have the same color. \n"
    "Only produce YES if coloring is correct, otherwise output NO. \n"
    "Color scheme is a dict where each node is mapped to its color 1 to 3. \n"
    "For example, {{0: 1, 1: 2, 2: 2, 3: 0, 4: 1, 5: 1, 6: 2, 7: 0, 8: 2, 9: 2}} \n"
    "means node 0 is color 1, node 1 is color 2, and so on. \n"
    "You are given the following adjacency matrix: {adjacency}\n"
    "and the following scheme: {coloring}.\n"
    "Do not produce or show code, your only job is verify the color scheme.\n"
    "Ouput only YES if coloring is correct."
)

YES_NO = Enumeration(frozenset({"YES", "NO"}))
TITLE_CHARS = "[[:print:]\\n]"


def _nonce(nonce: bytes | None) -> bytes:
    return os.urandom(16) if nonce is None else nonce


def millionaires(
    backend_kind: str = "oracle", model_id: str = "gemma-2b-it", bits: int = 32, *, nonce=None, retry_limit=2
) -> ComputationManifest:
    spec = IntRange(bits=bits)
    return ComputationManifest(
        model=ModelSpec(model_id, backend_kind),
        prompt=PromptTemplate(MILLIONAIRES_PROMPT),
        party_inputs=(PartyInput("A", "A", spec), PartyInput("B", "B", spec)),
        output=Enumeration(frozenset({"first", "second"})),
        nonce=_nonce(nonce),
        retry_limit=retry_limit,
    )


def overlap(
    n: int = 5, backend_kind: str = "oracle", model_id: str = "gemma-2b-it", *, nonce=None, retry_limit=2
) -> ComputationManifest:
    spec = BitVector(n)
    return ComputationManifest(
        model=ModelSpec(model_id, backend_kind),
        prompt=PromptTemplate(OVERLAP_PROMPT),
        party_inputs=(PartyInput("company_a", "company_a", spec), PartyInput("company_b", "company_b", spec)),
        output=Number("float", 0, n),
        nonce=_nonce(nonce),
        retry_limit=retry_limit,
    )


def audit(
    backend_kind: str = "scripted", model_id: str = "gemma-2b-it", *, nonce=None, retry_limit=2
) -> ComputationManifest:
    return ComputationManifest(
        model=ModelSpec(model_id, backend_kind),
        prompt=PromptTemplate(AUDIT_PROMPT),
        party_inputs=(
            PartyInput("business", "system", Text(100_000, TITLE_CHARS)),
            PartyInput("regulator", "requirements", Text(10_000, TITLE_CHARS)),
        ),
        output=YES_NO,
        nonce=_nonce(nonce),
        retry_limit=retry_limit,
    )


def damage(
    backend_kind: str = "scripted", model_id: str = "gemma-2b-it", *, nonce=None, retry_limit=2
) -> ComputationManifest:
    return ComputationManifest(
        model=ModelSpec(model_id, backend_kind),
        prompt=PromptTemplate(DAMAGE_PROMPT),
        party_inputs=(
            PartyInput("landlord", "baseline", Text(10_000, TITLE_CHARS)),
            PartyInput("tenant", "recording", Text(100_000, TITLE_CHARS)),
        ),
        output=YES_NO,
        nonce=_nonce(nonce),
        retry_limit=retry_limit,
    )


def noncompetition_prompt(groups: int) -> str:
    sections = [f"Group {i + 1} projects:\n{{group{i + 1}}}" for i in range(groups)]
    return NONCOMPETITION_HEADER + "\n" + "\n".join(sections)


def noncompetition(
    groups: int = 3, backend_kind: str = "oracle", model_id: str = "gemma-2b-it", *, nonce=None, retry_limit=2
) -> ComputationManifest:
    spec = Text(4000, TITLE_CHARS)
    return ComputationManifest(
        model=ModelSpec(model_id, backend_kind),
        prompt=PromptTemplate(noncompetition_prompt(groups)),
        party_inputs=tuple(PartyInput(f"group{i + 1}", f"group{i + 1}", spec) for i in range(groups)),
        output=YES_NO,
        nonce=_nonce(nonce),
        retry_limit=retry_limit,
    )


def coloring(
    max_nodes: int = 25, backend_kind: str = "oracle", model_id: str = "gemini-1.5-flash", *, nonce=None, retry_limit=2
) -> ComputationManifest:
    """Verifier holds the graph, prover holds the 3-coloring."""
    return ComputationManifest(
        model=ModelSpec(model_id, backend_kind),
        prompt=PromptTemplate(COLORING_PROMPT),
        party_inputs=(
            PartyInput("verifier", "adjacency", AdjacencyMatrix(max_nodes)),
            PartyInput("prover", "coloring", ColorMap(max_nodes, 3)),
        ),
        output=YES_NO,
        nonce=_nonce(nonce),
        retry_limit=retry_limit,
    )


TEMPLATES = {
    "millionaires": millionaires,
    "age-overlap": overlap,
    "audit": audit,
    "damage": damage,
    "noncompetition": noncompetition,
    "coloring": coloring,
}
