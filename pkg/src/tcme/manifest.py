"""The jointly approved computation contract.

A :class:`ComputationManifest` pins the model, prompt template, per-party
input constraints, output grammar and flow policy. Parties sign its SHA-256
digest over the canonical encoding; a session only starts once every listed
party has approved.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from . import canonical
from .constraints import (
    ConstraintSpec,
    OutputGrammar,
    constraint_from_tree,
    grammar_from_tree,
)
from .ifc import FlowPolicy, default_policy

MANIFEST_VERSION = 1
BACKEND_KINDS = ("remote", "scripted", "oracle")
SIGNATURE_SIZE = 64


class ManifestError(ValueError):
    """A manifest invariant is violated."""


class ApprovalError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    backend_kind: str = "oracle"
    weights_digest: bytes | None = None

    def __post_init__(self):
        if not self.model_id:
            raise ManifestError("ModelSpec.model_id must be nonempty")
        if self.backend_kind not in BACKEND_KINDS:
            raise ManifestError(f"ModelSpec.backend_kind must be one of {BACKEND_KINDS}")
        if self.weights_digest is not None:
            if self.backend_kind != "remote":
                # scripted and oracle backends have no weights to pin
                raise ManifestError(f"weights_digest is meaningless for {self.backend_kind} backends")
            if len(self.weights_digest) != 32:
                raise ManifestError("weights_digest must be 32 bytes")

    def to_tree(self):
        return canonical.tagged(
            "ModelSpec",
            model_id=self.model_id,
            backend_kind=self.backend_kind,
            weights_digest=self.weights_digest.hex() if self.weights_digest else None,
        )

    @classmethod
    def from_tree(cls, node) -> ModelSpec:
        node = canonical.expect(node, "ModelSpec")
        wd = node["weights_digest"]
        return cls(node["model_id"], node["backend_kind"], bytes.fromhex(wd) if wd else None)


_PLACEHOLDER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _parse_template(template: str) -> list[tuple[bool, str]]:
    """Split into (is_placeholder, text) segments. ``{{``/``}}`` are literal braces."""
    segments: list[tuple[bool, str]] = []
    literal: list[str] = []
    i, n = 0, len(template)
    while i < n:
        ch = template[i]
        if ch == "{":
            if template.startswith("{{", i):
                literal.append("{")
                i += 2
                continue
            end = template.find("}", i + 1)
            name = template[i + 1 : end] if end > 0 else ""
            if not _PLACEHOLDER.fullmatch(name):
                raise ManifestError(f"malformed placeholder at offset {i}: use {{name}} or '{{{{' for a brace")
            if literal:
                segments.append((False, "".join(literal)))
                literal = []
            segments.append((True, name))
            i = end + 1
        elif ch == "}":
            if not template.startswith("}}", i):
                raise ManifestError(f"unmatched '}}' at offset {i}")
            literal.append("}")
            i += 2
        else:
            literal.append(ch)
            i += 1
    if literal:
        segments.append((False, "".join(literal)))
    return segments


@dataclass(frozen=True)
class PromptTemplate:
    template: str
    placeholder_names: tuple[str, ...] = ()

    def __post_init__(self):
        found: list[str] = []
        for is_ph, text in _parse_template(self.template):
            if is_ph and text not in found:
                found.append(text)
        if not self.placeholder_names:
            object.__setattr__(self, "placeholder_names", tuple(found))
        else:
            object.__setattr__(self, "placeholder_names", tuple(self.placeholder_names))
            if len(set(self.placeholder_names)) != len(self.placeholder_names):
                raise ManifestError("placeholder_names must be distinct")
            if set(self.placeholder_names) != set(found):
                raise ManifestError(
                    f"placeholder_names {sorted(self.placeholder_names)} do not match template {sorted(found)}"
                )

    def render(self, values: Mapping[str, str]) -> str:
        """Literal substitution; braces inside values are never interpreted."""
        missing = set(self.placeholder_names) - set(values)
        if missing:
            raise ManifestError(f"missing values for placeholders {sorted(missing)}")
        return "".join(values[text] if is_ph else text for is_ph, text in _parse_template(self.template))

    def to_tree(self):
        return canonical.tagged(
            "PromptTemplate", template=self.template, placeholder_names=list(self.placeholder_names)
        )

    @classmethod
    def from_tree(cls, node) -> PromptTemplate:
        node = canonical.expect(node, "PromptTemplate")
        return cls(node["template"], tuple(node["placeholder_names"]))


@dataclass(frozen=True)
class PartyInput:
    party_id: str
    placeholder: str
    constraint: ConstraintSpec


@dataclass(frozen=True)
class ComputationManifest:
    model: ModelSpec
    prompt: PromptTemplate
    party_inputs: tuple[PartyInput, ...]
    output: OutputGrammar
    flow_policy: FlowPolicy | None = None
    nonce: bytes = field(default_factory=lambda: os.urandom(16))
    retry_limit: int = 2
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        object.__setattr__(self, "party_inputs", tuple(self.party_inputs))
        if self.flow_policy is None:
            object.__setattr__(self, "flow_policy", default_policy(self.party_ids))
        self.validate()

    @property
    def party_ids(self) -> tuple[str, ...]:
        return tuple(p.party_id for p in self.party_inputs)

    def party(self, party_id: str) -> PartyInput:
        for p in self.party_inputs:
            if p.party_id == party_id:
                return p
        raise ManifestError(f"unknown party {party_id!r}")

    def validate(self) -> None:
        ids = self.party_ids
        if len(ids) < 2:
            raise ManifestError(f"a manifest needs at least 2 parties, got {len(ids)}")
        if len(set(ids)) != len(ids):
            raise ManifestError("party_ids must be distinct")
        if any(not p for p in ids):
            raise ManifestError("party_ids must be nonempty")
        placeholders = [p.placeholder for p in self.party_inputs]
        if sorted(placeholders) != sorted(self.prompt.placeholder_names):
            raise ManifestError(
                f"party placeholders {sorted(placeholders)} must be exactly the prompt placeholders "
                f"{sorted(self.prompt.placeholder_names)}"
            )
        if not isinstance(self.retry_limit, int) or self.retry_limit < 0:
            raise ManifestError("retry_limit must be an integer >= 0")
        if not isinstance(self.nonce, bytes) or len(self.nonce) != 16:
            raise ManifestError("nonce must be 16 bytes")
        if set(self.flow_policy.parties) != set(ids):
            raise ManifestError("flow policy parties differ from manifest parties")
        if self.version != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {self.version}")

    def to_tree(self):
        return canonical.tagged(
            "ComputationManifest",
            version=self.version,
            model=self.model.to_tree(),
            prompt=self.prompt.to_tree(),
            party_inputs=[
                canonical.tagged(
                    "PartyInput", party_id=p.party_id, placeholder=p.placeholder, constraint=p.constraint.to_tree()
                )
                for p in self.party_inputs
            ],
            output=self.output.to_tree(),
            flow_policy=self.flow_policy.to_tree(),
            nonce=self.nonce.hex(),
            retry_limit=self.retry_limit,
        )

    @classmethod
    def from_tree(cls, node) -> ComputationManifest:
        node = canonical.expect(node, "ComputationManifest")
        try:
            return cls(
                version=node["version"],
                model=ModelSpec.from_tree(node["model"]),
                prompt=PromptTemplate.from_tree(node["prompt"]),
                party_inputs=tuple(
                    PartyInput(p["party_id"], p["placeholder"], constraint_from_tree(p["constraint"]))
                    for p in (canonical.expect(x, "PartyInput") for x in node["party_inputs"])
                ),
                output=grammar_from_tree(node["output"]),
                flow_policy=FlowPolicy.from_tree(node["flow_policy"]),
                nonce=bytes.fromhex(node["nonce"]),
                retry_limit=node["retry_limit"],
            )
        except (KeyError, TypeError) as exc:
            raise canonical.EncodingError(f"malformed manifest tree: {exc!r}") from None

    def refreshed(self, **changes) -> ComputationManifest:
        """Copy with changes and a fresh nonce; prior approvals no longer apply."""
        changes.setdefault("nonce", os.urandom(16))
        return replace(self, **changes)


def canonical_encode(manifest: ComputationManifest) -> bytes:
    manifest.validate()
    return canonical.dumps(manifest.to_tree())


def decode(data: bytes) -> ComputationManifest:
    return ComputationManifest.from_tree(canonical.loads(data))


def digest(manifest: ComputationManifest) -> bytes:
    return hashlib.sha256(canonical_encode(manifest)).digest()


@dataclass(frozen=True)
class PartyApproval:
    party_id: str
    manifest_digest: bytes
    signature: bytes

    def to_tree(self):
        return canonical.tagged(
            "PartyApproval",
            party_id=self.party_id,
            manifest_digest=self.manifest_digest.hex(),
            signature=self.signature.hex(),
        )

    @classmethod
    def from_tree(cls, node) -> PartyApproval:
        node = canonical.expect(node, "PartyApproval")
        return cls(node["party_id"], bytes.fromhex(node["manifest_digest"]), bytes.fromhex(node["signature"]))

    def encode(self) -> bytes:
        return canonical.dumps(self.to_tree())

    @classmethod
    def decode(cls, data: bytes) -> PartyApproval:
        return cls.from_tree(canonical.loads(data))


def generate_signing_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def load_public_key(key) -> Ed25519PublicKey:
    if isinstance(key, Ed25519PublicKey):
        return key
    if isinstance(key, str):
        key = bytes.fromhex(key)
    return Ed25519PublicKey.from_public_bytes(key)


def approve(manifest: ComputationManifest, party_id: str, signing_key: Ed25519PrivateKey) -> PartyApproval:
    if party_id not in manifest.party_ids:
        raise ApprovalError(f"party {party_id!r} is not listed in the manifest")
    d = digest(manifest)
    return PartyApproval(party_id, d, signing_key.sign(d))


def verify_approval(approval: PartyApproval, manifest_digest: bytes, public_key) -> bool:
    if len(approval.signature) != SIGNATURE_SIZE:
        raise ApprovalError(f"malformed signature: expected {SIGNATURE_SIZE} bytes, got {len(approval.signature)}")
    if approval.manifest_digest != manifest_digest:
        return False
    try:
        load_public_key(public_key).verify(approval.signature, manifest_digest)
    except InvalidSignature:
        return False
    return True


def verify_approvals(
    manifest: ComputationManifest,
    approvals: Sequence[PartyApproval],
    party_registry: Mapping[str, object],
) -> bool:
    """True iff every listed party has a valid approval of this exact manifest."""
    d = digest(manifest)
    approved = set()
    for approval in approvals:
        key = party_registry.get(approval.party_id)
        if key is None or approval.party_id not in manifest.party_ids:
            continue
        if verify_approval(approval, d, key):
            approved.add(approval.party_id)
    return approved >= set(manifest.party_ids)
