"""Canonical tree encoding shared by manifests, approvals and session results.

Objects are lowered to a tree of dicts/lists/str/int/float/bool/None. Typed
nodes carry a ``"$type"`` tag. The byte form is UTF-8 JSON with sorted keys and
no insignificant whitespace, so equal trees always produce equal bytes.
"""

from __future__ import annotations

import json
import math
from typing import Any

TYPE_KEY = "$type"


class EncodingError(ValueError):
    pass


def _check(node: Any, path: str = "$") -> None:
    if node is None or isinstance(node, (bool, int, str)):
        return
    if isinstance(node, float):
        if not math.isfinite(node):
            raise EncodingError(f"{path}: non-finite float")
        return
    if isinstance(node, list):
        for i, item in enumerate(node):
            _check(item, f"{path}[{i}]")
        return
    if isinstance(node, dict):
        for key, value in node.items():
            if not isinstance(key, str):
                raise EncodingError(f"{path}: non-string key {key!r}")
            _check(value, f"{path}.{key}")
        return
    raise EncodingError(f"{path}: unsupported node type {type(node).__name__}")


def dumps(tree: Any) -> bytes:
    _check(tree)
    return json.dumps(
        tree, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def loads(data: bytes) -> Any:
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EncodingError(f"malformed canonical bytes: {exc}") from None


def tagged(type_name: str, **fields: Any) -> dict[str, Any]:
    node = {TYPE_KEY: type_name}
    node.update(fields)
    return node


def expect(node: Any, type_name: str) -> dict[str, Any]:
    if not isinstance(node, dict) or node.get(TYPE_KEY) != type_name:
        found = node.get(TYPE_KEY) if isinstance(node, dict) else type(node).__name__
        raise EncodingError(f"expected {type_name} node, found {found!r}")
    return node
