"""Model backends.

Three kinds share one ``invoke(prompt, params) -> str`` surface:

* :class:`ScriptedBackend` replays a FIFO queue of canned responses.
* :class:`OracleBackend` recognizes the rendered prompt of a registered task
  and computes the exact answer, standing in for a maximally capable model.
* :class:`RemoteBackend` calls a chat-completion style HTTP endpoint.
"""

from __future__ import annotations

import ast
import os
import re
import threading
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterable

import httpx

from . import templates
from .manifest import _parse_template


class BackendError(Exception):
    """Any failure to obtain text from the model."""


class BackendConfigError(BackendError):
    pass


class QueueEmpty(BackendError):
    pass


class UnrecognizedTask(BackendError):
    pass


class RemoteError(BackendError):
    pass


@dataclass(frozen=True)
class InvocationParams:
    max_output_chars: int = 4096
    timeout: float = 30.0

    # pinned; providers that honour it become as reproducible as they can be
    temperature = 0

    def __post_init__(self):
        if self.max_output_chars < 1:
            raise ValueError("max_output_chars must be >= 1")


DEFAULT_PARAMS = InvocationParams()


def invoke(backend, prompt: str, params: InvocationParams = DEFAULT_PARAMS) -> str:
    if not prompt:
        raise ValueError("prompt must be nonempty")
    return backend.invoke(prompt, params)[: params.max_output_chars]


class ScriptedBackend:
    kind = "scripted"

    def __init__(self, responses: Iterable[str] = ()):
        self._queue = deque(responses)
        self.calls = 0

    def push(self, *responses: str) -> None:
        self._queue.extend(responses)

    def invoke(self, prompt: str, params: InvocationParams = DEFAULT_PARAMS) -> str:
        self.calls += 1
        if not self._queue:
            raise QueueEmpty("scripted backend has no responses left")
        return self._queue.popleft()[: params.max_output_chars]


class ConstantBackend(ScriptedBackend):
    """Scripted backend that answers every call with the same text."""

    def __init__(self, response: str):
        super().__init__()
        self.response = response

    def invoke(self, prompt: str, params: InvocationParams = DEFAULT_PARAMS) -> str:
        self.calls += 1
        return self.response[: params.max_output_chars]


# ------------------------------------------------------------------ oracle


def template_matcher(template: str) -> Callable[[str], dict[str, str] | None]:
    """Build a recognizer that inverts literal substitution into ``template``."""
    parts = []
    for is_ph, text in _parse_template(template):
        parts.append(f"(?P<{text}>.*?)" if is_ph else re.escape(text))
    rx = re.compile("".join(parts), re.DOTALL)

    def match(prompt: str):
        m = rx.fullmatch(prompt)
        return m.groupdict() if m else None

    return match


def _literal(text: str) -> Any:
    try:
        return ast.literal_eval(text.strip())
    except (ValueError, SyntaxError):
        return None


def _millionaires(prompt: str):
    m = _match_millionaires(prompt)
    if m is None:
        return None
    try:
        return int(m["A"]), int(m["B"])
    except ValueError:
        return None


def _overlap(prompt: str):
    m = _match_overlap(prompt)
    if m is None:
        return None
    a, b = _literal(m["company_a"]), _literal(m["company_b"])
    if not (isinstance(a, list) and isinstance(b, list) and len(a) == len(b)):
        return None
    return a, b


def _coloring(prompt: str):
    m = _match_coloring(prompt)
    if m is None:
        return None
    adjacency, colors = _literal(m["adjacency"]), _literal(m["coloring"])
    if not (isinstance(adjacency, list) and isinstance(colors, dict)):
        return None
    return adjacency, colors


def _solve_coloring(task) -> str:
    from .experiments import GraphInstance, verify_coloring

    adjacency, colors = task
    graph = GraphInstance.from_matrix(adjacency)
    return "YES" if verify_coloring(graph, colors) else "NO"


_NONCOMP_GROUP = re.compile(r"^Group (\d+) projects:$", re.MULTILINE)


def _noncompetition(prompt: str):
    if not prompt.startswith(templates.NONCOMPETITION_HEADER + "\n"):
        return None
    body = prompt[len(templates.NONCOMPETITION_HEADER) + 1 :]
    heads = list(_NONCOMP_GROUP.finditer(body))
    if len(heads) < 2 or heads[0].start() != 0:
        return None
    groups = []
    for i, head in enumerate(heads):
        end = heads[i + 1].start() if i + 1 < len(heads) else len(body)
        chunk = body[head.end() : end]
        groups.append({line.strip().casefold() for line in chunk.splitlines() if line.strip()})
    return groups


def _solve_noncompetition(groups) -> str:
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            if groups[i] & groups[j]:
                return "YES"
    return "NO"


_match_millionaires = template_matcher(templates.MILLIONAIRES_PROMPT)
_match_overlap = template_matcher(templates.OVERLAP_PROMPT)
_match_coloring = template_matcher(templates.COLORING_PROMPT)

SHIPPED_TASKS = {
    "millionaires": (_millionaires, lambda t: "first" if t[0] > t[1] else "second"),
    "age-overlap": (_overlap, lambda t: str(sum(x * y for x, y in zip(*t)))),
    "coloring": (_coloring, _solve_coloring),
    "noncompetition": (_noncompetition, _solve_noncompetition),
}


class OracleBackend:
    kind = "oracle"

    def __init__(self, tasks: dict | None = None):
        self._tasks: dict[str, tuple[Callable, Callable]] = {}
        self._lock = threading.Lock()
        for name, (recognizer, solver) in (SHIPPED_TASKS if tasks is None else tasks).items():
            self.register_oracle_task(name, recognizer, solver)

    @property
    def task_names(self) -> list[str]:
        return list(self._tasks)

    def register_oracle_task(self, name: str, recognizer: Callable, solver: Callable) -> None:
        with self._lock:
            if name in self._tasks:
                raise ValueError(f"oracle task {name!r} already registered")
            self._tasks[name] = (recognizer, solver)

    def invoke(self, prompt: str, params: InvocationParams = DEFAULT_PARAMS) -> str:
        for recognizer, solver in list(self._tasks.values()):
            instance = recognizer(prompt)
            if instance is not None:
                return solver(instance)[: params.max_output_chars]
        raise UnrecognizedTask("oracle does not recognize this prompt")


def register_oracle_task(backend: OracleBackend, name: str, recognizer: Callable, solver: Callable) -> None:
    backend.register_oracle_task(name, recognizer, solver)


# ------------------------------------------------------------------ remote


def _openai_request(model: str, prompt: str, params: InvocationParams):
    body = {
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
    }
    return "", body


def _openai_response(data) -> str:
    return data["choices"][0]["message"]["content"]


def _gemini_request(model: str, prompt: str, params: InvocationParams):
    body = {
        "contents": [{"role": "user", "parts": [{"text": prompt}]}],
        "generationConfig": {"temperature": params.temperature},
    }
    return f"/models/{model}:generateContent", body


def _gemini_response(data) -> str:
    return "".join(p.get("text", "") for p in data["candidates"][0]["content"]["parts"])


PROVIDERS = {
    "openai": (_openai_request, _openai_response, lambda tok: {"Authorization": f"Bearer {tok}"}),
    "gemini": (_gemini_request, _gemini_response, lambda tok: {"x-goog-api-key": tok}),
}

TOKEN_ENV = "TCME_API_TOKEN"


class RemoteBackend:
    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        provider: str = "openai",
        token_env: str = TOKEN_ENV,
        transport: httpx.BaseTransport | None = None,
    ):
        if provider not in PROVIDERS:
            raise BackendConfigError(f"unknown provider {provider!r}; choose from {sorted(PROVIDERS)}")
        token = os.environ.get(token_env)
        if not token:
            raise BackendConfigError(f"environment variable {token_env} is not set")
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.provider = provider
        self._headers = PROVIDERS[provider][2](token)
        self._transport = transport

    def invoke(self, prompt: str, params: InvocationParams = DEFAULT_PARAMS) -> str:
        build, parse, _ = PROVIDERS[self.provider]
        path, body = build(self.model, prompt, params)
        try:
            with httpx.Client(transport=self._transport, timeout=params.timeout) as client:
                resp = client.post(self.endpoint + path, json=body, headers=self._headers)
                resp.raise_for_status()
                text = parse(resp.json())
        except httpx.TimeoutException as exc:
            raise RemoteError(f"remote backend timed out: {exc}") from None
        except httpx.HTTPError as exc:
            raise RemoteError(f"remote backend HTTP error: {exc}") from None
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise RemoteError(f"unexpected response shape: {exc!r}") from None
        return text[: params.max_output_chars]
