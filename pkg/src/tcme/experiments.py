"""Graph 3-coloring verification experiment.

Random graphs are paired with valid or deliberately broken colorings, the
verification prompt is sent through a full session with a YES/NO output
grammar, and predictions are scored against the exact checker.
"""

from __future__ import annotations

import csv
import hashlib
import io
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import templates
from .constraints import AdjacencyMatrix, ColorMap
from .ifc import AuditRegistry
from .manifest import PromptTemplate, approve, digest, generate_signing_key

COLORS = (1, 2, 3)
CSV_HEADER = ["trial", "seed", "n", "edges", "ground_truth", "predicted", "latency_ms"]


@dataclass(frozen=True)
class GraphInstance:
    n: int
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.adjacency) != self.n or any(len(row) != self.n for row in self.adjacency):
            raise ValueError("adjacency must be n x n")
        for i in range(self.n):
            if self.adjacency[i][i]:
                raise ValueError(f"self-loop at node {i}")
            for j in range(i + 1, self.n):
                if self.adjacency[i][j] != self.adjacency[j][i]:
                    raise ValueError(f"adjacency not symmetric at ({i}, {j})")

    @classmethod
    def from_matrix(cls, matrix) -> GraphInstance:
        rows = tuple(tuple(int(x) for x in row) for row in matrix)
        return cls(len(rows), rows)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.n) for j in range(i + 1, self.n) if self.adjacency[i][j]]

    def neighbors(self, u: int) -> list[int]:
        return [v for v in range(self.n) if self.adjacency[u][v]]

    @property
    def density(self) -> float:
        pairs = self.n * (self.n - 1) // 2
        return len(self.edges()) / pairs if pairs else 0.0


def gen_graph(n: int, p: float, rng: np.random.Generator) -> GraphInstance:
    """Erdos-Renyi G(n, p)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    upper = np.triu(rng.random((n, n)) < p, k=1)
    matrix = (upper | upper.T).astype(int)
    return GraphInstance.from_matrix(matrix.tolist())


def _as_mapping(coloring) -> dict[int, int]:
    if isinstance(coloring, Mapping):
        return {int(k): int(v) for k, v in coloring.items()}
    return {int(k): int(v) for k, v in coloring}


def verify_coloring(graph: GraphInstance, coloring) -> bool:
    colors = _as_mapping(coloring)
    missing = [u for u in range(graph.n) if u not in colors]
    if missing:
        raise ValueError(f"coloring is partial: nodes {missing} uncolored")
    return all(colors[u] != colors[v] for u, v in graph.edges())


def gen_valid_coloring(graph: GraphInstance, rng: np.random.Generator) -> dict[int, int] | None:
    """Backtracking search with randomized color order; None iff not 3-colorable."""
    order = sorted(range(graph.n), key=lambda u: -len(graph.neighbors(u)))
    neighbors = [graph.neighbors(u) for u in range(graph.n)]
    colors: dict[int, int] = {}

    def place(k: int) -> bool:
        if k == len(order):
            return True
        u = order[k]
        used = {colors[v] for v in neighbors[u] if v in colors}
        for c in rng.permutation(COLORS):
            c = int(c)
            if c in used:
                continue
            colors[u] = c
            if place(k + 1):
                return True
            del colors[u]
        return False

    return dict(sorted(colors.items())) if place(0) else None


def gen_invalid_coloring(graph: GraphInstance, rng: np.random.Generator) -> dict[int, int]:
    """Recolor one endpoint of a random edge to match its neighbour."""
    edges = graph.edges()
    if not edges:
        raise ValueError("every coloring of an edgeless graph is valid")
    base = gen_valid_coloring(graph, rng)
    if base is None:
        base = {u: int(rng.choice(COLORS)) for u in range(graph.n)}
    u, v = edges[int(rng.integers(len(edges)))]
    if rng.random() < 0.5:
        u, v = v, u
    base[u] = base[v]
    return base


_PROMPT = PromptTemplate(templates.COLORING_PROMPT)


def render_matrix(graph: GraphInstance) -> str:
    return AdjacencyMatrix(max(graph.n, 1)).render(graph.adjacency)


def render_coloring(coloring) -> str:
    return ColorMap(max(len(_as_mapping(coloring)), 1)).render(sorted(_as_mapping(coloring).items()))


def build_verification_prompt(graph: GraphInstance, coloring) -> str:
    return _PROMPT.render({"adjacency": render_matrix(graph), "coloring": render_coloring(coloring)})


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    n: int
    edges: int
    ground_truth: bool
    predicted: bool | None
    latency_ms: float = 0.0

    def csv_row(self) -> list[str]:
        pred = "ABORTED" if self.predicted is None else ("YES" if self.predicted else "NO")
        return [
            str(self.trial),
            str(self.seed),
            str(self.n),
            str(self.edges),
            "YES" if self.ground_truth else "NO",
            pred,
            f"{self.latency_ms:.1f}",
        ]


@dataclass
class ConfusionMatrix:
    """Positive class: the coloring is valid (answer YES)."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @classmethod
    def from_records(cls, records: Sequence[TrialRecord]) -> ConfusionMatrix:
        m = cls()
        for r in records:
            if r.predicted is None:
                continue
            if r.ground_truth and r.predicted:
                m.tp += 1
            elif r.ground_truth:
                m.fn += 1
            elif r.predicted:
                m.fp += 1
            else:
                m.tn += 1
        return m

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float | None:
        return (self.tp + self.tn) / self.total if self.total else None

    @property
    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    def summary(self) -> str:
        def pct(x):
            return "n/a" if x is None else f"{100 * x:.1f}%"

        return (
            "                 predicted YES  predicted NO\n"
            f"actual YES (valid)   {self.tp:>8}  {self.fn:>12}\n"
            f"actual NO (invalid)  {self.fp:>8}  {self.tn:>12}\n"
            f"accuracy {pct(self.accuracy)}  precision {pct(self.precision)}  recall {pct(self.recall)}"
        )


@dataclass
class ExperimentResult:
    matrix: ConfusionMatrix
    records: list[TrialRecord]
    aborted: int = 0
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.records:
            writer.writerow(r.csv_row())
        return buf.getvalue()


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def valid_plan(seed: int, trials: int, balance: float) -> list[bool]:
    """Exactly ``round(balance * trials)`` valid-coloring trials, in seeded random positions."""
    if not 0.0 <= balance <= 1.0:
        raise ValueError("balance must be in [0, 1]")
    k = round(balance * trials)
    order = np.random.default_rng([seed, trials]).permutation(trials)
    return [bool(x < k) for x in order]


def make_trial(seed: int, trial: int, n_range: tuple[int, int], p: float, want_valid: bool):
    """Deterministically sample (seed, graph, coloring, is_valid) for one trial."""
    ts = trial_seed(seed, trial)
    rng = np.random.default_rng(ts)
    while True:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        graph = gen_graph(n, p, rng)
        if want_valid:
            coloring = gen_valid_coloring(graph, rng)
            if coloring is not None:
                break
        elif graph.edges():
            coloring = gen_invalid_coloring(graph, rng)
            break
        # resample: not 3-colorable, or edgeless when an invalid coloring is wanted
    return ts, graph, coloring, verify_coloring(graph, coloring)


class _RateLimiter:
    def __init__(self, rps: float | None):
        self._interval = 1.0 / rps if rps else 0.0
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self._interval:
            return
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next)
            self._next = slot + self._interval
        if slot > now:
            time.sleep(slot - now)


def run_experiment(
    backend,
    trials: int = 1000,
    n_range: tuple[int, int] = (5, 25),
    p: float = 0.1,
    balance: float = 0.5,
    seed: int = 0,
    *,
    workers: int = 1,
    rps: float | None = None,
    via_network: bool = False,
    timer: Callable[[], float] | None = None,
) -> ExperimentResult:
    """Run ``trials`` full sessions of the coloring-verification manifest.

    ``backend`` is either a backend object (shared across trials) or a
    zero-argument factory producing a fresh backend per trial. Latency is
    recorded only for remote backends so that local runs are bit-identical.
    """
    from .session import Session
    from .transport.sim import simulate_session

    factory = backend if not hasattr(backend, "invoke") else (lambda: backend)
    kind = factory().kind
    manifest = templates.coloring(
        max_nodes=max(n_range[1], 1), backend_kind=kind, nonce=hashlib.sha256(f"coloring-experiment-{seed}".encode()).digest()[:16]
    )
    keys = {pid: generate_signing_key() for pid in manifest.party_ids}
    registry = {pid: k.public_key() for pid, k in keys.items()}
    approvals = [approve(manifest, pid, k) for pid, k in keys.items()]
    audit = AuditRegistry()
    limiter = _RateLimiter(rps)
    plan = valid_plan(seed, trials, balance)
    clock = timer or time.perf_counter
    timed = kind == "remote"
    tag = digest(manifest).hex()[:8]

    def one(trial: int) -> TrialRecord:
        ts, graph, coloring, truth = make_trial(seed, trial, n_range, p, plan[trial])
        inputs = {
            "verifier": [list(row) for row in graph.adjacency],
            "prover": {str(k): v for k, v in coloring.items()},
        }
        limiter.wait()
        start = clock()
        if via_network:
            outcome = simulate_session(manifest, approvals, registry, factory(), inputs, seed=ts).result
        else:
            with Session(manifest, factory(), session_id=f"{tag}-{seed}-{trial}", audit_registry=audit) as s:
                for pid, value in inputs.items():
                    s.submit_input(pid, value)
                outcome = s.run()
        latency = (clock() - start) * 1000 if timed else 0.0
        predicted = None if not outcome.released else outcome.output == "YES"
        return TrialRecord(trial, ts, graph.n, len(graph.edges()), truth, predicted, latency)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, range(trials)))
    else:
        records = [one(t) for t in range(trials)]
    aborted = sum(r.predicted is None for r in records)
    return ExperimentResult(ConfusionMatrix.from_records(records), records, aborted)
