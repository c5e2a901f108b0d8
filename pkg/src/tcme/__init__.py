"""Runtime for jointly approved, stateless, flow-controlled model computations,
with a garbled-circuit baseline and a graph-coloring verification experiment."""

__version__ = "0.1.0"
