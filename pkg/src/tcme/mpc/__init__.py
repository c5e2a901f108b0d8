"""Garbled-circuit two-party computation baseline (desk-scale, not hardened)."""

from .circuit import (
    BooleanCircuit,
    CircuitBuilder,
    CircuitError,
    Gate,
    bits_to_int,
    build_comparator_circuit,
    build_overlap_circuit,
    int_to_bits,
)
from .cost import CostReport, cost_report, linear_fit, reports_csv, run_two_party
from .garble import (
    CIPHERTEXT_SIZE,
    CorruptionError,
    DecodeMap,
    GarbledCircuit,
    InputLabels,
    decode,
    evaluate,
    garble,
    open_row,
    pointer,
)
from .ot import OTError, OTReceiver, OTSender, ot_choose

__all__ = [
    "CIPHERTEXT_SIZE",
    "BooleanCircuit",
    "CircuitBuilder",
    "CircuitError",
    "CorruptionError",
    "CostReport",
    "DecodeMap",
    "GarbledCircuit",
    "Gate",
    "InputLabels",
    "OTError",
    "OTReceiver",
    "OTSender",
    "bits_to_int",
    "build_comparator_circuit",
    "build_overlap_circuit",
    "cost_report",
    "decode",
    "evaluate",
    "garble",
    "int_to_bits",
    "linear_fit",
    "open_row",
    "ot_choose",
    "pointer",
    "reports_csv",
    "run_two_party",
]
