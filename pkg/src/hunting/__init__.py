"""Hunting between a load tap changer pair and two smart inverters.

The package models a two-node distribution feeder where a substation
LTC, a branch LTC and two volt-var inverters all react to the same
deadband violations. It simulates the discrete-time hybrid automaton,
builds the state-space partitions used to reason about oscillations,
evaluates the closed-form basis and growth conditions, and sweeps
device delays to find where hunting can no longer start.
"""

from .model import (
    CouplingMatrix,
    DeadbandSignal,
    StabilityClass,
    SystemParams,
    VoltagePair,
    closed_loop_class,
    deadband_signal,
    delta_v_inv,
    inverter_step,
    ltc_tap,
)
from .automaton import (
    FullState,
    Mode,
    OscillationEvent,
    Outcome,
    OutcomeKind,
    Trajectory,
    classify_outcome,
    detect_sequences,
    guard_eval,
    simulate,
    step,
)

__all__ = [
    "CouplingMatrix",
    "DeadbandSignal",
    "FullState",
    "Mode",
    "OscillationEvent",
    "Outcome",
    "OutcomeKind",
    "StabilityClass",
    "SystemParams",
    "Trajectory",
    "VoltagePair",
    "classify_outcome",
    "closed_loop_class",
    "deadband_signal",
    "delta_v_inv",
    "detect_sequences",
    "guard_eval",
    "inverter_step",
    "ltc_tap",
    "simulate",
    "step",
]
