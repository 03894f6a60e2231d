"""Eve's muting schedule and key-inference logic.

Eve injects a bright pulse every ``period_gates`` gates, each pulse in
one of the four BB84 states drawn uniformly at random. Three of Bob's
four detectors receive >= 150 photons and are muted by their width
discriminators; only the detector for the state orthogonal to Eve's
pulse stays live. When Bob announces a click in Eve's basis, Eve knows
the registered bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .optics import ALL_STATES, Basis, PolarizationState


@dataclass(frozen=True)
class AttackPlan:
    """Eve's pulse train. The state sequence is pre-drawn from its own
    seed so the plan is immutable and shareable across workers."""

    period_gates: int = 25
    photons_per_pulse_at_receiver: int = 600
    n_pulses: int = 0
    state_seed: int = 0
    enabled: bool = True
    state_sequence: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.period_gates < 1:
            raise ValueError("period_gates must be >= 1")
        if self.photons_per_pulse_at_receiver < 0:
            raise ValueError("photon budget must be nonnegative")

    @staticmethod
    def make(period_gates: int = 25, photons_per_pulse_at_receiver: int = 600,
             n_pulses: int = 0, state_seed: int = 0,
             enabled: bool = True, dead_time_gates: int = 23) -> "AttackPlan":
        """Draw the per-pulse state sequence and validate against the detector."""
        if enabled and period_gates <= dead_time_gates:
            raise ValueError("attack period must exceed the dead time so the "
                             "train re-mutes each detector as it wakes up")
        rng = np.random.default_rng(state_seed)
        seq = tuple(ALL_STATES[i] for i in rng.integers(0, 4, size=n_pulses))
        return AttackPlan(period_gates, photons_per_pulse_at_receiver,
                          n_pulses, state_seed, enabled, seq)


@dataclass
class InferenceRecord:
    gate: int
    announced_basis: Basis
    eve_state: PolarizationState
    inferred_bit: Union[int, str]  # 0, 1, or "unknown"


def hacking_pulse_at(plan: AttackPlan, gate: int) -> Optional[tuple[int, PolarizationState]]:
    """Eve's pulse at this gate, or None between pulses."""
    if not plan.enabled:
        return None
    if gate % plan.period_gates != 0:
        return None
    idx = gate // plan.period_gates
    if idx >= len(plan.state_sequence):
        raise IndexError(f"pulse index {idx} beyond pre-drawn state sequence")
    return plan.photons_per_pulse_at_receiver, plan.state_sequence[idx]


def infer_bit(announced_basis: Basis, eve_state: PolarizationState) -> Union[int, str]:
    """Eve's bit guess for an announced click.

    A click in Eve's basis can only come from the one detector she left
    live, i.e. the state orthogonal to her pulse; a click announced in
    the other basis gives her nothing (she attributes it to noise).
    """
    if announced_basis != eve_state.basis:
        return "unknown"
    return eve_state.orthogonal.bit
