"""Polarization states and the passive-basis-selection receiver.

Bob's receiver is a 50:50 beam splitter feeding two polarizing beam
splitters: one analyzing the Z (H/V) basis, one the X (A/D) basis.
Each PBS output port ends in one gated SPAD, so four detectors total.
Routing is probabilistic per photon, with a finite PBS extinction
ratio leaking a small fraction of photons to the wrong port.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Basis(Enum):
    Z = "Z"  # rectilinear: H/V
    X = "X"  # diagonal: A/D

    def __str__(self):
        return self.value


class PolarizationState(Enum):
    """The four BB84 polarization states."""

    H = "H"
    V = "V"
    A = "A"
    D = "D"

    def __str__(self):
        return self.value

    @property
    def basis(self) -> Basis:
        return Basis.Z if self in (PolarizationState.H, PolarizationState.V) else Basis.X

    @property
    def orthogonal(self) -> "PolarizationState":
        return _ORTHOGONAL[self]

    @property
    def bit(self) -> int:
        """Bit value encoded by this state (H/A -> 0, V/D -> 1)."""
        return 0 if self in (PolarizationState.H, PolarizationState.A) else 1


_ORTHOGONAL = {
    PolarizationState.H: PolarizationState.V,
    PolarizationState.V: PolarizationState.H,
    PolarizationState.A: PolarizationState.D,
    PolarizationState.D: PolarizationState.A,
}

# Fixed detector numbering so logs are reproducible across runs.
DETECTOR_INDEX = {
    PolarizationState.H: 0,
    PolarizationState.V: 1,
    PolarizationState.A: 2,
    PolarizationState.D: 3,
}
STATE_FOR_DETECTOR = {i: s for s, i in DETECTOR_INDEX.items()}
DETECTOR_BASIS = {i: s.basis for s, i in DETECTOR_INDEX.items()}

ALL_STATES = (
    PolarizationState.H,
    PolarizationState.V,
    PolarizationState.A,
    PolarizationState.D,
)


@dataclass(frozen=True)
class ReceiverConfig:
    """Passive receiver layout parameters.

    extinction_ratio_db may be math.inf for an ideal PBS (no leakage).
    """

    splitter_ratio: float = 0.5
    extinction_ratio_db: float = 43.0
    detector_ids: dict = field(default_factory=lambda: dict(DETECTOR_INDEX))

    def __post_init__(self):
        if not 0.0 < self.splitter_ratio < 1.0:
            raise ValueError("splitter_ratio must be in (0, 1)")
        if not self.extinction_ratio_db > 0:
            raise ValueError("extinction_ratio_db must be positive")

    @property
    def leakage(self) -> float:
        """Per-photon wrong-port probability epsilon = 10^(-ER/10)."""
        if np.isinf(self.extinction_ratio_db):
            return 0.0
        return 10.0 ** (-self.extinction_ratio_db / 10.0)


def project_probability(incoming: PolarizationState, measured_basis: Basis,
                        extinction_ratio_db: float) -> tuple[float, float]:
    """(correct-port, wrong-port) probabilities for one photon at a PBS.

    A same-basis photon exits the matching port except for the
    extinction leakage; a conjugate-basis photon splits 50:50.
    """
    if incoming.basis != measured_basis:
        return (0.5, 0.5)
    if np.isinf(extinction_ratio_db):
        return (1.0, 0.0)
    eps = 10.0 ** (-extinction_ratio_db / 10.0)
    return (1.0 - eps, eps)


def route_photons(n_photons: int, state: PolarizationState, cfg: ReceiverConfig,
                  rng: np.random.Generator) -> np.ndarray:
    """Route n photons of one polarization onto the four detectors.

    Returns integer counts indexed by detector id. Each photon
    independently picks the Z branch with probability splitter_ratio,
    then the PBS ports of its branch per project_probability, so the
    output is a multinomial draw that conserves photon number.
    """
    if n_photons < 0:
        raise ValueError("n_photons must be nonnegative")
    counts = np.zeros(4, dtype=np.int64)
    if n_photons == 0:
        return counts

    probs = np.zeros(4)
    for basis, branch_p in ((Basis.Z, cfg.splitter_ratio),
                            (Basis.X, 1.0 - cfg.splitter_ratio)):
        p_named, p_orth = project_probability(state, basis, cfg.extinction_ratio_db)
        if state.basis == basis:
            named, other = state, state.orthogonal
        else:
            # conjugate basis: "named" port choice is arbitrary at 50:50
            named = PolarizationState.A if basis is Basis.X else PolarizationState.H
            other = named.orthogonal
        probs[cfg.detector_ids[named]] += branch_p * p_named
        probs[cfg.detector_ids[other]] += branch_p * p_orth

    return rng.multinomial(n_photons, probs).astype(np.int64)
