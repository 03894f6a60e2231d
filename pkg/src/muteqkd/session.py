"""Event-level Monte Carlo of a decoy-state BB84 exchange.

Alice fires one pulse per ``pulse_period_gates`` gates; every photon
that survives the fiber is routed through Bob's passive receiver onto
the four SPADs together with any hacking photons landing in the same
gate. The four detectors advance through every gate (dark counts and
residual afterpulse/tail clicks included), clicks at signal gates are
announced and sifted, and Eve runs her inference on each announcement
when the attack is on.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attack import AttackPlan, InferenceRecord, infer_bit
from .optics import (ALL_STATES, Basis, DETECTOR_BASIS, ReceiverConfig,
                     STATE_FOR_DETECTOR, route_photons)
from .spad import ClickRecord, GateOutcome, Spad, SpadConfig

INTENSITY_KEYS = ("mu", "nu1", "nu2")


@dataclass(frozen=True)
class SourceConfig:
    """Alice's decoy-state source."""

    mu: float = 0.6
    nu1: float = 0.1
    nu2: float = 0.01
    intensity_probabilities: tuple = (0.7, 0.2, 0.1)
    pulse_period_gates: int = 25
    misalignment: float = 0.01   # probability of emitting the orthogonal state

    def __post_init__(self):
        if not self.mu > self.nu1 > self.nu2 >= 0:
            raise ValueError("intensities must satisfy mu > nu1 > nu2 >= 0")
        probs = np.asarray(self.intensity_probabilities, dtype=float)
        if probs.shape != (3,) or np.any(probs < 0) or probs.sum() <= 0:
            raise ValueError("intensity_probabilities must be three nonnegative "
                             "weights with positive sum")
        if not 0.0 <= self.misalignment <= 1.0:
            raise ValueError("misalignment must be a probability")

    @property
    def intensities(self) -> dict:
        return {"mu": self.mu, "nu1": self.nu1, "nu2": self.nu2}


@dataclass(frozen=True)
class ChannelConfig:
    attenuation_db_per_km: float = 0.2
    distance_km: float = 0.0

    def __post_init__(self):
        if self.distance_km < 0 or self.attenuation_db_per_km < 0:
            raise ValueError("channel parameters must be nonnegative")

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.attenuation_db_per_km * self.distance_km / 10.0)


@dataclass
class SessionTally:
    """Counts accumulated over one session.

    Per-intensity counters are keyed by "mu"/"nu1"/"nu2"; per-basis
    counters by (intensity, basis). ``announced`` counts basis
    announcements (a cross-basis double click yields two); ``sifted``
    and ``errors`` are restricted to announcements in Alice's basis.
    """

    n_pulses: int = 0
    n_gates: int = 0
    sent: Counter = field(default_factory=Counter)
    sent_basis: Counter = field(default_factory=Counter)
    gate_clicked: Counter = field(default_factory=Counter)     # >=1 click at the signal gate
    announced: Counter = field(default_factory=Counter)
    sifted: Counter = field(default_factory=Counter)
    errors: Counter = field(default_factory=Counter)
    cause_counts: Counter = field(default_factory=Counter)
    double_same_basis: int = 0
    cross_basis_doubles: int = 0
    # Eve bookkeeping (attack sessions)
    eve_sifted: int = 0          # sifted announcements seen by Eve
    eve_known: int = 0           # ... for which she inferred a bit
    eve_correct: int = 0         # ... and the bit matches the announced one
    eve_photon_sifted: int = 0   # sifted single-click announcements caused by Alice's photons
    eve_photon_correct: int = 0
    wide_events: list = field(default_factory=list)   # (gate, detector)

    def gain(self, key: str) -> float:
        """Empirical per-pulse click probability for one intensity."""
        return self.gate_clicked[key] / self.sent[key] if self.sent[key] else 0.0

    def qber(self, key: str) -> float:
        s = self.sifted[(key, Basis.Z)] + self.sifted[(key, Basis.X)]
        e = self.errors[(key, Basis.Z)] + self.errors[(key, Basis.X)]
        return e / s if s else 0.0

    def total_sifted(self) -> int:
        return sum(self.sifted.values())


def eve_knowledge_fraction(tally: SessionTally) -> Optional[float]:
    """Correctly inferred sifted bits over all sifted bits (None if none)."""
    if tally.eve_sifted == 0:
        return None
    return tally.eve_correct / tally.eve_sifted


def run_session(source: SourceConfig, channel: ChannelConfig,
                receiver: ReceiverConfig, spad_cfg: SpadConfig,
                plan: Optional[AttackPlan], n_pulses: int, seed: int
                ) -> tuple[SessionTally, list[ClickRecord], list[InferenceRecord]]:
    """Simulate n_pulses signal periods; returns tally + event streams."""
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    period = source.pulse_period_gates
    attack_on = plan is not None and plan.enabled
    if attack_on and plan.period_gates != period:
        raise ValueError("signal and hacking trains must share the pulse period")
    if attack_on and len(plan.state_sequence) < n_pulses:
        plan = AttackPlan.make(plan.period_gates,
                               plan.photons_per_pulse_at_receiver,
                               n_pulses, plan.state_seed, True,
                               spad_cfg.dead_time_gates)

    ss = np.random.SeedSequence(seed)
    rng_alice, rng_route, *spad_seeds = ss.spawn(6)
    rng_alice = np.random.default_rng(rng_alice)
    rng_route = np.random.default_rng(rng_route)
    spads = [Spad(spad_cfg, det, period, np.random.default_rng(s))
             for det, s in zip(range(4), spad_seeds)]

    probs = np.asarray(source.intensity_probabilities, dtype=float)
    probs = probs / probs.sum()
    lam_values = np.array([source.mu, source.nu1, source.nu2])
    t = channel.transmittance

    # Pre-draw Alice's choices for the whole session (vectorized).
    intensity_idx = rng_alice.choice(3, size=n_pulses, p=probs)
    state_idx = rng_alice.integers(0, 4, size=n_pulses)
    flipped = rng_alice.random(n_pulses) < source.misalignment
    emitted_n = rng_alice.poisson(lam_values[intensity_idx])
    survivors = rng_alice.binomial(emitted_n, t) if t < 1.0 else emitted_n

    tally = SessionTally(n_pulses=n_pulses, n_gates=n_pulses * period)
    inferences: list[InferenceRecord] = []
    z_dets = tuple(i for i in range(4) if DETECTOR_BASIS[i] is Basis.Z)
    x_dets = tuple(i for i in range(4) if DETECTOR_BASIS[i] is Basis.X)

    for k in range(n_pulses):
        gate = k * period
        ikey = INTENSITY_KEYS[intensity_idx[k]]
        intended = ALL_STATES[state_idx[k]]
        emitted = intended.orthogonal if flipped[k] else intended
        tally.sent[ikey] += 1
        tally.sent_basis[(ikey, intended.basis)] += 1

        counts = np.zeros(4, dtype=np.int64)
        if survivors[k] > 0:
            counts += route_photons(int(survivors[k]), emitted, receiver, rng_route)
        alice_counts = counts.copy()
        eve_state = None
        if attack_on:
            eve_state = plan.state_sequence[k]
            counts += route_photons(plan.photons_per_pulse_at_receiver,
                                    eve_state, receiver, rng_route)

        click_causes = {}
        for det in range(4):
            outcome = spads[det].pulse(gate, int(counts[det]))
            if outcome is GateOutcome.CLICK:
                click_causes[det] = spads[det].records[-1].cause

        if not click_causes:
            continue
        tally.gate_clicked[ikey] += 1

        announcements = []   # (basis, bit, single_cause or None, detector)
        for basis, dets in ((Basis.Z, z_dets), (Basis.X, x_dets)):
            hit = [d for d in dets if d in click_causes]
            if not hit:
                continue
            if len(hit) == 2:
                bit = int(rng_route.integers(0, 2))
                tally.double_same_basis += 1
                announcements.append((basis, bit, None, None))
            else:
                d = hit[0]
                announcements.append((basis, STATE_FOR_DETECTOR[d].bit,
                                      click_causes[d], d))
        if len(announcements) == 2:
            tally.cross_basis_doubles += 1

        for basis, bit, cause, det in announcements:
            tally.announced[(ikey, basis)] += 1
            is_sifted = basis is intended.basis
            if is_sifted:
                tally.sifted[(ikey, basis)] += 1
                if bit != intended.bit:
                    tally.errors[(ikey, basis)] += 1
            if attack_on:
                guess = infer_bit(basis, eve_state)
                inferences.append(InferenceRecord(gate, basis, eve_state, guess))
                if is_sifted:
                    tally.eve_sifted += 1
                    if guess != "unknown":
                        tally.eve_known += 1
                        if guess == bit:
                            tally.eve_correct += 1
                    # "photon" clicks with no signal photons at the
                    # detector are Eve's own sub-threshold leak-through,
                    # not Alice-caused bits
                    if cause == "photon" and alice_counts[det] > 0:
                        tally.eve_photon_sifted += 1
                        if guess == bit:
                            tally.eve_photon_correct += 1

    n_gates = n_pulses * period
    clicks: list[ClickRecord] = []
    for s in spads:
        s.finish(n_gates)
        clicks.extend(s.records)
        tally.wide_events.extend((g, s.detector) for g in s.wide_gates)
    clicks.sort(key=lambda r: (r.gate, r.detector))
    tally.wide_events.sort()
    for r in clicks:
        tally.cause_counts[r.cause] += 1
    return tally, clicks, inferences


# ---------------------------------------------------------------- CSV export

CLICK_CSV_HEADER = ["gate", "detector", "cause", "phase"]
INFERENCE_CSV_HEADER = ["gate", "announced_basis", "eve_state", "inferred_bit"]
TALLY_CSV_HEADER = ["intensity", "basis", "sent", "announced", "sifted", "errors"]


def clicks_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CLICK_CSV_HEADER)
    for r in records:
        w.writerow([r.gate, r.detector, r.cause, r.phase])
    return buf.getvalue()


def inferences_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INFERENCE_CSV_HEADER)
    for r in records:
        w.writerow([r.gate, r.announced_basis.value, r.eve_state.value,
                    r.inferred_bit])
    return buf.getvalue()


WIDE_CSV_HEADER = ["gate", "detector"]


def wide_events_to_csv(tally: SessionTally) -> str:
    """Discriminator-filtered (wide) avalanches, one row per event."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(WIDE_CSV_HEADER)
    for gate, det in tally.wide_events:
        w.writerow([gate, det])
    return buf.getvalue()


def tally_to_csv(tally: SessionTally) -> str:
    """One row per intensity x basis (Alice-sent vs Bob-announced counts)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TALLY_CSV_HEADER)
    for key in INTENSITY_KEYS:
        for basis in (Basis.Z, Basis.X):
            w.writerow([key, basis.value, tally.sent_basis[(key, basis)],
                        tally.announced[(key, basis)],
                        tally.sifted[(key, basis)],
                        tally.errors[(key, basis)]])
    return buf.getvalue()
