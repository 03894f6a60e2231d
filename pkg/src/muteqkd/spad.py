"""Gated single-photon avalanche detector with a width discriminator.

The detector runs at 1 GHz gating. An avalanche whose detected photon
number reaches ``wide_threshold`` is classified *wide* and discarded by
the discriminator logic: no click is registered, but the avalanche
still burns the dead time, charges an afterpulse that can fire on the
first live gate after dead time, and may leave a tail pulse one gate
later. Driving a detector with a pulse train whose period matches the
dead time therefore mutes it almost completely.

The discriminator's analog thresholds (78 mV amplitude, 2.46 ns width)
are abstracted into the detected-photon-count threshold; the threshold
and the afterpulse/tail parameters are calibrated against measured
count-rate targets (see scripts/calibrate_spad.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

import numpy as np

from . import _kernel


@dataclass(frozen=True)
class SpadConfig:
    """Static detector parameters.

    Defaults are the measured detector values plus the calibrated
    discriminator/afterpulse model (fit by scripts/calibrate_spad.py
    to the 134 Hz / 32 Hz muted-floor targets and the recovery region).
    """

    gate_frequency: float = 1e9
    dead_time_gates: int = 23
    detection_efficiency: float = 0.206
    dark_count_prob: float = 1.5e-7
    wide_threshold: int = 10
    afterpulse_base: float = 3.0934e-5  # p0 in p_ap(n) = p0*ln(1 + n/N0)
    afterpulse_scale: float = 5000.0    # N0
    tail_prob: float = 1.2e-7

    def __post_init__(self):
        if self.dead_time_gates < 0:
            raise ValueError("dead_time_gates must be nonnegative")
        if not 0.0 <= self.detection_efficiency <= 1.0:
            raise ValueError("detection_efficiency must be in [0, 1]")
        if not 0.0 <= self.dark_count_prob <= 1.0:
            raise ValueError("dark_count_prob must be in [0, 1]")
        if self.wide_threshold < 2:
            raise ValueError("wide_threshold must be >= 2")


class GateOutcome(Enum):
    SILENT = "silent"
    CLICK = "click"
    MUTED_WIDE = "muted_wide_avalanche"


#: ClickRecord.cause values, in CSV order.
CAUSES = ("photon", "dark", "afterpulse", "tail")


@dataclass
class ClickRecord:
    gate: int
    detector: int
    cause: str
    phase: int


@dataclass
class SpadState:
    """Dynamic per-detector state advanced gate by gate."""

    dead_until: int = 0          # first gate index at which the SPAD is live again
    pending_afterpulse: float = 0.0
    tail_due: int = -1           # gate index of a scheduled tail click, -1 if none
    last_gate: int = -1


def afterpulse_probability(n_detected: int, cfg: SpadConfig) -> float:
    """Afterpulse probability after a wide avalanche of n detected photons.

    Logarithmic growth with avalanche charge: p_ap(n) = min(1, p0*ln(1 + n/N0)).
    """
    if n_detected < 0:
        raise ValueError("n_detected must be nonnegative")
    if n_detected == 0:
        return 0.0
    return min(1.0, cfg.afterpulse_base * np.log1p(n_detected / cfg.afterpulse_scale))


def step_gate(state: SpadState, cfg: SpadConfig, incident_photons: int, gate: int,
              rng: np.random.Generator, detector: int = 0,
              period: int = 1) -> tuple[GateOutcome, SpadState, Optional[ClickRecord]]:
    """Advance one detector by a single gate.

    Gate indices must be strictly increasing across calls; the reference
    usage steps every gate, so pending afterpulse/tail outcomes resolve
    at the gates where they physically occur.
    """
    if gate <= state.last_gate:
        raise ValueError(f"gate indices must be strictly increasing "
                         f"(got {gate} after {state.last_gate})")
    state.last_gate = gate
    phase = gate % period

    # Scheduled tail pulse fires regardless of photon input at its gate.
    if gate == state.tail_due:
        state.tail_due = -1
        state.dead_until = gate + cfg.dead_time_gates + 1
        rec = ClickRecord(gate, detector, "tail", phase)
        return GateOutcome.CLICK, state, rec

    if gate < state.dead_until:
        return GateOutcome.SILENT, state, None

    # First live gate after a wide avalanche: resolve the pending afterpulse.
    if state.pending_afterpulse > 0.0:
        fires = rng.random() < state.pending_afterpulse
        state.pending_afterpulse = 0.0
        if fires:
            state.dead_until = gate + cfg.dead_time_gates + 1
            rec = ClickRecord(gate, detector, "afterpulse", phase)
            return GateOutcome.CLICK, state, rec

    if incident_photons > 0:
        n = int(rng.binomial(incident_photons, cfg.detection_efficiency))
    else:
        n = 0
    dark_seed = rng.random() < cfg.dark_count_prob

    if n >= cfg.wide_threshold:
        # Wide avalanche: filtered by the discriminator, no click.
        state.dead_until = gate + cfg.dead_time_gates + 1
        state.pending_afterpulse = afterpulse_probability(n, cfg)
        if rng.random() < cfg.tail_prob:
            state.tail_due = gate + cfg.dead_time_gates + 2
        return GateOutcome.MUTED_WIDE, state, None

    if n >= 1 or dark_seed:
        state.dead_until = gate + cfg.dead_time_gates + 1
        cause = "photon" if n >= 1 else "dark"
        rec = ClickRecord(gate, detector, cause, phase)
        return GateOutcome.CLICK, state, rec

    return GateOutcome.SILENT, state, None


class Spad:
    """Event-driven wrapper around one detector.

    Equivalent in distribution to calling step_gate on every gate, but
    skips empty stretches: dark counts in photon-free windows are drawn
    from the geometric first-arrival law instead of gate-by-gate
    Bernoulli trials. Clicks are appended to ``records``.
    """

    def __init__(self, cfg: SpadConfig, detector: int, period: int,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.detector = detector
        self.period = period
        self.rng = rng
        self.state = SpadState()
        self.cursor = 0           # next unprocessed gate
        self.records: list[ClickRecord] = []
        self.wide_count = 0
        self.wide_gates: list[int] = []

    def _click(self, gate: int, cause: str):
        self.records.append(ClickRecord(gate, self.detector, cause,
                                        gate % self.period))

    def _advance(self, until: int):
        """Process photon-free gates in [cursor, until)."""
        cfg, st, rng = self.cfg, self.state, self.rng
        dead_span = cfg.dead_time_gates + 1
        c = self.cursor
        while c < until:
            live_start = max(c, st.dead_until)
            # A tail can be scheduled inside another avalanche's dead window;
            # it clicks at its gate regardless.
            if st.tail_due >= c and st.tail_due < min(live_start, until):
                g = st.tail_due
                st.tail_due = -1
                self._click(g, "tail")
                st.dead_until = g + dead_span
                c = g + 1
                continue
            if live_start >= until:
                c = until
                break
            c = live_start
            if st.pending_afterpulse > 0.0:
                fires = rng.random() < st.pending_afterpulse
                st.pending_afterpulse = 0.0
                if fires:
                    self._click(c, "afterpulse")
                    st.dead_until = c + dead_span
                    c += 1
                    continue
            if st.tail_due == c:
                st.tail_due = -1
                self._click(c, "tail")
                st.dead_until = c + dead_span
                c += 1
                continue
            # Dark-only stretch up to the next scheduled event.
            stop = min(until, st.tail_due) if st.tail_due > c else until
            span = stop - c
            if span > 0 and cfg.dark_count_prob > 0.0:
                k = rng.geometric(cfg.dark_count_prob)  # >= 1
                if k <= span:
                    g = c + k - 1
                    self._click(g, "dark")
                    st.dead_until = g + dead_span
                    c = g + 1
                    continue
            c = stop
        self.cursor = c
        st.last_gate = c - 1

    def pulse(self, gate: int, incident_photons: int) -> GateOutcome:
        """Deliver a photon pulse at the given gate and return its outcome."""
        if gate < self.cursor:
            raise ValueError("pulse gates must be nondecreasing and unvisited")
        self._advance(gate)
        st = self.state
        st.last_gate = gate - 1  # step_gate's monotonicity bookkeeping
        outcome, _, rec = step_gate(st, self.cfg, incident_photons, gate,
                                    self.rng, self.detector, self.period)
        if rec is not None:
            self.records.append(rec)
        if outcome is GateOutcome.MUTED_WIDE:
            self.wide_count += 1
            self.wide_gates.append(gate)
        self.cursor = gate + 1
        return outcome

    def finish(self, n_gates: int):
        """Advance through trailing photon-free gates up to n_gates."""
        self._advance(n_gates)


def run_intensity_sweep(cfg: SpadConfig, photons_per_pulse: Iterable[float],
                        pulse_period_gates: int, duration: float,
                        rng: np.random.Generator,
                        poisson_photons: bool = True,
                        max_workers: Optional[int] = None) -> list[tuple[float, float]]:
    """Click rate of one SPAD under a periodic pulse train, per intensity.

    Each pulse deposits Poisson(photons) photons (or exactly the given
    integer when poisson_photons is False) into one gate every
    pulse_period_gates gates, for ``duration`` seconds of detector time.
    Returns (photons, counts_per_second) pairs. The heavy per-gate loop
    runs in a compiled kernel; intensities are split across processes
    when max_workers allows.
    """
    photons = list(photons_per_pulse)
    n_gates = int(round(duration * cfg.gate_frequency))
    seeds = rng.integers(0, 2**63 - 1, size=len(photons))
    args = [(cfg, lam, pulse_period_gates, n_gates, int(seed), poisson_photons)
            for lam, seed in zip(photons, seeds)]

    if max_workers is not None and max_workers > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            rates = list(pool.map(_sweep_point, args))
    else:
        rates = [_sweep_point(a) for a in args]
    return list(zip(photons, rates))


def _sweep_point(arg) -> float:
    cfg, lam, period, n_gates, seed, poisson = arg
    clicks, _, _ = _kernel.pulse_train(
        n_gates, period, lam, poisson,
        cfg.detection_efficiency, cfg.dark_count_prob, cfg.dead_time_gates,
        cfg.wide_threshold, cfg.afterpulse_base, cfg.afterpulse_scale,
        cfg.tail_prob, seed)
    return float(clicks) / (n_gates / cfg.gate_frequency)


def sweep_phase_histogram(cfg: SpadConfig, photons: float, pulse_period_gates: int,
                          duration: float, seed: int,
                          poisson_photons: bool = True) -> np.ndarray:
    """Phase histogram of clicks from a single-intensity pulse train."""
    n_gates = int(round(duration * cfg.gate_frequency))
    _, _, hist = _kernel.pulse_train(
        n_gates, pulse_period_gates, photons, poisson_photons,
        cfg.detection_efficiency, cfg.dark_count_prob, cfg.dead_time_gates,
        cfg.wide_threshold, cfg.afterpulse_base, cfg.afterpulse_scale,
        cfg.tail_prob, seed)
    return hist


def click_phase_histogram(records: Iterable[ClickRecord], period: int) -> np.ndarray:
    """Histogram of click phases modulo the attack period."""
    if period < 1:
        raise ValueError("period must be >= 1")
    hist = np.zeros(period, dtype=np.int64)
    for rec in records:
        hist[rec.gate % period] += 1
    return hist
