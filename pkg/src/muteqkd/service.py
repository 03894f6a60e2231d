"""HTTP service exposing the simulator and analyzers.

The CLI is a thin client of this app; running it in-process through an
ASGI transport keeps command-line runs deterministic and dependency
free, while ``muteqkd serve`` exposes the same API over the network.
All heavy results are returned as CSV strings (the project's only
output format) plus small JSON summaries.
"""

from __future__ import annotations

import io
import os
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__, monitor
from .config import ConfigError, RunConfig, build_config
from .keyrate import (Scenario, curve_to_csv, cutoff_distance, evaluate,
                      keyrate_curve)
from .session import (clicks_to_csv, eve_knowledge_fraction, inferences_to_csv,
                      run_session, tally_to_csv, wide_events_to_csv,
                      INTENSITY_KEYS)
from .spad import ClickRecord, run_intensity_sweep


def _worker_cap() -> Optional[int]:
    raw = os.environ.get("MUTEQKD_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        return None
    return max(1, n)


def _config_from(overrides: Optional[dict]) -> RunConfig:
    flat = {}
    for section, keys in (overrides or {}).items():
        for key, value in keys.items():
            if isinstance(value, list):
                value = tuple(value)
            flat[(section, key)] = value
    try:
        return build_config(flag_overrides=flat)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


# ------------------------------------------------------------------ schemas

class Overrides(BaseModel):
    """Nested {section: {key: value}} config overrides (flags > defaults)."""

    model_config = {"extra": "forbid"}

    spad: dict = Field(default_factory=dict)
    receiver: dict = Field(default_factory=dict)
    source: dict = Field(default_factory=dict)
    channel: dict = Field(default_factory=dict)
    attack: dict = Field(default_factory=dict)
    keyrate: dict = Field(default_factory=dict)
    run: dict = Field(default_factory=dict)


class SweepRequest(BaseModel):
    overrides: Overrides = Field(default_factory=Overrides)
    photons: Optional[list[float]] = None   # default: 0.1-5000, 1 dB steps, plus 0


class SweepRow(BaseModel):
    photons: float
    counts_per_second: float


class SweepResponse(BaseModel):
    rows: list[SweepRow]
    csv: str


class SimulateRequest(BaseModel):
    overrides: Overrides = Field(default_factory=Overrides)


class IntensitySummary(BaseModel):
    gain: float
    qber: float
    sent: int


class SimulateResponse(BaseModel):
    tally_csv: str
    clicks_csv: str
    inference_csv: str
    wide_csv: str
    n_pulses: int
    n_gates: int
    duration_s: float
    n_wide_events: int
    eve_knowledge: Optional[float]
    per_intensity: dict[str, IntensitySummary]


class KeyrateRequest(BaseModel):
    overrides: Overrides = Field(default_factory=Overrides)
    distances_km: Optional[list[float]] = None


class KeyrateResponse(BaseModel):
    csv: str
    cutoffs_km: dict[str, float]
    ratio_ideal_over_no_attack_at_5km: float


class MonitorRequest(BaseModel):
    clicks_csv: str
    wide_csv: Optional[str] = None
    duration_s: Optional[float] = None       # inferred from the last gate if absent
    period_gates: Optional[int] = None
    overrides: Overrides = Field(default_factory=Overrides)


class MonitorResponse(BaseModel):
    report_csv: str
    alarm: bool
    wide_avalanche_rate: float
    wide_rate_flag: bool
    periodicity_flag: bool
    phase_uniformity_pvalue: Optional[float]
    two_peak_score: Optional[float]
    n_clicks_tested: int


# ------------------------------------------------------------------ parsing

def parse_clicks_csv(text: str) -> list[ClickRecord]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "gate,detector,cause,phase":
        raise ValueError("line 1: expected header 'gate,detector,cause,phase'")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            records.append(ClickRecord(int(parts[0]), int(parts[1]), parts[2],
                                       int(parts[3])))
        except ValueError:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    return records


def parse_wide_csv(text: str) -> list[tuple[int, int]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "gate,detector":
        raise ValueError("line 1: expected header 'gate,detector'")
    events = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            events.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValueError(f"line {lineno}: cannot parse {line!r}")
    return events


# -------------------------------------------------------------------- app

app = FastAPI(title="muteqkd", version=__version__)


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


def default_photon_grid() -> list[float]:
    """0 (dark reference) plus 0.1-5000 photons in 1 dB steps."""
    grid = [0.0]
    p = 0.1
    while p <= 5000.0 * 1.0001:
        grid.append(round(p, 6))
        p *= 10 ** 0.1
    return grid


@app.post("/sweep", response_model=SweepResponse)
def sweep(req: SweepRequest) -> SweepResponse:
    cfg = _config_from(req.overrides.model_dump())
    photons = req.photons if req.photons is not None else default_photon_grid()
    rng = np.random.default_rng(cfg.run.seed)
    results = run_intensity_sweep(cfg.spad, photons,
                                  cfg.run.sweep_pulse_period_gates,
                                  cfg.run.sweep_duration, rng,
                                  max_workers=_worker_cap())
    rows = [SweepRow(photons=p, counts_per_second=r) for p, r in results]
    buf = io.StringIO()
    buf.write("photons,counts_per_second\n")
    for row in rows:
        buf.write(f"{row.photons:g},{row.counts_per_second:.6f}\n")
    return SweepResponse(rows=rows, csv=buf.getvalue())


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    cfg = _config_from(req.overrides.model_dump())
    n_pulses = cfg.run.n_pulses
    plan = cfg.attack_plan(n_pulses)
    tally, clicks, inferences = run_session(
        cfg.source, cfg.channel, cfg.effective_receiver(), cfg.spad,
        plan, n_pulses, cfg.run.seed)
    duration = tally.n_gates / cfg.spad.gate_frequency
    per_intensity = {
        k: IntensitySummary(gain=tally.gain(k), qber=tally.qber(k),
                            sent=tally.sent[k])
        for k in INTENSITY_KEYS}
    return SimulateResponse(
        tally_csv=tally_to_csv(tally),
        clicks_csv=clicks_to_csv(clicks),
        inference_csv=inferences_to_csv(inferences),
        wide_csv=wide_events_to_csv(tally),
        n_pulses=tally.n_pulses,
        n_gates=tally.n_gates,
        duration_s=duration,
        n_wide_events=len(tally.wide_events),
        eve_knowledge=eve_knowledge_fraction(tally),
        per_intensity=per_intensity,
    )


@app.post("/keyrate", response_model=KeyrateResponse)
def keyrate(req: KeyrateRequest) -> KeyrateResponse:
    cfg = _config_from(req.overrides.model_dump())
    params = cfg.keyrate
    if req.distances_km is not None:
        dists = list(req.distances_km)
    else:
        dists = list(np.arange(0.0, cfg.run.distance_max_km
                               + cfg.run.distance_step_km / 2,
                               cfg.run.distance_step_km))
    points = []
    for scenario in Scenario:
        points.extend(keyrate_curve(scenario, params, dists))
    cutoffs = {s.value: cutoff_distance(s, params) for s in Scenario}
    r_no = float(np.atleast_1d(evaluate(Scenario.NO_ATTACK, params, 5.0)[-1])[0])
    r_ideal = float(np.atleast_1d(evaluate(Scenario.IDEAL_ATTACK, params, 5.0)[-1])[0])
    ratio = r_ideal / r_no if r_no > 0 else float("nan")
    return KeyrateResponse(csv=curve_to_csv(points), cutoffs_km=cutoffs,
                           ratio_ideal_over_no_attack_at_5km=ratio)


@app.post("/monitor", response_model=MonitorResponse)
def run_monitor(req: MonitorRequest) -> MonitorResponse:
    cfg = _config_from(req.overrides.model_dump())
    try:
        clicks = parse_clicks_csv(req.clicks_csv)
        wides = parse_wide_csv(req.wide_csv) if req.wide_csv else []
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    period = req.period_gates or cfg.source.pulse_period_gates
    if req.duration_s is not None:
        duration = req.duration_s
    else:
        last_gate = max([r.gate for r in clicks] + [g for g, _ in wides],
                        default=0)
        duration = max(last_gate + 1, period) / cfg.spad.gate_frequency
    report = monitor.analyze(clicks, len(wides), duration, period,
                             cfg.run.wide_rate_threshold)
    return MonitorResponse(
        report_csv=monitor.report_to_csv(report),
        alarm=report.alarm,
        wide_avalanche_rate=report.wide_avalanche_rate,
        wide_rate_flag=report.wide_rate_flag,
        periodicity_flag=report.periodicity_flag,
        phase_uniformity_pvalue=report.phase_uniformity_pvalue,
        two_peak_score=report.two_peak_score,
        n_clicks_tested=report.n_clicks_tested,
    )
