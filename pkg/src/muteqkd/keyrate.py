"""Closed-form decoy-state BB84 key rates: no attack, ideal muting
attack, and practical muting attack with PBS leakage.

All operations are pure numpy arithmetic and vectorize over distance.
The two-decoy bounds are the standard analytic closed forms (weak +
weaker decoy) for the lower bound on the single-photon yield Y1 and the
upper bound on the single-photon error e1.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np


class Scenario(Enum):
    NO_ATTACK = "no_attack"
    IDEAL_ATTACK = "ideal_attack"
    PRACTICAL_ATTACK = "practical_attack"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class DecoyParams:
    """Protocol and detector parameters for the key-rate formulas.

    The published analysis gives the per-gate residual rates y01 (dark
    counts of a muted detector) and y02 (afterpulse + tail residuals)
    and the PBS leakage mean photon number leak_mean; the decoy
    intensities, error-correction efficiency and fiber loss are
    conventional defaults and configurable.

    Sifting factors: without the attack Alice and Bob agree on the
    basis half the time (q = 1/2); under the muting attack every click
    that survives announcement is in a basis Eve controls, so every
    sifted bit survives (q = 1).
    """

    mu: float = 0.6
    nu1: float = 0.1
    nu2: float = 0.01
    f: float = 1.16
    e_det: float = 0.01
    e0: float = 0.5
    q_no_attack: float = 0.5
    q_attack: float = 1.0
    alpha_db_per_km: float = 0.2
    detector_efficiency: float = 0.206
    y01: float = 3.2e-8
    y02: float = 1.34e-7
    dark_count_prob: float = 1.5e-7
    leak_mean: float = 0.015

    def __post_init__(self):
        if not self.mu > self.nu1 > self.nu2 >= 0:
            raise ValueError("intensities must satisfy mu > nu1 > nu2 >= 0")
        if self.f < 1.0:
            raise ValueError("error-correction efficiency f must be >= 1")
        for name in ("e_det", "e0", "detector_efficiency", "dark_count_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability")

    def q_for(self, scenario: Scenario) -> float:
        return self.q_no_attack if scenario is Scenario.NO_ATTACK else self.q_attack


@dataclass
class KeyRatePoint:
    distance_km: float
    scenario: Scenario
    q_mu: float
    q_nu1: float
    q_nu2: float
    e_mu: float
    e_nu1: float
    e_nu2: float
    y1_lower: float
    q1_lower: float
    e1_upper: float
    rate: float
    diagnostic: str = ""


def binary_entropy(x):
    """H2(x) in bits, with H2(0) = H2(1) = 0 by continuity."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("binary_entropy argument must be in [0, 1]")
    out = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    out[inner] = -xi * np.log2(xi) - (1 - xi) * np.log2(1 - xi)
    return out if out.ndim else float(out)


def detect_prob(i: int, eta_d: float) -> float:
    """Detection probability of an i-photon Fock state: 1 - (1 - eta)^i."""
    if i < 0:
        raise ValueError("photon number must be nonnegative")
    # log-domain for large i so the complement does not underflow to garbage
    return float(-np.expm1(i * np.log1p(-eta_d))) if eta_d < 1.0 else float(i > 0)


def channel_efficiency(params: DecoyParams, distance_km):
    """Overall efficiency eta = eta_D * 10^(-alpha L / 10)."""
    L = np.asarray(distance_km, dtype=float)
    return params.detector_efficiency * 10.0 ** (-params.alpha_db_per_km * L / 10.0)


def coherent_gain(lam, eta):
    """Click probability for a coherent pulse: Q = 1 - exp(-eta*lam)."""
    return -np.expm1(-np.asarray(eta, dtype=float) * lam)


def ideal_attack_gain(q_a, y01, y02):
    """Bob's overall gain under the ideal (zero-leakage) attack.

    Of the four equally likely hacking states, the live detector sees
    Alice's pulse only when her basis matches Eve's and her state is
    the orthogonal one (probability 1/4); the 1/4 y01 and 1/2 y02
    terms are dark and afterpulse/tail residuals of the muted set.
    """
    return 0.25 * y01 + 0.25 * np.asarray(q_a, dtype=float) + 0.5 * y02


def ideal_attack_vacuum_error(y01, y02):
    """Erroneous-click probability from residuals alone (ideal attack)."""
    return 0.25 * y01 + 0.75 * y02


def overall_qber(e0y0, e_det, q_a, q_mu):
    """E = (e0*Y0 + e_det*Q_A) / Q, clamped to [0, 1]."""
    q_mu = np.asarray(q_mu, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(q_mu > 0, (e0y0 + e_det * np.asarray(q_a, dtype=float)) / q_mu, 0.0)
    return np.clip(e, 0.0, 1.0)


def leakage_gain(leak_mean, eta_d):
    """Residual response of the non-muted detector to PBS leakage."""
    return float(-np.expm1(-leak_mean * eta_d))


def practical_attack_gain(q_a, q_e, y01, y02):
    """Overall gain with finite PBS extinction (leakage gain q_e)."""
    q_a = np.asarray(q_a, dtype=float)
    return 0.25 * y01 + 0.25 * (q_a + q_e - q_a * q_e) + 0.5 * y02


def practical_attack_vacuum_error(q_e, y01, y02):
    """Erroneous-click probability with leakage included."""
    return 0.25 * y01 + 0.25 * (y02 + q_e - y02 * q_e) + 0.5 * y02


def decoy_bounds(q_mu, q_nu1, q_nu2, e_mu, e_nu1, e_nu2, y0,
                 params: DecoyParams):
    """Two-decoy analytic bounds (Y1 lower, Q1 lower, e1 upper).

    Y1L = mu/(mu nu1 - mu nu2 - nu1^2 + nu2^2) *
          [Qnu1 e^nu1 - Qnu2 e^nu2 - (nu1^2-nu2^2)/mu^2 (Qmu e^mu - Y0)]
    Q1L = Y1L * mu e^{-mu}
    e1U = (Enu1 Qnu1 e^nu1 - Enu2 Qnu2 e^nu2) / ((nu1-nu2) Y1L)

    Values are clamped to [0, 1]; a nonpositive Y1L yields (0, 0, 1) so
    the caller reports R = 0 with a diagnostic.
    """
    mu, n1, n2 = params.mu, params.nu1, params.nu2
    denom = mu * n1 - mu * n2 - n1 ** 2 + n2 ** 2
    if denom <= 0:
        raise ValueError("decoy intensities give a nonpositive bound denominator")
    q_mu = np.asarray(q_mu, dtype=float)
    y1 = mu / denom * (q_nu1 * np.exp(n1) - q_nu2 * np.exp(n2)
                       - (n1 ** 2 - n2 ** 2) / mu ** 2 * (q_mu * np.exp(mu) - y0))
    y1 = np.clip(y1, 0.0, 1.0)
    q1 = y1 * mu * np.exp(-mu)
    num = e_nu1 * q_nu1 * np.exp(n1) - e_nu2 * q_nu2 * np.exp(n2)
    with np.errstate(divide="ignore", invalid="ignore"):
        e1 = np.where(y1 > 0, num / ((n1 - n2) * y1), 1.0)
    e1 = np.clip(e1, 0.0, 1.0)
    return y1, q1, e1


def secret_key_rate(q, q_mu, e_mu, f, q1_lower, e1_upper):
    """R = max(0, q * (-Q f H2(E) + Q1 (1 - H2(e1)))).

    Past the cutoff both error arguments saturate toward 1/2, where the
    entropy terms turn around and the raw expression would go positive
    again; any point with E >= 1/2 or e1 >= 1/2 carries no key, so it
    is pinned to zero to keep the curve physical.
    """
    e_mu = np.asarray(e_mu, dtype=float)
    e1_upper = np.asarray(e1_upper, dtype=float)
    raw = q * (-np.asarray(q_mu, dtype=float) * f * binary_entropy(np.minimum(e_mu, 0.5))
               + q1_lower * (1.0 - binary_entropy(np.minimum(e1_upper, 0.5))))
    r = np.maximum(raw, 0.0)
    return np.where((e_mu >= 0.5) | (e1_upper >= 0.5), 0.0, r)


def scenario_observables(scenario: Scenario, params: DecoyParams, distance_km):
    """Per-intensity gains/QBERs and the vacuum yield for one scenario.

    Returns (Q, E, Y0) with Q and E dicts over {mu, nu1, nu2}.

    No attack: Q = Y0 + coherent gain, Y0 = 2*p_dark (two detectors per
    sifted basis), errors from darks (e0 Y0) plus misalignment on the
    photon gain.

    Attack scenarios: gains follow the attacked-gain forms with the
    coherent gain in place of Q_A at each intensity. Error terms use
    the residuals of the one live detector's basis: its partner is
    muted, so erroneous residual clicks in the sifted basis come from
    that partner's dark rate (y01/4 per hacking-state choice) plus, in
    the practical case, leakage clicks landing on it (q_e/4); detector
    misalignment applies to the attacked photon gain. Vacuum yield for
    the decoy bounds is twice the vacuum error (e0 = 1/2 convention).
    """
    eta = channel_efficiency(params, distance_km)
    lams = {"mu": params.mu, "nu1": params.nu1, "nu2": params.nu2}
    q_gain = {k: coherent_gain(lam, eta) for k, lam in lams.items()}

    if scenario is Scenario.NO_ATTACK:
        y0 = 2.0 * params.dark_count_prob
        q_tot = {k: y0 + g for k, g in q_gain.items()}
        e_tot = {k: overall_qber(params.e0 * y0, params.e_det, q_gain[k], q_tot[k])
                 for k in lams}
        return q_tot, e_tot, y0

    y01, y02 = params.y01, params.y02
    if scenario is Scenario.IDEAL_ATTACK:
        q_tot = {k: ideal_attack_gain(g, y01, y02) for k, g in q_gain.items()}
        e0y0 = 0.25 * y01
        sig = {k: 0.25 * q_gain[k] for k in lams}
    else:
        q_e = leakage_gain(params.leak_mean, params.detector_efficiency)
        q_tot = {k: practical_attack_gain(g, q_e, y01, y02) for k, g in q_gain.items()}
        e0y0 = 0.25 * y01 + 0.25 * q_e
        sig = {k: 0.25 * (q_gain[k] + q_e - q_gain[k] * q_e) for k in lams}

    # e_det applies to the attacked photon gain, i.e. the sifted signal part
    e_tot = {k: np.clip((e0y0 + params.e_det * sig[k]) / q_tot[k], 0.0, 1.0)
             for k in lams}
    y0 = 2.0 * e0y0
    return q_tot, e_tot, y0


def evaluate(scenario: Scenario, params: DecoyParams, distance_km):
    """Full pipeline at one or many distances; returns arrays."""
    q_tot, e_tot, y0 = scenario_observables(scenario, params, distance_km)
    y1, q1, e1 = decoy_bounds(q_tot["mu"], q_tot["nu1"], q_tot["nu2"],
                              e_tot["mu"], e_tot["nu1"], e_tot["nu2"], y0, params)
    r = secret_key_rate(params.q_for(scenario), q_tot["mu"], e_tot["mu"],
                        params.f, q1, e1)
    return q_tot, e_tot, y1, q1, e1, r


def keyrate_curve(scenario: Scenario, params: DecoyParams,
                  distances_km: Sequence[float]) -> list[KeyRatePoint]:
    dists = np.asarray(list(distances_km), dtype=float)
    q_tot, e_tot, y1, q1, e1, r = evaluate(scenario, params, dists)
    y1 = np.atleast_1d(y1)
    q1 = np.atleast_1d(q1)
    e1 = np.atleast_1d(e1)
    r = np.atleast_1d(r)
    points = []
    for i, L in enumerate(dists):
        diag = ""
        if y1[i] <= 0:
            diag = "Y1 lower bound nonpositive"
        elif e1[i] >= 0.5 or np.atleast_1d(e_tot["mu"])[i] >= 0.5:
            diag = "error rate at or above 1/2"
        points.append(KeyRatePoint(
            float(L), scenario,
            float(np.atleast_1d(q_tot["mu"])[i]),
            float(np.atleast_1d(q_tot["nu1"])[i]),
            float(np.atleast_1d(q_tot["nu2"])[i]),
            float(np.atleast_1d(e_tot["mu"])[i]),
            float(np.atleast_1d(e_tot["nu1"])[i]),
            float(np.atleast_1d(e_tot["nu2"])[i]),
            float(y1[i]), float(q1[i]), float(e1[i]), float(r[i]), diag))
    return points


def cutoff_distance(scenario: Scenario, params: DecoyParams,
                    max_km: float = 400.0, step_km: float = 0.5) -> float:
    """Largest grid distance with R > 0 (the curve is nonincreasing)."""
    dists = np.arange(0.0, max_km + step_km / 2, step_km)
    *_, r = evaluate(scenario, params, dists)
    positive = np.nonzero(np.atleast_1d(r) > 0)[0]
    return float(dists[positive[-1]]) if positive.size else float("nan")


CURVE_CSV_HEADER = ["distance_km", "scenario", "Q_mu", "E_mu",
                    "Y1_lower", "e1_upper", "R"]


def curve_to_csv(points: Iterable[KeyRatePoint]) -> str:
    """CSV export: one row per (distance, scenario)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_CSV_HEADER)
    for p in points:
        w.writerow([f"{p.distance_km:g}", p.scenario.value,
                    f"{p.q_mu:.12e}", f"{p.e_mu:.12e}",
                    f"{p.y1_lower:.12e}", f"{p.e1_upper:.12e}",
                    f"{p.rate:.12e}"])
    return buf.getvalue()
