"""Countermeasure analytics for muting-attack signatures.

Two independent tests:

* filter_rate_test — the width discriminator rejecting avalanches at a
  high rate means someone is deliberately driving the detectors wide;
  honest operation produces essentially none (dark avalanches are
  narrow in this model).
* periodicity_test — residual clicks of a muted detector (afterpulse at
  dead-time expiry, tail one gate later) are locked to the attacker's
  pulse phase, while honest dark counts are uniform over the period.
  A chi-square uniformity test plus a top-two-bin mass score separates
  the two, with a minimum-sample guard against chi-square misuse.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import stats

from .spad import ClickRecord, GateOutcome, click_phase_histogram

#: Minimum clicks before the chi-square verdict is trusted.
MIN_CLICKS = 30

#: Default alarm thresholds.
PVALUE_THRESHOLD = 1e-6
TWO_PEAK_THRESHOLD = 0.5


@dataclass
class MonitorReport:
    wide_avalanche_rate: float         # per second
    wide_rate_threshold: float
    wide_rate_flag: bool
    phase_uniformity_pvalue: Optional[float]   # None when inconclusive
    two_peak_score: Optional[float]
    periodicity_flag: bool
    n_clicks_tested: int
    alarm: bool


def filter_rate_test(outcomes: Iterable, duration: float,
                     threshold: float) -> tuple[float, bool]:
    """Rate of discriminator-filtered (wide) avalanches, flagged above threshold.

    ``outcomes`` may be a GateOutcome stream or a precomputed count.
    """
    if isinstance(outcomes, (int, np.integer)):
        n_wide = int(outcomes)
    else:
        n_wide = sum(1 for o in outcomes if o is GateOutcome.MUTED_WIDE)
    if duration <= 0:
        raise ValueError("duration must be positive")
    rate = n_wide / duration
    return rate, rate > threshold


def periodicity_test(records: Iterable[ClickRecord], period: int
                     ) -> tuple[Optional[float], Optional[float], bool]:
    """Chi-square uniformity + two-peak mass on the click phase histogram.

    Returns (pvalue, two_peak_score, flag); pvalue/score are None when
    fewer than MIN_CLICKS clicks are available (inconclusive, no flag).
    """
    hist = click_phase_histogram(records, period)
    return _test_histogram(hist)


def _test_histogram(hist: np.ndarray) -> tuple[Optional[float], Optional[float], bool]:
    total = int(hist.sum())
    if total < MIN_CLICKS:
        return None, None, False
    _, pvalue = stats.chisquare(hist)
    score = float(np.sort(hist)[-2:].sum() / total)
    flag = pvalue < PVALUE_THRESHOLD and score > TWO_PEAK_THRESHOLD
    return float(pvalue), score, flag


def scan_period(records: list, period_range: range = range(2, 101)
                ) -> tuple[int, Optional[float], Optional[float], bool]:
    """Periodicity test with unknown period: scan candidates, take the
    minimum p-value with Bonferroni correction over the scan width."""
    best = (period_range.start, None, None, False)
    best_p = None
    gates = [r.gate for r in records]
    for period in period_range:
        hist = np.bincount([g % period for g in gates], minlength=period)
        p, score, _ = _test_histogram(np.asarray(hist, dtype=np.int64))
        if p is None:
            continue
        if best_p is None or p < best_p:
            best_p = p
            best = (period, p, score)
    if best_p is None:
        return best[0], None, None, False
    corrected = min(1.0, best_p * len(period_range))
    period, _, score = best
    flag = corrected < PVALUE_THRESHOLD and score > TWO_PEAK_THRESHOLD
    return period, corrected, score, flag


def analyze(records: Iterable[ClickRecord], n_wide: int, duration: float,
            period: int, wide_rate_threshold: float,
            exclude_phase: Optional[int] = 0) -> MonitorReport:
    """Run both tests and assemble the report.

    ``exclude_phase`` drops clicks at the known signal-pulse phase
    before the periodicity test, so honest detections (which are
    naturally locked to Alice's pulse slots) do not masquerade as an
    attack signature; residual afterpulse/tail clicks land elsewhere.
    Pass None to test all clicks (e.g. for source-off bench logs).
    """
    records = list(records)
    rate, rate_flag = filter_rate_test(n_wide, duration, wide_rate_threshold)
    if exclude_phase is not None:
        tested = [r for r in records if r.gate % period != exclude_phase]
    else:
        tested = records
    pvalue, score, per_flag = periodicity_test(tested, period)
    return MonitorReport(
        wide_avalanche_rate=rate,
        wide_rate_threshold=wide_rate_threshold,
        wide_rate_flag=rate_flag,
        phase_uniformity_pvalue=pvalue,
        two_peak_score=score,
        periodicity_flag=per_flag,
        n_clicks_tested=len(tested),
        alarm=rate_flag or per_flag,
    )


REPORT_CSV_HEADER = ["wide_avalanche_rate", "wide_rate_threshold",
                     "wide_rate_flag", "phase_uniformity_pvalue",
                     "two_peak_score", "periodicity_flag",
                     "n_clicks_tested", "alarm"]


def report_to_csv(report: MonitorReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_CSV_HEADER)
    w.writerow([
        f"{report.wide_avalanche_rate:.6e}",
        f"{report.wide_rate_threshold:.6e}",
        int(report.wide_rate_flag),
        "" if report.phase_uniformity_pvalue is None
        else f"{report.phase_uniformity_pvalue:.6e}",
        "" if report.two_peak_score is None else f"{report.two_peak_score:.6f}",
        int(report.periodicity_flag),
        report.n_clicks_tested,
        int(report.alarm),
    ])
    return buf.getvalue()
