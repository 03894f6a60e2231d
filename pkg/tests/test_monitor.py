import numpy as np
import pytest

from muteqkd.monitor import (MIN_CLICKS, MonitorReport, analyze,
                             filter_rate_test, periodicity_test,
                             report_to_csv, scan_period)
from muteqkd.spad import ClickRecord, GateOutcome


def make_clicks(gates, period=25):
    return [ClickRecord(int(g), 0, "dark", int(g) % period) for g in gates]


def test_filter_rate_counts_and_flags():
    stream = [GateOutcome.SILENT, GateOutcome.MUTED_WIDE, GateOutcome.CLICK,
              GateOutcome.MUTED_WIDE]
    rate, flag = filter_rate_test(stream, duration=2.0, threshold=0.5)
    assert rate == 1.0 and flag
    rate, flag = filter_rate_test(stream, duration=2.0, threshold=float("inf"))
    assert not flag
    # precomputed-count form
    rate, flag = filter_rate_test(120_000, duration=3e-5, threshold=1e3)
    assert rate == pytest.approx(4e9) and flag


def test_filter_rate_no_attack_baseline():
    rate, flag = filter_rate_test([GateOutcome.CLICK] * 100, 1.0, 1e3)
    assert rate == 0.0 and not flag


def test_filter_rate_duration_validation():
    with pytest.raises(ValueError):
        filter_rate_test(0, 0.0, 1.0)


def test_periodicity_uniform_clicks():
    rng = np.random.default_rng(0)
    clicks = make_clicks(rng.integers(0, 10**8, size=4000))
    p, score, flag = periodicity_test(clicks, 25)
    assert p > 0.001 and not flag


def test_periodicity_attack_signature():
    # afterpulse peak at phase 24, tail peak at phase 0, a few darks
    rng = np.random.default_rng(1)
    gates = [g * 25 + 24 for g in range(700)] + [g * 25 for g in range(250)]
    gates += list(rng.integers(0, 10**6, size=20))
    p, score, flag = periodicity_test(make_clicks(gates), 25)
    assert p < 1e-6 and score >= 0.9 and flag


def test_periodicity_small_sample_guard():
    clicks = make_clicks([0, 25, 50])
    assert len(clicks) < MIN_CLICKS
    p, score, flag = periodicity_test(clicks, 25)
    assert p is None and score is None and not flag


def test_scan_period_recovers_true_period():
    gates = [g * 25 + 24 for g in range(500)] + [g * 25 for g in range(160)]
    period, p, score, flag = scan_period(make_clicks(gates))
    assert period == 25 and flag
    # Bonferroni keeps uniform clicks clean
    rng = np.random.default_rng(2)
    _, p_u, _, flag_u = scan_period(make_clicks(rng.integers(0, 10**8, 3000)))
    assert not flag_u


def test_analyze_excludes_signal_phase():
    """Honest detections at the pulse phase must not raise the alarm."""
    signal = make_clicks([g * 25 for g in range(5000)])
    report = analyze(signal, n_wide=0, duration=1e-4, period=25,
                     wide_rate_threshold=1e3)
    assert not report.alarm
    assert report.n_clicks_tested == 0
    # the same clicks tested raw do look periodic (bench/source-off mode)
    report_raw = analyze(signal, n_wide=0, duration=1e-4, period=25,
                         wide_rate_threshold=1e3, exclude_phase=None)
    assert report_raw.periodicity_flag


def test_analyze_attack_alarm_and_csv():
    residuals = make_clicks([g * 25 + 24 for g in range(200)])
    report = analyze(residuals, n_wide=60_000, duration=5e-4, period=25,
                     wide_rate_threshold=1e3)
    assert report.wide_rate_flag and report.periodicity_flag and report.alarm
    text = report_to_csv(report)
    lines = text.splitlines()
    assert lines[0].startswith("wide_avalanche_rate,")
    assert len(lines) == 2 and lines[1].endswith(",1")
