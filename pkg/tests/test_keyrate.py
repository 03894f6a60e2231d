import math

import numpy as np
import pytest

from muteqkd.keyrate import (DecoyParams, Scenario, binary_entropy,
                             channel_efficiency, coherent_gain,
                             cutoff_distance, decoy_bounds, detect_prob,
                             evaluate, ideal_attack_gain,
                             ideal_attack_vacuum_error, keyrate_curve,
                             leakage_gain, overall_qber,
                             practical_attack_gain,
                             practical_attack_vacuum_error, secret_key_rate,
                             curve_to_csv)

P = DecoyParams()
REL = 1e-12


# ------------------------------------------------------------ closed forms

def test_binary_entropy_values():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    x = 0.11
    ref = -x * math.log2(x) - (1 - x) * math.log2(1 - x)
    assert binary_entropy(x) == pytest.approx(ref, rel=REL)
    assert round(ref, 5) == 0.49992
    with pytest.raises(ValueError):
        binary_entropy(1.2)


def test_detect_prob():
    assert detect_prob(0, 0.206) == 0.0
    assert detect_prob(1, 0.206) == pytest.approx(0.206, rel=REL)
    ref = 1.0 - (1.0 - 0.206) ** 300
    assert detect_prob(300, 0.206) == pytest.approx(ref, rel=REL)
    assert detect_prob(300, 0.206) <= 1.0


def test_coherent_gain():
    assert coherent_gain(0.0, 0.206) == 0.0
    ref = 1.0 - math.exp(-0.206 * 0.6)
    assert coherent_gain(0.6, 0.206) == pytest.approx(ref, rel=REL)
    assert ref == pytest.approx(0.116267, abs=5e-6)
    # monotone in both arguments
    assert coherent_gain(0.7, 0.206) > coherent_gain(0.6, 0.206)
    assert coherent_gain(0.6, 0.21) > coherent_gain(0.6, 0.206)


def test_ideal_attack_gain():
    assert ideal_attack_gain(0.0, 0.0, 0.0) == 0.0
    qa = coherent_gain(0.6, 0.206)
    ref = 0.25 * 3.2e-8 + 0.25 * qa + 0.5 * 1.34e-7
    assert ideal_attack_gain(qa, 3.2e-8, 1.34e-7) == pytest.approx(ref, rel=REL)
    assert ref == pytest.approx(0.25 * qa + 7.5e-8, rel=1e-9)
    # saturation exposes the 1/4 structure
    assert ideal_attack_gain(1.0, 0.0, 0.0) == 0.25


def test_ideal_attack_vacuum_error():
    assert ideal_attack_vacuum_error(0.0, 0.0) == 0.0
    ref = 0.25 * 3.2e-8 + 0.75 * 1.34e-7
    assert ideal_attack_vacuum_error(3.2e-8, 1.34e-7) == pytest.approx(ref, rel=REL)
    assert ref == pytest.approx(1.085e-7, rel=1e-3)
    # linear in both arguments
    assert ideal_attack_vacuum_error(6.4e-8, 2.68e-7) == pytest.approx(2 * ref, rel=REL)


def test_overall_qber():
    assert overall_qber(0.0, 0.0, 0.5, 0.5) == 0.0
    # vacuum-only case keeps the residual structure (clamped to <= 1:
    # the error numerator counts both detectors' residuals while the
    # gain keeps only half the afterpulse term, so the raw ratio
    # exceeds one and the contract clamps it)
    e0y0 = ideal_attack_vacuum_error(3.2e-8, 1.34e-7)
    q0 = ideal_attack_gain(0.0, 3.2e-8, 1.34e-7)
    assert e0y0 / q0 > 1.0
    assert overall_qber(e0y0, 0.01, 0.0, q0) == 1.0
    assert overall_qber(e0y0, 0.0, 0.0, 1.0) == pytest.approx(e0y0, rel=REL)
    qa = coherent_gain(0.6, 0.206)
    qmu = ideal_attack_gain(qa, 3.2e-8, 1.34e-7)
    e = overall_qber(e0y0, 0.01, qa, qmu)
    assert e == pytest.approx((e0y0 + 0.01 * qa) / qmu, rel=REL)
    assert e == pytest.approx(0.04001, abs=5e-5)


def test_leakage_gain():
    assert leakage_gain(0.0, 0.206) == 0.0
    ref = 1.0 - math.exp(-0.015 * 0.206)
    assert leakage_gain(0.015, 0.206) == pytest.approx(ref, rel=REL)
    assert ref == pytest.approx(3.0852e-3, rel=1e-4)
    assert leakage_gain(0.015, 0.206) < 0.015 * 0.206


def test_practical_attack_gain():
    qa = coherent_gain(0.6, 0.206)
    qe = leakage_gain(0.015, 0.206)
    ref = 0.25 * 3.2e-8 + 0.25 * (qa + qe - qa * qe) + 0.5 * 1.34e-7
    got = practical_attack_gain(qa, qe, 3.2e-8, 1.34e-7)
    assert got == pytest.approx(ref, rel=REL)
    assert got == pytest.approx(2.97484e-2, rel=1e-4)
    # absorption at Q_A = 1
    assert practical_attack_gain(1.0, qe, 3.2e-8, 1.34e-7) == pytest.approx(
        0.25 * 3.2e-8 + 0.25 + 0.5 * 1.34e-7, rel=REL)


def test_practical_attack_vacuum_error():
    qe = leakage_gain(0.015, 0.206)
    ref = 0.25 * 3.2e-8 + 0.25 * (1.34e-7 + qe - 1.34e-7 * qe) + 0.5 * 1.34e-7
    got = practical_attack_vacuum_error(qe, 3.2e-8, 1.34e-7)
    assert got == pytest.approx(ref, rel=REL)
    assert got == pytest.approx(7.7146e-4, rel=1e-4)
    assert practical_attack_vacuum_error(2 * qe, 3.2e-8, 1.34e-7) > got


def test_consistency_identities():
    """Leakage forms reduce to the ideal forms at Q_E = 0 (1e-15 rel)."""
    for qa in (0.0, 0.03, 0.116, 0.9):
        a = practical_attack_gain(qa, 0.0, 3.2e-8, 1.34e-7)
        b = ideal_attack_gain(qa, 3.2e-8, 1.34e-7)
        assert abs(a - b) <= 1e-15 * max(abs(a), abs(b))
    a = practical_attack_vacuum_error(0.0, 3.2e-8, 1.34e-7)
    b = ideal_attack_vacuum_error(3.2e-8, 1.34e-7)
    assert abs(a - b) <= 1e-15 * abs(b)


# ------------------------------------------------------------ decoy bounds

def test_decoy_bounds_noiseless():
    """eta = 1, no noise: Y1 bound is valid (<= 1) and e1 = 0."""
    q = {k: 1.0 - math.exp(-lam) for k, lam in
         (("mu", P.mu), ("nu1", P.nu1), ("nu2", P.nu2))}
    y1, q1, e1 = decoy_bounds(q["mu"], q["nu1"], q["nu2"], 0, 0, 0, 0.0, P)
    assert 0 < y1 <= 1.0
    assert e1 == 0.0
    assert q1 == pytest.approx(y1 * P.mu * math.exp(-P.mu), rel=REL)


@pytest.mark.parametrize("eta", [0.1, 0.5, 0.9])
def test_decoy_bounds_synthetic_channel(eta):
    """Brute-force Poisson-sum oracle: Y_i = 1-(1-eta)^i, Y1L <= eta."""
    def gain(lam):
        total = 0.0
        for i in range(1, 200):
            log_p = -lam + i * math.log(lam) - math.lgamma(i + 1)
            total += math.exp(log_p) * (1.0 - (1.0 - eta) ** i)
        return total
    q = [gain(lam) for lam in (P.mu, P.nu1, P.nu2)]
    y1, _, _ = decoy_bounds(q[0], q[1], q[2], 0, 0, 0, 0.0, P)
    assert y1 <= eta + 1e-12
    assert y1 > 0.9 * eta   # the two-decoy bound is tight for these params


def test_decoy_bounds_nonpositive_y1():
    # gains rigged so the bracket goes negative -> clamped to zero, e1 -> 1
    y1, q1, e1 = decoy_bounds(0.9, 1e-9, 1e-9, 0.5, 0.5, 0.5, 0.0, P)
    assert y1 == 0.0 and q1 == 0.0 and e1 == 1.0


def test_e1_upper_bounds_true_error():
    """e1U >= the true single-photon error in a synthetic channel."""
    eta, e1_true, y0 = 0.2, 0.02, 1e-6
    def gain_err(lam):
        qs, es = y0, 0.5 * y0
        for i in range(1, 200):
            p_i = math.exp(-lam + i * math.log(lam) - math.lgamma(i + 1))
            yi = 1.0 - (1.0 - eta) ** i
            qs += p_i * yi
            es += p_i * yi * e1_true
        return qs, es / qs
    obs = {k: gain_err(lam) for k, lam in
           (("mu", P.mu), ("nu1", P.nu1), ("nu2", P.nu2))}
    y1, _, e1u = decoy_bounds(obs["mu"][0], obs["nu1"][0], obs["nu2"][0],
                              obs["mu"][1], obs["nu1"][1], obs["nu2"][1], y0, P)
    assert e1u >= e1_true


# ------------------------------------------------------------- key rate

def test_secret_key_rate_limits():
    assert secret_key_rate(0.5, 0.1, 0.03, 1.16, 0.0, 0.0) == 0.0
    q1 = 0.05
    assert secret_key_rate(0.5, 0.1, 0.0, 1.16, q1, 0.0) == pytest.approx(
        0.5 * q1, rel=REL)
    # no key at or past 50% error, even where entropy turns around
    assert secret_key_rate(1.0, 0.1, 0.6, 1.16, 0.05, 0.0) == 0.0
    assert secret_key_rate(1.0, 0.1, 0.01, 1.16, 0.05, 0.55) == 0.0


def test_ratio_at_short_distance():
    r_no = float(np.atleast_1d(evaluate(Scenario.NO_ATTACK, P, 5.0)[-1])[0])
    r_id = float(np.atleast_1d(evaluate(Scenario.IDEAL_ATTACK, P, 5.0)[-1])[0])
    assert r_id / r_no == pytest.approx(0.5, abs=0.05)


def test_curves_monotone_and_ordered():
    d = np.arange(0.0, 400.5, 0.5)
    rates = {}
    for s in Scenario:
        r = np.atleast_1d(evaluate(s, P, d)[-1])
        assert np.all(np.diff(r) <= 1e-15), f"{s} not nonincreasing"
        assert np.all(r >= 0.0)
        rates[s] = r
    assert np.all(rates[Scenario.PRACTICAL_ATTACK]
                  <= rates[Scenario.IDEAL_ATTACK] + 1e-18)


def test_cutoff_extension():
    no = cutoff_distance(Scenario.NO_ATTACK, P)
    ideal = cutoff_distance(Scenario.IDEAL_ATTACK, P)
    assert ideal > no
    assert 20.0 <= ideal - no <= 55.0


def test_outputs_in_unit_range():
    d = np.arange(0.0, 300.0, 7.0)
    for s in Scenario:
        q_tot, e_tot, y1, q1, e1, r = evaluate(s, P, d)
        for k in ("mu", "nu1", "nu2"):
            assert np.all((0 <= q_tot[k]) & (q_tot[k] <= 1))
            assert np.all((0 <= e_tot[k]) & (e_tot[k] <= 1))
        assert np.all((0 <= y1) & (y1 <= 1))
        assert np.all((0 <= e1) & (e1 <= 1))
        assert np.all((0 <= r) & (r <= P.q_for(s)))
        assert np.all(q1 <= np.atleast_1d(q_tot["mu"]) + 1e-15)


def test_residual_scaling_never_hurts():
    """Scaling {Y01, Y02, p_dark} down by k <= 1 never decreases R."""
    d = np.arange(0.0, 300.0, 10.0)
    for s in Scenario:
        base = np.atleast_1d(evaluate(s, P, d)[-1])
        for k in (0.5, 0.1, 0.0):
            scaled = DecoyParams(y01=P.y01 * k, y02=P.y02 * k,
                                 dark_count_prob=P.dark_count_prob * k)
            r = np.atleast_1d(evaluate(s, scaled, d)[-1])
            assert np.all(r >= base - 1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        DecoyParams(mu=0.1, nu1=0.1)
    with pytest.raises(ValueError):
        DecoyParams(f=0.9)


def test_keyrate_curve_and_csv():
    pts = keyrate_curve(Scenario.NO_ATTACK, P, [0.0, 100.0, 300.0])
    assert [p.distance_km for p in pts] == [0.0, 100.0, 300.0]
    assert pts[0].rate > pts[1].rate > 0.0
    assert pts[2].rate == 0.0
    csv_text = curve_to_csv(pts)
    lines = csv_text.splitlines()
    assert lines[0] == "distance_km,scenario,Q_mu,E_mu,Y1_lower,e1_upper,R"
    assert len(lines) == 4
    assert lines[1].startswith("0,no_attack,")
