#!/usr/bin/env python3
"""Fit the width-discriminator and afterpulse parameters of SpadConfig.

The discriminator model has four calibration degrees of freedom:

  wide_threshold   detected-photon count at which an avalanche is wide
  afterpulse_base  p0 in p_ap(n) = p0 * ln(1 + n / N0)
  afterpulse_scale N0
  tail_prob        probability of a tail click one gate after dead time

They are fit against the measured count-rate targets of the detector
under the dead-time-matched 40 MHz train (25-gate period at 1 GHz):

  150 photons/pulse -> 134 Hz      (decline region)
  300 photons/pulse ->  32 Hz      (muted floor)
  0 photons         -> 150 Hz      (dark level; fixed by p_dark, not fit)
  >= 3000 photons   -> rate rises  (afterpulse recovery region)

Closed-form rate model per 25-gate cycle, with lambda = photons * eta:

  P(click) ~= P(1 <= N < n_wide) + P(N >= n_wide) * (p_ap(E[N]) + p_tail)
              + p_dark,   N ~ Poisson(lambda)

The direct term dominates at 150 photons and is fixed entirely by
wide_threshold, so the threshold is chosen first as the only value
whose direct rate lands inside the 134 Hz +/- 30% window; p_ap and
p_tail are then solved from the muted-floor target, aiming at the low
side of the 32 Hz window to keep the 150-photon total inside its
ceiling. N0 is left in the near-linear regime (N0 >> detected counts),
which reproduces the qualitative recovery slope of the high-intensity
region; p0 follows from p_ap(300 * eta).

Run with --verify to cross-check the fit against the event simulator.
"""

import argparse

import numpy as np
from scipy import stats

GATE_HZ = 1e9
PERIOD = 25
ETA = 0.206
P_DARK = 1.5e-7
CYCLES_PER_S = GATE_HZ / PERIOD

TARGET_150 = 134.0
TARGET_300 = 32.0
TOLERANCE = 0.30

# Low-side aim for the muted floor (leaves headroom at 150 photons).
FLOOR_AIM_HZ = 26.0
# Tail fraction of the non-direct residual budget (sets the relative
# height of the two click-phase peaks; read qualitatively).
TAIL_FRACTION = 0.24
N0_DEFAULT = 5000.0


def direct_rate(photons: float, n_wide: int) -> float:
    """Clicks/s from narrow (unfiltered) photon avalanches."""
    lam = photons * ETA
    p = stats.poisson.cdf(n_wide - 1, lam) - stats.poisson.pmf(0, lam)
    return p * CYCLES_PER_S


def pick_threshold() -> int:
    lo = TARGET_150 * (1 - TOLERANCE)
    hi = TARGET_150 * (1 + TOLERANCE)
    feasible = []
    for n_wide in range(2, 25):
        r150 = direct_rate(150, n_wide)
        r300 = direct_rate(300, n_wide)
        # the floor must stay well under its own window even before
        # the residual terms are added
        if lo * 0.5 <= r150 <= hi and r300 < TARGET_300 * (1 - TOLERANCE):
            feasible.append((abs(r150 - TARGET_150), n_wide, r150))
    if not feasible:
        raise SystemExit("no feasible wide_threshold for the targets")
    feasible.sort()
    return feasible[0][1]


def fit(n_wide: int):
    # Residual budget at 300 photons: p_ap(300*eta) + p_tail + p_dark
    budget = FLOOR_AIM_HZ / CYCLES_PER_S - direct_rate(300, n_wide) / CYCLES_PER_S \
        - P_DARK
    if budget <= 0:
        raise SystemExit("floor aim below the irreducible direct+dark rate")
    p_tail = TAIL_FRACTION * budget
    ap_300 = budget - p_tail
    n0 = N0_DEFAULT
    p0 = ap_300 / np.log1p(300 * ETA / n0)
    return p0, n0, p_tail


def predicted_rate(photons: float, n_wide: int, p0: float, n0: float,
                   p_tail: float) -> float:
    lam = photons * ETA
    p_wide = stats.poisson.sf(n_wide - 1, lam)
    p_ap = min(1.0, p0 * np.log1p(lam / n0))
    return direct_rate(photons, n_wide) + (p_wide * (p_ap + p_tail)
                                           + P_DARK) * CYCLES_PER_S


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--verify", action="store_true",
                    help="cross-check by event simulation (slower)")
    ap.add_argument("--duration", type=float, default=2.0,
                    help="simulated seconds per verification point")
    args = ap.parse_args()

    n_wide = pick_threshold()
    p0, n0, p_tail = fit(n_wide)
    print(f"wide_threshold   = {n_wide}")
    print(f"afterpulse_base  = {p0:.5g}")
    print(f"afterpulse_scale = {n0:.6g}")
    print(f"tail_prob        = {p_tail:.6g}")
    print()
    print("closed-form predictions:")
    for photons, target in ((150, TARGET_150), (300, TARGET_300)):
        r = predicted_rate(photons, n_wide, p0, n0, p_tail)
        lo, hi = target * (1 - TOLERANCE), target * (1 + TOLERANCE)
        ok = "ok" if lo <= r <= hi else "OUT OF WINDOW"
        print(f"  {photons:5d} photons -> {r:8.1f} Hz  (target {target} "
              f"+/-30%: [{lo:.1f}, {hi:.1f}])  {ok}")
    for photons in (3000, 5000):
        print(f"  {photons:5d} photons -> "
              f"{predicted_rate(photons, n_wide, p0, n0, p_tail):8.1f} Hz "
              f"(recovery)")

    if args.verify:
        from muteqkd.spad import SpadConfig, run_intensity_sweep
        cfg = SpadConfig(wide_threshold=n_wide, afterpulse_base=p0,
                         afterpulse_scale=n0, tail_prob=p_tail)
        rng = np.random.default_rng(20260823)
        print()
        print(f"simulated ({args.duration:g} s per point):")
        for photons, rate in run_intensity_sweep(
                cfg, [0.0, 150.0, 300.0, 3000.0], PERIOD, args.duration, rng):
            print(f"  {photons:6.0f} photons -> {rate:10.1f} Hz")


if __name__ == "__main__":
    main()
