"""Compiled single-detector pulse-train loop.

The intensity sweep simulates up to 10^10 gates per point, which is far
too slow for a per-gate Python loop. This kernel advances one detector
through a periodic pulse train with the same event logic as
spad.step_gate / spad.Spad, skipping photon-free dead stretches and
drawing dark-count arrivals from the geometric first-arrival law
(distributionally identical to per-gate Bernoulli trials).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def pulse_train(n_gates, period, photons, poisson_photons, eta, p_dark,
                dead_gates, n_wide, p0, big_n0, p_tail, seed):
    """Run one SPAD under a pulse train; pulses land at gates k*period.

    Returns (total_clicks, wide_avalanche_count, per-phase click histogram).
    """
    np.random.seed(seed)
    dead_span = dead_gates + 1
    dead_until = 0
    pend_ap = 0.0
    tail_due = -1
    clicks = 0
    wides = 0
    hist = np.zeros(period, dtype=np.int64)
    cursor = 0

    n_pulses = (n_gates + period - 1) // period
    for k in range(n_pulses + 1):
        g = k * period
        if g > n_gates:
            g = n_gates

        # ---- advance through photon-free gates in [cursor, g) ----
        c = cursor
        while c < g:
            live_start = dead_until if dead_until > c else c
            bound = live_start if live_start < g else g
            if tail_due >= c and tail_due < bound:
                # tail click inside a dead window
                clicks += 1
                hist[tail_due % period] += 1
                dead_until = tail_due + dead_span
                c = tail_due + 1
                tail_due = -1
                continue
            if live_start >= g:
                c = g
                break
            c = live_start
            if pend_ap > 0.0:
                fire = np.random.random() < pend_ap
                pend_ap = 0.0
                if fire:
                    clicks += 1
                    hist[c % period] += 1
                    dead_until = c + dead_span
                    c += 1
                    continue
            if tail_due == c:
                clicks += 1
                hist[c % period] += 1
                dead_until = c + dead_span
                tail_due = -1
                c += 1
                continue
            stop = g
            if tail_due > c and tail_due < g:
                stop = tail_due
            span = stop - c
            if span > 0 and p_dark > 0.0:
                arrival = np.random.geometric(p_dark)  # >= 1
                if arrival <= span:
                    gg = c + arrival - 1
                    clicks += 1
                    hist[gg % period] += 1
                    dead_until = gg + dead_span
                    c = gg + 1
                    continue
            c = stop
        cursor = c

        # ---- pulse gate ----
        if k >= n_pulses or g >= n_gates:
            break
        cursor = g + 1
        if tail_due == g:
            clicks += 1
            hist[g % period] += 1
            dead_until = g + dead_span
            tail_due = -1
            continue
        if g < dead_until:
            continue
        if pend_ap > 0.0:
            fire = np.random.random() < pend_ap
            pend_ap = 0.0
            if fire:
                clicks += 1
                hist[g % period] += 1
                dead_until = g + dead_span
                continue
        if poisson_photons:
            n = np.random.poisson(photons * eta)
        else:
            n = np.random.binomial(int(photons), eta)
        dark = np.random.random() < p_dark
        if n >= n_wide:
            wides += 1
            dead_until = g + dead_span
            pend_ap = min(1.0, p0 * np.log1p(n / big_n0))
            if np.random.random() < p_tail:
                tail_due = g + dead_span + 1
        elif n >= 1 or dark:
            clicks += 1
            hist[g % period] += 1
            dead_until = g + dead_span

    return clicks, wides, hist
