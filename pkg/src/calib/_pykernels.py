"""Pure-Python event kernels.

Reference implementations of the sequential parts of the simulation. The
compiled module ``_ckernels`` exposes the same functions with identical
results; ``calib.kernels`` picks one at import time.

All time arrays are float64 and sorted ascending.
"""

import numpy as np


def nonparalyzable_mask(times, tau):
    """Accept an event iff no *accepted* event lies in the preceding ``tau``."""
    times = np.asarray(times, dtype=np.float64)
    mask = np.zeros(times.size, dtype=bool)
    if times.size == 0:
        return mask
    if tau <= 0:
        mask[:] = True
        return mask
    # an event farther than tau from its predecessor is always accepted;
    # only runs of closer events need the sequential rule
    close = times[1:] < times[:-1] + tau
    mask[0] = True
    mask[1:] = ~close
    starts = np.flatnonzero(close & ~np.concatenate(([False], close[:-1])))
    for s in starts:
        last = times[s]  # run head, accepted
        j = s + 1
        while j < times.size and (j == s + 1 or close[j - 1]):
            if times[j] >= last + tau:
                mask[j] = True
                last = times[j]
            j += 1
    return mask


def paralyzable_mask(times, tau):
    """Accept an event iff no event at all lies in the preceding ``tau``."""
    times = np.asarray(times, dtype=np.float64)
    mask = np.ones(times.size, dtype=bool)
    if times.size > 1 and tau > 0:
        mask[1:] = np.diff(times) >= tau
    return mask


def driver_accept(times, dead_time, rate_limit, rate_window, inhibit_duration):
    """Trigger acceptance of the Pockels driver.

    A trigger is refused while the driver is dead (``dead_time`` after the
    last accepted trigger) or inhibited. If accepting it would put more than
    ``rate_limit * rate_window`` accepted triggers inside the trailing
    ``rate_window``, the driver is inhibited for ``inhibit_duration``
    starting at that trigger, and its rate history is cleared.

    Returns ``(mask, inhibit_starts)``.
    """
    times = np.asarray(times, dtype=np.float64)
    n = times.size
    mask = np.zeros(n, dtype=bool)
    inhibits = []
    max_in_window = rate_limit * rate_window
    accepted = []
    head = 0  # first accepted trigger still inside the rate window
    last = -np.inf
    inhibit_end = -np.inf
    for i in range(n):
        t = times[i]
        if t < inhibit_end or t - last < dead_time:
            continue
        while head < len(accepted) and accepted[head] <= t - rate_window:
            head += 1
        if len(accepted) - head + 1 > max_in_window:
            inhibits.append(t)
            inhibit_end = t + inhibit_duration
            head = len(accepted)
            continue
        accepted.append(t)
        last = t
        mask[i] = True
    return mask, np.asarray(inhibits, dtype=np.float64)


def flip_mask(arrivals, triggers, lo, hi):
    """True where ``arrival - trigger`` lies in ``[lo, hi]`` for the latest
    trigger not after ``arrival - lo``.

    Checking only that trigger is exact when trigger spacing exceeds
    ``hi - lo``, which the driver dead time guarantees.
    """
    arrivals = np.asarray(arrivals, dtype=np.float64)
    triggers = np.asarray(triggers, dtype=np.float64)
    out = np.zeros(arrivals.size, dtype=bool)
    if triggers.size == 0 or arrivals.size == 0:
        return out
    k = np.searchsorted(triggers, arrivals - lo, side="right") - 1
    ok = k >= 0
    d = arrivals[ok] - triggers[k[ok]]
    out[ok] = (d >= lo) & (d <= hi)
    return out


def match_coincidences(t1, t2, offset, half_window):
    """Greedy one-to-one matching of D2 hits with D1 hits.

    A D2 hit at ``t`` pairs with the earliest unmatched D1 hit ``s`` with
    ``|t - offset - s| <= half_window``. Returns the number of pairs.
    """
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    if t1.size == 0 or t2.size == 0:
        return 0
    shifted = t2 - offset
    lo = np.searchsorted(t1, shifted - half_window, side="left")
    hi = np.searchsorted(t1, shifted + half_window, side="right")
    count = 0
    next_free = 0  # D1 hits before this index are used or too early
    for j in np.flatnonzero(hi > lo):
        start = max(int(lo[j]), next_free)
        if start < hi[j]:
            count += 1
            next_free = start + 1
    return count
