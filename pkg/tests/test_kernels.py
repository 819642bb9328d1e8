"""Both kernel backends against brute-force definitions and each other."""

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calib import _pykernels, kernels

try:
    from calib import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
BACKENDS.append(
    pytest.param(_ckernels, id="cython", marks=pytest.mark.skipif(_ckernels is None, reason="extension not built"))
)

times_st = st.lists(st.floats(0, 100, allow_nan=False), max_size=60).map(lambda x: np.sort(np.array(x, dtype=float)))
tau_st = st.floats(0, 10)


def brute_nonparalyzable(t, tau):
    acc = []
    for x in t:
        if not any(x < a + tau for a in acc if a <= x):
            acc.append(x)
    return np.isin(t, acc) if len(set(t)) == len(t) else None


def brute_paralyzable(t, tau):
    return np.array([all(not (x - y < tau) for y in t[:i]) for i, x in enumerate(t)], dtype=bool)


def brute_driver(t, dead, limit, window, inhibit):
    acc, mask, inh, end = [], [], [], -np.inf
    fresh = 0  # an inhibit forgets every trigger accepted before it
    for x in t:
        if x < end or (acc and x - acc[-1] < dead):
            mask.append(False)
            continue
        recent = [a for a in acc[fresh:] if a > x - window]
        if len(recent) + 1 > limit * window:
            inh.append(x)
            end = x + inhibit
            fresh = len(acc)
            mask.append(False)
            continue
        acc.append(x)
        mask.append(True)
    return np.array(mask, dtype=bool), np.array(inh)


def brute_flip(arrivals, triggers, lo, hi):
    return np.array([any(lo <= a - t <= hi for t in triggers) for a in arrivals], dtype=bool)


def brute_match(t1, t2, offset, hw):
    used = set()
    count = 0
    for x in t2 - offset:
        lo, hi = x - hw, x + hw
        for i, s in enumerate(t1):
            # earliest free D1 hit in the window; hits skipped earlier stay dead
            if i not in used and lo <= s <= hi and all(j in used for j in range(i) if t1[j] >= lo):
                used.add(i)
                count += 1
                break
    return count


@pytest.mark.parametrize("impl", BACKENDS)
class TestExamples:
    def test_nonparalyzable(self, impl):
        m = impl.nonparalyzable_mask(np.array([0.0, 5e-6, 12e-6]), 10e-6)
        assert m.tolist() == [True, False, True]

    def test_paralyzable(self, impl):
        m = impl.paralyzable_mask(np.array([0.0, 5e-6, 12e-6]), 10e-6)
        assert m.tolist() == [True, False, False]

    def test_empty(self, impl):
        assert impl.nonparalyzable_mask(np.empty(0), 1.0).size == 0
        assert impl.paralyzable_mask(np.empty(0), 1.0).size == 0
        mask, inh = impl.driver_accept(np.empty(0), 1.0, 10.0, 1.0, 1.0)
        assert mask.size == 0 and inh.size == 0
        assert impl.match_coincidences(np.empty(0), np.array([1.0]), 0.0, 1.0) == 0
        assert impl.flip_mask(np.array([1.0]), np.empty(0), 0.0, 1.0).tolist() == [False]

    def test_flip_window(self, impl):
        # trigger at 0, window [250, 430] ns
        m = impl.flip_mask(np.array([200e-9, 250e-9, 300e-9, 430e-9, 431e-9]), np.array([0.0]), 250e-9, 430e-9)
        assert m.tolist() == [False, True, True, True, False]

    def test_driver_dead_time(self, impl):
        mask, inh = impl.driver_accept(np.array([0.0, 3e-6, 12e-6]), 10e-6, 1e4, 1.0, 1.0)
        assert mask.tolist() == [True, False, True] and inh.size == 0

    def test_rate_limiter_inhibits(self, impl):
        t = np.arange(6) * 0.1  # 6 triggers in 0.5 s with a limit of 5 per second
        mask, inh = impl.driver_accept(t, 0.0, 5.0, 1.0, 1.0)
        assert mask.tolist() == [True] * 5 + [False]
        assert inh.tolist() == [0.5]
        mask, _ = impl.driver_accept(np.append(t, [1.4, 1.6]), 0.0, 5.0, 1.0, 1.0)
        # inhibited until 1.5 s, then the history starts afresh
        assert mask.tolist()[-2:] == [False, True]

    def test_one_to_one_matching(self, impl):
        # two D2 hits compete for one D1 hit
        assert impl.match_coincidences(np.array([1.0]), np.array([0.9, 1.05]), 0.0, 0.2) == 1
        assert impl.match_coincidences(np.array([1.0, 1.1]), np.array([1.05]), 0.0, 0.2) == 1
        assert impl.match_coincidences(np.array([1.0, 2.0]), np.array([6.0, 7.0]), 5.0, 0.01) == 2


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(t=times_st, tau=tau_st)
def test_dead_time_against_brute_force(impl, t, tau):
    expected = brute_nonparalyzable(t, tau)
    if expected is not None:
        assert impl.nonparalyzable_mask(t, tau).tolist() == expected.tolist()
    assert impl.paralyzable_mask(t, tau).tolist() == brute_paralyzable(t, tau).tolist()


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(t=times_st, dead=st.floats(0, 5), limit=st.sampled_from([0.05, 0.1, 0.3, 1.0]), inhibit=st.floats(0, 20))
def test_driver_against_brute_force(impl, t, dead, limit, inhibit):
    mask, inh = impl.driver_accept(t, dead, limit, 10.0, inhibit)
    e_mask, e_inh = brute_driver(t, dead, limit, 10.0, inhibit)
    assert mask.tolist() == e_mask.tolist()
    assert inh.tolist() == e_inh.tolist()


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(a=times_st, trig_gaps=st.lists(st.floats(3.0, 20.0), max_size=10), lo=st.floats(0, 1), width=st.floats(0, 2.9))
def test_flip_against_brute_force(impl, a, trig_gaps, lo, width):
    triggers = np.cumsum(np.array(trig_gaps, dtype=float))
    hi = lo + width
    assert impl.flip_mask(a, triggers, lo, hi).tolist() == brute_flip(a, triggers, lo, hi).tolist()


@pytest.mark.parametrize("impl", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(t1=times_st, t2=times_st, offset=st.floats(0, 3), hw=st.floats(0, 2))
def test_match_against_brute_force(impl, t1, t2, offset, hw):
    n = impl.match_coincidences(t1, t2, offset, hw)
    assert n == brute_match(t1, t2, offset, hw)
    assert n <= min(t1.size, t2.size)


@pytest.mark.skipif(_ckernels is None, reason="extension not built")
def test_backends_identical_on_large_streams():
    rng = np.random.default_rng(3)
    t = np.sort(rng.uniform(0, 1.0, 200_000))
    t2 = np.sort(np.concatenate([t[::3] + 245e-9, rng.uniform(0, 1.0, 50_000)]))
    for name, args in [
        ("nonparalyzable_mask", (t, 10e-6)),
        ("paralyzable_mask", (t, 2e-6)),
        ("flip_mask", (t2, t[::50], 150e-9, 330e-9)),
    ]:
        assert np.array_equal(getattr(_pykernels, name)(*args), getattr(_ckernels, name)(*args)), name
    for a, b in zip(_pykernels.driver_accept(t, 10e-6, 5e4, 1.0, 0.1), _ckernels.driver_accept(t, 10e-6, 5e4, 1.0, 0.1)):
        assert np.array_equal(a, b)
    assert _pykernels.match_coincidences(t, t2, 245e-9, 2.5e-9) == _ckernels.match_coincidences(t, t2, 245e-9, 2.5e-9)


def test_backend_selected():
    assert kernels.BACKEND in ("python", "cython")
    if os.environ.get("CALIB_PURE_PYTHON"):
        assert kernels.BACKEND == "python"
    elif _ckernels is not None:
        assert kernels.BACKEND == "cython"
