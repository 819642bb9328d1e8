# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event kernels; same contract as ``calib._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def nonparalyzable_mask(times, double tau):
    cdef const double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], i
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] m = out
    cdef double last = -INFINITY
    for i in range(n):
        if t[i] >= last + tau:
            m[i] = 1
            last = t[i]
    return out.view(np.bool_)


def paralyzable_mask(times, double tau):
    cdef const double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], i
    out = np.ones(n, dtype=np.uint8)
    cdef unsigned char[::1] m = out
    if tau > 0:
        for i in range(1, n):
            if t[i] - t[i - 1] < tau:
                m[i] = 0
    return out.view(np.bool_)


def driver_accept(times, double dead_time, double rate_limit, double rate_window,
                  double inhibit_duration):
    cdef const double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], i
    cdef Py_ssize_t head = 0, n_acc = 0
    cdef double max_in_window = rate_limit * rate_window
    cdef double last = -INFINITY, inhibit_end = -INFINITY, ti
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] m = out
    acc_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] acc = acc_arr
    inhibits = []
    for i in range(n):
        ti = t[i]
        if ti < inhibit_end or ti - last < dead_time:
            continue
        while head < n_acc and acc[head] <= ti - rate_window:
            head += 1
        if n_acc - head + 1 > max_in_window:
            inhibits.append(ti)
            inhibit_end = ti + inhibit_duration
            head = n_acc
            continue
        acc[n_acc] = ti
        n_acc += 1
        last = ti
        m[i] = 1
    return out.view(np.bool_), np.asarray(inhibits, dtype=np.float64)


def flip_mask(arrivals, triggers, double lo, double hi):
    cdef const double[::1] a = np.ascontiguousarray(arrivals, dtype=np.float64)
    cdef const double[::1] tr = np.ascontiguousarray(triggers, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], nt = tr.shape[0], i, k = -1
    out = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] m = out
    if nt == 0:
        return out.view(np.bool_)
    for i in range(n):
        # advance to the latest trigger with trigger <= arrival - lo
        while k + 1 < nt and tr[k + 1] <= a[i] - lo:
            k += 1
        if k >= 0 and lo <= a[i] - tr[k] <= hi:
            m[i] = 1
    return out.view(np.bool_)


def match_coincidences(t1, t2, double offset, double half_window):
    cdef const double[::1] s = np.ascontiguousarray(t1, dtype=np.float64)
    cdef const double[::1] t = np.ascontiguousarray(t2, dtype=np.float64)
    cdef Py_ssize_t n1 = s.shape[0], n2 = t.shape[0], j, p = 0
    cdef long count = 0
    cdef double x
    for j in range(n2):
        x = t[j] - offset
        while p < n1 and s[p] < x - half_window:
            p += 1
        if p < n1 and s[p] <= x + half_window:
            count += 1
            p += 1
    return count
