# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels; see ``_pykernels`` for the reference semantics."""

from libc.math cimport log10, floor

cdef double SATURATION_LATENESS = 9.0


cdef inline double _contribution(double t_now, double t_pred, bint capped) nogil:
    cdef double late = t_now - t_pred
    cdef double value
    if late <= 0.0:
        return 0.0
    value = log10(late + 1.0)
    if capped and value > 1.0:
        return 1.0
    return value


def contribution(double t_now, double t_pred, bint capped=True):
    return _contribution(t_now, t_pred, capped)


def suspicion_sum(double t_now, double first_pending, double gap, bint capped=True):
    cdef long long last_k, k0 = 0, k
    cdef double total = 0.0, edge
    if t_now <= first_pending:
        return 0.0
    last_k = <long long>floor((t_now - first_pending) / gap)
    if capped:
        edge = t_now - SATURATION_LATENESS - first_pending
        if edge >= 0.0:
            k0 = <long long>floor(edge / gap) + 1
            if k0 > last_k + 1:
                k0 = last_k + 1
        total = <double>k0
    for k in range(k0, last_k + 1):
        total += _contribution(t_now, first_pending + k * gap, capped)
    return total


def window_stats(values):
    cdef Py_ssize_t n = len(values), i
    cdef double s = 0.0, w = 0.0, x
    if n == 0:
        raise ValueError("insufficient samples")
    for i in range(n):
        x = values[i]
        s += x
        w += (i + 1) * x
    return s / n, w / (n * (n + 1) / 2.0)


def threshold_runs(values, double threshold):
    cdef Py_ssize_t n = len(values), i, start = 0
    cdef bint state, cur
    runs = []
    if n == 0:
        return runs
    state = values[0] >= threshold
    for i in range(1, n):
        cur = values[i] >= threshold
        if cur != state:
            runs.append((start, i, bool(state)))
            start = i
            state = cur
    runs.append((start, n, bool(state)))
    return runs
