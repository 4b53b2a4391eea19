"""Pure-Python numeric kernels.

Reference implementation of the hot loops; ``_ckernels.pyx`` mirrors it
operation for operation so both backends produce bit-identical floats.
"""

import math

# lateness at which a capped contribution saturates: log10(9 + 1) == 1
SATURATION_LATENESS = 9.0


def contribution(t_now, t_pred, capped=True):
    late = t_now - t_pred
    if late <= 0.0:
        return 0.0
    value = math.log10(late + 1.0)
    if capped and value > 1.0:
        return 1.0
    return value


def suspicion_sum(t_now, first_pending, gap, capped=True):
    """Sum the contributions of the expected arrivals ``first_pending + k*gap`` that are due."""
    if t_now <= first_pending:
        return 0.0
    last_k = math.floor((t_now - first_pending) / gap)
    total = 0.0
    k0 = 0
    if capped:
        edge = t_now - SATURATION_LATENESS - first_pending
        if edge >= 0.0:
            k0 = math.floor(edge / gap) + 1
            if k0 > last_k + 1:
                k0 = last_k + 1
        total = float(k0)
    for k in range(k0, last_k + 1):
        total += contribution(t_now, first_pending + k * gap, capped)
    return total


def window_stats(values):
    """Return ``(mean, linearly weighted mean)`` of *values*, oldest first."""
    n = len(values)
    if n == 0:
        raise ValueError("insufficient samples")
    s = 0.0
    w = 0.0
    for i in range(n):
        s += values[i]
        w += (i + 1) * values[i]
    return s / n, w / (n * (n + 1) / 2.0)


def threshold_runs(values, threshold):
    """Run-length encode ``value >= threshold`` as ``(start, stop, suspected)`` triples."""
    runs = []
    n = len(values)
    if n == 0:
        return runs
    start = 0
    state = values[0] >= threshold
    for i in range(1, n):
        cur = values[i] >= threshold
        if cur != state:
            runs.append((start, i, state))
            start = i
            state = cur
    runs.append((start, n, state))
    return runs
