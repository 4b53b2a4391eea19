"""Heartbeat inter-arrival prediction.

Four predictors share one sliding window of inter-arrival durations:
simple moving average, restricted moving average (never above the last
observed gap), linearly weighted moving average and exponential moving
average. :class:`PredictorState` keeps running sums so each new sample
costs O(1); the ``predict_*`` functions recompute from scratch and serve
as the reference path.
"""

from __future__ import annotations

import copy
from collections import deque
from typing import Optional, Sequence

from . import kernels
from .core import PredictorKind

# running sums are rebuilt from the window this often to bound drift
RESYNC_EVERY = 512


def _tail(values: Sequence[float], window_size: Optional[int]) -> Sequence[float]:
    if not values:
        raise ValueError("insufficient samples")
    if window_size is not None:
        values = values[-window_size:]
    return values


def predict_sma(interarrivals: Sequence[float], window_size: Optional[int] = None) -> float:
    values = _tail(interarrivals, window_size)
    return sum(values) / len(values)


def predict_restricted_ma(interarrivals: Sequence[float],
                          window_size: Optional[int] = None) -> float:
    values = _tail(interarrivals, window_size)
    mean = sum(values) / len(values)
    last = values[-1]
    return last if mean > last else mean


def predict_wma(interarrivals: Sequence[float], window_size: Optional[int] = None) -> float:
    values = _tail(interarrivals, window_size)
    n = len(values)
    # oldest gets weight 1, newest gets weight n
    return sum((i + 1) * v for i, v in enumerate(values)) / (n * (n + 1) / 2)


def predict_ema(samples: Sequence[float], alpha: float, window_size: int) -> float:
    """Exponential moving average over the whole stream.

    Before ``window_size`` samples exist this is the plain mean of what has
    been seen; the average of the first ``window_size`` samples seeds S.
    """
    if not samples:
        raise ValueError("insufficient samples")
    if len(samples) < window_size:
        return sum(samples) / len(samples)
    s = sum(samples[:window_size]) / window_size
    for x in samples[window_size:]:
        s = alpha * x + (1 - alpha) * s
    return s


class HeartbeatWindow:
    """The most recent heartbeat arrival times of one monitored process."""

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ValueError("window capacity must be >= 2")
        self.capacity = capacity
        # capacity inter-arrivals need capacity + 1 arrivals
        self.arrivals: deque[float] = deque(maxlen=capacity + 1)

    def push(self, arrival: float) -> Optional[float]:
        """Append *arrival*; return the new inter-arrival, if any."""
        if self.arrivals and arrival <= self.arrivals[-1]:
            raise ValueError(
                f"arrival {arrival} not after previous {self.arrivals[-1]}")
        gap = arrival - self.arrivals[-1] if self.arrivals else None
        self.arrivals.append(arrival)
        return gap

    @property
    def last_arrival(self) -> Optional[float]:
        return self.arrivals[-1] if self.arrivals else None

    @property
    def interarrivals(self) -> list[float]:
        a = list(self.arrivals)
        return [b - x for x, b in zip(a, a[1:])]

    def __len__(self) -> int:
        return len(self.arrivals)


class PredictorState:
    def __init__(self, kind: PredictorKind | str = PredictorKind.SMA, window_size: int = 5,
                 ema_alpha: float = 0.25, ema_value: Optional[float] = None):
        self.kind = PredictorKind(kind)
        if not 0.0 <= ema_alpha <= 1.0:
            raise ValueError("ema_alpha must lie in [0, 1]")
        self.window = HeartbeatWindow(window_size)
        self.ema_alpha = ema_alpha
        self.ema_value = ema_value
        self.samples_seen = 0 if ema_value is None else window_size
        self.last_prediction: Optional[float] = None
        self._gaps: deque[float] = deque(maxlen=window_size)
        self._sum = 0.0
        self._wsum = 0.0
        self._updates = 0

    @property
    def window_size(self) -> int:
        return self.window.capacity

    @property
    def samples(self) -> list[float]:
        return list(self._gaps)

    def record_arrival(self, arrival: float) -> None:
        gap = self.window.push(arrival)
        if gap is not None:
            self.observe(gap)

    def observe(self, sample: float) -> None:
        """Feed one inter-arrival sample into the running sums."""
        n = self.window_size
        m = len(self._gaps)
        if m == n:
            self._wsum = self._wsum - self._sum + n * sample
            self._sum = self._sum - self._gaps[0] + sample
        else:
            self._wsum += (m + 1) * sample
            self._sum += sample
        self._gaps.append(sample)
        self._updates += 1
        if self._updates % RESYNC_EVERY == 0:
            self._resync()

        self.samples_seen += 1
        if self.ema_value is None:
            if self.samples_seen >= n:
                self.ema_value = self._sum / len(self._gaps)
        else:
            a = self.ema_alpha
            self.ema_value = a * sample + (1 - a) * self.ema_value

    def _resync(self) -> None:
        m = len(self._gaps)
        mean, wmean = kernels.window_stats(list(self._gaps))
        self._sum = mean * m
        self._wsum = wmean * (m * (m + 1) / 2.0)

    def predict(self) -> Optional[float]:
        """Predicted next inter-arrival, or None before any sample."""
        m = len(self._gaps)
        if m == 0:
            if self.kind is PredictorKind.EMA and self.ema_value is not None:
                return self.ema_value
            return None
        mean = self._sum / m
        if self.kind is PredictorKind.SMA:
            value = mean
        elif self.kind is PredictorKind.RESTRICTED_MA:
            last = self._gaps[-1]
            value = last if mean > last else mean
        elif self.kind is PredictorKind.WMA:
            value = self._wsum / (m * (m + 1) / 2.0)
        else:
            value = self.ema_value if self.ema_value is not None else mean
        self.last_prediction = value
        return value


def ema_step(state: PredictorState, new_sample: float) -> PredictorState:
    if state.kind is not PredictorKind.EMA:
        raise ValueError("ema_step needs an EMA predictor state")
    nxt = copy.deepcopy(state)
    nxt.observe(new_sample)
    return nxt


def next_expected_arrival(state: PredictorState, last_arrival: float,
                          heartbeat_period: float) -> float:
    predicted = state.predict()
    if predicted is None:
        # cold start: fewer than two heartbeats seen
        return last_arrival + heartbeat_period
    return last_arrival + predicted
