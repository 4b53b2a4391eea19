"""Per-process accrual suspicion built from missed-heartbeat contributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import kernels
from .core import DetectorId, DetectorParams, ProcessId
from .predictors import PredictorState, next_expected_arrival


def contribution(t_now: float, t_pred: float, capped: bool = True) -> float:
    """Contribution of one expected heartbeat: ``max(0, log10(t_now - t_pred + 1))``.

    With *capped* the value saturates at 1, i.e. the heartbeat counts as
    lost once it is 9 time units overdue.
    """
    return kernels.contribution(t_now, t_pred, capped)


@dataclass
class RemoteValue:
    value: float
    expires: float
    received: float


class SuspicionEntry:
    """Accrual state a detector keeps for one monitored process.

    Pending expectations are kept implicitly as the arithmetic sequence
    ``first_pending + k * gap``: while the process stays silent a new
    expectation falls due every predicted inter-arrival, so the sum of
    contributions becomes a count of missed heartbeats.
    """

    def __init__(self, monitored: ProcessId, params: DetectorParams,
                 registered_at: float = 0.0):
        self.monitored = monitored
        self.params = params
        self.predictor = PredictorState(params.predictor, params.window_size, params.ema_alpha)
        self.registered_at = registered_at
        self.first_pending = registered_at + params.heartbeat_period
        self.gap = params.heartbeat_period
        self.last_seq = -1
        self.heartbeats = 0
        self.frozen = False
        self.frozen_value = 0.0
        self.freeze_deadline: Optional[float] = None
        self.remote_values: dict[DetectorId, RemoteValue] = {}
        # binary view last acted upon by the owning detector
        self.above = False

    def expected_arrivals(self, t_now: float) -> list[float]:
        """Materialise the pending expectations: all that are due plus the next one."""
        out = []
        k = 0
        while True:
            e = self.first_pending + k * self.gap
            out.append(e)
            if e > t_now:
                return out
            k += 1

    def computed_suspicion(self, t_now: float) -> float:
        return kernels.suspicion_sum(t_now, self.first_pending, self.gap, self.params.capped)

    def local_suspicion(self, t_now: float) -> float:
        if self.frozen:
            return self.frozen_value
        return self.computed_suspicion(t_now)

    def on_heartbeat(self, arrival: float, seq: Optional[int] = None) -> bool:
        """Account for a heartbeat received at *arrival*.

        Returns False (and changes nothing) for a stale or reordered
        heartbeat.
        """
        if seq is not None and seq <= self.last_seq:
            return False
        last = self.predictor.window.last_arrival
        if last is not None and arrival <= last:
            return False
        if seq is not None:
            self.last_seq = seq
        self.heartbeats += 1
        self.predictor.record_arrival(arrival)
        # every expectation up to now is cleared, none is matched individually
        self.first_pending = next_expected_arrival(
            self.predictor, arrival, self.params.heartbeat_period)
        self.gap = self.first_pending - arrival
        self.unfreeze()
        return True

    def freeze(self, t_now: float) -> None:
        self.frozen_value = self.computed_suspicion(t_now)
        self.frozen = True
        self.freeze_deadline = t_now + self.params.freeze_timeout

    def unfreeze(self) -> None:
        self.frozen = False
        self.freeze_deadline = None

    def record_remote(self, sender: DetectorId, value: float, t_now: float) -> None:
        if value < 0:
            raise ValueError("remote suspicion must be non-negative")
        self.remote_values[sender] = RemoteValue(
            value, t_now + self.params.remote_value_ttl, t_now)

    def valid_remotes(self, t_now: float) -> dict[DetectorId, RemoteValue]:
        return {d: r for d, r in self.remote_values.items() if r.expires > t_now}

    def prune(self, t_now: float) -> None:
        for d in [d for d, r in self.remote_values.items() if r.expires <= t_now]:
            del self.remote_values[d]

    def effective_suspicion(self, t_now: float) -> float:
        """Minimum over the local level and every unexpired peer report."""
        value = self.local_suspicion(t_now)
        for r in self.remote_values.values():
            if r.expires > t_now and r.value < value:
                value = r.value
        return value
