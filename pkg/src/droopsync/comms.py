"""Cyber layer: the shared time-varying communication delay and timestamped
history buffers for retrieving own/neighbor states at t - tau(t).

The delay is one uniform tau(t) for all links, generated as a rate-limited
random walk clamped to [0, tau_star].  Traces are deterministic given the
seed and are generated on their own time grid so that the delay realization
does not change when the integration step does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BufferHorizonError",
    "DelayBounds",
    "DelayTrace",
    "HistoryBuffer",
    "generate_delay_trace",
    "buffer_query",
]


class BufferHorizonError(RuntimeError):
    """Query is older than the buffer horizon (buffer undersized)."""


@dataclass(frozen=True)
class DelayBounds:
    """Known bounds on the delay: magnitude tau_star (s) and rate tau_g."""

    tau_star: float
    tau_g: float

    def __post_init__(self):
        if self.tau_star < 0:
            raise ValueError("tau_star must be >= 0")
        if self.tau_g < 0:
            raise ValueError("tau_g must be >= 0")


@dataclass(frozen=True)
class DelayTrace:
    """Sampled delay tau(t) on a uniform grid t = k * step, k = 0..len-1."""

    seed: int
    step: float
    tau_star: float
    samples: np.ndarray

    def value_at(self, t: float) -> float:
        """Zero-order-hold sample at time t (clamped to the trace ends)."""
        idx = int(t / self.step + 1e-9)
        idx = min(max(idx, 0), len(self.samples) - 1)
        return float(self.samples[idx])

    def max_rate(self) -> float:
        """Largest |tau(k+1) - tau(k)| / step over the trace."""
        if len(self.samples) < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.samples))) / self.step)


def generate_delay_trace(bounds: DelayBounds, step: float, duration: float,
                         seed: int, tau0: float = 0.0) -> DelayTrace:
    """Random-walk delay: tau(t+h) = clamp(tau(t) + h*r, 0, tau_star) with r
    drawn uniformly from (-1, 1).

    The effective rate bound is 1 regardless of bounds.tau_g (tau_g is the
    bound assumed by the gain certificate, not by the generator).  Identical
    (seed, step, duration, bounds, tau0) give bit-identical traces.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    n = int(round(duration / step)) + 1
    if bounds.tau_star == 0.0:
        return DelayTrace(seed, step, 0.0, np.zeros(n))
    rng = np.random.default_rng(seed)
    increments = step * rng.uniform(-1.0, 1.0, size=n - 1)
    samples = np.empty(n)
    samples[0] = min(max(tau0, 0.0), bounds.tau_star)
    for k in range(n - 1):
        samples[k + 1] = min(max(samples[k] + increments[k], 0.0), bounds.tau_star)
    return DelayTrace(seed, step, bounds.tau_star, samples)


class HistoryBuffer:
    """Ring of (timestamp, value-vector) pairs covering at least the delay
    horizon.

    Timestamps must be appended strictly increasing.  Queries use zero-order
    hold: the value at the greatest stored timestamp <= t_query.  Queries
    before the first-ever sample return the configured initial value (delay
    warm-up); queries older than the retained window raise
    BufferHorizonError.
    """

    def __init__(self, dim: int, capacity: int, initial: np.ndarray):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        initial = np.asarray(initial, dtype=float)
        if initial.shape != (dim,):
            raise ValueError("initial value must have shape (dim,)")
        self._dim = dim
        self._cap = capacity
        self._initial = initial.copy()
        self._times = np.empty(capacity)
        self._values = np.empty((capacity, dim))
        self._count = 0  # total appended, monotonically increasing
        self._hint = 0   # logical position of the last query hit

    def __len__(self) -> int:
        return min(self._count, self._cap)

    @property
    def last_time(self) -> float | None:
        if self._count == 0:
            return None
        return float(self._times[(self._count - 1) % self._cap])

    def append(self, t: float, value: np.ndarray) -> None:
        if self._count > 0 and t <= self.last_time:
            raise ValueError("timestamps must be strictly increasing")
        slot = self._count % self._cap
        self._times[slot] = t
        self._values[slot] = value
        self._count += 1

    def query(self, t_query: float) -> np.ndarray:
        """Zero-order-hold lookup at t_query.

        Sequential queries with nondecreasing timestamps resolve in O(1)
        amortized via a moving hint; arbitrary queries fall back to binary
        search.
        """
        n = self._count
        if n == 0:
            return self._initial.copy()
        oldest_logical = max(0, n - self._cap)
        t_oldest = self._times[oldest_logical % self._cap]
        if t_query < t_oldest:
            if oldest_logical == 0:
                return self._initial.copy()  # warm-up: before any data
            raise BufferHorizonError(
                f"query at t={t_query} predates retained history "
                f"(oldest {t_oldest}); buffer undersized")
        times, cap = self._times, self._cap
        pos = self._hint
        if oldest_logical <= pos < n and times[pos % cap] <= t_query:
            # advance from the hint (typical engine access pattern)
            while pos + 1 < n and times[(pos + 1) % cap] <= t_query:
                pos += 1
        else:
            lo, hi = oldest_logical, n
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if times[mid % cap] <= t_query:
                    lo = mid
                else:
                    hi = mid
            pos = lo
        self._hint = pos
        return self._values[pos % cap].copy()


def buffer_query(buffer: HistoryBuffer, t_query: float) -> np.ndarray:
    """Functional alias for HistoryBuffer.query."""
    return buffer.query(t_query)
