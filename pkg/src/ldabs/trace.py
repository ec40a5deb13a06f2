"""Network throughput traces: loading, synthesis, lookup and download timing.

A trace is a piecewise-constant throughput signal in Mbps. Sessions longer
than the trace replay it from the start: any time past the last timestamp
wraps modulo that timestamp.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

THROUGHPUT_FLOOR_MBPS = 0.01


class TraceError(ValueError):
    """Raised for malformed or invalid trace data."""


@dataclass(frozen=True)
class ThroughputTrace:
    times: tuple[float, ...]
    rates: tuple[float, ...]
    name: str = "trace"
    # cycle segments over [0, period); built in __post_init__
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _ends: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _seg_rates: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _cycle_megabits: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        rates = tuple(float(r) for r in self.rates)
        if not times:
            raise TraceError("trace needs at least one sample")
        if len(times) != len(rates):
            raise TraceError("times and rates differ in length")
        if times[0] < 0 or not all(math.isfinite(t) for t in times):
            raise TraceError("timestamps must be finite and >= 0")
        for i in range(1, len(times)):
            if times[i] <= times[i - 1]:
                raise TraceError(f"non-increasing timestamp at sample {i}: {times[i]} <= {times[i - 1]}")
        for i, r in enumerate(rates):
            if not (r > 0 and math.isfinite(r)):
                raise TraceError(f"non-positive throughput at sample {i}: {r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rates", rates)

        starts, ends, seg_rates = [], [], []
        if times[0] > 0:
            starts.append(0.0)
            ends.append(times[0])
            seg_rates.append(rates[0])
        for i in range(len(times) - 1):
            starts.append(times[i])
            ends.append(times[i + 1])
            seg_rates.append(rates[i])
        object.__setattr__(self, "_starts", tuple(starts))
        object.__setattr__(self, "_ends", tuple(ends))
        object.__setattr__(self, "_seg_rates", tuple(seg_rates))
        object.__setattr__(
            self, "_cycle_megabits", math.fsum(r * (e - s) for s, e, r in zip(starts, ends, seg_rates))
        )

    @property
    def period(self) -> float:
        """Wrap point: the last timestamp."""
        return self.times[-1]

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.times, self.rates))

    def __len__(self):
        return len(self.times)

    def is_constant(self) -> bool:
        return not self._starts


def from_samples(samples: Iterable[tuple[float, float]], name: str = "trace") -> ThroughputTrace:
    samples = list(samples)
    return ThroughputTrace(tuple(s[0] for s in samples), tuple(s[1] for s in samples), name=name)


def parse_trace(text: str, name: str = "trace") -> ThroughputTrace:
    """Parse ``timestamp_s throughput_mbps`` lines; '#' lines and blanks are skipped."""
    times, rates = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise TraceError(f"line {lineno}: expected 2 fields, got {len(parts)}")
        try:
            t, r = float(parts[0]), float(parts[1])
        except ValueError:
            raise TraceError(f"line {lineno}: non-numeric field in {line!r}") from None
        times.append(t)
        rates.append(r)
    if not times:
        raise TraceError("trace contains no samples")
    return ThroughputTrace(tuple(times), tuple(rates), name=name)


def load_trace(path) -> ThroughputTrace:
    from pathlib import Path

    p = Path(path)
    return parse_trace(p.read_text(encoding="utf-8"), name=p.stem)


def format_trace(trace: ThroughputTrace) -> str:
    lines = [f"# {trace.name}"]
    lines += [f"{t:.6f} {r:.6f}" for t, r in zip(trace.times, trace.rates)]
    return "\n".join(lines) + "\n"


def synth_trace(
    seed: int,
    duration: float,
    states: Sequence[tuple[float, float]],
    transition_prob: float,
    step: float,
    name: str | None = None,
    return_states: bool = False,
):
    """Markov-modulated Gaussian throughput trace.

    At every step after the first the chain switches, with probability
    ``transition_prob``, to a uniformly chosen *other* state. Throughput is
    drawn from the active state's Gaussian and clipped below at 0.01 Mbps.
    The initial state is uniform, which is also the stationary distribution.
    """
    if not states:
        raise TraceError("synth_trace needs at least one state")
    if duration <= 0 or step <= 0:
        raise TraceError("duration and step must be positive")
    if not 0.0 <= transition_prob <= 1.0:
        raise TraceError("transition_prob must lie in [0, 1]")
    if any(m <= 0 for m, _ in states) or any(s < 0 for _, s in states):
        raise TraceError("state means must be > 0 and stds >= 0")

    rng = np.random.default_rng(seed)
    n = max(1, math.ceil(duration / step - 1e-12))
    k = len(states)
    idx = np.empty(n, dtype=np.int64)
    idx[0] = rng.integers(k)
    for i in range(1, n):
        cur = idx[i - 1]
        if k > 1 and rng.random() < transition_prob:
            other = rng.integers(k - 1)
            cur = other if other < cur else other + 1
        idx[i] = cur
    means = np.array([m for m, _ in states])[idx]
    stds = np.array([s for _, s in states])[idx]
    rates = np.maximum(means + stds * rng.standard_normal(n), THROUGHPUT_FLOOR_MBPS)
    trace = ThroughputTrace(
        tuple(float(i * step) for i in range(n)),
        tuple(float(r) for r in rates),
        name=name or f"synth-{seed}",
    )
    if return_states:
        return trace, idx.tolist()
    return trace


def _cycle_position(trace: ThroughputTrace, time: float) -> float:
    p = trace.period
    if time <= p:
        return time
    return math.fmod(time, p)


def throughput_at(trace: ThroughputTrace, time: float) -> float:
    """Rate in Mbps at ``time``; the last sample with timestamp <= time wins."""
    if time < 0:
        raise ValueError("time must be >= 0")
    if trace.period > 0 and time > trace.period:
        time = math.fmod(time, trace.period)
    i = bisect.bisect_right(trace.times, time) - 1
    return trace.rates[max(i, 0)]


def integrate_download(trace: ThroughputTrace, start_time: float, payload: float) -> tuple[float, float]:
    """Exact finish time of a ``payload``-megabit transfer starting at ``start_time``.

    Returns ``(end_time, duration)``.
    """
    if payload < 0 or start_time < 0:
        raise ValueError("payload and start_time must be >= 0")
    if payload == 0:
        return start_time, 0.0
    if trace.is_constant():
        d = payload / trace.rates[0]
        return start_time + d, d

    starts, ends, rates = trace._starts, trace._ends, trace._seg_rates
    nseg = len(starts)
    cycle = trace._cycle_megabits
    pos = _cycle_position(trace, start_time)
    if pos >= trace.period:
        pos = 0.0
    i = bisect.bisect_right(starts, pos) - 1
    t = start_time
    remaining = payload
    while True:
        if i == 0 and pos == 0.0 and remaining > cycle:
            n = math.floor(remaining / cycle)
            if n * cycle >= remaining:
                n -= 1
            remaining -= n * cycle
            t += n * trace.period
        span = ends[i] - pos
        cap = rates[i] * span
        if cap >= remaining:
            t += remaining / rates[i]
            return t, t - start_time
        remaining -= cap
        t += span
        i = (i + 1) % nseg
        pos = starts[i]
