"""Chunk QoE: log bitrate utility minus smoothness and rebuffering penalties."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 2.66


class QoEError(ValueError):
    pass


@dataclass(frozen=True)
class QoEWeights:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise QoEError("QoE weights must be non-negative")


@dataclass(frozen=True)
class QoEBreakdown:
    utility: float
    smoothness_penalty: float
    rebuffer_penalty: float
    total: float

    def __add__(self, other: "QoEBreakdown") -> "QoEBreakdown":
        return QoEBreakdown(
            self.utility + other.utility,
            self.smoothness_penalty + other.smoothness_penalty,
            self.rebuffer_penalty + other.rebuffer_penalty,
            self.total + other.total,
        )

    def scaled(self, factor: float) -> "QoEBreakdown":
        return QoEBreakdown(
            self.utility * factor,
            self.smoothness_penalty * factor,
            self.rebuffer_penalty * factor,
            self.total * factor,
        )


ZERO = QoEBreakdown(0.0, 0.0, 0.0, 0.0)


def utility(a: float, ladder: Sequence[float]) -> float:
    """Natural-log utility of bitrate ``a`` relative to the ladder's lowest rung."""
    if a not in ladder:
        raise QoEError(f"bitrate {a} not in ladder {list(ladder)}")
    return math.log(a / min(ladder))


def chunk_qoe(
    a_k: float,
    a_prev: float | None,
    d_k: float,
    b_prev: float,
    weights: QoEWeights,
    ladder: Sequence[float],
    quality_scale: float = 1.0,
) -> QoEBreakdown:
    """Score one chunk. ``a_prev=None`` marks the first chunk (no smoothness term)."""
    if d_k < 0 or b_prev < 0:
        raise QoEError("download time and buffer must be non-negative")
    if not 0.0 <= quality_scale <= 1.0:
        raise QoEError("quality_scale must lie in [0, 1]")
    m_k = utility(a_k, ladder)
    m_prev = m_k if a_prev is None else utility(a_prev, ladder)
    u = quality_scale * m_k
    smooth = weights.alpha * abs(m_k - m_prev)
    rebuf = weights.beta * max(0.0, d_k - b_prev)
    return QoEBreakdown(u, smooth, rebuf, u - smooth - rebuf)


@dataclass(frozen=True)
class SessionQoE:
    totals: QoEBreakdown
    mean: QoEBreakdown
    per_chunk: tuple[QoEBreakdown, ...]


def session_aggregate(log, weights: QoEWeights, ladder: Sequence[float], bridge_bitrate: float | None = None) -> SessionQoE:
    """Recompute QoE from a session's raw chunk results.

    Uses only bitrate, download time, buffer before download and effective
    quality of each chunk; cached QoE values in ``log`` are ignored. The
    first chunk is a startup download and carries no rebuffer penalty.
    ``bridge_bitrate`` supplies a_{k-1} for the first chunk when ``log``
    continues an earlier session.
    """
    chunks = list(getattr(log, "chunks", log))
    if not chunks:
        raise QoEError("empty session log")
    per_chunk = []
    a_prev = bridge_bitrate
    for c in chunks:
        a_k = ladder[c.bitrate_index]
        b_prev = math.inf if c.index == 0 else c.buffer_before
        per_chunk.append(chunk_qoe(a_k, a_prev, c.download_time, b_prev, weights, ladder, c.effective_quality))
        a_prev = a_k
    totals = QoEBreakdown(
        math.fsum(q.utility for q in per_chunk),
        math.fsum(q.smoothness_penalty for q in per_chunk),
        math.fsum(q.rebuffer_penalty for q in per_chunk),
        math.fsum(q.total for q in per_chunk),
    )
    return SessionQoE(totals, totals.scaled(1.0 / len(per_chunk)), tuple(per_chunk))


def cdf(values: Iterable[float]) -> list[tuple[float, float]]:
    """Empirical CDF points; repeated values keep only their highest fraction."""
    xs = sorted(values)
    if not xs:
        raise QoEError("cdf of an empty sample")
    n = len(xs)
    out: list[tuple[float, float]] = []
    for i, x in enumerate(xs):
        frac = (i + 1) / n
        if out and out[-1][0] == x:
            out[-1] = (x, frac)
        else:
            out.append((x, frac))
    return out
