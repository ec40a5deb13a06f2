"""CSV and JSON artifacts for sessions, comparisons and CDFs."""

from __future__ import annotations

import csv
import io
import json
from typing import Iterable, Sequence

from .player import SessionLog
from .qoe import SessionQoE

SESSION_COLUMNS = (
    "k",
    "bitrate_kbps",
    "bytes",
    "d_k",
    "rebuffer_s",
    "buffer_s",
    "qoe",
    "qoe_utility",
    "qoe_smooth",
    "qoe_rebuf",
    "effective_quality",
)


def fmt(x: float) -> str:
    return f"{x:.6f}"


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def session_csv(log: SessionLog) -> str:
    rows = []
    for c, q in zip(log.chunks, log.qoe):
        rows.append(
            (
                c.index,
                log.bitrates_kbps[c.bitrate_index],
                float(c.transmitted_bytes),
                c.download_time,
                c.rebuffer_seconds,
                c.buffer_after,
                q.total,
                q.utility,
                q.smoothness_penalty,
                q.rebuffer_penalty,
                c.effective_quality,
            )
        )
    return _csv(SESSION_COLUMNS, rows)


def cdf_csv(points: Sequence[tuple[float, float]], value_name: str = "qoe") -> str:
    return _csv((value_name, "cumulative_fraction"), ((float(v), float(f)) for v, f in points))


def session_summary(log: SessionLog, agg: SessionQoE, extra: dict | None = None) -> dict:
    doc = {
        "policy": log.policy,
        "trace": log.trace,
        "mode": log.mode,
        "chunks": len(log),
        "qoe_mean_per_chunk": agg.mean.total,
        "qoe_total": agg.totals.total,
        "utility_total": agg.totals.utility,
        "smoothness_penalty_total": agg.totals.smoothness_penalty,
        "rebuffer_penalty_total": agg.totals.rebuffer_penalty,
        "rebuffer_seconds_total": sum(c.rebuffer_seconds for c in log.chunks),
        "bytes_total": sum(c.transmitted_bytes for c in log.chunks),
        "wall_time_end_s": log.chunks[-1].wall_time_end,
    }
    if extra:
        doc.update(extra)
    return doc


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


SUMMARY_COLUMNS = (
    "policy",
    "trace",
    "qoe_mean_per_chunk",
    "utility_mean",
    "smooth_mean",
    "rebuf_mean",
    "qoe_total",
    "grid_qoe_total",
)


def summary_row(policy: str, trace: str, agg: SessionQoE, grid_total: float) -> tuple:
    return (
        policy,
        trace,
        agg.mean.total,
        agg.mean.utility,
        agg.mean.smoothness_penalty,
        agg.mean.rebuffer_penalty,
        agg.totals.total,
        grid_total,
    )


def summary_csv(rows: Sequence[tuple]) -> str:
    return _csv(SUMMARY_COLUMNS, rows)


COMPARISON_COLUMNS = ("policy", "sessions", "qoe_mean_per_chunk", "utility_mean", "smooth_mean", "rebuf_mean")


def comparison_csv(rows: Sequence[tuple]) -> str:
    return _csv(COMPARISON_COLUMNS, rows)


def read_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))
