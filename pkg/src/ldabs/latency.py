"""Per-chunk processing latency of the semantic pipeline and the end-to-end comparison."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal

RESOLUTIONS = ("360p", "720p", "1080p")

TX_STAGES = ("iframe_extraction", "vae_encoding", "zframe_compression", "metadata_generation")
RX_STAGES = ("latent_decoding", "interpolation", "iframe_reconstruction")
STAGES = TX_STAGES + RX_STAGES

# milliseconds per chunk, measured stage breakdown
DEFAULT_STAGE_MS = {
    "360p": dict(zip(STAGES, (1.2, 3.4, 1.0, 0.7, 3.6, 2.2, 2.8))),
    "720p": dict(zip(STAGES, (1.8, 5.1, 1.2, 1.0, 5.5, 3.6, 4.4))),
    "1080p": dict(zip(STAGES, (2.4, 6.8, 1.6, 1.3, 6.9, 4.5, 5.9))),
}

# reported end-to-end ranges (ms) for the two reference methods
DEFAULT_COMPETITORS_MS = {
    "Traditional Broadcasting": (6000.0, 13000.0),
    "Pixel-Space DDPM": (5000.0, 8000.0),
}
DEFAULT_NETWORK_COMPONENT_MS = (1800.0, 2600.0)
DEFAULT_E2E_CHUNKS = 10
DEFAULT_E2E_RESOLUTION = "1080p"


class LatencyError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyProfile:
    stages_ms: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_STAGE_MS.items()})

    def __post_init__(self):
        for res, stages in self.stages_ms.items():
            missing = set(STAGES) - set(stages)
            if missing:
                raise LatencyError(f"{res}: missing stages {sorted(missing)}")
            if any(v < 0 for v in stages.values()):
                raise LatencyError(f"{res}: stage latencies must be >= 0")

    @classmethod
    def zeros(cls) -> "LatencyProfile":
        return cls({res: dict.fromkeys(STAGES, 0.0) for res in RESOLUTIONS})


def total_latency(profile: LatencyProfile, resolution: str) -> float:
    """Sum of the seven stage latencies in ms.

    Stage values are decimal table entries, so they are summed in decimal
    to return the tabulated total exactly.
    """
    if resolution not in profile.stages_ms:
        raise LatencyError(f"unknown resolution {resolution!r}; expected one of {sorted(profile.stages_ms)}")
    stages = profile.stages_ms[resolution]
    return float(sum((Decimal(repr(float(stages[s]))) for s in STAGES), Decimal(0)))


def resolution_class(height: int) -> str:
    if height <= 360:
        return "360p"
    if height <= 720:
        return "720p"
    return "1080p"


def processing_seconds(profile: LatencyProfile, height: int) -> float:
    return total_latency(profile, resolution_class(height)) / 1000.0


@dataclass(frozen=True)
class E2ERow:
    method: str
    low_ms: float
    high_ms: float


def e2e_comparison(
    profile: LatencyProfile,
    network_component_ms: tuple[float, float] = DEFAULT_NETWORK_COMPONENT_MS,
    chunk_count: int = DEFAULT_E2E_CHUNKS,
    resolution: str = DEFAULT_E2E_RESOLUTION,
    competitors_ms: dict | None = None,
) -> list[E2ERow]:
    """End-to-end latency ranges; the semantic pipeline row is computed, the others echoed."""
    lo, hi = network_component_ms
    if lo > hi:
        raise LatencyError("network component range must have low <= high")
    competitors = DEFAULT_COMPETITORS_MS if competitors_ms is None else competitors_ms
    rows = []
    for name, (c_lo, c_hi) in competitors.items():
        if c_lo > c_hi:
            raise LatencyError(f"{name}: range must have low <= high")
        rows.append(E2ERow(name, float(c_lo), float(c_hi)))
    processing = total_latency(profile, resolution) * chunk_count
    rows.append(E2ERow("LD-ABS", processing + lo, processing + hi))
    return rows


def format_report(profile: LatencyProfile, rows: list[E2ERow]) -> str:
    res = [r for r in RESOLUTIONS if r in profile.stages_ms]
    lines = ["stage," + ",".join(res)]
    for s in STAGES:
        lines.append(s + "," + ",".join(f"{profile.stages_ms[r][s]:.1f}" for r in res))
    lines.append("total," + ",".join(f"{total_latency(profile, r):.1f}" for r in res))
    lines.append("")
    lines.append("method,low_ms,high_ms")
    lines += [f"{r.method},{r.low_ms:.1f},{r.high_ms:.1f}" for r in rows]
    return "\n".join(lines) + "\n"
