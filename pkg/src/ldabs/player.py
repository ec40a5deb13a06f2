"""Virtual player: chunk downloads over a trace, buffer dynamics and the session loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .diffusion import (
    DEFAULT_KAPPA,
    ChannelModel,
    NoiseSchedule,
    build_schedule,
    effective_alpha_bar,
    match_step,
    quality_proxy,
)
from .latency import LatencyProfile, processing_seconds
from .media import ChunkManifest, SemanticProfile, semantic_sizes
from .qoe import QoEBreakdown, QoEWeights, chunk_qoe
from .trace import ThroughputTrace, integrate_download

DEFAULT_BUFFER_CAP = 60.0
DEFAULT_HISTORY = 8

Mode = Literal["plain", "semantic"]


class SessionError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlayerState:
    wall_time: float = 0.0
    buffer: float = 0.0
    next_chunk: int = 0
    last_bitrate_index: int | None = None
    # (throughput_mbps, download_time_s), oldest first
    history: tuple[tuple[float, float], ...] = ()
    history_len: int = DEFAULT_HISTORY
    buffer_cap: float = DEFAULT_BUFFER_CAP


@dataclass(frozen=True)
class SemanticContext:
    """Everything semantic mode needs beyond the manifest.

    ``sizes`` overrides the derived K x M semantic sizes; ``csi_jitter_db``
    adds a per-chunk uniform error in [-jitter, +jitter] dB on top of the
    channel's fixed ``csi_error_db``.
    """

    profile: SemanticProfile = field(default_factory=SemanticProfile)
    channel: ChannelModel = field(default_factory=ChannelModel)
    schedule: NoiseSchedule = field(default_factory=build_schedule)
    latency: LatencyProfile = field(default_factory=LatencyProfile)
    kappa: float = DEFAULT_KAPPA
    csi_jitter_db: float = 0.0
    sizes: np.ndarray | None = None

    def sizes_for(self, manifest: ChunkManifest) -> np.ndarray:
        if self.sizes is not None:
            s = np.asarray(self.sizes, dtype=float)
            if s.shape != manifest.sizes.shape:
                raise SessionError(f"semantic sizes shape {s.shape} != manifest {manifest.sizes.shape}")
            return s
        return semantic_sizes(manifest, self.profile)

    def latency_for(self, manifest: ChunkManifest) -> np.ndarray:
        return np.array(
            [processing_seconds(self.latency, manifest.resolutions[m][1]) for m in range(manifest.bitrate_count)]
        )

    def estimated_snrs(self, K: int, seed: int) -> np.ndarray:
        base = self.channel.estimated_snr_db
        if self.csi_jitter_db <= 0:
            return np.full(K, base)
        rng = np.random.default_rng(seed)
        return base + rng.uniform(-self.csi_jitter_db, self.csi_jitter_db, size=K)

    def quality(self, estimated_snr_db: float) -> tuple[int, float]:
        """Denoising start step and effective reconstruction quality for one chunk."""
        r = match_step(estimated_snr_db, self.schedule)
        return r, quality_proxy(effective_alpha_bar(r, self.channel.snr_db, self.schedule), self.kappa)

    def expected_quality(self, estimated_snr_db: float) -> float:
        """Quality the receiver expects when it trusts its own SNR estimate."""
        r = match_step(estimated_snr_db, self.schedule)
        return quality_proxy(float(self.schedule.alpha_bar[r]), self.kappa)


@dataclass(frozen=True)
class SessionEnv:
    """Per-session delivery facts: what each (chunk, rung) costs and yields."""

    tx_bytes: np.ndarray  # K x M
    latency_s: np.ndarray  # M
    quality: np.ndarray  # K
    estimated_snr_db: np.ndarray | None = None  # K, semantic mode only
    denoise_step: np.ndarray | None = None  # K, semantic mode only


def session_env(manifest: ChunkManifest, mode: Mode, ctx: SemanticContext | None, seed: int) -> SessionEnv:
    K, M = manifest.sizes.shape
    if mode == "plain":
        return SessionEnv(manifest.sizes, np.zeros(M), np.ones(K))
    if mode != "semantic":
        raise SessionError(f"unknown mode {mode!r}")
    ctx = ctx or SemanticContext()
    est = ctx.estimated_snrs(K, seed)
    rq = [ctx.quality(float(e)) for e in est]
    return SessionEnv(
        tx_bytes=ctx.sizes_for(manifest),
        latency_s=ctx.latency_for(manifest),
        quality=np.array([q for _, q in rq]),
        estimated_snr_db=est,
        denoise_step=np.array([r for r, _ in rq]),
    )


@dataclass(frozen=True)
class ObservationState:
    past_throughputs: tuple[float, ...]
    past_download_times: tuple[float, ...]
    next_sizes: tuple[float, ...]
    next_quality: tuple[float, ...]
    last_quality: float
    buffer: float
    last_download_time: float
    remaining_fraction: float
    # decision context used by the policies
    chunk_index: int
    chunk_count: int
    chunk_duration: float
    bitrates_kbps: tuple[int, ...]
    last_bitrate_index: int | None
    buffer_cap: float
    upcoming_sizes: np.ndarray  # rows for chunks k..K-1
    processing_latency: tuple[float, ...] = ()
    quality_scale: float = 1.0
    estimated_snr_db: float | None = None

    @property
    def bitrate_count(self) -> int:
        return len(self.bitrates_kbps)


@dataclass(frozen=True)
class ChunkResult:
    index: int
    bitrate_index: int
    transmitted_bytes: float
    download_time: float
    rebuffer_seconds: float
    buffer_before: float
    buffer_after: float
    wall_time_end: float
    idle_seconds: float = 0.0
    effective_quality: float = 1.0
    denoise_step: int = 0


@dataclass(frozen=True)
class SessionLog:
    chunks: tuple[ChunkResult, ...]
    qoe: tuple[QoEBreakdown, ...]
    bitrates_kbps: tuple[int, ...]
    policy: str = ""
    trace: str = ""
    mode: str = "plain"

    def __len__(self):
        return len(self.chunks)

    @property
    def total_qoe(self) -> float:
        return math.fsum(q.total for q in self.qoe)

    @property
    def mean_qoe(self) -> float:
        return self.total_qoe / len(self.qoe)

    @property
    def plan(self) -> list[int]:
        return [c.bitrate_index for c in self.chunks]


def _pad(values, n):
    values = tuple(values)[-n:]
    return (0.0,) * (n - len(values)) + values


def observe(
    state: PlayerState,
    manifest: ChunkManifest,
    env: SessionEnv | None = None,
) -> ObservationState:
    K = manifest.chunk_count
    k = state.next_chunk
    if k >= K:
        raise SessionError("no chunk left to observe")
    quality = manifest.quality
    if quality is None:
        rates = np.asarray(manifest.ladder.bitrates_kbps, dtype=float)
        next_q = tuple(np.log(rates / rates[0]).tolist())
        last_q = 0.0 if state.last_bitrate_index is None else float(next_q[state.last_bitrate_index])
    else:
        next_q = tuple(quality[k].tolist())
        last_q = 0.0 if state.last_bitrate_index is None else float(quality[k - 1][state.last_bitrate_index])
    hist = state.history
    est = None
    if env is not None and env.estimated_snr_db is not None:
        est = float(env.estimated_snr_db[k])
    return ObservationState(
        past_throughputs=_pad((h[0] for h in hist), state.history_len),
        past_download_times=_pad((h[1] for h in hist), state.history_len),
        next_sizes=tuple(manifest.sizes[k].tolist()),
        next_quality=next_q,
        last_quality=last_q,
        buffer=state.buffer,
        last_download_time=hist[-1][1] if hist else 0.0,
        remaining_fraction=(K - k) / K,
        chunk_index=k,
        chunk_count=K,
        chunk_duration=manifest.chunk_duration,
        bitrates_kbps=manifest.ladder.bitrates_kbps,
        last_bitrate_index=state.last_bitrate_index,
        buffer_cap=state.buffer_cap,
        upcoming_sizes=manifest.sizes[k:],
        processing_latency=(0.0,) * manifest.bitrate_count,
        estimated_snr_db=est,
    )


def advance_buffer(buffer: float, d_k: float, L: float, cap: float, first: bool) -> tuple[float, float, float]:
    """Return ``(rebuffer, buffer_after, idle)`` for one download.

    When the new buffer would exceed ``cap`` the player idles until it fits.
    """
    rebuffer = 0.0 if first else max(0.0, d_k - buffer)
    after = max(0.0, buffer - d_k) + L
    idle = max(0.0, after - cap)
    return rebuffer, min(after, cap), idle


def step(
    state: PlayerState,
    manifest: ChunkManifest,
    trace: ThroughputTrace,
    choice: int,
    mode: Mode = "plain",
    semantic_ctx: SemanticContext | None = None,
    env: SessionEnv | None = None,
) -> tuple[PlayerState, ChunkResult]:
    """Download chunk ``state.next_chunk`` at rung ``choice``."""
    k = state.next_chunk
    if k >= manifest.chunk_count:
        raise SessionError("session already finished")
    if not (isinstance(choice, (int, np.integer)) and 0 <= choice < manifest.bitrate_count):
        raise SessionError(f"chunk {k}: invalid bitrate index {choice!r}")
    choice = int(choice)
    if env is None:
        env = session_env(manifest, mode, semantic_ctx, seed=0)

    size = float(env.tx_bytes[k][choice])
    _, net = integrate_download(trace, state.wall_time, size * 8 / 1e6)
    d_k = net + float(env.latency_s[choice])
    first = k == 0
    rebuffer, buffer_after, idle = advance_buffer(state.buffer, d_k, manifest.chunk_duration, state.buffer_cap, first)
    wall = state.wall_time + d_k + idle

    history = state.history
    if d_k > 0:
        history = (history + ((size * 8 / 1e6 / d_k, d_k),))[-state.history_len :]

    result = ChunkResult(
        index=k,
        bitrate_index=choice,
        transmitted_bytes=size,
        download_time=d_k,
        rebuffer_seconds=rebuffer,
        buffer_before=state.buffer,
        buffer_after=buffer_after,
        wall_time_end=wall,
        idle_seconds=idle,
        effective_quality=float(env.quality[k]),
        denoise_step=0 if env.denoise_step is None else int(env.denoise_step[k]),
    )
    new_state = replace(
        state,
        wall_time=wall,
        buffer=buffer_after,
        next_chunk=k + 1,
        last_bitrate_index=choice,
        history=history,
    )
    return new_state, result


def run_session(
    policy,
    manifest: ChunkManifest,
    trace: ThroughputTrace,
    mode: Mode = "plain",
    semantic_ctx: SemanticContext | None = None,
    seed: int = 0,
    weights: QoEWeights | None = None,
    buffer_cap: float = DEFAULT_BUFFER_CAP,
    history_len: int = DEFAULT_HISTORY,
) -> SessionLog:
    """Observe, decide, download and score every chunk of ``manifest``."""
    weights = weights or QoEWeights()
    if mode == "semantic" and semantic_ctx is None:
        semantic_ctx = SemanticContext()
    env = session_env(manifest, mode, semantic_ctx, seed)
    ladder = manifest.ladder.bitrates_kbps
    if hasattr(policy, "reset"):
        policy.reset(manifest=manifest, trace=trace, weights=weights, env=env, buffer_cap=buffer_cap)

    state = PlayerState(history_len=history_len, buffer_cap=buffer_cap)
    chunks, scores = [], []
    for k in range(manifest.chunk_count):
        obs = observe(state, manifest, env)
        try:
            choice = policy.decide(obs, weights)
        except Exception as exc:
            raise SessionError(f"chunk {k}: policy failed: {exc}") from exc
        if not (isinstance(choice, (int, np.integer)) and 0 <= choice < manifest.bitrate_count):
            raise SessionError(f"chunk {k}: policy returned invalid bitrate index {choice!r}")
        prev = state.last_bitrate_index
        b_prev = state.buffer
        state, res = step(state, manifest, trace, int(choice), mode, semantic_ctx, env)
        chunks.append(res)
        scores.append(
            chunk_qoe(
                ladder[res.bitrate_index],
                None if prev is None else ladder[prev],
                res.download_time,
                math.inf if k == 0 else b_prev,
                weights,
                ladder,
                res.effective_quality,
            )
        )
    return SessionLog(
        chunks=tuple(chunks),
        qoe=tuple(scores),
        bitrates_kbps=ladder,
        policy=getattr(policy, "name", type(policy).__name__),
        trace=trace.name,
        mode=mode,
    )
