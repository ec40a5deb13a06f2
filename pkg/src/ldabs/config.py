"""Run configuration: a versioned JSON document validated with pydantic."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import diffusion, latency, media, trace
from .abr import DP_BUFFER_GRID, POLICIES
from .player import DEFAULT_BUFFER_CAP, DEFAULT_HISTORY, SemanticContext
from .qoe import DEFAULT_ALPHA, DEFAULT_BETA, QoEWeights

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GopConfig(_Model):
    pattern: str = media.DEFAULT_GOP_PATTERN
    width: int = Field(1920, gt=0)
    height: int = Field(1080, gt=0)
    fps: float = Field(30.0, gt=0)


class ManifestSynth(_Model):
    seed: int = 0
    ladder_kbps: list[int] = Field(default_factory=lambda: list(media.DEFAULT_LADDER_KBPS))
    chunks: int = Field(48, ge=1)
    chunk_duration_s: float = Field(media.DEFAULT_CHUNK_SECONDS, gt=0)
    size_noise: float = Field(0.1, ge=0, lt=0.5)
    gop: GopConfig = Field(default_factory=GopConfig)


class ManifestSource(_Model):
    path: Optional[str] = None
    synth: Optional[ManifestSynth] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synth is None):
            raise ValueError("give exactly one of 'path' or 'synth'")
        return self


class TraceSynth(_Model):
    seed: int = 0
    name: Optional[str] = None
    duration_s: float = Field(600.0, gt=0)
    states: list[tuple[float, float]] = Field(default_factory=lambda: [(1.0, 0.3), (2.5, 0.6), (4.0, 1.0)])
    transition_prob: float = Field(0.1, ge=0, le=1)
    step_s: float = Field(1.0, gt=0)


class TraceSource(_Model):
    path: Optional[str] = None
    dir: Optional[str] = None
    synth: Optional[TraceSynth] = None

    @model_validator(mode="after")
    def _one_source(self):
        if sum(x is not None for x in (self.path, self.dir, self.synth)) != 1:
            raise ValueError("give exactly one of 'path', 'dir' or 'synth'")
        return self


class PolicySpec(_Model):
    name: str
    params: dict = Field(default_factory=dict)
    label: Optional[str] = None

    @field_validator("name")
    @classmethod
    def _known(cls, v):
        if v not in POLICIES:
            raise ValueError(f"unknown policy {v!r}; choose from {sorted(POLICIES)}")
        return v

    @property
    def display_name(self) -> str:
        return self.label or self.name


class ScheduleConfig(_Model):
    T: int = Field(diffusion.DEFAULT_T, ge=1)
    beta_start: float = Field(diffusion.DEFAULT_BETA_START, gt=0, lt=1)
    beta_end: float = Field(diffusion.DEFAULT_BETA_END, gt=0, lt=1)


class SemanticConfig(_Model):
    downsample_factor: int = Field(8, ge=1)
    latent_channels: int = Field(4, ge=1)
    bytes_per_latent_element: float = Field(1.0, gt=0)
    metadata_bytes_p: float = Field(2048, gt=0)
    metadata_bytes_b: float = Field(1024, gt=0)
    frame_weights: tuple[float, float, float] = (8.0, 2.0, 1.0)
    snr_db: float = 30.0
    gain: float = Field(1.0, gt=0)
    csi_error_db: float = 0.0
    csi_jitter_db: float = Field(0.0, ge=0)
    kappa: float = Field(diffusion.DEFAULT_KAPPA, ge=0)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)


class QoEConfig(_Model):
    alpha: float = Field(DEFAULT_ALPHA, ge=0)
    beta: float = Field(DEFAULT_BETA, ge=0)


class PlayerConfig(_Model):
    buffer_cap_s: float = Field(DEFAULT_BUFFER_CAP, gt=0)
    history: int = Field(DEFAULT_HISTORY, ge=1)


class LatencyConfig(_Model):
    stages_ms: Optional[dict[str, dict[str, float]]] = None
    network_component_ms: tuple[float, float] = latency.DEFAULT_NETWORK_COMPONENT_MS
    chunk_count: int = Field(latency.DEFAULT_E2E_CHUNKS, ge=0)
    resolution: str = latency.DEFAULT_E2E_RESOLUTION
    competitors_ms: Optional[dict[str, tuple[float, float]]] = None


class RunConfig(_Model):
    schema_version: int = Field(SCHEMA_VERSION, alias="schema")
    seed: int
    manifest: ManifestSource = Field(default_factory=lambda: ManifestSource(synth=ManifestSynth()))
    trace: Optional[TraceSource] = None
    traces: list[TraceSource] = Field(default_factory=list)
    policy: Optional[PolicySpec] = None
    policies: list[PolicySpec] = Field(default_factory=list)
    mode: Literal["plain", "semantic"] = "plain"
    semantic: SemanticConfig = Field(default_factory=SemanticConfig)
    qoe: QoEConfig = Field(default_factory=QoEConfig)
    player: PlayerConfig = Field(default_factory=PlayerConfig)
    offline_grid_s: float = Field(DP_BUFFER_GRID, gt=0)
    latency: LatencyConfig = Field(default_factory=LatencyConfig)
    out: str = "out"

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    @field_validator("schema_version")
    @classmethod
    def _schema(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {v}; expected {SCHEMA_VERSION}")
        return v

    def trace_sources(self) -> list[TraceSource]:
        return ([self.trace] if self.trace is not None else []) + list(self.traces)

    def policy_specs(self) -> list[PolicySpec]:
        return ([self.policy] if self.policy is not None else []) + list(self.policies)


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        parts.append(f"field '{loc}': {e['msg']}")
    return "; ".join(parts)


def parse_config(doc: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    return parse_config(doc)


# -- builders ------------------------------------------------------------------


def build_manifest(cfg: RunConfig) -> media.ChunkManifest:
    src = cfg.manifest
    if src.path is not None:
        p = Path(src.path)
        if not p.is_file():
            raise ConfigError(f"field 'manifest.path': file not found: {p}")
        try:
            return media.load_manifest(p)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"field 'manifest.path': {exc}") from None
    s = src.synth
    try:
        return media.generate_manifest(
            seed=s.seed,
            ladder=media.BitrateLadder(tuple(s.ladder_kbps)),
            K=s.chunks,
            L=s.chunk_duration_s,
            gop=media.GopStructure(**s.gop.model_dump()),
            size_noise=s.size_noise,
        )
    except media.MediaError as exc:
        raise ConfigError(f"field 'manifest.synth': {exc}") from None


def build_traces(cfg: RunConfig) -> list[trace.ThroughputTrace]:
    out = []
    for i, src in enumerate(cfg.trace_sources()):
        if src.path is not None:
            p = Path(src.path)
            if not p.is_file():
                raise ConfigError(f"trace path does not exist: {p}")
            try:
                out.append(trace.load_trace(p))
            except trace.TraceError as exc:
                raise ConfigError(f"trace {p}: {exc}") from None
        elif src.dir is not None:
            d = Path(src.dir)
            if not d.is_dir():
                raise ConfigError(f"trace directory does not exist: {d}")
            files = sorted(f for f in d.iterdir() if f.is_file() and not f.name.startswith("."))
            if not files:
                raise ConfigError(f"trace directory is empty: {d}")
            for f in files:
                try:
                    out.append(trace.load_trace(f))
                except trace.TraceError as exc:
                    raise ConfigError(f"trace {f}: {exc}") from None
        else:
            s = src.synth
            try:
                out.append(
                    trace.synth_trace(
                        s.seed, s.duration_s, s.states, s.transition_prob, s.step_s, name=s.name or f"synth-{s.seed}"
                    )
                )
            except trace.TraceError as exc:
                raise ConfigError(f"field 'traces.{i}.synth': {exc}") from None
    names = [t.name for t in out]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"duplicate trace names: {dupes}")
    return out


def build_latency_profile(cfg: RunConfig) -> latency.LatencyProfile:
    if cfg.latency.stages_ms is None:
        return latency.LatencyProfile()
    try:
        return latency.LatencyProfile(cfg.latency.stages_ms)
    except latency.LatencyError as exc:
        raise ConfigError(f"field 'latency.stages_ms': {exc}") from None


def build_semantic_context(cfg: RunConfig) -> SemanticContext:
    s = cfg.semantic
    wi, wp, wb = s.frame_weights
    try:
        profile = media.SemanticProfile(
            downsample_factor=s.downsample_factor,
            latent_channels=s.latent_channels,
            bytes_per_latent_element=s.bytes_per_latent_element,
            metadata_bytes_p=s.metadata_bytes_p,
            metadata_bytes_b=s.metadata_bytes_b,
            frame_weight_i=wi,
            frame_weight_p=wp,
            frame_weight_b=wb,
        )
        sched = diffusion.build_schedule(s.schedule.T, s.schedule.beta_start, s.schedule.beta_end)
    except (media.MediaError, diffusion.DiffusionError) as exc:
        raise ConfigError(f"field 'semantic': {exc}") from None
    snr = math.inf if s.snr_db >= 1e9 else s.snr_db
    return SemanticContext(
        profile=profile,
        channel=diffusion.ChannelModel(snr_db=snr, gain=s.gain, csi_error_db=s.csi_error_db),
        schedule=sched,
        latency=build_latency_profile(cfg),
        kappa=s.kappa,
        csi_jitter_db=s.csi_jitter_db,
    )


def build_weights(cfg: RunConfig) -> QoEWeights:
    return QoEWeights(cfg.qoe.alpha, cfg.qoe.beta)
