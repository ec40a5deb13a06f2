"""Session and batch execution behind the CLI."""

from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import report
from .abr import evaluate_plan_grid, make_policy
from .config import (
    ConfigError,
    PolicySpec,
    RunConfig,
    build_manifest,
    build_semantic_context,
    build_traces,
    build_weights,
    parse_config,
)
from .media import ChunkManifest
from .player import SessionLog, run_session, session_env
from .qoe import SessionQoE, cdf, session_aggregate
from .trace import ThroughputTrace

log = logging.getLogger(__name__)


def session_seed(seed: int, policy: str, trace: str) -> int:
    """Per-session seed: base seed plus a stable hash of the (policy, trace) names."""
    return (seed + zlib.crc32(f"{policy}\x00{trace}".encode())) % (2**31)


@dataclass(frozen=True)
class SessionOutcome:
    policy: str
    trace: str
    log: SessionLog
    agg: SessionQoE
    grid_total: float


def simulate(
    cfg: RunConfig,
    spec: PolicySpec,
    manifest: ChunkManifest,
    tr: ThroughputTrace,
    seed: int,
) -> SessionOutcome:
    weights = build_weights(cfg)
    ctx = build_semantic_context(cfg) if cfg.mode == "semantic" or spec.name == "ldabs" else None
    policy = make_policy(spec.name, semantic_ctx=ctx, **dict(spec.params))
    kwargs = dict(
        mode=cfg.mode,
        semantic_ctx=ctx if cfg.mode == "semantic" else None,
        seed=seed,
        weights=weights,
        buffer_cap=cfg.player.buffer_cap_s,
        history_len=cfg.player.history,
    )
    if spec.name == "offline":
        policy.buffer_grid = cfg.offline_grid_s
    session = run_session(policy, manifest, tr, **kwargs)
    session = SessionLog(session.chunks, session.qoe, session.bitrates_kbps, spec.display_name, tr.name, cfg.mode)
    agg = session_aggregate(session, weights, manifest.ladder.bitrates_kbps)
    env = session_env(manifest, cfg.mode, kwargs["semantic_ctx"], seed)
    grid_total = evaluate_plan_grid(
        session.plan, manifest, tr, weights, cfg.offline_grid_s, env, cfg.player.buffer_cap_s
    )
    return SessionOutcome(spec.display_name, tr.name, session, agg, grid_total)


def _simulate_job(args) -> SessionOutcome:
    cfg_doc, spec_doc, manifest, tr, seed = args
    cfg = parse_config(cfg_doc)
    return simulate(cfg, PolicySpec.model_validate(spec_doc), manifest, tr, seed)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def run(cfg: RunConfig, out: Path) -> SessionOutcome:
    traces = build_traces(cfg)
    specs = cfg.policy_specs()
    if len(traces) != 1:
        raise ConfigError(f"field 'trace': run needs exactly one trace, got {len(traces)}")
    if len(specs) != 1:
        raise ConfigError(f"field 'policy': run needs exactly one policy, got {len(specs)}")
    manifest = build_manifest(cfg)
    outcome = simulate(cfg, specs[0], manifest, traces[0], cfg.seed)
    _write(out / "session.csv", report.session_csv(outcome.log))
    _write(out / "summary.json", report.dump_json(report.session_summary(outcome.log, outcome.agg, _extra(cfg, outcome))))
    _write(out / "cdf.csv", report.cdf_csv(cdf(q.total for q in outcome.agg.per_chunk), "chunk_qoe"))
    return outcome


def _extra(cfg: RunConfig, o: SessionOutcome) -> dict:
    return {"seed": cfg.seed, "grid_qoe_total": o.grid_total, "offline_grid_s": cfg.offline_grid_s}


def batch(cfg: RunConfig, out: Path, jobs: int = 1) -> list[SessionOutcome]:
    traces = build_traces(cfg)
    specs = cfg.policy_specs()
    if not traces:
        raise ConfigError("field 'traces': batch needs at least one trace")
    if not specs:
        raise ConfigError("field 'policies': batch needs at least one policy")
    labels = [s.display_name for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigError("field 'policies': policy labels must be unique (set 'label')")
    manifest = build_manifest(cfg)
    pairs = sorted(((s, t) for s in specs for t in traces), key=lambda p: (p[0].display_name, p[1].name))
    cfg_doc = cfg.model_dump(by_alias=True)
    jobs_args = [
        (cfg_doc, s.model_dump(), manifest, t, session_seed(cfg.seed, s.display_name, t.name)) for s, t in pairs
    ]

    outcomes: list[SessionOutcome] = []
    if jobs <= 1:
        for (s, t), a in zip(pairs, jobs_args):
            outcomes.append(_checked(s, t, lambda: _simulate_job(a)))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_simulate_job, a) for a in jobs_args]
            for (s, t), fut in zip(pairs, futures):
                outcomes.append(_checked(s, t, fut.result))

    summary_rows = []
    for o in outcomes:
        stem = f"{o.policy}__{o.trace}"
        _write(out / "sessions" / f"{stem}.csv", report.session_csv(o.log))
        _write(out / "summaries" / f"{stem}.json", report.dump_json(report.session_summary(o.log, o.agg, _extra(cfg, o))))
        summary_rows.append(report.summary_row(o.policy, o.trace, o.agg, o.grid_total))
    _write(out / "summary.csv", report.summary_csv(summary_rows))

    comparison = []
    for label in sorted(labels):
        mine = [o for o in outcomes if o.policy == label]
        n = len(mine)
        comparison.append(
            (
                label,
                n,
                sum(o.agg.mean.total for o in mine) / n,
                sum(o.agg.mean.utility for o in mine) / n,
                sum(o.agg.mean.smoothness_penalty for o in mine) / n,
                sum(o.agg.mean.rebuffer_penalty for o in mine) / n,
            )
        )
        _write(out / "cdf" / f"{label}.csv", report.cdf_csv(cdf(o.agg.mean.total for o in mine), "session_qoe_mean"))
    _write(out / "comparison.csv", report.comparison_csv(comparison))
    return outcomes


def _checked(spec: PolicySpec, tr: ThroughputTrace, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except Exception as exc:
        raise RuntimeError(f"session failed for policy={spec.display_name!r} trace={tr.name!r}: {exc}") from exc
