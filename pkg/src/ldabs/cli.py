"""Command-line entry point: ``ldabs {run,batch,synth-trace,synth-manifest,latency-report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import latency, media, trace
from .config import ConfigError, RunConfig, build_latency_profile, load_config, parse_config

log = logging.getLogger("ldabs")


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if args.out:
        return Path(args.out)
    return Path(cfg.out if cfg else "out")


def cmd_run(args) -> int:
    from .runner import run

    cfg = _load(args)
    out = _out_dir(args, cfg)
    o = run(cfg, out)
    print(f"{o.policy} on {o.trace}: mean chunk QoE {o.agg.mean.total:.6f} over {len(o.log)} chunks -> {out}")
    return 0


def cmd_batch(args) -> int:
    from .runner import batch

    cfg = _load(args)
    out = _out_dir(args, cfg)
    outcomes = batch(cfg, out, jobs=args.jobs)
    print(f"{len(outcomes)} sessions -> {out}")
    print((out / "comparison.csv").read_text(encoding="utf-8"), end="")
    return 0


def _parse_states(text: str) -> list[tuple[float, float]]:
    states = []
    for part in text.split(","):
        mean, _, std = part.partition(":")
        states.append((float(mean), float(std or 0.0)))
    return states


def cmd_synth_trace(args) -> int:
    seed = 0 if args.seed is None else args.seed
    tr = trace.synth_trace(
        seed, args.duration, _parse_states(args.states), args.transition_prob, args.step, name=args.name
    )
    text = trace.format_trace(tr)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_synth_manifest(args) -> int:
    seed = 0 if args.seed is None else args.seed
    ladder = media.BitrateLadder(tuple(int(x) for x in args.ladder.split(",")))
    w, _, h = args.resolution.partition("x")
    gop = media.GopStructure(args.gop, int(w), int(h), args.fps)
    man = media.generate_manifest(seed, ladder, args.chunks, args.chunk_duration, gop, args.size_noise)
    text = media.dump_manifest(man)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_latency_report(args) -> int:
    cfg = load_config(args.config) if args.config else parse_config({"seed": 0})
    lc = cfg.latency
    profile = build_latency_profile(cfg)
    rows = latency.e2e_comparison(profile, lc.network_component_ms, lc.chunk_count, lc.resolution, lc.competitors_ms)
    text = latency.format_report(profile, rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "latency_report.csv").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldabs", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("run", help="simulate one session")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("batch", help="simulate every (policy, trace) pair")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("synth-trace", help="emit a Markov-modulated throughput trace")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None, help="output file (stdout if omitted)")
    sp.add_argument("--duration", type=float, default=600.0)
    sp.add_argument("--states", default="1.0:0.3,2.5:0.6,4.0:1.0", help="mean:std pairs in Mbps")
    sp.add_argument("--transition-prob", type=float, default=0.1)
    sp.add_argument("--step", type=float, default=1.0)
    sp.add_argument("--name", default=None)
    sp.set_defaults(func=cmd_synth_trace)

    sp = sub.add_parser("synth-manifest", help="emit a synthetic chunk manifest (JSON)")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default=None, help="output file (stdout if omitted)")
    sp.add_argument("--ladder", default=",".join(map(str, media.DEFAULT_LADDER_KBPS)))
    sp.add_argument("--chunks", type=int, default=48)
    sp.add_argument("--chunk-duration", type=float, default=media.DEFAULT_CHUNK_SECONDS)
    sp.add_argument("--size-noise", type=float, default=0.1)
    sp.add_argument("--gop", default=media.DEFAULT_GOP_PATTERN)
    sp.add_argument("--resolution", default="1920x1080")
    sp.add_argument("--fps", type=float, default=30.0)
    sp.set_defaults(func=cmd_synth_manifest)

    sp = sub.add_parser("latency-report", help="print the per-chunk latency and end-to-end tables")
    common(sp, config_required=False)
    sp.set_defaults(func=cmd_latency_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"ldabs: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"ldabs: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
