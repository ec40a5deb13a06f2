"""Bitrate-selection policies.

Every policy exposes ``decide(obs, weights) -> index`` and an optional
``reset(**session)`` hook that :func:`ldabs.player.run_session` calls
before the first chunk.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .media import ChunkManifest
from .player import (
    DEFAULT_BUFFER_CAP,
    ObservationState,
    SemanticContext,
    SessionEnv,
    advance_buffer,
    session_env,
)
from .qoe import QoEWeights
from .trace import ThroughputTrace, integrate_download

THROUGHPUT_WINDOW = 5
RATE_SAFETY = 0.9
BB_RESERVOIR = 5.0
BB_CUSHION = 10.0
BOLA_GAMMA_P = 5.0
MPC_HORIZON = 5
MPC_ERROR_WINDOW = 5
DP_BUFFER_GRID = 0.5


class PolicyError(ValueError):
    pass


def harmonic_mean(xs: Sequence[float]) -> float:
    xs = list(xs)
    if not xs:
        raise PolicyError("harmonic mean of an empty list")
    if any(x <= 0 for x in xs):
        raise PolicyError("harmonic mean needs positive values")
    return len(xs) / math.fsum(1.0 / x for x in xs)


def _recent_throughputs(obs: ObservationState, window: int = THROUGHPUT_WINDOW) -> list[float]:
    return [c for c in obs.past_throughputs if c > 0][-window:]


def _log_utilities(obs: ObservationState) -> np.ndarray:
    a = obs.bitrates_kbps
    return np.array([math.log(x / a[0]) for x in a])


def rate_based_decide(obs: ObservationState, safety: float = RATE_SAFETY, window: int = THROUGHPUT_WINDOW) -> int:
    """Largest rung whose predicted download fits in ``safety * L``."""
    recent = _recent_throughputs(obs, window)
    if not recent:
        return 0
    pred = harmonic_mean(recent)
    L = obs.chunk_duration
    best = 0
    for m, size in enumerate(obs.next_sizes):
        if size * 8 / 1e6 / pred <= safety * L:
            best = m
    return best


def buffer_based_decide(obs: ObservationState, reservoir: float = BB_RESERVOIR, cushion: float = BB_CUSHION) -> int:
    if reservoir < 0 or cushion <= 0:
        raise PolicyError("need reservoir >= 0 and cushion > 0")
    top = obs.bitrate_count - 1
    frac = (obs.buffer - reservoir) / cushion
    frac = min(1.0, max(0.0, frac))
    return min(top, int(math.floor(frac * top + 0.5)))


def bola_default_v(obs: ObservationState, gamma_p: float = BOLA_GAMMA_P) -> float:
    v_top = math.log(obs.bitrates_kbps[-1] / obs.bitrates_kbps[0])
    return (obs.buffer_cap / obs.chunk_duration - 1.0) / (v_top + gamma_p)


def bola_decide(obs: ObservationState, V: float | None = None, gamma_p: float = BOLA_GAMMA_P) -> int:
    """BOLA-BASIC: maximise (V (v_m + gamma_p) - Q) / S_m over positive scores."""
    if V is None:
        V = bola_default_v(obs, gamma_p)
    if V <= 0:
        raise PolicyError("BOLA needs V > 0")
    Q = obs.buffer / obs.chunk_duration
    v = obs.quality_scale * _log_utilities(obs)
    best, best_score = 0, 0.0
    for m, size in enumerate(obs.next_sizes):
        score = (V * (v[m] + gamma_p) - Q) / (size * 8 / 1e6)
        if score > best_score:
            best, best_score = m, score
    return best


@lru_cache(maxsize=64)
def _sequences(M: int, depth: int) -> np.ndarray:
    return np.array(list(itertools.product(range(M), repeat=depth)), dtype=np.int64).reshape(-1, depth)


def mpc_sequence_scores(
    obs: ObservationState, weights: QoEWeights, throughput_mbps: float, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted QoE of every bitrate sequence over the clamped horizon."""
    depth = min(horizon, obs.chunk_count - obs.chunk_index)
    M = obs.bitrate_count
    seqs = _sequences(M, depth)
    sizes = np.asarray(obs.upcoming_sizes[:depth], dtype=float)
    m = _log_utilities(obs)
    lat = np.asarray(obs.processing_latency if obs.processing_latency else (0.0,) * M)
    L, cap = obs.chunk_duration, obs.buffer_cap

    n = len(seqs)
    buf = np.full(n, float(obs.buffer))
    prev = m[seqs[:, 0]] if obs.last_bitrate_index is None else np.full(n, m[obs.last_bitrate_index])
    total = np.zeros(n)
    for i in range(depth):
        j = seqs[:, i]
        d = sizes[i, j] * 8 / 1e6 / throughput_mbps + lat[j]
        if obs.chunk_index + i == 0:
            reb = np.zeros(n)
        else:
            reb = np.maximum(0.0, d - buf)
        buf = np.minimum(np.maximum(0.0, buf - d) + L, cap)
        total = total + (obs.quality_scale * m[j] - weights.alpha * np.abs(m[j] - prev) - weights.beta * reb)
        prev = m[j]
    return seqs, total


def robustmpc_decide(
    obs: ObservationState,
    weights: QoEWeights,
    horizon: int = MPC_HORIZON,
    error_window: int = MPC_ERROR_WINDOW,
    errors: Sequence[float] = (),
) -> int:
    """First rung of the best sequence under a discounted harmonic-mean forecast.

    ``errors`` are past relative prediction errors; the largest of the last
    ``error_window`` discounts the forecast.
    """
    if horizon < 1:
        raise PolicyError("MPC horizon must be >= 1")
    recent = _recent_throughputs(obs)
    if not recent:
        return 0
    max_err = max(list(errors)[-error_window:], default=0.0)
    pred = harmonic_mean(recent) / (1.0 + max_err)
    seqs, total = mpc_sequence_scores(obs, weights, pred, horizon)
    return int(seqs[int(np.argmax(total)), 0])


# -- offline dynamic program -------------------------------------------------


def _grid_index(x: float, grid: float) -> int:
    return int(math.floor(x / grid + 0.5))


class _GridModel:
    """Chunk transitions with buffer and wall clock snapped to a common grid."""

    def __init__(self, manifest, trace, weights, grid, env, buffer_cap):
        if grid <= 0:
            raise PolicyError("buffer grid must be positive")
        self.manifest, self.trace, self.weights = manifest, trace, weights
        self.grid, self.cap = grid, buffer_cap
        self.env = env or session_env(manifest, "plain", None, 0)
        a = manifest.ladder.bitrates_kbps
        self.m = [math.log(x / min(a)) for x in a]
        self.megabits = np.asarray(self.env.tx_bytes, dtype=float) * 8 / 1e6
        self._dl: dict = {}

    def download(self, k: int, j: int, wi: int) -> float:
        key = (k, j, wi)
        d = self._dl.get(key)
        if d is None:
            _, net = integrate_download(self.trace, wi * self.grid, float(self.megabits[k, j]))
            d = net + float(self.env.latency_s[j])
            self._dl[key] = d
        return d

    def transition(self, k, j, prev, bi, wi):
        g = self.grid
        b = bi * g
        d = self.download(k, j, wi)
        first = k == 0
        _, b_after, idle = advance_buffer(b, d, self.manifest.chunk_duration, self.cap, first)
        m_k = self.m[j]
        m_prev = m_k if prev is None else self.m[prev]
        u = float(self.env.quality[k]) * m_k
        smooth = self.weights.alpha * abs(m_k - m_prev)
        reb = self.weights.beta * max(0.0, d - (math.inf if first else b))
        return u - smooth - reb, _grid_index(b_after, g), _grid_index(wi * g + d + idle, g)


def offline_optimal(
    manifest: ChunkManifest,
    trace: ThroughputTrace,
    weights: QoEWeights | None = None,
    buffer_grid: float = DP_BUFFER_GRID,
    env: SessionEnv | None = None,
    buffer_cap: float = DEFAULT_BUFFER_CAP,
) -> tuple[list[int], float]:
    """Best plan over (chunk, last rung, buffer, wall clock) with full trace knowledge.

    Buffer level and wall clock are both rounded to ``buffer_grid`` after
    each chunk, and the next download starts at the rounded clock. Totals
    are accumulated front to back with the same float operations as
    :func:`evaluate_plan_grid`, so the result equals the maximum of that
    function over all plans exactly.
    """
    weights = weights or QoEWeights()
    model = _GridModel(manifest, trace, weights, buffer_grid, env, buffer_cap)
    g, L, cap = buffer_grid, manifest.chunk_duration, buffer_cap
    K, M = manifest.chunk_count, manifest.bitrate_count
    m = np.asarray(model.m)

    prev = np.array([-1])
    bi = np.array([0])
    wi = np.array([0])
    val = np.array([0.0])
    parents: list[np.ndarray] = []
    choices: list[np.ndarray] = []
    for k in range(K):
        n = len(val)
        uniq_w, w_pos = np.unique(wi, return_inverse=True)
        dl = np.array([[model.download(k, j, int(w)) for w in uniq_w] for j in range(M)])

        j = np.repeat(np.arange(M), n)
        src = np.tile(np.arange(n), M)
        d = dl[j, np.tile(w_pos, M)]
        b = bi[src] * g
        after = np.maximum(0.0, b - d) + L
        idle = np.maximum(0.0, after - cap)
        b_after = np.minimum(after, cap)
        m_k = m[j]
        p = prev[src]
        m_prev = np.where(p < 0, m_k, m[np.maximum(p, 0)])
        u = float(model.env.quality[k]) * m_k
        smooth = weights.alpha * np.abs(m_k - m_prev)
        if k == 0:
            reb = weights.beta * np.zeros_like(d)
        else:
            reb = weights.beta * np.maximum(0.0, d - b)
        cand = val[src] + (u - smooth - reb)
        nb = np.floor(b_after / g + 0.5).astype(np.int64)
        nw = np.floor((wi[src] * g + d + idle) / g + 0.5).astype(np.int64)

        # keep the best candidate per (rung, buffer, clock) state
        order = np.lexsort((-cand, nw, nb, j))
        js, nbs, nws = j[order], nb[order], nw[order]
        head = np.ones(len(order), dtype=bool)
        head[1:] = (js[1:] != js[:-1]) | (nbs[1:] != nbs[:-1]) | (nws[1:] != nws[:-1])
        keep = order[head]
        prev, bi, wi, val = j[keep], nb[keep], nw[keep], cand[keep]
        parents.append(src[keep])
        choices.append(j[keep])

    best = int(np.argmax(val))
    total = float(val[best])
    plan = [0] * K
    idx = best
    for k in range(K - 1, -1, -1):
        plan[k] = int(choices[k][idx])
        idx = int(parents[k][idx])
    return plan, total


def evaluate_plan_grid(
    plan: Sequence[int],
    manifest: ChunkManifest,
    trace: ThroughputTrace,
    weights: QoEWeights | None = None,
    buffer_grid: float = DP_BUFFER_GRID,
    env: SessionEnv | None = None,
    buffer_cap: float = DEFAULT_BUFFER_CAP,
) -> float:
    """Total QoE of ``plan`` under the offline planner's discretized dynamics."""
    if len(plan) != manifest.chunk_count:
        raise PolicyError("plan length must equal the chunk count")
    model = _GridModel(manifest, trace, weights or QoEWeights(), buffer_grid, env, buffer_cap)
    total, prev, bi, wi = 0.0, None, 0, 0
    for k, j in enumerate(plan):
        q, bi, wi = model.transition(k, int(j), prev, bi, wi)
        total += q
        prev = int(j)
    return total


# -- semantic-aware selector --------------------------------------------------


def ldabs_decide(
    obs: ObservationState,
    weights: QoEWeights,
    inner,
    semantic_ctx: SemanticContext,
    sizes: np.ndarray,
    latency_s: Sequence[float] | None = None,
) -> int:
    """Re-express ``obs`` in semantic delivery terms and let ``inner`` decide.

    ``sizes`` is the K x M table of semantic chunk sizes. The utility scale
    is the reconstruction quality expected at the receiver's SNR estimate.
    """
    est = obs.estimated_snr_db if obs.estimated_snr_db is not None else semantic_ctx.channel.estimated_snr_db
    scale = semantic_ctx.expected_quality(est)
    if scale <= 0:
        return 0
    k = obs.chunk_index
    sizes = np.asarray(sizes, dtype=float)
    rewritten = replace(
        obs,
        next_sizes=tuple(sizes[k].tolist()),
        upcoming_sizes=sizes[k:],
        processing_latency=tuple(latency_s) if latency_s is not None else obs.processing_latency,
        quality_scale=scale,
    )
    return inner.decide(rewritten, weights)


# -- policy objects ------------------------------------------------------------


class Policy:
    name = "policy"

    def reset(self, **session):
        pass

    def decide(self, obs: ObservationState, weights: QoEWeights) -> int:
        raise NotImplementedError


class RatePolicy(Policy):
    name = "rate"

    def __init__(self, safety: float = RATE_SAFETY, window: int = THROUGHPUT_WINDOW):
        self.safety, self.window = safety, window

    def decide(self, obs, weights):
        return rate_based_decide(obs, self.safety, self.window)


class BufferPolicy(Policy):
    name = "buffer"

    def __init__(self, reservoir: float = BB_RESERVOIR, cushion: float = BB_CUSHION):
        self.reservoir, self.cushion = reservoir, cushion

    def decide(self, obs, weights):
        return buffer_based_decide(obs, self.reservoir, self.cushion)


class BolaPolicy(Policy):
    name = "bola"

    def __init__(self, V: float | None = None, gamma_p: float = BOLA_GAMMA_P):
        self.V, self.gamma_p = V, gamma_p

    def decide(self, obs, weights):
        return bola_decide(obs, self.V, self.gamma_p)


class RobustMPCPolicy(Policy):
    """RobustMPC with a per-session window of relative forecast errors."""

    name = "robustmpc"

    def __init__(self, horizon: int = MPC_HORIZON, error_window: int = MPC_ERROR_WINDOW):
        if horizon < 1:
            raise PolicyError("MPC horizon must be >= 1")
        self.horizon, self.error_window = horizon, error_window
        self.reset()

    def reset(self, **session):
        self.errors: deque = deque(maxlen=self.error_window)
        self._last_prediction: float | None = None
        self._seen = -1

    def decide(self, obs, weights):
        recent = _recent_throughputs(obs)
        if self._last_prediction is not None and recent and obs.chunk_index != self._seen:
            actual = recent[-1]
            self.errors.append(abs(self._last_prediction - actual) / actual)
        self._seen = obs.chunk_index
        self._last_prediction = harmonic_mean(recent) if recent else None
        return robustmpc_decide(obs, weights, self.horizon, self.error_window, tuple(self.errors))


class OfflinePolicy(Policy):
    """Replays the offline-optimal plan computed at session start."""

    name = "offline"

    def __init__(self, buffer_grid: float = DP_BUFFER_GRID):
        self.buffer_grid = buffer_grid
        self.plan: list[int] = []
        self.planned_qoe: float | None = None

    def reset(self, manifest=None, trace=None, weights=None, env=None, buffer_cap=DEFAULT_BUFFER_CAP, **_):
        if manifest is None or trace is None:
            raise PolicyError("offline policy needs the manifest and trace")
        self.plan, self.planned_qoe = offline_optimal(manifest, trace, weights, self.buffer_grid, env, buffer_cap)

    def decide(self, obs, weights):
        if obs.chunk_index >= len(self.plan):
            raise PolicyError("offline policy was not reset for this session")
        return self.plan[obs.chunk_index]


class LdabsPolicy(Policy):
    """Semantic-aware selector wrapping an inner policy (RobustMPC by default).

    In plain mode there is no semantic delivery and it defers to ``inner``
    unchanged.
    """

    name = "ldabs"

    def __init__(self, inner: Policy | None = None, semantic_ctx: SemanticContext | None = None):
        self.inner = inner or RobustMPCPolicy()
        self.ctx = semantic_ctx or SemanticContext()
        self._sizes = None
        self._latency = None

    def reset(self, manifest=None, env=None, **session):
        self.inner.reset(manifest=manifest, env=env, **session)
        if env is not None and env.estimated_snr_db is not None:
            self._sizes = np.asarray(env.tx_bytes, dtype=float)
            self._latency = tuple(np.asarray(env.latency_s).tolist())
        elif manifest is not None and env is None:
            self._sizes = self.ctx.sizes_for(manifest)
            self._latency = tuple(self.ctx.latency_for(manifest).tolist())
        else:
            self._sizes = None

    def decide(self, obs, weights):
        if self._sizes is None:
            return self.inner.decide(obs, weights)
        return ldabs_decide(obs, weights, self.inner, self.ctx, self._sizes, self._latency)


POLICIES = {
    "rate": RatePolicy,
    "buffer": BufferPolicy,
    "bola": BolaPolicy,
    "robustmpc": RobustMPCPolicy,
    "offline": OfflinePolicy,
    "ldabs": LdabsPolicy,
}


def make_policy(name: str, semantic_ctx: SemanticContext | None = None, **params) -> Policy:
    if name not in POLICIES:
        raise PolicyError(f"unknown policy {name!r}; choose from {sorted(POLICIES)}")
    if name == "ldabs":
        inner_name = params.pop("inner", "robustmpc")
        inner_params = params.pop("inner_params", {})
        if inner_name == "ldabs":
            raise PolicyError("ldabs cannot wrap itself")
        return LdabsPolicy(make_policy(inner_name, **inner_params), semantic_ctx)
    return POLICIES[name](**params)
