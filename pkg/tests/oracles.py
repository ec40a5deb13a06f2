"""Independent reference implementations used by several test modules."""

import itertools
import math

import numpy as np

from ldabs.media import BitrateLadder, ChunkManifest
from ldabs.qoe import QoEWeights, chunk_qoe
from ldabs.trace import from_samples, integrate_download


def snap(x, grid):
    return math.floor(x / grid + 0.5)


def grid_plan_total(plan, manifest, trace, weights, grid, cap):
    """Total QoE of ``plan`` when buffer and clock are rounded to ``grid`` after every chunk."""
    ladder = manifest.ladder.bitrates_kbps
    L = manifest.chunk_duration
    total = 0.0
    bi = wi = 0
    prev = None
    for k, j in enumerate(plan):
        b = bi * grid
        _, d = integrate_download(trace, wi * grid, float(manifest.sizes[k, j]) * 8 / 1e6)
        q = chunk_qoe(ladder[j], prev, d, math.inf if k == 0 else b, weights, ladder)
        total += q.total
        after = max(0.0, b - d) + L
        idle = max(0.0, after - cap)
        bi = snap(min(after, cap), grid)
        wi = snap(wi * grid + d + idle, grid)
        prev = ladder[j]
    return total


def brute_force_best(manifest, trace, weights, grid, cap):
    K, M = manifest.sizes.shape
    return max(
        grid_plan_total(p, manifest, trace, weights, grid, cap) for p in itertools.product(range(M), repeat=K)
    )


def random_instance(rng):
    """Small random (manifest, trace) pair."""
    K = int(rng.integers(1, 7))
    M = int(rng.integers(2, 4))
    ladder = tuple(sorted(rng.choice(np.arange(200, 5000, 50), size=M, replace=False).tolist()))
    L = float(rng.choice([1.0, 2.0, 4.0]))
    base = np.array(ladder, dtype=float) * 1000 * L / 8
    sizes = np.round(base * rng.uniform(0.85, 1.15, size=(K, 1)))
    man = ChunkManifest(BitrateLadder(ladder), L, sizes)
    n = int(rng.integers(1, 6))
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.5, 3.0, size=n - 1))]) if n > 1 else np.array([0.0])
    rates = rng.uniform(0.2, 5.0, size=n)
    return man, from_samples(list(zip(times.tolist(), rates.tolist())), name="rand")


WEIGHTS = QoEWeights(1.0, 2.66)
