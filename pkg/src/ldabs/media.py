"""Video model: bitrate ladder, GOP layout, chunk manifest and semantic sizing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_LADDER_KBPS = (300, 750, 1200, 1850, 2850, 4300)
DEFAULT_CHUNK_SECONDS = 4.0
DEFAULT_GOP_PATTERN = "IBBPBBPBBPBB"


class MediaError(ValueError):
    pass


@dataclass(frozen=True)
class BitrateLadder:
    bitrates_kbps: tuple[int, ...] = DEFAULT_LADDER_KBPS

    def __post_init__(self):
        rates = tuple(int(b) for b in self.bitrates_kbps)
        if len(rates) < 2:
            raise MediaError("ladder needs at least two bitrates")
        if any(b <= 0 for b in rates):
            raise MediaError("bitrates must be positive")
        if any(b2 <= b1 for b1, b2 in zip(rates, rates[1:])):
            raise MediaError("bitrates must be strictly ascending")
        object.__setattr__(self, "bitrates_kbps", rates)

    def __len__(self):
        return len(self.bitrates_kbps)

    def __getitem__(self, i):
        return self.bitrates_kbps[i]

    @property
    def lowest(self) -> int:
        return self.bitrates_kbps[0]


@dataclass(frozen=True)
class GopStructure:
    pattern: str = DEFAULT_GOP_PATTERN
    width: int = 1920
    height: int = 1080
    fps: float = 30.0

    def __post_init__(self):
        if not self.pattern or self.pattern[0] != "I":
            raise MediaError("GOP pattern must be non-empty and start with 'I'")
        if set(self.pattern) - set("IPB"):
            raise MediaError(f"GOP pattern may only contain I/P/B: {self.pattern!r}")
        if self.width <= 0 or self.height <= 0 or self.fps <= 0:
            raise MediaError("width, height and fps must be positive")

    def frame_types(self, n_frames: int | None = None) -> str:
        """Frame types for ``n_frames`` frames, repeating the pattern cyclically."""
        if n_frames is None:
            return self.pattern
        reps = -(-n_frames // len(self.pattern))
        return (self.pattern * reps)[:n_frames]

    def frames_per_chunk(self, chunk_duration: float) -> int:
        return max(1, round(self.fps * chunk_duration))

    def scaled(self, width: int, height: int) -> "GopStructure":
        return GopStructure(self.pattern, width, height, self.fps)


@dataclass(frozen=True)
class SemanticProfile:
    downsample_factor: int = 8
    latent_channels: int = 4
    bytes_per_latent_element: float = 1.0
    metadata_bytes_p: float = 2048
    metadata_bytes_b: float = 1024
    frame_weight_i: float = 8.0
    frame_weight_p: float = 2.0
    frame_weight_b: float = 1.0

    def __post_init__(self):
        if self.downsample_factor < 1 or self.latent_channels < 1:
            raise MediaError("downsample_factor and latent_channels must be >= 1")
        positive = (
            self.bytes_per_latent_element,
            self.metadata_bytes_p,
            self.metadata_bytes_b,
            self.frame_weight_i,
            self.frame_weight_p,
            self.frame_weight_b,
        )
        if any(v <= 0 for v in positive):
            raise MediaError("byte sizes and frame weights must be positive")

    def weight(self, frame_type: str) -> float:
        return {"I": self.frame_weight_i, "P": self.frame_weight_p, "B": self.frame_weight_b}[frame_type]


@dataclass(frozen=True)
class ChunkManifest:
    """K chunks x M bitrates of sizes (bytes) plus optional quality scores.

    ``resolutions`` gives the (width, height) each rung is encoded at. When
    omitted, rung m is the GOP resolution scaled per axis by
    sqrt(a_m / a_M), so the pixel count tracks the bitrate.
    """

    ladder: BitrateLadder
    chunk_duration: float
    sizes: np.ndarray
    gop: GopStructure = field(default_factory=GopStructure)
    quality: np.ndarray | None = None
    resolutions: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=float)
        if sizes.ndim != 2 or sizes.shape[0] < 1 or sizes.shape[1] != len(self.ladder):
            raise MediaError(f"sizes must be K x {len(self.ladder)}, got shape {sizes.shape}")
        if self.chunk_duration <= 0:
            raise MediaError("chunk_duration must be positive")
        if np.any(sizes <= 0):
            raise MediaError("chunk sizes must be positive")
        if np.any(np.diff(sizes, axis=1) <= 0):
            raise MediaError("sizes must increase strictly across bitrates")
        sizes.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        if self.quality is not None:
            q = np.asarray(self.quality, dtype=float)
            if q.shape != sizes.shape:
                raise MediaError("quality must match sizes in shape")
            if np.any(np.diff(q, axis=1) < 0):
                raise MediaError("quality must be non-decreasing across bitrates")
            q.setflags(write=False)
            object.__setattr__(self, "quality", q)
        if self.resolutions is None:
            top = self.ladder.bitrates_kbps[-1]
            res = []
            for a in self.ladder.bitrates_kbps:
                s = math.sqrt(a / top)
                res.append((max(2, 2 * round(self.gop.width * s / 2)), max(2, 2 * round(self.gop.height * s / 2))))
            object.__setattr__(self, "resolutions", tuple(res))
        else:
            res = tuple((int(w), int(h)) for w, h in self.resolutions)
            if len(res) != len(self.ladder):
                raise MediaError("one resolution per bitrate is required")
            object.__setattr__(self, "resolutions", res)

    @property
    def chunk_count(self) -> int:
        return self.sizes.shape[0]

    @property
    def bitrate_count(self) -> int:
        return self.sizes.shape[1]

    def rung_gop(self, m: int) -> GopStructure:
        w, h = self.resolutions[m]
        return self.gop.scaled(w, h)

    def to_dict(self) -> dict:
        doc = {
            "ladder_kbps": list(self.ladder.bitrates_kbps),
            "chunk_duration_s": self.chunk_duration,
            "sizes_bytes": self.sizes.tolist(),
            "gop": {"pattern": self.gop.pattern, "width": self.gop.width, "height": self.gop.height, "fps": self.gop.fps},
            "resolutions": [list(r) for r in self.resolutions],
        }
        if self.quality is not None:
            doc["quality"] = self.quality.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ChunkManifest":
        try:
            ladder = BitrateLadder(tuple(doc["ladder_kbps"]))
            gop = GopStructure(**doc["gop"]) if "gop" in doc else GopStructure()
            return cls(
                ladder=ladder,
                chunk_duration=float(doc["chunk_duration_s"]),
                sizes=np.asarray(doc["sizes_bytes"], dtype=float),
                gop=gop,
                quality=None if doc.get("quality") is None else np.asarray(doc["quality"], dtype=float),
                resolutions=None if doc.get("resolutions") is None else tuple(tuple(r) for r in doc["resolutions"]),
            )
        except KeyError as exc:
            raise MediaError(f"manifest missing key {exc.args[0]!r}") from None


def dump_manifest(manifest: ChunkManifest) -> str:
    return json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n"


def load_manifest(path) -> ChunkManifest:
    from pathlib import Path

    return ChunkManifest.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def generate_manifest(
    seed: int,
    ladder: BitrateLadder | None = None,
    K: int = 48,
    L: float = DEFAULT_CHUNK_SECONDS,
    gop: GopStructure | None = None,
    size_noise: float = 0.1,
) -> ChunkManifest:
    """Synthetic manifest: nominal size bitrate*L, jittered per chunk by a shared factor."""
    ladder = ladder or BitrateLadder()
    gop = gop or GopStructure()
    if K < 1:
        raise MediaError("K must be >= 1")
    if not 0 <= size_noise < 0.5:
        raise MediaError("size_noise must lie in [0, 0.5)")
    rng = np.random.default_rng(seed)
    rates = np.asarray(ladder.bitrates_kbps, dtype=float)
    nominal = rates * 1000.0 * L / 8.0
    factors = rng.uniform(1 - size_noise, 1 + size_noise, size=K) if size_noise > 0 else np.ones(K)
    sizes = np.rint(factors[:, None] * nominal[None, :])
    quality = np.tile(np.log(rates / rates[0]), (K, 1))
    return ChunkManifest(ladder=ladder, chunk_duration=L, sizes=sizes, gop=gop, quality=quality)


def _largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    w = np.asarray(weights, dtype=float)
    exact = total * w / w.sum()
    base = np.floor(exact).astype(int)
    short = total - int(base.sum())
    # stable: ties resolved by frame order
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:short]] += 1
    return base.tolist()


def frame_sizes(
    chunk_bytes: int,
    gop: GopStructure,
    profile: SemanticProfile,
    chunk_duration: float | None = None,
) -> list[tuple[str, int]]:
    """Split a chunk's bytes over its frames in proportion to the frame-type weights.

    With ``chunk_duration`` the chunk holds fps * duration frames; otherwise
    exactly one pass of the GOP pattern.
    """
    if chunk_bytes <= 0:
        raise MediaError("chunk_bytes must be positive")
    n = None if chunk_duration is None else gop.frames_per_chunk(chunk_duration)
    types = gop.frame_types(n)
    alloc = _largest_remainder(int(round(chunk_bytes)), [profile.weight(t) for t in types])
    return list(zip(types, alloc))


def latent_size(gop: GopStructure, profile: SemanticProfile) -> int:
    f = profile.downsample_factor
    elements = math.ceil(gop.width / f) * math.ceil(gop.height / f) * profile.latent_channels
    return math.ceil(elements * profile.bytes_per_latent_element)


def semantic_chunk_size(
    chunk_bytes: float,
    gop: GopStructure,
    profile: SemanticProfile,
    chunk_duration: float | None = None,
) -> int:
    """Bytes sent per chunk in semantic mode: latents for I, metadata for P/B.

    ``chunk_bytes`` does not enter the result; it is accepted so callers can
    treat this as a drop-in replacement for the encoded size.
    """
    n = None if chunk_duration is None else gop.frames_per_chunk(chunk_duration)
    types = gop.frame_types(n)
    z = latent_size(gop, profile)
    return math.ceil(
        types.count("I") * z + types.count("P") * profile.metadata_bytes_p + types.count("B") * profile.metadata_bytes_b
    )


def compression_ratio(
    chunk_bytes: float,
    gop: GopStructure,
    profile: SemanticProfile,
    chunk_duration: float | None = None,
) -> float:
    if chunk_bytes <= 0:
        raise MediaError("chunk_bytes must be positive")
    return semantic_chunk_size(chunk_bytes, gop, profile, chunk_duration) / chunk_bytes


def semantic_sizes(manifest: ChunkManifest, profile: SemanticProfile) -> np.ndarray:
    """K x M semantic sizes, one per (chunk, rung) at the rung's resolution."""
    per_rung = np.array(
        [
            semantic_chunk_size(1.0, manifest.rung_gop(m), profile, manifest.chunk_duration)
            for m in range(manifest.bitrate_count)
        ],
        dtype=float,
    )
    return np.tile(per_rung, (manifest.chunk_count, 1))
