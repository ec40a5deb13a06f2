"""Latent diffusion math, the AWGN latent channel and analytic denoisers.

Steps are 1-based as in the usual DDPM notation; index 0 of every schedule
array holds the t=0 convention (alpha_bar_0 = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_REFINE_STEP = 50
DEFAULT_KAPPA = 0.5


class DiffusionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta) - 1

    def snr_ratio(self) -> np.ndarray:
        """(1 - alpha_bar_t) / alpha_bar_t for t = 0..T."""
        return (1.0 - self.alpha_bar) / self.alpha_bar


def build_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START, beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    if T < 1:
        raise DiffusionError("T must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise DiffusionError("need 0 < beta_start <= beta_end < 1")
    beta = np.empty(T + 1)
    beta[0] = 0.0
    beta[1:] = np.linspace(beta_start, beta_end, T) if T > 1 else beta_start
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    for arr in (beta, alpha, alpha_bar):
        arr.setflags(write=False)
    return NoiseSchedule(beta, alpha, alpha_bar)


def schedule_from_betas(betas) -> NoiseSchedule:
    b = np.asarray(betas, dtype=float)
    if b.ndim != 1 or len(b) < 1 or np.any(b <= 0) or np.any(b >= 1):
        raise DiffusionError("betas must be a non-empty vector in (0, 1)")
    beta = np.concatenate([[0.0], b])
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    for arr in (beta, alpha, alpha_bar):
        arr.setflags(write=False)
    return NoiseSchedule(beta, alpha, alpha_bar)


def as_latent(values) -> np.ndarray:
    z = np.asarray(values, dtype=float)
    if z.ndim != 1 or z.size < 1:
        raise DiffusionError("latent must be a non-empty 1-D vector")
    if not np.all(np.isfinite(z)):
        raise DiffusionError("latent values must be finite")
    return z


def _check_step(t: int, sched: NoiseSchedule, lo: int = 0):
    if not lo <= t <= sched.T:
        raise DiffusionError(f"step {t} outside [{lo}, {sched.T}]")


def forward_diffuse(z0, t: int, noise, sched: NoiseSchedule) -> np.ndarray:
    z0, noise = as_latent(z0), as_latent(noise)
    if z0.shape != noise.shape:
        raise DiffusionError(f"dimension mismatch: {z0.shape} vs {noise.shape}")
    _check_step(t, sched)
    ab = sched.alpha_bar[t]
    return math.sqrt(ab) * z0 + math.sqrt(1.0 - ab) * noise


@dataclass(frozen=True)
class ChannelModel:
    """Flat-gain AWGN channel. ``snr_db = inf`` means noiseless."""

    snr_db: float = 30.0
    gain: float = 1.0
    csi_error_db: float = 0.0

    def __post_init__(self):
        if not self.gain > 0:
            raise DiffusionError("channel gain must be positive")

    @property
    def noise_variance(self) -> float:
        return noise_variance(self.snr_db)

    @property
    def estimated_snr_db(self) -> float:
        return self.snr_db + self.csi_error_db


def noise_variance(snr_db: float) -> float:
    """Per-element noise variance at unit signal power."""
    if snr_db == math.inf:
        return 0.0
    if snr_db == -math.inf:
        return math.inf
    return 10.0 ** (-snr_db / 10.0)


def transmit(z0, ch: ChannelModel, rng_seed: int) -> np.ndarray:
    z0 = as_latent(z0)
    sigma2 = ch.noise_variance
    y = ch.gain * z0
    if sigma2 > 0:
        rng = np.random.default_rng(rng_seed)
        y = y + ch.gain * math.sqrt(sigma2) * rng.standard_normal(z0.shape)
    return y


def match_step(estimated_snr_db: float, sched: NoiseSchedule) -> int:
    """Smallest step whose noise-to-signal ratio covers the channel noise; T if none does."""
    sigma2 = noise_variance(estimated_snr_db)
    ratio = sched.snr_ratio()[1:]
    i = int(np.searchsorted(ratio, sigma2, side="left"))
    return min(i + 1, sched.T)


def embed_received(y, ch: ChannelModel, r: int, sched: NoiseSchedule, rng_seed: int) -> np.ndarray:
    """Place an equalized channel output on the diffusion trajectory at step ``r``.

    Make-up noise tops the true channel noise up to the step-r level; when
    the channel is already noisier, nothing is added.
    """
    y = as_latent(y)
    _check_step(r, sched, lo=1)
    y_eq = y / ch.gain
    ab = sched.alpha_bar[r]
    makeup = max(0.0, (1.0 - ab) / ab - ch.noise_variance)
    if makeup > 0:
        rng = np.random.default_rng(rng_seed)
        y_eq = y_eq + math.sqrt(makeup) * rng.standard_normal(y.shape)
    return math.sqrt(ab) * y_eq


def posterior_coefficients(t: int, sched: NoiseSchedule) -> tuple[float, float]:
    """Weights on (z0_hat, z_t) in the q-posterior mean of z_{t-1}."""
    _check_step(t, sched, lo=1)
    ab_t, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
    beta_t, alpha_t = sched.beta[t], sched.alpha[t]
    c0 = math.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    ct = math.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    return c0, ct


def posterior_variance(t: int, sched: NoiseSchedule) -> float:
    _check_step(t, sched, lo=1)
    return sched.beta[t] * (1.0 - sched.alpha_bar[t - 1]) / (1.0 - sched.alpha_bar[t])


def posterior_mean(z_t, z0_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    c0, ct = posterior_coefficients(t, sched)
    return c0 * np.asarray(z0_hat, dtype=float) + ct * np.asarray(z_t, dtype=float)


class Denoiser(Protocol):
    def __call__(self, z_t: np.ndarray, t: int, condition: np.ndarray | None = None) -> np.ndarray: ...


class OracleDenoiser:
    """Always predicts the stored clean latent.

    With ``conditional=True`` a supplied condition is treated as the offset
    to the target, so the prediction becomes ``z0 + condition``.
    """

    def __init__(self, z0, conditional: bool = False):
        self.z0 = as_latent(z0)
        self.conditional = conditional

    def __call__(self, z_t, t, condition=None):
        if self.conditional and condition is not None:
            return self.z0 + condition
        return self.z0


class GaussianPriorDenoiser:
    """MMSE predictor of z0 for a standard-normal prior: sqrt(alpha_bar_t) * z_t."""

    def __init__(self, sched: NoiseSchedule):
        self.sched = sched

    def __call__(self, z_t, t, condition=None):
        return math.sqrt(self.sched.alpha_bar[t]) * np.asarray(z_t, dtype=float)


def denoise_from(
    z_r,
    r: int,
    den: Denoiser,
    sched: NoiseSchedule,
    stochastic: bool = False,
    rng_seed: int = 0,
    condition=None,
) -> np.ndarray:
    """Run the reverse process from step ``r`` down to 0."""
    z = as_latent(z_r)
    _check_step(r, sched, lo=1)
    cond = None if condition is None else as_latent(condition)
    rng = np.random.default_rng(rng_seed) if stochastic else None
    for t in range(r, 0, -1):
        z0_hat = den(z, t, cond)
        z = posterior_mean(z, z0_hat, t, sched)
        if rng is not None and t > 1:
            z = z + math.sqrt(posterior_variance(t, sched)) * rng.standard_normal(z.shape)
    return z


def conditional_refine(
    z0_ref,
    metadata,
    s: int,
    den: Denoiser,
    sched: NoiseSchedule,
    stochastic: bool = False,
    rng_seed: int = 0,
) -> np.ndarray:
    """Noise a recovered reference latent to step ``s`` and denoise it under ``metadata``.

    ``rng_seed`` is split into two streams: the first draws the forward
    noise, the second seeds :func:`denoise_from`.
    """
    z0_ref, metadata = as_latent(z0_ref), as_latent(metadata)
    if z0_ref.shape != metadata.shape:
        raise DiffusionError(f"dimension mismatch: {z0_ref.shape} vs {metadata.shape}")
    _check_step(s, sched, lo=1)
    fwd_seed, rev_seed = refine_seeds(rng_seed)
    noise = np.random.default_rng(fwd_seed).standard_normal(z0_ref.shape)
    z_s = forward_diffuse(z0_ref, s, noise, sched)
    return denoise_from(z_s, s, den, sched, stochastic=stochastic, rng_seed=rev_seed, condition=metadata)


def refine_seeds(rng_seed: int) -> tuple[int, int]:
    a, b = np.random.SeedSequence(rng_seed).generate_state(2)
    return int(a), int(b)


def effective_alpha_bar(r: int, true_snr_db: float, sched: NoiseSchedule) -> float:
    """Signal retention actually achieved when denoising starts at ``r``.

    Starting below the true noise level (SNR overestimated) cannot remove
    the surplus noise, so retention is capped by the channel's own
    1 / (1 + sigma^2).
    """
    _check_step(r, sched, lo=1)
    return min(float(sched.alpha_bar[r]), 1.0 / (1.0 + noise_variance(true_snr_db)))


def quality_proxy(alpha_bar: float, kappa: float = DEFAULT_KAPPA) -> float:
    return min(1.0, max(0.0, 1.0 - (1.0 - alpha_bar) * kappa))


def reconstruction_quality(
    estimated_snr_db: float,
    true_snr_db: float,
    sched: NoiseSchedule,
    kappa: float = DEFAULT_KAPPA,
) -> tuple[int, float]:
    """Return ``(r, quality)`` for a chunk whose I-frame latents cross the channel."""
    r = match_step(estimated_snr_db, sched)
    return r, quality_proxy(effective_alpha_bar(r, true_snr_db, sched), kappa)
