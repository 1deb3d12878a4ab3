"""Spectral gating: noise profile, binary mask, mask smoothing and reconstruction."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dsp import Signal, StftParams, conv2d_same, istft, sliding_stats, stft, to_db
from .errors import EmptyInput, InvalidParams, RateMismatch, ShapeMismatch

log = logging.getLogger(__name__)


class GateMode(str, enum.Enum):
    STATIONARY = "stationary"
    NONSTATIONARY = "nonstationary"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class GateConfig:
    """Hyperparameters of the spectral gate.

    Defaults: ``n_fft=1024``, threshold at mean + 1.5 std, full noise
    removal, mask smoothed over 500 Hz x 50 ms, 1 s non-stationary window.
    """

    stft: StftParams = field(default_factory=StftParams)
    n_std_thresh: float = 1.5
    prop_decrease: float = 1.0
    freq_mask_smooth_hz: float = 500.0
    time_mask_smooth_ms: float = 50.0
    mode: GateMode = GateMode.STATIONARY
    noise_window_ms: float = 1000.0
    smoothing_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mode", GateMode(self.mode))
        if not 0.0 <= self.prop_decrease <= 1.0:
            raise InvalidParams(f"prop_decrease must be in [0, 1], got {self.prop_decrease}")
        if self.freq_mask_smooth_hz < 0 or self.time_mask_smooth_ms < 0:
            raise InvalidParams("smoothing extents must be non-negative")
        if self.noise_window_ms <= 0:
            raise InvalidParams("noise_window_ms must be positive")
        if not math.isfinite(self.n_std_thresh):
            raise InvalidParams("n_std_thresh must be finite")

    def window_frames(self, sample_rate: int) -> int:
        """Sliding-window length in STFT frames, forced odd."""
        frames = _round_half_up(self.noise_window_ms * sample_rate / (1000.0 * self.stft.hop_length))
        frames = max(frames, 1)
        return frames + 1 if frames % 2 == 0 else frames


@dataclass(frozen=True)
class NoiseProfile:
    """Per-frequency noise statistics in dB (leading axes are channels)."""

    mu_db: np.ndarray
    sigma_db: np.ndarray
    thresh_db: np.ndarray
    n_std_thresh: float

    @property
    def n_bins(self) -> int:
        return self.mu_db.shape[-1]


def estimate_noise_profile(noise_spec_db, k: float) -> NoiseProfile:
    """Mean, population std and threshold ``mu + k*sigma`` over the frame axis."""
    grid = np.asarray(noise_spec_db, dtype=np.float64)
    if grid.ndim < 2 or grid.shape[-1] == 0:
        raise EmptyInput("noise spectrogram has no frames")
    mu = grid.mean(axis=-1)
    sigma = grid.std(axis=-1)
    return NoiseProfile(mu, sigma, mu + k * sigma, k)


def build_mask_stationary(sig_spec_db, profile: NoiseProfile) -> np.ndarray:
    """Binary mask: 1 where the dB value strictly exceeds its bin's threshold."""
    grid = np.asarray(sig_spec_db, dtype=np.float64)
    if grid.ndim < 2 or grid.shape[-2] != profile.n_bins:
        raise ShapeMismatch(
            f"grid has {grid.shape[-2] if grid.ndim >= 2 else '?'} bins, profile has {profile.n_bins}"
        )
    thresh = profile.thresh_db[..., np.newaxis]
    try:
        return (grid > thresh).astype(np.float64)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast profile {thresh.shape} onto grid {grid.shape}") from exc


def build_mask_nonstationary(sig_spec_db, k: float, window_frames: int) -> np.ndarray:
    """Binary mask against a sliding per-bin threshold ``mu(f,t) + k*sigma(f,t)``."""
    grid = np.asarray(sig_spec_db, dtype=np.float64)
    means, stds = sliding_stats(grid, window_frames)
    return (grid > means + k * stds).astype(np.float64)


def triangular_window(n_grad: int) -> np.ndarray:
    """``1 - |i - n| / n`` for ``i = 0..2n``; ``[1]`` when ``n == 0``."""
    if n_grad <= 0:
        return np.ones(1)
    i = np.arange(2 * n_grad + 1, dtype=np.float64)
    return 1.0 - np.abs((i - n_grad) / n_grad)


def smoothing_grades(freq_smooth_hz: float, time_smooth_ms: float, sample_rate: int,
                     params: StftParams) -> tuple[int, int]:
    if freq_smooth_hz < 0 or time_smooth_ms < 0:
        raise InvalidParams("smoothing extents must be non-negative")
    bin_hz = sample_rate / params.n_fft
    n_freq = _round_half_up(freq_smooth_hz / bin_hz)
    n_time = _round_half_up(time_smooth_ms * sample_rate / (1000.0 * params.hop_length))
    return n_freq, n_time


def smoothing_kernel(freq_smooth_hz: float, time_smooth_ms: float, sample_rate: int,
                     params: StftParams) -> np.ndarray:
    """Separable triangular smoothing kernel, shape ``(2*nf+1, 2*nt+1)``, summing to 1."""
    n_freq, n_time = smoothing_grades(freq_smooth_hz, time_smooth_ms, sample_rate, params)
    kernel = np.outer(triangular_window(n_freq), triangular_window(n_time))
    return kernel / kernel.sum()


def _profile_source(signal: Signal, noise: Signal | None) -> Signal:
    if noise is None:
        return signal
    if noise.sample_rate != signal.sample_rate:
        raise RateMismatch(f"noise rate {noise.sample_rate} != signal rate {signal.sample_rate}")
    if noise.n_channels not in (1, signal.n_channels):
        raise ShapeMismatch(
            f"noise has {noise.n_channels} channels, signal has {signal.n_channels}"
        )
    if noise.n_samples == 0:
        raise EmptyInput("noise clip is empty")
    return noise


def gate_mask(signal: Signal, noise: Signal | None = None, config: GateConfig | None = None,
              spec_db: np.ndarray | None = None) -> np.ndarray:
    """Binary (unsmoothed) mask for ``signal``, shaped ``(channels, bins, frames)``."""
    config = config or GateConfig()
    if spec_db is None:
        spec_db = to_db(stft(signal, config.stft).magnitude())
    k = config.n_std_thresh
    if config.mode is GateMode.NONSTATIONARY:
        if noise is not None:
            log.debug("non-stationary gate ignores the noise clip")
        return build_mask_nonstationary(spec_db, k, config.window_frames(signal.sample_rate))
    source = _profile_source(signal, noise)
    if source is signal:
        noise_db = spec_db
    else:
        noise_db = to_db(stft(source, config.stft).magnitude())
    return build_mask_stationary(spec_db, estimate_noise_profile(noise_db, k))


def smooth_mask(mask: np.ndarray, config: GateConfig, sample_rate: int) -> np.ndarray:
    kernel = smoothing_kernel(config.freq_mask_smooth_hz, config.time_mask_smooth_ms,
                              sample_rate, config.stft)
    if kernel.shape == (1, 1):
        return mask
    return np.clip(conv2d_same(mask, kernel), 0.0, 1.0)


def apply_gate(signal: Signal, noise: Signal | None = None,
               config: GateConfig | None = None) -> Signal:
    """Denoise ``signal`` by spectral gating.

    Parameters
    ----------
    signal : Signal
        Recording to denoise. Channels are processed independently.
    noise : Signal, optional
        Noise-only clip for the stationary profile. One channel is broadcast
        to all channels of ``signal``. Without it the profile comes from
        ``signal`` itself. Ignored in non-stationary mode.
    config : GateConfig, optional

    Returns
    -------
    Signal
        Same length, rate and channel count as ``signal``.
    """
    config = config or GateConfig()
    if signal.n_samples == 0:
        raise EmptyInput("cannot denoise an empty signal")
    if noise is not None:
        _profile_source(signal, noise)
    spec = stft(signal, config.stft)
    if config.prop_decrease == 0.0:
        return istft(spec)
    spec_db = to_db(spec.magnitude())
    mask = gate_mask(signal, noise, config, spec_db=spec_db)
    if config.smoothing_enabled:
        mask = smooth_mask(mask, config, signal.sample_rate)
    gain = 1.0 - config.prop_decrease * (1.0 - mask)
    return istft(spec.replace(spec.values * gain))


def reduce_noise(samples, sample_rate: int, noise=None, **kwargs) -> np.ndarray:
    """Array-in, array-out convenience wrapper around :func:`apply_gate`.

    Keyword arguments are :class:`GateConfig` fields, plus ``n_fft``,
    ``win_length``, ``hop_length`` and ``window`` for the STFT.
    """
    stft_keys = {"n_fft", "win_length", "hop_length", "window"}
    stft_kwargs = {k: kwargs.pop(k) for k in list(kwargs) if k in stft_keys}
    config = GateConfig(stft=StftParams(**stft_kwargs), **kwargs)
    arr = np.asarray(samples, dtype=np.float64)
    sig = Signal(arr, sample_rate)
    noise_sig = None if noise is None else Signal(noise, sample_rate)
    out = apply_gate(sig, noise_sig, config).samples
    return out[0] if arr.ndim == 1 else out
