"""Core transforms: signals, STFT/iSTFT, dB conversion, sliding statistics, 2-D convolution.

All spectral arithmetic runs in float64 / complex128.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyInput, InvalidInput, InvalidParams

DB_EPSILON = 1e-12
COLA_TOLERANCE = 1e-10

_WINDOW_ALIASES = {"rect": "boxcar", "rectangular": "boxcar", "hanning": "hann"}


@dataclass(frozen=True)
class Signal:
    """Multi-channel time-domain samples.

    ``samples`` is stored as a read-only ``(channels, n_samples)`` float64 array.
    A 1-D input is treated as a single channel.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:
            raise InvalidInput(f"samples must be 1-D or 2-D, got {data.ndim}-D")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("samples contain NaN or Inf")
        rate = int(self.sample_rate)
        if rate != self.sample_rate or rate <= 0:
            raise InvalidInput(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        data.flags.writeable = False
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", rate)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def replace(self, samples) -> "Signal":
        """Return a new signal with the same rate and different samples."""
        return Signal(samples, self.sample_rate)

    def channel(self, index: int) -> np.ndarray:
        return self.samples[index]


def resolve_window(name: str) -> str:
    return _WINDOW_ALIASES.get(name, name)


@lru_cache(maxsize=64)
def _window_cached(window: str, win_length: int, n_fft: int) -> np.ndarray:
    try:
        w = scipy.signal.get_window(resolve_window(window), win_length, fftbins=True)
    except ValueError as exc:
        raise InvalidParams(f"unknown window {window!r}") from exc
    w = np.asarray(w, dtype=np.float64)
    left = (n_fft - win_length) // 2
    padded = np.zeros(n_fft)
    padded[left:left + win_length] = w
    padded.flags.writeable = False
    return padded


@dataclass(frozen=True)
class StftParams:
    """Frame geometry of a short-time Fourier transform.

    ``win_length`` defaults to ``n_fft`` and ``hop_length`` to ``win_length // 4``.
    """

    n_fft: int = 1024
    win_length: int | None = None
    hop_length: int | None = None
    window: str = "hann"

    def __post_init__(self):
        win = self.n_fft if self.win_length is None else self.win_length
        hop = max(1, win // 4) if self.hop_length is None else self.hop_length
        object.__setattr__(self, "win_length", int(win))
        object.__setattr__(self, "hop_length", int(hop))
        if not (0 < self.hop_length <= self.win_length <= self.n_fft):
            raise InvalidParams(
                "need 0 < hop_length <= win_length <= n_fft, got "
                f"hop={self.hop_length}, win={self.win_length}, n_fft={self.n_fft}"
            )

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def window_array(self) -> np.ndarray:
        """Window of length ``n_fft`` (the ``win_length`` taper centred, zeros elsewhere)."""
        return _window_cached(self.window, self.win_length, self.n_fft)

    def cola_deviation(self) -> float:
        """Relative ripple of the overlap-added squared window.

        Analysis and synthesis both apply the window, so the overlap-add
        condition is checked on ``w**2``.
        """
        w2 = self.window_array() ** 2
        envelope = np.array([w2[n::self.hop_length].sum() for n in range(self.hop_length)])
        peak = envelope.max()
        if peak <= 0:
            return np.inf
        return float((peak - envelope.min()) / peak)

    def is_cola(self) -> bool:
        return self.cola_deviation() <= COLA_TOLERANCE

    def check_cola(self) -> None:
        dev = self.cola_deviation()
        if dev > COLA_TOLERANCE:
            raise InvalidParams(
                f"window {self.window!r} (win_length={self.win_length}) with hop {self.hop_length} "
                f"is not constant-overlap-add (ripple {dev:.3g})"
            )


@dataclass(frozen=True)
class Spectrogram:
    """One-sided complex STFT, shaped ``(channels, bins, frames)``."""

    values: np.ndarray
    params: StftParams
    sample_rate: int
    length: int = field(default=0)

    @property
    def n_bins(self) -> int:
        return self.values.shape[-2]

    @property
    def n_frames(self) -> int:
        return self.values.shape[-1]

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def replace(self, values: np.ndarray) -> "Spectrogram":
        return Spectrogram(values, self.params, self.sample_rate, self.length)


def frame_count(n_samples: int, params: StftParams) -> int:
    """Number of centred frames produced for ``n_samples`` input samples.

    Normally ``1 + n_samples // hop``; large hops get extra frames so the
    window support reaches the last sample.
    """
    hop = params.hop_length
    pad = params.n_fft // 2
    left = (params.n_fft - params.win_length) // 2
    reach = n_samples + pad - left - params.win_length
    return 1 + max(n_samples // hop, -(-reach // hop))


def stft(signal: Signal, params: StftParams | None = None) -> Spectrogram:
    """Centred STFT of every channel.

    The input is reflect-padded by ``n_fft // 2`` on both sides so that frame
    ``t`` is centred on sample ``t * hop_length``.
    """
    params = params or StftParams()
    if signal.n_samples < 1:
        raise EmptyInput("cannot transform an empty signal")
    params.check_cola()
    pad = params.n_fft // 2
    n_frames = frame_count(signal.n_samples, params)
    right = max(pad, (n_frames - 1) * params.hop_length + params.n_fft - signal.n_samples - pad)
    x = np.pad(signal.samples, ((0, 0), (pad, right)), mode="reflect")
    frames = sliding_window_view(x, params.n_fft, axis=-1)[:, ::params.hop_length, :]
    frames = frames[:, :n_frames]
    spec = scipy.fft.rfft(frames * params.window_array(), axis=-1)
    return Spectrogram(
        np.ascontiguousarray(np.swapaxes(spec, -1, -2)),
        params,
        signal.sample_rate,
        signal.n_samples,
    )


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Overlap-add ``(..., T, n)`` frames spaced ``hop`` apart."""
    *lead, n_frames, width = frames.shape
    reps = -(-width // hop)
    if reps * hop != width:
        frames = np.concatenate(
            [frames, np.zeros((*lead, n_frames, reps * hop - width))], axis=-1
        )
    blocks = frames.reshape(*lead, n_frames, reps, hop)
    out = np.zeros((*lead, n_frames + reps - 1, hop))
    for j in range(reps):
        out[..., j:j + n_frames, :] += blocks[..., :, j, :]
    return out.reshape(*lead, (n_frames + reps - 1) * hop)


def istft(spec: Spectrogram) -> Signal:
    """Inverse of :func:`stft`, returning exactly ``spec.length`` samples."""
    params = spec.params
    params.check_cola()
    values = np.asarray(spec.values)
    if values.ndim == 2:
        values = values[np.newaxis]
    if values.shape[-2] != params.n_bins:
        raise InvalidParams(f"expected {params.n_bins} bins, got {values.shape[-2]}")
    window = params.window_array()
    frames = scipy.fft.irfft(np.swapaxes(values, -1, -2), n=params.n_fft, axis=-1) * window
    y = _overlap_add(frames, params.hop_length)
    env = _overlap_add(np.broadcast_to(window ** 2, (values.shape[-1], params.n_fft)), params.hop_length)
    start = params.n_fft // 2
    length = spec.length or (values.shape[-1] - 1) * params.hop_length
    stop = start + length
    if y.shape[-1] < stop:
        extra = stop - y.shape[-1]
        y = np.concatenate([y, np.zeros((*y.shape[:-1], extra))], axis=-1)
        env = np.concatenate([env, np.zeros(extra)])
    y = y[..., start:stop]
    env = env[start:stop]
    nonzero = env > COLA_TOLERANCE * env.max()
    y[..., nonzero] /= env[nonzero]
    return Signal(y, spec.sample_rate)


def to_db(magnitude, epsilon: float = DB_EPSILON):
    """``20 * log10(magnitude + epsilon)``."""
    if epsilon <= 0:
        raise InvalidParams("epsilon must be positive")
    mag = np.asarray(magnitude, dtype=np.float64)
    if np.any(mag < 0):
        raise InvalidInput("magnitude must be non-negative")
    out = 20.0 * np.log10(mag + epsilon)
    return float(out) if out.ndim == 0 else out


def _check_window_frames(window_frames: int) -> None:
    if int(window_frames) != window_frames or window_frames < 1 or window_frames % 2 == 0:
        raise InvalidParams(f"window_frames must be a positive odd integer, got {window_frames!r}")


def sliding_stats(values, window_frames: int, max_chunk: int = 1 << 22):
    """Centred sliding mean and population std along the last axis.

    Windows are truncated at the edges (only in-range frames contribute).
    Returns ``(means, stds)`` with the shape of ``values``.
    """
    _check_window_frames(window_frames)
    x = np.asarray(values, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    lead = x.shape[:-1]
    x = x.reshape(-1, x.shape[-1])
    n_rows, n = x.shape
    half = window_frames // 2
    means = np.empty_like(x)
    stds = np.empty_like(x)

    edge = [t for t in range(n) if t < half or t >= n - half]
    for t in edge:
        seg = x[:, max(0, t - half):min(n, t + half + 1)]
        means[:, t] = seg.mean(axis=-1)
        stds[:, t] = seg.std(axis=-1)

    if n >= window_frames:
        rows_per_chunk = max(1, max_chunk // max(1, n * window_frames))
        for r0 in range(0, n_rows, rows_per_chunk):
            view = sliding_window_view(x[r0:r0 + rows_per_chunk], window_frames, axis=-1)
            means[r0:r0 + rows_per_chunk, half:n - half] = view.mean(axis=-1)
            stds[r0:r0 + rows_per_chunk, half:n - half] = view.std(axis=-1)

    means = means.reshape(*lead, n)
    stds = stds.reshape(*lead, n)
    if squeeze:
        return means[0], stds[0]
    return means, stds


def conv2d_same(grid, kernel) -> np.ndarray:
    """Zero-padded 2-D correlation over the last two axes, same-size output.

    Leading axes of ``grid`` are treated as a batch.
    """
    k = np.asarray(kernel, dtype=np.float64)
    g = np.asarray(grid, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0:
        raise InvalidParams(f"kernel dimensions must be odd, got {k.shape}")
    if g.ndim < 2:
        raise InvalidInput("grid must be at least 2-D")
    if k.shape == (1, 1):
        return g * k[0, 0]
    k = k[::-1, ::-1].reshape((1,) * (g.ndim - 2) + k.shape)
    return scipy.signal.fftconvolve(g, k, mode="same", axes=(-2, -1))
