"""Conventional comparison filters: local Wiener, iterative Wiener (LPC),
Savitzky-Golay smoothing and magnitude spectral subtraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal

from .dsp import Signal, StftParams, istft, sliding_stats, stft
from .errors import EmptyInput, InputTooShort, InvalidParams, RateMismatch, ShapeMismatch


def _odd_at_least(value: int, minimum: int, name: str) -> None:
    if int(value) != value or value < minimum or value % 2 == 0:
        raise InvalidParams(f"{name} must be an odd integer >= {minimum}, got {value!r}")


# --- local-statistics Wiener -------------------------------------------------


@dataclass(frozen=True)
class WienerParams:
    window_size: int = 15

    def __post_init__(self):
        _odd_at_least(self.window_size, 3, "window_size")


def wiener_filter(signal: Signal, params: WienerParams | None = None) -> Signal:
    """Adaptive Wiener filter driven by local mean and variance.

    ``x = mu + max(0, var - nu2) / var * (y - mu)`` with ``nu2`` the average
    local variance of the channel. Windows are truncated at the edges.
    """
    p = params or WienerParams()
    if signal.n_samples < p.window_size:
        raise InputTooShort(f"signal of {signal.n_samples} samples is shorter than window {p.window_size}")
    y = signal.samples
    mu, sd = sliding_stats(y, p.window_size)
    var = sd ** 2
    nu2 = var.mean(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(var > nu2, (var - nu2) / var, 0.0)
    return signal.replace(mu + gain * (y - mu))


# --- iterative Wiener with LPC -----------------------------------------------


@dataclass(frozen=True)
class IterWienerParams:
    """Frame-wise iterative Wiener filter settings.

    ``energy_threshold`` is a ratio: a frame whose mean-square energy exceeds
    ``energy_threshold`` times the running noise variance is treated as signal.
    """

    frame_ms: float = 32.0
    overlap: float = 0.5
    lpc_order: int = 10
    alpha: float = 0.9
    energy_threshold: float = 1.5
    iterations: int = 3
    frame_size: int | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParams("alpha must be in (0, 1)")
        if self.iterations < 1:
            raise InvalidParams("iterations must be >= 1")
        if self.lpc_order < 1:
            raise InvalidParams("lpc_order must be >= 1")
        if not 0.0 <= self.overlap < 1.0:
            raise InvalidParams("overlap must be in [0, 1)")
        if self.frame_size is not None and self.lpc_order >= self.frame_size:
            raise InvalidParams("lpc_order must be smaller than frame_size")

    def frame_length(self, sample_rate: int) -> int:
        n = self.frame_size or int(round(self.frame_ms * sample_rate / 1000.0))
        n += n % 2
        if self.lpc_order >= n:
            raise InvalidParams(f"lpc_order {self.lpc_order} must be smaller than frame size {n}")
        return n


def levinson_durbin(r: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Solve the normal equations for LPC from autocorrelation ``r``.

    Returns ``(a, err)`` with ``a[0] == 1`` and the final prediction error
    power. Raises ``ZeroDivisionError`` when the frame has no energy.
    """
    if r[0] <= 0:
        raise ZeroDivisionError("zero-energy autocorrelation")
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = float(r[0])
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        a[1:i] = a[1:i] + k * a[i - 1:0:-1]
        a[i] = k
        err *= 1.0 - k * k
        if err <= 0:
            err = np.finfo(float).tiny
            break
    return a, err


def lpc(frame: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Autocorrelation-method LPC; the gain term is the per-sample residual power."""
    n = frame.size
    r = np.correlate(frame, frame, mode="full")[n - 1:n + order] / n
    return levinson_durbin(r, order)


def allpole_psd(a: np.ndarray, gain: float, n_fft: int) -> np.ndarray:
    """``gain / |A(e^jw)|^2`` on the one-sided FFT grid."""
    return gain / np.abs(scipy.fft.rfft(a, n_fft)) ** 2


def wiener_gain(p_signal, p_noise):
    """``P_x / (P_x + P_n)``."""
    p_signal = np.asarray(p_signal, dtype=np.float64)
    total = p_signal + p_noise
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(total > 0, p_signal / total, 0.0)


def update_noise_variance(previous: float, frame_energy: float, alpha: float) -> float:
    """First-order IIR smoothing of the noise variance."""
    return alpha * previous + (1.0 - alpha) * frame_energy


def _iterative_wiener_channel(y: np.ndarray, p: IterWienerParams, n: int) -> np.ndarray:
    hop = max(1, int(round(n * (1.0 - p.overlap))))
    window = scipy.signal.get_window("hann", n, fftbins=True)
    window_power = float(np.mean(window ** 2))
    pad_front = n - hop
    n_frames = -(-(y.size + pad_front) // hop)
    padded = np.zeros((n_frames - 1) * hop + n)
    padded[pad_front:pad_front + y.size] = y
    frames = np.lib.stride_tricks.sliding_window_view(padded, n)[::hop]
    energies = np.mean(frames ** 2, axis=1)
    positive = energies[energies > 0]
    noise_var = float(np.percentile(positive, 10)) if positive.size else 0.0
    bins = n // 2 + 1
    current = np.zeros(bins)
    out = np.zeros(padded.size)
    norm = np.zeros(padded.size)
    for t in range(n_frames):
        frame = frames[t]
        spectrum = scipy.fft.rfft(frame * window)
        energy = energies[t]
        is_signal = energy > p.energy_threshold * noise_var and energy > 0
        if is_signal:
            estimate = frame * window
            for _ in range(p.iterations):
                try:
                    a, g = lpc(estimate, p.lpc_order)
                except ZeroDivisionError:
                    is_signal = False
                    break
                current = wiener_gain(allpole_psd(a, g / window_power, n), noise_var)
                estimate = scipy.fft.irfft(spectrum * current, n)
        if not is_signal:
            noise_var = update_noise_variance(noise_var, energy, p.alpha)
        filtered = scipy.fft.irfft(spectrum * current, n)
        start = t * hop
        out[start:start + n] += filtered
        norm[start:start + n] += window
    nz = norm > 1e-8
    out[nz] /= norm[nz]
    return out[pad_front:pad_front + y.size]


def iterative_wiener(signal: Signal, params: IterWienerParams | None = None) -> Signal:
    """Frame-wise iterative Wiener filtering with an all-pole (LPC) speech model.

    Frames above the energy threshold get ``iterations`` rounds of LPC fit,
    Wiener gain and refit on the filtered frame; quieter frames update the
    noise variance and are filtered with the most recent gain (initially zero).
    """
    p = params or IterWienerParams()
    n = p.frame_length(signal.sample_rate)
    if signal.n_samples < n:
        raise InputTooShort(f"signal of {signal.n_samples} samples is shorter than frame {n}")
    out = np.stack([_iterative_wiener_channel(ch, p, n) for ch in signal.samples])
    return signal.replace(out)


# --- Savitzky-Golay ----------------------------------------------------------


@dataclass(frozen=True)
class SavGolParams:
    window_size: int = 11
    poly_order: int = 3

    def __post_init__(self):
        _odd_at_least(self.window_size, 1, "window_size")
        if self.poly_order < 0 or self.poly_order >= self.window_size:
            raise InvalidParams("poly_order must satisfy 0 <= poly_order < window_size")


def savgol_fit_matrix(window_size: int, poly_order: int) -> np.ndarray:
    """Least-squares projection: row ``i`` evaluates the fitted polynomial at window position ``i``."""
    x = np.arange(window_size, dtype=np.float64) - window_size // 2
    vander = np.vander(x, poly_order + 1, increasing=True)
    return vander @ np.linalg.pinv(vander)


def savgol_coeffs(window_size: int, poly_order: int) -> np.ndarray:
    """Centre-point smoothing coefficients ``c_{-m} .. c_m``."""
    SavGolParams(window_size, poly_order)
    return savgol_fit_matrix(window_size, poly_order)[window_size // 2].copy()


def savitzky_golay(signal: Signal, params: SavGolParams | None = None) -> Signal:
    """Savitzky-Golay smoothing.

    The first and last ``m`` samples come from the polynomial fitted to the
    first / last full window, so polynomials of degree <= ``poly_order`` are
    reproduced everywhere.
    """
    p = params or SavGolParams()
    w, m = p.window_size, p.window_size // 2
    if signal.n_samples < w:
        raise InputTooShort(f"signal of {signal.n_samples} samples is shorter than window {w}")
    y = signal.samples
    proj = savgol_fit_matrix(w, p.poly_order)
    c = proj[m]
    out = np.empty_like(y)
    if y.shape[-1] > 2 * m:
        out[:, m:y.shape[-1] - m] = np.lib.stride_tricks.sliding_window_view(y, w, axis=-1) @ c
    if m:
        out[:, :m] = y[:, :w] @ proj[:m].T
        out[:, -m:] = y[:, -w:] @ proj[-m:].T
    return signal.replace(out)


# --- spectral subtraction ----------------------------------------------------


def spectral_subtraction(signal: Signal, noise: Signal, params: StftParams | None = None) -> Signal:
    """Subtract the mean noise magnitude spectrum, floor at zero, keep the noisy phase."""
    params = params or StftParams()
    if noise.sample_rate != signal.sample_rate:
        raise RateMismatch(f"noise rate {noise.sample_rate} != signal rate {signal.sample_rate}")
    if noise.n_channels not in (1, signal.n_channels):
        raise ShapeMismatch(f"noise has {noise.n_channels} channels, signal has {signal.n_channels}")
    if signal.n_samples == 0 or noise.n_samples == 0:
        raise EmptyInput("signal and noise must be non-empty")
    spec = stft(signal, params)
    noise_mag = stft(noise, params).magnitude().mean(axis=-1, keepdims=True)
    mag = spec.magnitude()
    cleaned = np.maximum(0.0, mag - noise_mag)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(mag > 0, cleaned / mag, 0.0)
    return istft(spec.replace(spec.values * gain))
