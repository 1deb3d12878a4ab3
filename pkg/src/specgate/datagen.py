"""Synthetic test material: noise, SNR mixing, tone scenes, spike trains, seismic onsets.

Every generator draws from ``numpy.random.Generator(PCG64(seed))``; the same
seed yields the same bits on every platform for a given numpy release.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .dsp import Signal
from .errors import InvalidInput, InvalidParams, RateMismatch, ShapeMismatch


class NoiseKind(str, enum.Enum):
    WHITE = "white"
    PINK = "pink"
    FILE = "file"


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def noise_samples(kind, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS white or pink (1/f power) Gaussian noise."""
    kind = NoiseKind(kind)
    white = rng.standard_normal(n)
    if kind is NoiseKind.WHITE:
        return _unit_rms(white)
    if kind is NoiseKind.PINK:
        spectrum = scipy.fft.rfft(white)
        scale = np.zeros(spectrum.shape[0])
        scale[1:] = 1.0 / np.sqrt(np.arange(1, spectrum.shape[0]))
        return _unit_rms(scipy.fft.irfft(spectrum * scale, n=n))
    raise InvalidParams(f"cannot synthesise noise of kind {kind.value!r}")


def gen_noise(kind, duration_s: float, sample_rate: int, seed: int) -> Signal:
    if not duration_s > 0:
        raise InvalidParams(f"duration must be positive, got {duration_s}")
    n = max(1, int(round(duration_s * sample_rate)))
    return Signal(noise_samples(kind, n, rng_for(seed)), sample_rate)


def power(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.mean(x ** 2)) if x.size else 0.0


def fit_length(noise: np.ndarray, n: int) -> np.ndarray:
    """Tile or truncate ``(channels, m)`` noise to ``n`` samples."""
    m = noise.shape[-1]
    if m == 0:
        raise InvalidInput("noise is empty")
    if m < n:
        noise = np.tile(noise, (1, -(-n // m)))
    return noise[..., :n]


def mix_at_snr(clean: Signal, noise: Signal, snr_db: float) -> tuple[Signal, Signal]:
    """Scale ``noise`` to sit ``snr_db`` below ``clean`` (full-clip RMS power) and add.

    Returns ``(mixed, scaled_noise)``; ``scaled_noise`` has the channel count
    and length of ``clean``.
    """
    if not math.isfinite(snr_db):
        raise InvalidParams("snr_db must be finite")
    if noise.sample_rate != clean.sample_rate:
        raise RateMismatch(f"noise rate {noise.sample_rate} != clean rate {clean.sample_rate}")
    if noise.n_channels not in (1, clean.n_channels):
        raise ShapeMismatch(f"noise has {noise.n_channels} channels, clean has {clean.n_channels}")
    n = fit_length(noise.samples, clean.n_samples)
    n = np.broadcast_to(n, clean.samples.shape)
    p_clean, p_noise = power(clean.samples), power(n)
    if p_clean == 0 or p_noise == 0:
        raise InvalidInput("clean and noise must both have non-zero power")
    gain = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    scaled = n * gain
    return clean.replace(clean.samples + scaled), clean.replace(scaled)


@dataclass(frozen=True)
class SceneParams:
    """Tone bursts over amplitude-modulated noise.

    The noise envelope is a raised cosine peaking at the middle of the clip,
    swinging between ``1 - modulation_depth`` and 1 over ``modulation_period_s``
    (the whole clip by default). Pink noise is the default as a stand-in for
    broadband environmental noise such as aircraft.
    """

    duration_s: float = 20.0
    sample_rate: int = 16000
    tone_freqs_hz: tuple[float, ...] = (600.0, 1100.0, 1700.0, 2500.0, 3400.0)
    burst_ms: float = 120.0
    gap_ms: float = 130.0
    ramp_ms: float = 5.0
    tone_amplitude: float = 0.5
    modulation_depth: float = 0.9
    modulation_period_s: float | None = None
    noise_kind: NoiseKind = NoiseKind.PINK
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.modulation_depth <= 1.0:
            raise InvalidParams("modulation_depth must be in [0, 1]")
        if self.duration_s <= 0 or self.burst_ms <= 0 or self.gap_ms < 0:
            raise InvalidParams("durations must be positive")


def noise_envelope(params: SceneParams) -> np.ndarray:
    n = int(round(params.duration_s * params.sample_rate))
    t = np.arange(n) / params.sample_rate
    period = params.modulation_period_s or params.duration_s
    mid = params.duration_s / 2.0
    bump = 0.5 * (1.0 + np.cos(2.0 * np.pi * (t - mid) / period))
    return (1.0 - params.modulation_depth) + params.modulation_depth * bump


def gen_tone_and_am_noise_scene(params: SceneParams | None = None) -> tuple[Signal, Signal]:
    """Return ``(clean, noise)`` for the non-stationary scenario; mix them separately."""
    p = params or SceneParams()
    sr = p.sample_rate
    n = int(round(p.duration_s * sr))
    clean = np.zeros(n)
    burst = int(round(p.burst_ms * sr / 1000.0))
    step = burst + int(round(p.gap_ms * sr / 1000.0))
    ramp = min(int(round(p.ramp_ms * sr / 1000.0)), burst // 2)
    taper = np.ones(burst)
    if ramp > 0:
        edge = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        taper[:ramp] = edge
        taper[-ramp:] = edge[::-1]
    tb = np.arange(burst) / sr
    for i, start in enumerate(range(step // 2, n - burst, step)):
        f = p.tone_freqs_hz[i % len(p.tone_freqs_hz)]
        clean[start:start + burst] = p.tone_amplitude * taper * np.sin(2 * np.pi * f * tb)
    noise = noise_samples(p.noise_kind, n, rng_for(p.seed)) * noise_envelope(p)
    return Signal(clean, sr), Signal(noise, sr)


@dataclass(frozen=True)
class SpikeRecordingSpec:
    """Parametric extracellular recording (amplitudes in microvolts).

    Each unit fires as a Poisson process with a refractory dead time. Units use
    difference-of-Gaussians templates whose trough width and depth are drawn
    from ``width_ms`` and ``amplitude_uv``. Background is many faint units plus
    a Gaussian floor.
    """

    duration_s: float = 60.0
    sample_rate: int = 30000
    n_units: int = 10
    spike_rate_hz: float | tuple[float, ...] = 5.0
    width_ms: tuple[float, float] = (0.15, 0.3)
    amplitude_uv: tuple[float, float] = (75.0, 150.0)
    n_background_units: int = 300
    background_rate_hz: float = 3.0
    background_amplitude_uv: tuple[float, float] = (2.0, 75.0)
    noise_floor_uv: float = 10.0
    refractory_ms: float = 2.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.amplitude_uv
        if lo <= 0 or hi < lo:
            raise InvalidParams("amplitude_uv must be a positive (low, high) range")
        blo, bhi = self.background_amplitude_uv
        if blo < 0 or bhi < blo:
            raise InvalidParams("background_amplitude_uv must be a non-negative range")
        rates = np.atleast_1d(self.spike_rate_hz)
        if np.any(rates < 0) or self.background_rate_hz < 0:
            raise InvalidParams("rates must be non-negative")
        if rates.size not in (1, self.n_units):
            raise InvalidParams("spike_rate_hz must be a scalar or one value per unit")
        if self.duration_s <= 0 or self.noise_floor_uv < 0:
            raise InvalidParams("duration must be positive and noise floor non-negative")

    def unit_rates(self) -> np.ndarray:
        return np.broadcast_to(np.atleast_1d(np.asarray(self.spike_rate_hz, float)), (self.n_units,))


@dataclass(frozen=True)
class SpikeRecording:
    signal: Signal
    truth: list[tuple[float, int]]
    units_trace: np.ndarray
    background_trace: np.ndarray


TEMPLATE_HALF_MS = 2.5


def spike_template(width_ms: float, sample_rate: int) -> tuple[np.ndarray, int]:
    """Biphasic unit-depth template and the index of its trough.

    A narrow negative Gaussian is followed by a broader, weaker positive lobe.
    """
    half = int(round(TEMPLATE_HALF_MS * sample_rate / 1000.0))
    t = np.arange(-half, half + 1) * 1000.0 / sample_rate
    trough = np.exp(-t ** 2 / (2 * width_ms ** 2))
    lobe_w = 2.5 * width_ms
    rebound = 0.35 * np.exp(-(t - 3.0 * width_ms) ** 2 / (2 * lobe_w ** 2))
    w = rebound - trough
    w /= -w.min()
    return w, int(np.argmin(w))


def _poisson_train(rate: float, n: int, sample_rate: int, refractory: int, margin: int,
                   rng: np.random.Generator) -> np.ndarray:
    if rate <= 0:
        return np.zeros(0, dtype=np.int64)
    mean_isi = max(sample_rate / rate - refractory, 1.0)
    times, t = [], margin
    while True:
        t += refractory + int(round(rng.exponential(mean_isi)))
        if t >= n - margin:
            break
        times.append(t)
    return np.asarray(times, dtype=np.int64)


def _stamp(out: np.ndarray, centres: np.ndarray, template: np.ndarray, centre: int,
           amplitudes: np.ndarray) -> None:
    if centres.size == 0:
        return
    offsets = np.arange(template.size) - centre
    np.add.at(out, centres[:, None] + offsets[None, :], amplitudes[:, None] * template[None, :])


def spike_recording(spec: SpikeRecordingSpec) -> SpikeRecording:
    """Generate a recording together with its separated components (volts)."""
    rng = rng_for(spec.seed)
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    refractory = max(1, int(round(spec.refractory_ms * sr / 1000.0)))
    margin = int(round(TEMPLATE_HALF_MS * sr / 1000.0)) + 1
    units = np.zeros(n)
    truth: list[tuple[float, int]] = []
    for unit, rate in enumerate(spec.unit_rates()):
        width = rng.uniform(*spec.width_ms)
        amp = rng.uniform(*spec.amplitude_uv) * 1e-6
        template, centre = spike_template(width, sr)
        times = _poisson_train(float(rate), n, sr, refractory, margin, rng)
        _stamp(units, times, template, centre, np.full(times.size, amp))
        truth.extend((idx / sr, unit) for idx in times.tolist())
    truth.sort()

    background = np.zeros(n)
    for _ in range(spec.n_background_units):
        width = rng.uniform(*spec.width_ms)
        amp = rng.uniform(*spec.background_amplitude_uv) * 1e-6
        template, centre = spike_template(width, sr)
        times = _poisson_train(spec.background_rate_hz, n, sr, refractory, margin, rng)
        _stamp(background, times, template, centre, np.full(times.size, amp))
    background += rng.standard_normal(n) * spec.noise_floor_uv * 1e-6
    return SpikeRecording(Signal(units + background, sr), truth, units, background)


def gen_spike_recording(spec: SpikeRecordingSpec) -> tuple[Signal, list[tuple[float, int]]]:
    """Return ``(signal, truth)`` where truth holds ``(time_s, unit)`` pairs."""
    rec = spike_recording(spec)
    return rec.signal, rec.truth


def gen_onset_event(duration_s: float, onset_s: float, amplitude_ratio: float, seed: int,
                    sample_rate: int = 100, background_rms: float = 0.01,
                    freq_hz: float = 4.0, decay_s: float = 3.0, rise_s: float = 0.05) -> Signal:
    """Seismic-like event: Gaussian background, then a decaying oscillation at ``onset_s``.

    The wavelet peak envelope is ``amplitude_ratio * background_rms``.
    """
    if not 0 < onset_s < duration_s:
        raise InvalidParams("need 0 < onset_s < duration_s")
    rng = rng_for(seed)
    n = int(round(duration_s * sample_rate))
    x = rng.standard_normal(n) * background_rms
    t = np.arange(n) / sample_rate - onset_s
    active = t >= 0
    ta = t[active]
    envelope = (1.0 - np.exp(-ta / rise_s)) * np.exp(-ta / decay_s)
    envelope /= envelope.max()
    phase = rng.uniform(0, 2 * np.pi)
    x[active] += amplitude_ratio * background_rms * envelope * np.sin(2 * np.pi * freq_hz * ta + phase)
    return Signal(x, sample_rate)
