"""Wall-clock timing harness: warm-up, repeated runs, median/IQR, thread sweeps."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algorithms import ALGORITHMS, AlgorithmSettings, make_runner
from .batch import map_ordered
from .datagen import NoiseKind, SceneParams, gen_noise, gen_tone_and_am_noise_scene, mix_at_snr, power
from .dsp import Signal
from .errors import InvalidParams, NondeterministicOutput


@dataclass(frozen=True)
class BenchResult:
    algorithm: str
    length_s: float
    threads: int
    repetitions: int
    median_ms: float
    iqr_ms: float
    realtime_factor: float
    samples_ms: tuple[float, ...] = field(default_factory=tuple)
    batch_size: int = 1


def _as_arrays(output) -> list[np.ndarray]:
    if isinstance(output, Signal):
        return [output.samples]
    if isinstance(output, (list, tuple)):
        return [a for item in output for a in _as_arrays(item)]
    if output is None:
        return []
    return [np.asarray(output)]


def _same(a, b) -> bool:
    xa, xb = _as_arrays(a), _as_arrays(b)
    return len(xa) == len(xb) and all(
        x.shape == y.shape and x.dtype == y.dtype and np.array_equal(x, y, equal_nan=True)
        for x, y in zip(xa, xb)
    )


def summarize(samples_ms: Sequence[float]) -> tuple[float, float]:
    """Median and interquartile range (linear interpolation)."""
    s = np.asarray(samples_ms, dtype=np.float64)
    q1, med, q3 = np.percentile(s, [25, 50, 75])
    return float(med), float(q3 - q1)


def _measure(call: Callable[[], object], repetitions: int, warmup: int):
    if repetitions < 1:
        raise InvalidParams("repetitions must be >= 1")
    if warmup < 0:
        raise InvalidParams("warmup must be >= 0")
    reference = None
    have_reference = False
    for _ in range(warmup):
        out = call()
        if not have_reference:
            reference, have_reference = out, True
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        out = call()
        samples.append((time.perf_counter() - t0) * 1000.0)
        if not have_reference:
            reference, have_reference = out, True
        elif not _same(reference, out):
            raise NondeterministicOutput("runner output changed between repetitions")
    return samples, reference


def time_algorithm(runner: Callable, signal: Signal, repetitions: int = 5, warmup: int = 2,
                   algorithm: str = "custom") -> BenchResult:
    """Time ``runner(signal)``.

    Warm-up calls are untimed. Every output must match the first one exactly,
    so timing can never hide a change in results. Runner exceptions propagate
    and no partial result is returned.
    """
    samples, _ = _measure(lambda: runner(signal), repetitions, warmup)
    med, iqr = summarize(samples)
    rtf = signal.duration / (med / 1000.0) if med > 0 else float("inf")
    return BenchResult(algorithm, signal.duration, 1, repetitions, med, iqr, rtf, tuple(samples))


def thread_scaling_sweep(runner: Callable, batch: Sequence[Signal], thread_counts: Sequence[int],
                         repetitions: int = 3, warmup: int = 1,
                         algorithm: str = "custom") -> list[BenchResult]:
    """Batch throughput at each thread count.

    ``realtime_factor`` is total batch audio duration over the median batch
    time. Outputs at every thread count must be identical.
    """
    batch = list(batch)
    if not batch:
        raise InvalidParams("batch must not be empty")
    total = sum(s.duration for s in batch)
    results = []
    reference = None
    for t in thread_counts:
        samples, out = _measure(lambda: map_ordered(runner, batch, t), repetitions, warmup)
        if reference is None:
            reference = out
        elif not _same(reference, out):
            raise NondeterministicOutput(f"outputs at {t} threads differ from the first sweep point")
        med, iqr = summarize(samples)
        rtf = total / (med / 1000.0) if med > 0 else float("inf")
        results.append(BenchResult(algorithm, batch[0].duration, int(t), repetitions, med, iqr,
                                   rtf, tuple(samples), len(batch)))
    return results


def throughput(result: BenchResult) -> float:
    """Items per second."""
    return result.batch_size / (result.median_ms / 1000.0)


def bench_signal(length_s: float, sample_rate: int = 16000, seed: int = 0) -> tuple[Signal, Signal]:
    """Tone bursts in white noise at 0 dB plus a separate 1 s noise clip."""
    quarter_ms = 250.0 * length_s  # keeps at least one burst in very short signals
    clean, noise = gen_tone_and_am_noise_scene(
        SceneParams(duration_s=length_s, sample_rate=sample_rate, modulation_depth=0.0, seed=seed,
                    noise_kind=NoiseKind.WHITE,
                    burst_ms=min(120.0, quarter_ms), gap_ms=min(130.0, quarter_ms))
    )
    mixed, scaled = mix_at_snr(clean, noise, 0.0)
    clip = gen_noise("white", 1.0, sample_rate, seed + 1)
    return mixed, clip.replace(clip.samples * np.sqrt(power(scaled.samples)))


def run_ladder(algorithms: Sequence[str] = ALGORITHMS, lengths_s: Sequence[float] = (1.0, 10.0),
               thread_counts: Sequence[int] = (1,), repetitions: int = 3, warmup: int = 2,
               batch_size: int = 1, sample_rate: int = 16000, seed: int = 0,
               settings: AlgorithmSettings | None = None) -> list[BenchResult]:
    """Time each algorithm on fixed-seed signals of each length, once per thread count.

    Each point processes ``batch_size`` independent signals with a pool of
    ``threads`` workers.
    """
    results = []
    for name in algorithms:
        for length in lengths_s:
            batch, clips = zip(*(bench_signal(length, sample_rate, seed + i) for i in range(batch_size)))
            runner = make_runner(name, settings, clips[0])
            for t in thread_counts:
                samples, _ = _measure(lambda: map_ordered(runner, batch, t), repetitions, warmup)
                med, iqr = summarize(samples)
                total = length * batch_size
                rtf = total / (med / 1000.0) if med > 0 else float("inf")
                results.append(BenchResult(name, float(length), int(t), repetitions, med, iqr,
                                           rtf, tuple(samples), batch_size))
    return results
