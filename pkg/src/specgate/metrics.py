"""Evaluation metrics: SDR, SegSNR, STA/LTA onsets, peak detection and ROC/AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dsp import Signal, StftParams, stft, to_db
from .errors import (
    InputTooShort,
    InvalidInput,
    InvalidParams,
    InvalidReference,
    MissedDetection,
    RateMismatch,
    ShapeMismatch,
)


def _pair(clean: Signal, estimate: Signal) -> tuple[np.ndarray, np.ndarray]:
    if clean.sample_rate != estimate.sample_rate:
        raise RateMismatch(f"rates differ: {clean.sample_rate} vs {estimate.sample_rate}")
    if clean.samples.shape != estimate.samples.shape:
        raise ShapeMismatch(f"shapes differ: {clean.samples.shape} vs {estimate.samples.shape}")
    return clean.samples, estimate.samples


def _ratio_db(signal_power: float, residual_power: float) -> float:
    if residual_power == 0.0:
        return math.inf
    if signal_power == 0.0:
        return -math.inf
    return 10.0 * math.log10(signal_power / residual_power)


def snr(clean: Signal, noise: Signal) -> float:
    """Full-clip power ratio of ``clean`` to ``noise`` in dB."""
    x, n = _pair(clean, noise)
    return _ratio_db(float(np.sum(x ** 2)), float(np.sum(n ** 2)))


def sdr(clean: Signal, estimate: Signal) -> float:
    """``10 log10(sum x^2 / sum (x - x_hat)^2)``; ``inf`` for a perfect estimate."""
    x, y = _pair(clean, estimate)
    energy = float(np.sum(x ** 2))
    if energy == 0.0:
        raise InvalidReference("clean reference is all zeros")
    return _ratio_db(energy, float(np.sum((x - y) ** 2)))


def segsnr(clean: Signal, estimate: Signal, segment_ms: float = 30.0,
           clamp: tuple[float, float] = (-10.0, 35.0)) -> float:
    """Mean of per-segment SNRs, each clamped to ``clamp``.

    Non-overlapping segments; the trailing partial segment is dropped. A
    segment with zero residual counts as +inf before clamping.
    """
    x, y = _pair(clean, estimate)
    seg = int(round(segment_ms * clean.sample_rate / 1000.0))
    if seg < 1:
        raise InvalidParams("segment shorter than one sample")
    n_seg = x.shape[-1] // seg
    if n_seg == 0:
        raise InputTooShort(f"signal of {x.shape[-1]} samples is shorter than one {seg}-sample segment")
    lo, hi = clamp
    xs = x[:, :n_seg * seg].reshape(x.shape[0], n_seg, seg)
    rs = (x - y)[:, :n_seg * seg].reshape(x.shape[0], n_seg, seg)
    sig = np.sum(xs ** 2, axis=(0, 2))
    res = np.sum(rs ** 2, axis=(0, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 10.0 * np.log10(sig / res)
    ratio = np.where(res == 0.0, np.inf, ratio)
    ratio = np.where((sig == 0.0) & (res > 0.0), -np.inf, ratio)
    return float(np.mean(np.clip(ratio, lo, hi)))


def spectral_db_error(clean: Signal, estimate: Signal, params: StftParams | None = None,
                      dynamic_range_db: float = 80.0) -> float:
    """Mean absolute difference between dB magnitude spectrograms.

    Both spectrograms are floored at ``dynamic_range_db`` below the clean
    spectrogram's peak so that empty bins do not dominate the average.
    """
    _pair(clean, estimate)
    params = params or StftParams()
    a = to_db(stft(clean, params).magnitude())
    b = to_db(stft(estimate, params).magnitude())
    floor = a.max() - dynamic_range_db
    return float(np.mean(np.abs(np.maximum(a, floor) - np.maximum(b, floor))))


# --- STA/LTA -----------------------------------------------------------------


@dataclass(frozen=True)
class StaLtaParams:
    sta_s: float = 0.5
    lta_s: float = 10.0
    trigger_ratio: float = 4.0

    def __post_init__(self):
        if not self.lta_s > self.sta_s > 0:
            raise InvalidParams("need lta_s > sta_s > 0")


def sta_lta_ratio(x: np.ndarray, n_sta: int, n_lta: int) -> np.ndarray:
    """Trailing STA/LTA of squared samples.

    Element ``i`` of the result corresponds to sample ``i + n_lta - 1``, the
    first sample at which the long window is fully populated.
    """
    e = np.asarray(x, dtype=np.float64) ** 2
    if e.ndim > 1:
        e = e.sum(axis=0)
    c = np.concatenate([[0.0], np.cumsum(e)])
    ends = np.arange(n_lta, e.size + 1)
    sta = (c[ends] - c[ends - n_sta]) / n_sta
    lta = (c[ends] - c[ends - n_lta]) / n_lta
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lta > 0, sta / lta, 0.0)
    return ratio


def sta_lta_onset(signal: Signal, sta_s: float = 0.5, lta_s: float = 10.0,
                  trigger_ratio: float = 4.0) -> float | None:
    """Time (s) of the first STA/LTA trigger, or ``None``."""
    StaLtaParams(sta_s, lta_s, trigger_ratio)
    sr = signal.sample_rate
    n_sta = max(1, int(round(sta_s * sr)))
    n_lta = max(n_sta + 1, int(round(lta_s * sr)))
    if n_lta > signal.n_samples:
        raise InputTooShort(f"LTA window ({n_lta} samples) exceeds signal ({signal.n_samples})")
    ratio = sta_lta_ratio(signal.samples, n_sta, n_lta)
    hits = np.flatnonzero(ratio > trigger_ratio)
    if hits.size == 0:
        return None
    return (hits[0] + n_lta - 1) / sr


def onset_error(clean: Signal, denoised: Signal, params: StaLtaParams | None = None) -> float:
    """``|onset(denoised) - onset(clean)|`` in seconds.

    Raises :class:`MissedDetection` when the denoised signal never triggers.
    """
    p = params or StaLtaParams()
    ref = sta_lta_onset(clean, p.sta_s, p.lta_s, p.trigger_ratio)
    if ref is None:
        raise InvalidReference("no onset detected in the clean signal")
    est = sta_lta_onset(denoised, p.sta_s, p.lta_s, p.trigger_ratio)
    if est is None:
        raise MissedDetection("no onset detected in the denoised signal")
    return abs(est - ref)


# --- peak detection ----------------------------------------------------------


def zscore_trace(signal: Signal) -> np.ndarray:
    """|z| per sample; the channel-wise maximum for multi-channel input."""
    x = signal.samples
    std = x.std(axis=-1, keepdims=True)
    if np.any(std == 0):
        raise InvalidInput("cannot z-score a zero-variance signal")
    return np.max(np.abs((x - x.mean(axis=-1, keepdims=True)) / std), axis=0)


def peak_candidates(signal: Signal, min_separation_ms: float,
                    threshold_z: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Greedy non-maximum suppression of |z| local maxima.

    Returns ``(sample_indices, scores)`` sorted by index. Because suppression
    runs from the largest peak down, the result for a higher threshold is the
    subset of this result with ``score > threshold``.
    """
    sep = int(round(min_separation_ms * signal.sample_rate / 1000.0))
    if sep < 1:
        raise InvalidParams("min_separation must be at least one sample")
    z = zscore_trace(signal)
    interior = np.flatnonzero(
        (z[1:-1] >= z[:-2]) & (z[1:-1] >= z[2:]) & (z[1:-1] > threshold_z)
    ) + 1
    order = interior[np.argsort(-z[interior], kind="stable")]
    blocked = np.zeros(z.size, dtype=bool)
    keep = []
    for i in order.tolist():
        if blocked[i]:
            continue
        keep.append(i)
        blocked[max(0, i - sep + 1):i + sep] = True
    idx = np.sort(np.asarray(keep, dtype=np.int64))
    return idx, z[idx]


def detect_peaks(signal: Signal, threshold_z: float = 5.0,
                 min_separation_ms: float = 1.0) -> np.ndarray:
    """Times (s) of |z| local maxima above ``threshold_z``, at least ``min_separation_ms`` apart."""
    idx, _ = peak_candidates(signal, min_separation_ms, threshold_z)
    return idx / signal.sample_rate


# --- ROC ---------------------------------------------------------------------


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    thresholds: np.ndarray | None = None

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def trapezoid_auc(fpr, tpr) -> float:
    """Area under a curve through (0,0), the given points (sorted by FPR) and (1,1)."""
    f = np.concatenate([[0.0], np.asarray(fpr, float), [1.0]])
    t = np.concatenate([[0.0], np.asarray(tpr, float), [1.0]])
    order = np.lexsort((t, f))
    f, t = f[order], t[order]
    return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2.0))


def match_events(detections, truth, tolerance_s: float) -> int:
    """Count one-to-one matches within ``tolerance_s``, closest pairs first."""
    d = np.sort(np.asarray(detections, float))
    g = np.sort(np.asarray(truth, float))
    if d.size == 0 or g.size == 0:
        return 0
    pos = np.searchsorted(g, d)
    pairs_d, pairs_g = [], []
    for shift in (-1, 0):
        j = pos + shift
        ok = (j >= 0) & (j < g.size)
        pairs_d.append(np.flatnonzero(ok))
        pairs_g.append(j[ok])
    di = np.concatenate(pairs_d)
    gi = np.concatenate(pairs_g)
    dist = np.abs(d[di] - g[gi])
    within = dist <= tolerance_s
    di, gi, dist = di[within], gi[within], dist[within]
    order = np.lexsort((gi, di, dist))
    used_d = np.zeros(d.size, dtype=bool)
    used_g = np.zeros(g.size, dtype=bool)
    hits = 0
    for a, b in zip(di[order].tolist(), gi[order].tolist()):
        if not used_d[a] and not used_g[b]:
            used_d[a] = used_g[b] = True
            hits += 1
    return hits


def roc_auc(detections_per_threshold: Sequence[Iterable[float]], ground_truth_times,
            match_tolerance_ms: float, signal_duration: float,
            thresholds: Sequence[float] | None = None) -> RocCurve:
    """Event-detection ROC.

    ``detections_per_threshold`` lists detection times for each threshold,
    strictest first. The false-positive denominator is the number of
    tolerance-wide windows in the recording that hold no true event.
    """
    truth = np.asarray(list(ground_truth_times), float)
    if truth.size == 0:
        raise InvalidReference("ground truth is empty")
    if match_tolerance_ms <= 0:
        raise InvalidParams("match tolerance must be positive")
    tol = match_tolerance_ms / 1000.0
    negatives = max(signal_duration / tol - truth.size, 1.0)
    fpr, tpr = [], []
    for dets in detections_per_threshold:
        dets = np.asarray(list(dets), float)
        tp = match_events(dets, truth, tol)
        fp = dets.size - tp
        tpr.append(tp / truth.size)
        fpr.append(min(fp / negatives, 1.0))
    fpr_a, tpr_a = np.asarray(fpr), np.asarray(tpr)
    th = None if thresholds is None else np.asarray(thresholds, float)
    return RocCurve(fpr_a, tpr_a, trapezoid_auc(fpr_a, tpr_a), th)


def roc_from_scores(scores, labels) -> RocCurve:
    """Classifier ROC sweeping a threshold over every distinct score."""
    s = np.asarray(scores, float)
    y = np.asarray(labels, bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise InvalidReference("need at least one positive and one negative")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = np.cumsum(~y)[last]
    fpr, tpr = fps / n_neg, tps / n_pos
    return RocCurve(fpr, tpr, trapezoid_auc(fpr, tpr), s[last])


def pairwise_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative (ties count half)."""
    s = np.asarray(scores, float)
    y = np.asarray(labels, bool)
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise InvalidReference("need at least one positive and one negative")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


def spike_detection_roc(signal: Signal, truth_times, thresholds_z: Sequence[float],
                        min_separation_ms: float = 1.0, match_tolerance_ms: float = 1.0) -> RocCurve:
    """Sweep :func:`detect_peaks` over ``thresholds_z`` and score against ``truth_times``."""
    idx, score = peak_candidates(signal, min_separation_ms)
    times = idx / signal.sample_rate
    ths = sorted(thresholds_z, reverse=True)
    dets = [times[score > th] for th in ths]
    return roc_auc(dets, truth_times, match_tolerance_ms, signal.duration, ths)


# --- reports -----------------------------------------------------------------


@dataclass
class MetricSeries:
    items: list[tuple[str, float]] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.asarray([v for _, v in self.items], dtype=np.float64)

    @property
    def n(self) -> int:
        return len(self.items)

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.items else math.nan

    @property
    def sem(self) -> float | None:
        """Sample std / sqrt(n); ``None`` when n < 2."""
        if self.n < 2:
            return None
        v = self.values
        if not np.all(np.isfinite(v)):
            return math.nan
        return float(np.std(v, ddof=1) / math.sqrt(self.n))


@dataclass
class MetricsReport:
    """Named metric series with per-item values and mean +/- SEM summaries."""

    metrics: dict[str, MetricSeries] = field(default_factory=dict)

    def add(self, metric: str, item_id: str, value: float) -> None:
        self.metrics.setdefault(metric, MetricSeries()).items.append((str(item_id), float(value)))

    def __getitem__(self, metric: str) -> MetricSeries:
        return self.metrics[metric]

    def __contains__(self, metric: str) -> bool:
        return metric in self.metrics

    def __bool__(self) -> bool:
        return any(s.items for s in self.metrics.values())

    def summary(self) -> dict[str, tuple[float, float | None, int]]:
        return {k: (s.mean, s.sem, s.n) for k, s in self.metrics.items()}
