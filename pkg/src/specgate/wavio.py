"""WAV files and report serialization.

Supported payloads are 16/24/32-bit integer PCM and 32-bit IEEE float, all
little-endian. WAVE_FORMAT_EXTENSIBLE headers are accepted on read; writes
always use the plain format tags. Writers expect exclusive access to their
output path; concurrent reads are safe.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dsp import Signal
from .errors import IoError, ParseError, Unsupported
from .metrics import MetricsReport

_TAG_PCM = 0x0001
_TAG_FLOAT = 0x0003
_TAG_EXTENSIBLE = 0xFFFE


class WavFormat(str, enum.Enum):
    PCM16 = "pcm16"
    PCM24 = "pcm24"
    PCM32 = "pcm32"
    FLOAT32 = "float32"

    @property
    def bits(self) -> int:
        return {"pcm16": 16, "pcm24": 24, "pcm32": 32, "float32": 32}[self.value]

    @property
    def is_float(self) -> bool:
        return self is WavFormat.FLOAT32


@dataclass(frozen=True)
class WavFile:
    """Decoded WAV contents; ``data`` is float64 ``(channels, n_samples)`` in [-1, 1]."""

    format: WavFormat
    channels: int
    sample_rate: int
    data: np.ndarray

    def to_signal(self) -> Signal:
        return Signal(self.data, self.sample_rate)


# --- decoding ----------------------------------------------------------------


def _chunks(buf: bytes):
    pos = 12
    while pos + 8 <= len(buf):
        cid, size = struct.unpack_from("<4sI", buf, pos)
        body = buf[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise ParseError(f"chunk {cid!r} truncated ({len(body)} of {size} bytes)")
        yield cid, body
        pos += 8 + size + (size & 1)


def _parse_fmt(body: bytes) -> tuple[WavFormat, int, int]:
    if len(body) < 16:
        raise ParseError("fmt chunk shorter than 16 bytes")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", body, 0)
    if tag == _TAG_EXTENSIBLE:
        if len(body) < 40:
            raise ParseError("extensible fmt chunk shorter than 40 bytes")
        tag = struct.unpack_from("<H", body, 24)[0]
    if channels == 0 or rate == 0:
        raise ParseError("fmt chunk declares zero channels or zero sample rate")
    if tag == _TAG_PCM and bits in (16, 24, 32):
        fmt = {16: WavFormat.PCM16, 24: WavFormat.PCM24, 32: WavFormat.PCM32}[bits]
    elif tag == _TAG_FLOAT and bits == 32:
        fmt = WavFormat.FLOAT32
    else:
        raise Unsupported(f"unsupported WAV encoding: format tag {tag:#06x}, {bits} bits")
    if block_align != channels * bits // 8:
        raise ParseError(f"block_align {block_align} inconsistent with {channels} x {bits} bits")
    return fmt, channels, rate


def _decode(payload: bytes, fmt: WavFormat, channels: int) -> np.ndarray:
    width = fmt.bits // 8
    frame = width * channels
    usable = len(payload) - len(payload) % frame
    raw = payload[:usable]
    if fmt is WavFormat.FLOAT32:
        flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    elif fmt is WavFormat.PCM24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        flat = ints / float(1 << 23)
    else:
        dtype = "<i2" if fmt is WavFormat.PCM16 else "<i4"
        flat = np.frombuffer(raw, dtype=dtype) / float(1 << (fmt.bits - 1))
    return flat.reshape(-1, channels).T.copy()


def parse_wav_bytes(buf: bytes) -> WavFile:
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise ParseError("not a RIFF/WAVE file")
    fmt_info = None
    payload = None
    for cid, body in _chunks(buf):
        if cid == b"fmt ":
            fmt_info = _parse_fmt(body)
        elif cid == b"data":
            payload = body
            if fmt_info is not None:
                break
    if fmt_info is None:
        raise ParseError("missing fmt chunk")
    if payload is None:
        raise ParseError("missing data chunk")
    fmt, channels, rate = fmt_info
    return WavFile(fmt, channels, rate, _decode(payload, fmt, channels))


def read_wav_file(path) -> WavFile:
    """Read a WAV file, keeping its sample format."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_wav_bytes(buf)


def read_wav(path) -> Signal:
    """Read a WAV file as a float :class:`Signal` in [-1, 1]."""
    return read_wav_file(path).to_signal()


# --- encoding ----------------------------------------------------------------


def encode_samples(samples: np.ndarray, fmt: WavFormat) -> tuple[bytes, int]:
    """Interleave and quantize ``(channels, n)`` floats; return ``(payload, clip_count)``."""
    x = np.asarray(samples, dtype=np.float64)
    clipped = int(np.count_nonzero((x > 1.0) | (x < -1.0)))
    x = np.clip(x, -1.0, 1.0).T.reshape(-1)
    if fmt is WavFormat.FLOAT32:
        return x.astype("<f4").tobytes(), clipped
    scale = float(1 << (fmt.bits - 1))
    ints = np.clip(np.round(x * scale), -scale, scale - 1).astype(np.int64)
    if fmt is WavFormat.PCM24:
        u = (ints & 0xFFFFFF).astype(np.uint32)
        b = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8)
        return b.tobytes(), clipped
    dtype = "<i2" if fmt is WavFormat.PCM16 else "<i4"
    return ints.astype(dtype).tobytes(), clipped


def wav_bytes(signal: Signal, fmt: WavFormat | str = WavFormat.PCM16) -> tuple[bytes, int]:
    fmt = WavFormat(fmt)
    if signal.n_samples == 0:
        raise ParseError("refusing to write a zero-length data chunk")
    payload, clipped = encode_samples(signal.samples, fmt)
    channels = signal.n_channels
    block = channels * fmt.bits // 8
    tag = _TAG_FLOAT if fmt.is_float else _TAG_PCM
    fmt_body = struct.pack("<HHIIHH", tag, channels, signal.sample_rate,
                           signal.sample_rate * block, block, fmt.bits)
    pad = b"\x00" if len(payload) & 1 else b""
    body = (b"WAVE" + b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
            + b"data" + struct.pack("<I", len(payload)) + payload + pad)
    return b"RIFF" + struct.pack("<I", len(body)) + body, clipped


def write_wav(path, signal: Signal, fmt: WavFormat | str = WavFormat.PCM16) -> int:
    """Write ``signal`` and return the number of samples clipped to [-1, 1]."""
    data, clipped = wav_bytes(signal, fmt)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return clipped


def data_chunk(path) -> bytes:
    """Raw payload bytes of a WAV file's data chunk."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise ParseError("not a RIFF/WAVE file")
    for cid, body in _chunks(buf):
        if cid == b"data":
            return body
    raise ParseError("missing data chunk")


# --- reports -----------------------------------------------------------------

_SENTINELS = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def encode_number(value):
    """JSON-safe number: non-finite values become the strings ``inf``, ``-inf``, ``nan``."""
    if value is None:
        return None
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def decode_number(value):
    if value is None:
        return None
    if isinstance(value, str):
        try:
            return _SENTINELS[value]
        except KeyError:
            raise ParseError(f"unknown numeric sentinel {value!r}") from None
    return float(value)


def report_to_dict(report: MetricsReport) -> dict:
    out = {}
    for name in sorted(report.metrics):
        series = report.metrics[name]
        out[name] = {
            "items": [{"id": i, "value": encode_number(v)} for i, v in series.items],
            "mean": encode_number(series.mean),
            "sem": encode_number(series.sem),
            "n": series.n,
        }
    return out


def report_from_dict(data: dict) -> MetricsReport:
    report = MetricsReport()
    try:
        for name, body in data.items():
            for item in body["items"]:
                report.add(name, item["id"], decode_number(item["value"]))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed report: {exc}") from exc
    return report


def _csv_cell(value) -> str:
    v = encode_number(value)
    if v is None:
        return ""
    return v if isinstance(v, str) else repr(v)


def report_to_csv(report: MetricsReport) -> str:
    """Rows ``metric,item_id,value`` followed by ``#mean``, ``#sem`` and ``#n`` rows per metric."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "item_id", "value"])
    names = sorted(report.metrics)
    for name in names:
        for item_id, value in report.metrics[name].items:
            w.writerow([name, item_id, _csv_cell(value)])
    for name in names:
        s = report.metrics[name]
        w.writerow([name, "#mean", _csv_cell(s.mean)])
        w.writerow([name, "#sem", _csv_cell(s.sem)])
        w.writerow([name, "#n", s.n])
    return buf.getvalue()


def report_from_csv(text: str) -> MetricsReport:
    report = MetricsReport()
    rows = csv.reader(io.StringIO(text))
    header = next(rows, None)
    if header != ["metric", "item_id", "value"]:
        raise ParseError(f"unexpected CSV header {header!r}")
    for row in rows:
        if len(row) != 3:
            raise ParseError(f"malformed CSV row {row!r}")
        name, item_id, value = row
        if item_id.startswith("#"):
            continue
        try:
            report.add(name, item_id, _SENTINELS[value] if value in _SENTINELS else float(value))
        except ValueError as exc:
            raise ParseError(f"bad value {value!r}") from exc
    return report


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _format_from(path, fmt) -> str:
    if fmt is None:
        fmt = Path(path).suffix.lstrip(".") or "json"
    fmt = str(fmt).lower()
    if fmt not in ("json", "csv"):
        raise Unsupported(f"unknown report format {fmt!r}")
    return fmt


def write_report(report: MetricsReport, path, fmt: str | None = None) -> None:
    """Write a report as JSON or CSV (chosen from ``fmt`` or the file suffix)."""
    if not report:
        raise ParseError("refusing to write an empty report")
    if _format_from(path, fmt) == "json":
        _write_text(path, json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
    else:
        _write_text(path, report_to_csv(report))


def read_report(path, fmt: str | None = None) -> MetricsReport:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if _format_from(path, fmt) == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON report: {exc}") from exc
        return report_from_dict(data)
    return report_from_csv(text)


BENCH_COLUMNS = ("algorithm", "length_s", "threads", "repetitions", "median_ms", "iqr_ms",
                 "realtime_factor", "samples_ms")


def bench_csv(results: Iterable) -> str:
    """Benchmark CSV; ``samples_ms`` holds the raw per-repetition times separated by ``;``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in results:
        w.writerow([r.algorithm, repr(float(r.length_s)), r.threads, r.repetitions,
                    f"{r.median_ms:.6f}", f"{r.iqr_ms:.6f}", f"{r.realtime_factor:.6f}",
                    ";".join(f"{s:.6f}" for s in r.samples_ms)])
    return buf.getvalue()


def write_bench_csv(results: Iterable, path) -> None:
    _write_text(path, bench_csv(results))
