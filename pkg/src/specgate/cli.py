"""``specgate`` command line: denoise, mix, eval and bench.

Exit codes: 0 success, 2 bad arguments or configuration, 3 file I/O
problems, 4 processing failures. Standard output carries only data (output
paths, reports); diagnostics go to standard error, as JSON with ``--json``.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import ALGORITHMS, AlgorithmSettings, make_runner, needs_noise
from .baselines import IterWienerParams
from .batch import default_threads, map_ordered
from .bench import run_ladder
from .datagen import NoiseKind, fit_length, gen_noise, mix_at_snr, power, rng_for
from .dsp import Signal, StftParams
from .errors import IoError, MissedDetection, ParseError, SpecgateError
from .gate import GateConfig
from .metrics import (MetricsReport, StaLtaParams, onset_error, sdr, segsnr,
                      spike_detection_roc)
from .wavio import WavFormat, bench_csv, read_wav, read_wav_file, report_to_csv, report_to_dict, write_wav

log = logging.getLogger("specgate")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_PROCESSING = 0, 2, 3, 4
ROC_THRESHOLDS = tuple(np.arange(0.0, 12.0001, 0.25))


class CliFailure(Exception):
    def __init__(self, code: int, message: str, kind: str = "error"):
        super().__init__(message)
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliFailure(EXIT_USAGE, f"{self.prog}: {message}", "usage")


@contextlib.contextmanager
def _stage(code: int):
    """Translate toolkit errors raised inside a block into a CLI exit code."""
    try:
        yield
    except CliFailure:
        raise
    except (IoError, OSError) as exc:
        raise CliFailure(EXIT_IO, str(exc), type(exc).__name__) from exc
    except (SpecgateError, ValueError, ZeroDivisionError) as exc:
        raise CliFailure(code, str(exc), type(exc).__name__) from exc


def _reading():
    """File reads: malformed or unsupported files count as I/O failures."""
    return _stage(EXIT_IO)


# --- argument parsing --------------------------------------------------------


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _name_list(text: str) -> list[str]:
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="flat 'key = value' file using flag names")
    p.add_argument("--json", action="store_true", help="machine-readable errors on stderr")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_algorithm_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("spectral gate")
    g.add_argument("--n-fft", type=int)
    g.add_argument("--win-length", type=int)
    g.add_argument("--hop-length", type=int)
    g.add_argument("--stft-window", help="STFT window type (default hann)")
    g.add_argument("--n-std-thresh", type=float)
    g.add_argument("--prop-decrease", type=float)
    g.add_argument("--freq-mask-smooth-hz", type=float)
    g.add_argument("--time-mask-smooth-ms", type=float)
    g.add_argument("--noise-window-size-nonstationary-ms", type=float)
    g.add_argument("--no-smoothing", action="store_true", help="skip mask smoothing")
    b = p.add_argument_group("baselines")
    b.add_argument("--window", type=int, help="baseline window length in samples")
    b.add_argument("--poly-order", type=int, help="Savitzky-Golay polynomial order")
    b.add_argument("--lpc-order", type=int)
    b.add_argument("--iterations", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="specgate", description="Spectral-gate denoising toolkit")
    parser.add_argument("--version", action="version", version=f"specgate {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    d = sub.add_parser("denoise", help="denoise WAV files")
    d.add_argument("inputs", nargs="+", metavar="INPUT")
    d.add_argument("-o", "--output", help="output file, or directory for several inputs")
    d.add_argument("--noise", help="noise-only WAV for the stationary profile / specsub")
    d.add_argument("--algorithm", choices=ALGORITHMS, default="spectral-gate")
    d.add_argument("--format", choices=[f.value for f in WavFormat],
                   help="output sample format (default: same as input)")
    d.add_argument("--threads", type=int, help="worker threads (default: logical cores)")
    _add_algorithm_flags(d)
    _add_common(d)

    m = sub.add_parser("mix", help="mix clean audio with noise at a target SNR")
    m.add_argument("clean")
    m.add_argument("--noise", help="noise WAV; synthesised from --noise-kind when omitted")
    m.add_argument("--noise-kind", choices=["white", "pink"], default="white")
    m.add_argument("--snr-db", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--clip-s", type=float, default=1.0, help="noise clip length in seconds")
    m.add_argument("-o", "--output-dir", required=True)
    m.add_argument("--format", choices=[f.value for f in WavFormat], default="float32")
    _add_common(m)

    e = sub.add_parser("eval", help="score denoised audio against clean references")
    e.add_argument("source", help="directory of <stem>.clean.wav/<stem>.denoised.wav, or a manifest")
    e.add_argument("-o", "--output", help="report path (default: stdout)")
    e.add_argument("--format", choices=["json", "csv"])
    e.add_argument("--onset", action="store_true", help="also score STA/LTA onset error")
    e.add_argument("--sta-s", type=float, default=StaLtaParams().sta_s)
    e.add_argument("--lta-s", type=float, default=StaLtaParams().lta_s)
    e.add_argument("--trigger-ratio", type=float, default=StaLtaParams().trigger_ratio)
    e.add_argument("--match-tolerance-ms", type=float, default=1.0)
    e.add_argument("--min-separation-ms", type=float, default=1.0)
    e.add_argument("--segment-ms", type=float, default=30.0)
    e.add_argument("--threads", type=int)
    _add_common(e)

    b = sub.add_parser("bench", help="time algorithms over a signal-length ladder")
    b.add_argument("--algorithms", type=_name_list, default=list(ALGORITHMS))
    b.add_argument("--lengths", type=_float_list, default=[1.0, 10.0], help="seconds, comma separated")
    b.add_argument("--repetitions", type=int, default=3)
    b.add_argument("--warmup", type=int, default=2)
    b.add_argument("--threads", type=_int_list, help="thread counts (default: 1 and logical cores)")
    b.add_argument("--batch-size", type=int, default=1)
    b.add_argument("--sample-rate", type=int, default=16000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("-o", "--output", help="CSV path (default: stdout)")
    _add_algorithm_flags(b)
    _add_common(b)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def load_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


def apply_config(sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    """Install config values as defaults of ``sub`` so explicit flags still win."""
    options = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--"):
                options[opt[2:]] = action
    defaults = {}
    for key, value in config.items():
        action = options.get(key)
        if action is None or key in ("config", "help"):
            raise CliFailure(EXIT_USAGE, f"unknown config key {key!r}", "config")
        try:
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                converted = _bool(value)
            elif action.type is not None:
                converted = action.type(value)
            else:
                converted = value
        except (TypeError, ValueError) as exc:
            raise CliFailure(EXIT_USAGE, f"config key {key!r}: {exc}", "config") from exc
        if action.choices is not None and converted not in action.choices:
            raise CliFailure(EXIT_USAGE, f"config key {key!r}: {value!r} is not one of "
                             f"{', '.join(map(str, action.choices))}", "config")
        defaults[action.dest] = converted
    sub.set_defaults(**defaults)


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with _stage(EXIT_USAGE):
            config = load_config(args.config)
        apply_config(_subparser(parser, args.command), config)
        args = parser.parse_args(argv)
    return args


def settings_from_args(args) -> AlgorithmSettings:
    base = GateConfig()
    stft = StftParams(
        n_fft=args.n_fft if args.n_fft is not None else base.stft.n_fft,
        win_length=args.win_length,
        hop_length=args.hop_length,
        window=args.stft_window or base.stft.window,
    )
    stft.check_cola()

    def pick(value, default):
        return default if value is None else value

    gate = GateConfig(
        stft=stft,
        n_std_thresh=pick(args.n_std_thresh, base.n_std_thresh),
        prop_decrease=pick(args.prop_decrease, base.prop_decrease),
        freq_mask_smooth_hz=pick(args.freq_mask_smooth_hz, base.freq_mask_smooth_hz),
        time_mask_smooth_ms=pick(args.time_mask_smooth_ms, base.time_mask_smooth_ms),
        noise_window_ms=pick(args.noise_window_size_nonstationary_ms, base.noise_window_ms),
        smoothing_enabled=not args.no_smoothing,
    )
    iw = IterWienerParams()
    iw = IterWienerParams(lpc_order=pick(args.lpc_order, iw.lpc_order),
                          iterations=pick(args.iterations, iw.iterations))
    return AlgorithmSettings(gate=gate, window=args.window,
                             poly_order=pick(args.poly_order, 3), iter_wiener=iw)


# --- commands ----------------------------------------------------------------


def _describe(name: str, s: AlgorithmSettings) -> str:
    g = s.gate
    if name.startswith("spectral-gate"):
        return (f"n_fft={g.stft.n_fft} win={g.stft.win_length} hop={g.stft.hop_length} "
                f"k={g.n_std_thresh} prop={g.prop_decrease} smoothing={'on' if g.smoothing_enabled else 'off'}")
    if name == "savgol":
        return f"window={s.window or 11} poly_order={s.poly_order}"
    if name == "wiener":
        return f"window={s.window or 15}"
    if name == "iterative-wiener":
        return f"lpc_order={s.iter_wiener.lpc_order} iterations={s.iter_wiener.iterations}"
    return f"n_fft={g.stft.n_fft} hop={g.stft.hop_length}"


def _denoise_targets(args) -> list[Path]:
    inputs = [Path(p) for p in args.inputs]
    if len(inputs) == 1 and args.output and not Path(args.output).is_dir():
        return [Path(args.output)]
    out_dir = Path(args.output) if args.output else None
    if out_dir is not None and not out_dir.is_dir():
        raise CliFailure(EXIT_USAGE, "with several inputs --output must be an existing directory")
    targets = [(out_dir or p.parent) / f"{p.name[:-4] if p.name.lower().endswith('.wav') else p.name}.denoised.wav"
               for p in inputs]
    if len(set(targets)) != len(targets):
        raise CliFailure(EXIT_USAGE, "several inputs map to the same output file")
    return targets


def cmd_denoise(args) -> int:
    with _stage(EXIT_USAGE):
        settings = settings_from_args(args)
        targets = _denoise_targets(args)
        if needs_noise(args.algorithm) and not args.noise:
            raise CliFailure(EXIT_USAGE, f"{args.algorithm} requires --noise")
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise CliFailure(EXIT_USAGE, "--threads must be >= 1")
    with _reading():
        noise = read_wav(args.noise) if args.noise else None
        files = [read_wav_file(p) for p in args.inputs]
    with _stage(EXIT_USAGE):
        runner = make_runner(args.algorithm, settings, noise)

    def work(item):
        t0 = time.perf_counter()
        out = runner(item.to_signal())
        return out, time.perf_counter() - t0

    with _stage(EXIT_PROCESSING):
        results = map_ordered(work, files, threads)
    for src, wav, target, (out, elapsed) in zip(args.inputs, files, targets, results):
        fmt = WavFormat(args.format) if args.format else wav.format
        with _stage(EXIT_IO):
            clipped = write_wav(target, out, fmt)
        duration = out.duration
        rtf = duration / elapsed if elapsed > 0 else math.inf
        print(f"{args.algorithm} {_describe(args.algorithm, settings)} "
              f"duration={duration:.3f}s elapsed={elapsed:.3f}s realtime_factor={rtf:.1f}"
              + (f" clipped={clipped}" if clipped else ""), file=sys.stderr)
        print(target)
    return EXIT_OK


def _disjoint_clip(noise: np.ndarray, used: int, clip_n: int, rng) -> tuple[np.ndarray, bool]:
    spare = noise.shape[-1] - used
    if spare >= clip_n:
        start = used + int(rng.integers(0, spare - clip_n + 1))
        return noise[..., start:start + clip_n], True
    if noise.shape[-1] >= clip_n:
        start = int(rng.integers(0, noise.shape[-1] - clip_n + 1))
        return noise[..., start:start + clip_n], False
    return np.tile(noise, (1, -(-clip_n // noise.shape[-1])))[..., :clip_n], False


def cmd_mix(args) -> int:
    with _stage(EXIT_USAGE):
        fmt = WavFormat(args.format)
        if not math.isfinite(args.snr_db):
            raise CliFailure(EXIT_USAGE, "--snr-db must be finite")
        if args.clip_s <= 0:
            raise CliFailure(EXIT_USAGE, "--clip-s must be positive")
    with _reading():
        clean = read_wav(args.clean)
        if args.noise:
            noise = read_wav(args.noise)
            kind = NoiseKind.FILE
        else:
            kind = NoiseKind(args.noise_kind)
            noise = gen_noise(kind, clean.duration + args.clip_s, clean.sample_rate, args.seed)
    clip_n = max(1, int(round(args.clip_s * clean.sample_rate)))
    with _stage(EXIT_PROCESSING):
        mixed, scaled = mix_at_snr(clean, noise, args.snr_db)
        gain = math.sqrt(power(scaled.samples) / power(fit_length(noise.samples, clean.n_samples)))
        rng = rng_for(args.seed)
        raw_clip, disjoint = _disjoint_clip(noise.samples, min(clean.n_samples, noise.n_samples), clip_n, rng)
        clip = Signal(raw_clip * gain, clean.sample_rate)
        measured = 10.0 * math.log10(power(clean.samples) / power(scaled.samples))
    out_dir = Path(args.output_dir)
    stem = Path(args.clean).name
    stem = stem[:-4] if stem.lower().endswith(".wav") else stem
    paths = {
        "mixed": out_dir / f"{stem}.noisy.wav",
        "scaled_noise": out_dir / f"{stem}.noise.wav",
        "noise_clip": out_dir / f"{stem}.noise_clip.wav",
    }
    with _stage(EXIT_IO):
        out_dir.mkdir(parents=True, exist_ok=True)
        clipped = {
            "mixed": write_wav(paths["mixed"], mixed, fmt),
            "scaled_noise": write_wav(paths["scaled_noise"], scaled, fmt),
            "noise_clip": write_wav(paths["noise_clip"], clip, fmt),
        }
        manifest = {
            "clean": str(Path(args.clean)),
            "noise": str(Path(args.noise)) if args.noise else None,
            "noise_kind": kind.value,
            "mixed": str(paths["mixed"]),
            "scaled_noise": str(paths["scaled_noise"]),
            "noise_clip": str(paths["noise_clip"]),
            "noise_clip_disjoint": disjoint,
            "snr_db": args.snr_db,
            "measured_snr_db": measured,
            "seed": args.seed,
            "level_basis": "rms",
            "format": fmt.value,
            "clipped_samples": clipped,
        }
        manifest_path = out_dir / f"{stem}.manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if not disjoint:
        log.warning("noise is too short for a disjoint %.3g s clip; the clip overlaps the mixed noise",
                    args.clip_s)
    if any(clipped.values()):
        log.warning("samples clipped on write: %s", clipped)
    print(manifest_path)
    return EXIT_OK


def _read_events(path) -> list[float]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    times = []
    for row in csv.reader(text.splitlines()):
        if not row or not row[0].strip() or row[0].strip().startswith("#"):
            continue
        try:
            times.append(float(row[0]))
        except ValueError:
            if times:
                raise ParseError(f"{path}: bad event time {row[0]!r}") from None
    return times


def discover_pairs(source: Path) -> list[dict]:
    """Pairs from a manifest file or from the ``.clean.wav`` / ``.denoised.wav`` convention."""
    if source.is_file():
        try:
            data = json.loads(source.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid manifest: {exc}") from exc
        base = source.parent
        pairs = []
        for i, entry in enumerate(data.get("pairs", [])):
            if "clean" not in entry or "denoised" not in entry:
                raise ParseError(f"manifest pair {i} needs 'clean' and 'denoised'")
            item = {"id": str(entry.get("id", i))}
            for key in ("clean", "denoised", "noisy", "events"):
                if entry.get(key):
                    item[key] = base / entry[key]
            pairs.append(item)
        if not pairs:
            raise ParseError("manifest lists no pairs")
        return pairs
    if not source.is_dir():
        raise IoError(f"no such file or directory: {source}")
    clean = {p.name[:-len(".clean.wav")]: p for p in source.glob("*.clean.wav")}
    den = {p.name[:-len(".denoised.wav")]: p for p in source.glob("*.denoised.wav")}
    unmatched = sorted(set(clean) ^ set(den))
    if unmatched:
        listing = ", ".join(f"{s} (missing {'denoised' if s in clean else 'clean'})" for s in unmatched)
        raise CliFailure(EXIT_USAGE, f"unmatched pairs: {listing}", "unmatched")
    if not clean:
        raise CliFailure(EXIT_USAGE, f"no *.clean.wav / *.denoised.wav pairs in {source}", "unmatched")
    pairs = []
    for stem in sorted(clean):
        item = {"id": stem, "clean": clean[stem], "denoised": den[stem]}
        for key, suffix in (("noisy", ".noisy.wav"), ("events", ".events.csv")):
            p = source / f"{stem}{suffix}"
            if p.exists():
                item[key] = p
        pairs.append(item)
    return pairs


def _score_pair(item: dict, args) -> list[tuple[str, float]]:
    clean, den = item["clean"], item["denoised"]
    rows = [("sdr", sdr(clean, den)), ("segsnr", segsnr(clean, den, args.segment_ms))]
    noisy = item.get("noisy")
    if noisy is not None:
        rows.append(("sdr_improvement", rows[0][1] - sdr(clean, noisy)))
        rows.append(("segsnr_improvement", rows[1][1] - segsnr(clean, noisy, args.segment_ms)))
    if args.onset:
        params = StaLtaParams(args.sta_s, args.lta_s, args.trigger_ratio)
        try:
            rows.append(("onset_error", onset_error(clean, den, params)))
            rows.append(("onset_missed", 0.0))
        except MissedDetection:
            rows.append(("onset_missed", 1.0))
    events = item.get("events")
    if events is not None:
        roc = spike_detection_roc(den, events, ROC_THRESHOLDS, args.min_separation_ms,
                                  args.match_tolerance_ms)
        rows.append(("auc", roc.auc))
    return rows


def cmd_eval(args) -> int:
    with _stage(EXIT_USAGE):
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise CliFailure(EXIT_USAGE, "--threads must be >= 1")
        fmt = args.format or (Path(args.output).suffix.lstrip(".").lower() if args.output else "json")
        if fmt not in ("json", "csv"):
            raise CliFailure(EXIT_USAGE, f"cannot infer report format from {args.output!r}; use --format")
    with _reading():
        pairs = discover_pairs(Path(args.source))
        loaded = []
        for item in pairs:
            entry = {"id": item["id"]}
            for key in ("clean", "denoised", "noisy"):
                if key in item:
                    entry[key] = read_wav(item[key])
            if "events" in item:
                entry["events"] = _read_events(item["events"])
            loaded.append(entry)
    with _stage(EXIT_PROCESSING):
        scored = map_ordered(lambda it: _score_pair(it, args), loaded, threads)
    report = MetricsReport()
    for entry, rows in zip(loaded, scored):
        for metric, value in rows:
            report.add(metric, entry["id"], value)
    text = (json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"
            if fmt == "json" else report_to_csv(report))
    if args.output:
        with _stage(EXIT_IO):
            Path(args.output).write_text(text, encoding="utf-8")
        print(args.output)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    with _stage(EXIT_USAGE):
        settings = settings_from_args(args)
        unknown = [a for a in args.algorithms if a not in ALGORITHMS]
        if unknown:
            raise CliFailure(EXIT_USAGE, f"unknown algorithm(s): {', '.join(unknown)}")
        threads = args.threads or sorted({1, default_threads()})
        if any(t < 1 for t in threads) or args.batch_size < 1:
            raise CliFailure(EXIT_USAGE, "thread counts and --batch-size must be >= 1")
        if not args.lengths or any(length <= 0 for length in args.lengths):
            raise CliFailure(EXIT_USAGE, "--lengths must be positive")
    with _stage(EXIT_PROCESSING):
        results = run_ladder(args.algorithms, args.lengths, threads, args.repetitions, args.warmup,
                             args.batch_size, args.sample_rate, args.seed, settings)
    text = bench_csv(results)
    if args.output:
        with _stage(EXIT_IO):
            Path(args.output).write_text(text, encoding="utf-8")
        print(args.output)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"denoise": cmd_denoise, "mix": cmd_mix, "eval": cmd_eval, "bench": cmd_bench}


def _report_failure(exc: CliFailure, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"error": exc.kind, "message": str(exc), "exit_code": exc.code}),
              file=sys.stderr)
    else:
        print(f"specgate: error: {exc}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="specgate: %(levelname)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except CliFailure as exc:
        _report_failure(exc, as_json)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
