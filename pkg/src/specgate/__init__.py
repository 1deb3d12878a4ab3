"""Spectral-gate noise reduction with baselines, metrics and synthetic benchmarks."""

__version__ = "0.1.0"

from .dsp import Signal, Spectrogram, StftParams, istft, stft, to_db
from .gate import GateConfig, GateMode, apply_gate, reduce_noise
from .wavio import WavFormat, read_wav, write_wav

__all__ = [
    "GateConfig", "GateMode", "Signal", "Spectrogram", "StftParams", "WavFormat",
    "apply_gate", "istft", "read_wav", "reduce_noise", "stft", "to_db", "write_wav",
]
