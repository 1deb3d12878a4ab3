"""Name -> runner registry shared by the CLI and the benchmark harness."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

from .baselines import (IterWienerParams, SavGolParams, WienerParams, iterative_wiener,
                        savitzky_golay, spectral_subtraction, wiener_filter)
from .dsp import Signal
from .errors import InvalidParams
from .gate import GateConfig, GateMode, apply_gate

ALGORITHMS = (
    "spectral-gate",
    "spectral-gate-nonstationary",
    "wiener",
    "iterative-wiener",
    "savgol",
    "specsub",
)

Runner = Callable[[Signal], Signal]


@dataclass(frozen=True)
class AlgorithmSettings:
    """Parameters for every algorithm; each runner reads the fields it needs.

    ``window`` is the baseline window length in samples (Wiener default 15,
    Savitzky-Golay default 11).
    """

    gate: GateConfig = field(default_factory=GateConfig)
    window: int | None = None
    poly_order: int = 3
    iter_wiener: IterWienerParams = field(default_factory=IterWienerParams)


def needs_noise(name: str) -> bool:
    return name == "specsub"


def make_runner(name: str, settings: AlgorithmSettings | None = None,
                noise: Signal | None = None) -> Runner:
    """Build a one-argument runner; parameters are validated here, before any processing."""
    s = settings or AlgorithmSettings()
    if name == "spectral-gate":
        cfg = replace(s.gate, mode=GateMode.STATIONARY)
        return lambda sig: apply_gate(sig, noise, cfg)
    if name == "spectral-gate-nonstationary":
        cfg = replace(s.gate, mode=GateMode.NONSTATIONARY)
        return lambda sig: apply_gate(sig, None, cfg)
    if name == "wiener":
        wp = WienerParams(s.window if s.window is not None else WienerParams().window_size)
        return lambda sig: wiener_filter(sig, wp)
    if name == "iterative-wiener":
        return lambda sig: iterative_wiener(sig, s.iter_wiener)
    if name == "savgol":
        sp = SavGolParams(s.window if s.window is not None else SavGolParams().window_size,
                          s.poly_order)
        return lambda sig: savitzky_golay(sig, sp)
    if name == "specsub":
        if noise is None:
            raise InvalidParams("specsub requires a noise clip")
        return lambda sig: spectral_subtraction(sig, noise, s.gate.stft)
    raise InvalidParams(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
