"""Pre-designed input sequences for experiments.

Experiments fix the input sequence in advance; every policy clamps its output
to a magnitude bound ``c_u`` so the experiment stays admissible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import check_scalar, require

__all__ = ["ZeroInput", "ConstantInput", "SineSweepInput", "PlaybackInput", "policy_from_name"]


def _clamp(value: float, bound: float) -> float:
    return min(max(value, -bound), bound)


@dataclass(frozen=True)
class ZeroInput:
    name = "zero"
    c_u: float = 1.0

    def u(self, t: int) -> float:
        return 0.0


@dataclass(frozen=True)
class ConstantInput:
    value: float
    c_u: float = math.nan  # defaults to |value|
    name = "constant"

    def __post_init__(self):
        if math.isnan(self.c_u):
            object.__setattr__(self, "c_u", abs(self.value) if self.value != 0.0 else 1.0)
        check_scalar(self.c_u, "c_u", minimum=0.0, strict=True)

    def u(self, t: int) -> float:
        return _clamp(self.value, self.c_u)


@dataclass(frozen=True)
class SineSweepInput:
    amplitude: float
    period: float
    c_u: float = math.nan  # defaults to amplitude
    name = "sine_sweep"

    def __post_init__(self):
        check_scalar(self.amplitude, "amplitude", minimum=0.0)
        check_scalar(self.period, "period", minimum=0.0, strict=True)
        if math.isnan(self.c_u):
            object.__setattr__(self, "c_u", self.amplitude if self.amplitude > 0 else 1.0)

    def u(self, t: int) -> float:
        return _clamp(self.amplitude * math.sin(2.0 * math.pi * t / self.period), self.c_u)


class PlaybackInput:
    """Replay a recorded input sequence; indices past the end return 0."""

    name = "playback"

    def __init__(self, values, c_u: float | None = None):
        self.values = np.asarray(values, dtype=float).reshape(-1)
        require(np.isfinite(self.values).all(), "playback values must be finite")
        self.c_u = float(c_u) if c_u is not None else max(float(np.abs(self.values).max(initial=0.0)), 1.0)
        check_scalar(self.c_u, "c_u", minimum=0.0, strict=True)

    def u(self, t: int) -> float:
        if 0 <= t < self.values.shape[0]:
            return _clamp(float(self.values[t]), self.c_u)
        return 0.0


def policy_from_name(name: str, **kwargs):
    table = {
        "zero": ZeroInput,
        "constant": ConstantInput,
        "sine_sweep": SineSweepInput,
        "playback": PlaybackInput,
    }
    try:
        cls = table[name]
    except KeyError:
        raise ValueError(f"unknown input policy {name!r}; expected one of {sorted(table)}") from None
    return cls(**kwargs)
