"""Noise schedules: per-step keep/mask probabilities and cumulative products.

The default process is purely absorbing: a surviving token is kept with
probability alpha_t and masked with probability gamma_t = 1 - alpha_t, so the
cumulative keep probability alpha_bar_t fully describes the forward marginal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    steps: int
    alpha: np.ndarray  # alpha[t] for t = 1..steps (index 0 unused)
    gamma: np.ndarray  # gamma[t] = 1 - alpha[t]
    alpha_bar: np.ndarray  # alpha_bar[t] for t = 0..steps

    def __post_init__(self):
        assert self.alpha_bar[0] == 1.0
        assert self.alpha_bar[self.steps] == 0.0


def _from_alpha_bar(kind: str, abar: np.ndarray) -> NoiseSchedule:
    T = len(abar) - 1
    alpha = np.ones(T + 1)
    for t in range(1, T + 1):
        alpha[t] = abar[t] / abar[t - 1] if abar[t - 1] > 0 else 0.0
    gamma = 1.0 - alpha
    gamma[0] = 0.0
    return NoiseSchedule(kind=kind, steps=T, alpha=alpha, gamma=gamma, alpha_bar=abar)


def linear_schedule(T: int) -> NoiseSchedule:
    """alpha_bar_t = 1 - t/T; the last step masks everything surviving."""
    if T < 1:
        raise ValueError("T must be >= 1")
    abar = 1.0 - np.arange(T + 1) / T
    abar[T] = 0.0
    return _from_alpha_bar("linear", abar)


def cosine_schedule(T: int, s: float = 0.008) -> NoiseSchedule:
    """alpha_bar_t = f(t)/f(0) with f(t) = cos^2(((t/T + s)/(1 + s)) * pi/2)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if s <= 0:
        raise ValueError("s must be > 0")

    def f(t: float) -> float:
        return math.cos(((t / T + s) / (1 + s)) * math.pi / 2) ** 2

    abar = np.array([f(t) / f(0) for t in range(T + 1)])
    if abar[T] > 1e-12:
        raise AssertionError("cosine schedule terminal mass too large")
    abar[T] = 0.0
    return _from_alpha_bar("cosine", abar)


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    if kind == "linear":
        return linear_schedule(T)
    if kind == "cosine":
        return cosine_schedule(T)
    raise ValueError(f"unknown schedule kind: {kind!r}")
