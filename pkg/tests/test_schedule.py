import math

import numpy as np
import pytest

from dnat.schedule import cosine_schedule, linear_schedule, make_schedule


def test_linear_ramp():
    s = linear_schedule(4)
    assert np.allclose(s.alpha_bar, [1, 0.75, 0.5, 0.25, 0])


def test_linear_gamma_from_cumulative_products():
    s = linear_schedule(4)
    # oracle: recompute per-step mask probability from the cumulative ratios
    assert s.gamma[2] == pytest.approx(1 - 0.5 / 0.75)
    assert s.gamma[2] == pytest.approx(1 / 3)


def test_linear_single_step():
    s = linear_schedule(1)
    assert list(s.alpha_bar) == [1.0, 0.0]
    assert s.gamma[1] == 1.0


def test_zero_steps_rejected():
    with pytest.raises(ValueError):
        linear_schedule(0)
    with pytest.raises(ValueError):
        cosine_schedule(0)


def test_cosine_endpoints():
    for T in (1, 5, 50):
        s = cosine_schedule(T)
        assert s.alpha_bar[0] == 1.0
        assert s.alpha_bar[T] == 0.0


def test_cosine_matches_closed_form():
    T, off = 10, 0.008

    def f(t):
        return math.cos(((t / T + off) / (1 + off)) * math.pi / 2) ** 2

    s = cosine_schedule(T, off)
    expect = [f(t) / f(0) for t in range(T)]
    assert np.allclose(s.alpha_bar[:T], expect, atol=1e-15)


@pytest.mark.parametrize("kind", ["linear", "cosine"])
@pytest.mark.parametrize("T", [1, 2, 3, 7, 40])
def test_consistency_and_monotonicity(kind, T):
    s = make_schedule(kind, T)
    prod = 1.0
    for t in range(1, T + 1):
        prod *= s.alpha[t]
        assert abs(s.alpha_bar[t] - prod) <= 1e-12
        assert s.alpha_bar[t] <= s.alpha_bar[t - 1]
        assert s.alpha[t] + s.gamma[t] == pytest.approx(1.0, abs=1e-15)


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown schedule"):
        make_schedule("spindle", 4)
