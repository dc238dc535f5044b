import numpy as np
import pytest

from dnat.diffusion import DiffusionProcess, make_step_plan
from dnat.schedule import linear_schedule, make_schedule
from dnat.vocab import build_vocabulary


@pytest.fixture
def dp4():
    vocab = build_vocabulary(["u v w"])  # K = 7
    return DiffusionProcess(linear_schedule(4), vocab)


def test_forward_sample_t0_identity(dp4):
    rng = np.random.default_rng(0)
    y0 = [4, 5, 6, 4]
    assert dp4.forward_sample(y0, 0, rng) == y0


def test_forward_sample_terminal_all_mask(dp4):
    rng = np.random.default_rng(0)
    m = dp4.vocab.mask_id
    for _ in range(50):
        assert dp4.forward_sample([4, 5, 6], dp4.steps, rng) == [m, m, m]


def test_forward_sample_rejects_masked_input(dp4):
    with pytest.raises(ValueError):
        dp4.forward_sample([dp4.vocab.mask_id], 1, np.random.default_rng(0))


def test_forward_sample_out_of_range(dp4):
    with pytest.raises(ValueError, match="step out of range"):
        dp4.forward_sample([4], 5, np.random.default_rng(0))


def test_forward_sample_empirical_keep_rate(dp4):
    # exact marginal alpha_bar_2 = 0.5; 3 sigma of 1e5 Bernoulli draws ~ 0.0047
    rng = np.random.default_rng(7)
    n = 100_000
    kept = sum(dp4.forward_sample([4], 2, rng)[0] == 4 for _ in range(n))
    assert abs(kept / n - 0.5) < 0.005


def test_forward_marginal_values(dp4):
    assert dp4.forward_marginal(0) == (1.0, 0.0)
    assert dp4.forward_marginal(dp4.steps) == (0.0, 1.0)
    keep, mask = dp4.forward_marginal(3)
    assert keep == pytest.approx(0.25) and mask == pytest.approx(0.75)


def test_posterior_unmasked_is_point_mass(dp4):
    dist = dp4.posterior(xt_token=4, x0_token=4, t=2)
    assert dist[4] == 1.0 and dist.sum() == 1.0


def test_posterior_masked_matches_path_enumeration(dp4):
    # Oracle: enumerate the 2-step chain over a 3-token state space {x0, other, M},
    # summing path probabilities with the per-step alphas/gammas only.
    a, g = dp4.schedule.alpha, dp4.schedule.gamma
    p_x1_keep = a[1]
    p_x1_mask = g[1]
    # paths ending at x2 = M
    p_keep_then_mask = p_x1_keep * g[2]
    p_mask_then_mask = p_x1_mask * 1.0
    z = p_keep_then_mask + p_mask_then_mask
    expect_x0 = p_keep_then_mask / z
    dist = dp4.posterior(xt_token=dp4.vocab.mask_id, x0_token=4, t=2)
    assert dist[4] == pytest.approx(expect_x0, abs=1e-12)
    assert dist[4] == pytest.approx(0.5, abs=1e-12)  # (1/3)(0.75)/(0.5)
    assert dist[dp4.vocab.mask_id] == pytest.approx(0.5, abs=1e-12)


def test_posterior_normalizes(dp4):
    for t in range(1, dp4.steps + 1):
        for xt in (4, dp4.vocab.mask_id):
            assert dp4.posterior(xt, 5, t).sum() == pytest.approx(1.0, abs=1e-12)


def test_posterior_rejects_bad_inputs(dp4):
    with pytest.raises(ValueError):
        dp4.posterior(4, 4, 0)
    with pytest.raises(ValueError, match="x0 must be clean"):
        dp4.posterior(4, dp4.vocab.mask_id, 2)


def test_renoise_matches_forward_sample_law(dp4):
    # chi-square over the 4 mask patterns of a length-2 sequence, 1e5 draws each
    n = 100_000
    m = dp4.vocab.mask_id

    def pattern_counts(op):
        rng = np.random.default_rng(13)
        counts = np.zeros(4)
        for _ in range(n):
            y = op([4, 5], 2, rng)
            counts[(y[0] == m) * 2 + (y[1] == m)] += 1
        return counts

    obs = pattern_counts(dp4.renoise)
    exp = pattern_counts(dp4.forward_sample)
    chi2 = ((obs - exp) ** 2 / np.maximum(exp, 1)).sum()
    assert chi2 < 20  # df=3, far beyond the 0.999 quantile only on a real mismatch


def test_renoise_endpoints_and_errors(dp4):
    rng = np.random.default_rng(0)
    assert dp4.renoise([4, 5], 0, rng) == [4, 5]
    assert dp4.renoise([4, 5], dp4.steps, rng) == [dp4.vocab.mask_id] * 2
    with pytest.raises(ValueError, match="estimate contains mask"):
        dp4.renoise([dp4.vocab.mask_id], 1, rng)


def test_absorption_along_chain(dp4):
    rng = np.random.default_rng(3)
    for _ in range(200):
        masked_at = None
        for t in range(dp4.steps + 1):
            y = dp4.forward_sample([4], t, rng)
            if y[0] == dp4.vocab.mask_id and masked_at is None:
                masked_at = t
        # marginal masking probability is non-decreasing in t by construction
        keep_probs = [dp4.forward_marginal(t)[0] for t in range(dp4.steps + 1)]
        assert all(a >= b for a, b in zip(keep_probs, keep_probs[1:]))


def test_chapman_kolmogorov_enumeration():
    vocab = build_vocabulary(["u"])  # K = 5
    for kind in ("linear", "cosine"):
        for T in range(1, 6):
            dp = DiffusionProcess(make_schedule(kind, T), vocab)
            for t in range(1, T + 1):
                for x0 in range(vocab.size):
                    if x0 == vocab.mask_id:
                        continue
                    marg_t = dp.marginal_distribution(x0, t)
                    marg_prev = dp.marginal_distribution(x0, t - 1)
                    acc = np.zeros(vocab.size)
                    for xt in range(vocab.size):
                        if marg_t[xt] > 0:
                            acc += dp.posterior(xt, x0, t) * marg_t[xt]
                    assert np.abs(acc - marg_prev).max() <= 1e-12


def test_uniform_noise_rows_sum_to_one():
    vocab = build_vocabulary(["u"])
    dp = DiffusionProcess(linear_schedule(4), vocab, uniform_noise=0.2)
    for t in range(1, 5):
        Q = dp.transition_matrix(t)
        assert np.abs(Q.sum(axis=1) - 1.0).max() <= 1e-12
        assert Q[vocab.mask_id, vocab.mask_id] == 1.0  # absorbing row


def test_uniform_noise_posterior_consistency():
    vocab = build_vocabulary(["u"])
    dp = DiffusionProcess(linear_schedule(3), vocab, uniform_noise=0.1)
    for t in range(1, 4):
        for x0 in (0, 4):
            marg_t = dp.marginal_distribution(x0, t)
            marg_prev = dp.marginal_distribution(x0, t - 1)
            acc = np.zeros(vocab.size)
            for xt in range(vocab.size):
                if marg_t[xt] > 0:
                    acc += dp.posterior(xt, x0, t) * marg_t[xt]
            assert np.abs(acc - marg_prev).max() <= 1e-12


def test_step_plan_examples():
    plan = make_step_plan(1000, 100)
    assert len(plan) == 100 and plan[0] == 1000
    assert all(a - b == 10 for a, b in zip(plan, plan[1:]))
    assert make_step_plan(10, 10) == list(range(10, 0, -1))
    assert make_step_plan(10, 2) == [10, 5]


def test_step_plan_strictly_decreasing_and_bounded():
    for T in (1, 7, 33, 500):
        for S in {1, min(2, T), T // 2 or 1, T}:
            plan = make_step_plan(T, S)
            assert plan[0] == T
            assert all(a > b for a, b in zip(plan, plan[1:]))
            assert all(1 <= t <= T for t in plan)


def test_step_plan_rejects_bad_counts():
    with pytest.raises(ValueError):
        make_step_plan(10, 0)
    with pytest.raises(ValueError):
        make_step_plan(10, 11)


def test_posterior_step_keeps_survivors():
    vocab = build_vocabulary(["u v"])
    dp = DiffusionProcess(linear_schedule(10), vocab)
    rng = np.random.default_rng(0)
    m = vocab.mask_id
    yt = [4, m, 5, m]
    y0 = [4, 5, 5, 4]
    for _ in range(50):
        y = dp.posterior_step(yt, y0, t_high=8, t_low=4, rng=rng)
        assert y[0] == 4 and y[2] == 5
        assert y[1] in (m, 5) and y[3] in (m, 4)
