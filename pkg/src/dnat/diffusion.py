"""Categorical diffusion with an absorbing [MASK] state.

Transition matrices are never materialized on the default path: with no
token-to-token noise the forward marginal at step t is "keep with probability
alpha_bar_t, else [MASK]", and the posterior has a two-point closed form.
Setting uniform_noise > 0 switches to explicit K x K matrices (small vocabs
only); that path doubles as the enumeration oracle used by `verify`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schedule import NoiseSchedule
from .vocab import Vocabulary


@dataclass
class DiffusionProcess:
    schedule: NoiseSchedule
    vocab: Vocabulary
    uniform_noise: float = 0.0
    _q: list[np.ndarray] | None = field(default=None, repr=False)
    _qbar: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def steps(self) -> int:
        return self.schedule.steps

    def _check_t(self, t: int) -> None:
        if not 0 <= t <= self.steps:
            raise ValueError(f"step out of range: {t}")

    # --- explicit transition matrices (uniform_noise path and oracles) ---

    def transition_matrix(self, t: int) -> np.ndarray:
        """Row-stochastic K x K matrix for one forward step t."""
        if not 1 <= t <= self.steps:
            raise ValueError(f"step out of range: {t}")
        K = self.vocab.size
        m = self.vocab.mask_id
        a = self.schedule.alpha[t]
        g = self.schedule.gamma[t]
        u = self.uniform_noise
        Q = np.zeros((K, K))
        for i in range(K):
            if i == m:
                Q[i, i] = 1.0  # absorbing
                continue
            Q[i, i] = (1.0 - u) * a
            Q[i, m] += g
            if u > 0:
                other = u * a / (K - 2)
                for j in range(K):
                    if j != i and j != m:
                        Q[i, j] += other
        return Q

    def _matrices(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        if self._q is None:
            q = [np.empty(0)] + [self.transition_matrix(t) for t in range(1, self.steps + 1)]
            qbar = [np.eye(self.vocab.size)]
            for t in range(1, self.steps + 1):
                qbar.append(qbar[-1] @ q[t])
            self._q, self._qbar = q, qbar
        return self._q, self._qbar

    def marginal_distribution(self, x0_token: int, t: int) -> np.ndarray:
        """q(x_t | x_0) as a length-K vector."""
        self._check_t(t)
        if self.uniform_noise > 0:
            _, qbar = self._matrices()
            return qbar[t][x0_token].copy()
        dist = np.zeros(self.vocab.size)
        abar = self.schedule.alpha_bar[t]
        dist[x0_token] += abar
        dist[self.vocab.mask_id] += 1.0 - abar
        return dist

    # --- the public operators ---

    def forward_marginal(self, t: int) -> tuple[float, float]:
        """(keep probability, mask probability) at step t on the absorbing path."""
        self._check_t(t)
        abar = float(self.schedule.alpha_bar[t])
        return abar, 1.0 - abar

    def forward_sample(self, y0: list[int], t: int, rng: np.random.Generator) -> list[int]:
        """Draw Y_t ~ q(Y_t | Y_0), positions corrupted independently."""
        self._check_t(t)
        mask = self.vocab.mask_id
        if mask in y0:
            raise ValueError("y0 must not contain the mask token")
        if self.uniform_noise > 0:
            _, qbar = self._matrices()
            return [int(rng.choice(self.vocab.size, p=qbar[t][x])) for x in y0]
        keep, _ = self.forward_marginal(t)
        kept = rng.random(len(y0)) < keep
        return [x if k else mask for x, k in zip(y0, kept)]

    def renoise(self, y0_hat: list[int], t_target: int, rng: np.random.Generator) -> list[int]:
        """Re-corrupt an estimate to noise level t_target (same law as forward_sample)."""
        if self.vocab.mask_id in y0_hat:
            raise ValueError("estimate contains mask")
        return self.forward_sample(y0_hat, t_target, rng)

    def posterior(self, xt_token: int, x0_token: int, t: int) -> np.ndarray:
        """q(x_{t-1} | x_t, x_0) as a length-K probability vector."""
        if not 1 <= t <= self.steps:
            raise ValueError(f"step out of range: {t}")
        if x0_token == self.vocab.mask_id:
            raise ValueError("x0 must be clean")
        K = self.vocab.size
        mask = self.vocab.mask_id
        if self.uniform_noise > 0:
            q, qbar = self._matrices()
            lik = q[t][:, xt_token]  # q(x_t | x_{t-1})
            prior = qbar[t - 1][x0_token]  # q(x_{t-1} | x_0)
            joint = lik * prior
            total = joint.sum()
            if total <= 0:
                raise ValueError("impossible (x_t, x_0, t) combination")
            return joint / total
        dist = np.zeros(K)
        if xt_token != mask:
            # With no token-to-token noise, survival to step t pins the whole path.
            dist[xt_token] = 1.0
            return dist
        abar_t = self.schedule.alpha_bar[t]
        abar_prev = self.schedule.alpha_bar[t - 1]
        dist[x0_token] = (abar_prev - abar_t) / (1.0 - abar_t)
        dist[mask] = (1.0 - abar_prev) / (1.0 - abar_t)
        return dist

    def posterior_step(
        self,
        yt: list[int],
        y0_hat: list[int],
        t_high: int,
        t_low: int,
        rng: np.random.Generator,
    ) -> list[int]:
        """Sample Y_{t_low} from the skip-step posterior q(Y_{t_low} | Y_t, Y_0-hat).

        Generalizes `posterior` to non-adjacent step pairs for DDIM-style plans;
        surviving tokens are kept, masked positions resolve to the estimate with
        probability (abar_low - abar_high) / (1 - abar_high).
        """
        if not 0 <= t_low < t_high <= self.steps:
            raise ValueError("need 0 <= t_low < t_high <= T")
        mask = self.vocab.mask_id
        abar_hi = self.schedule.alpha_bar[t_high]
        abar_lo = self.schedule.alpha_bar[t_low]
        p_reveal = (abar_lo - abar_hi) / (1.0 - abar_hi)
        out = []
        for xt, x0 in zip(yt, y0_hat):
            if xt != mask:
                out.append(xt)
            else:
                out.append(x0 if rng.random() < p_reveal else mask)
        return out


def make_step_plan(T: int, S: int) -> list[int]:
    """S step indices evenly spaced over 1..T, strictly decreasing, starting at T."""
    if not 1 <= S <= T:
        raise ValueError("need 1 <= S <= T")
    steps = sorted({max(1, round(T * i / S)) for i in range(S, 0, -1)}, reverse=True)
    if steps[0] != T:
        steps.insert(0, T)
    return steps
