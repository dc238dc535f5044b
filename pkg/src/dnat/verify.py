"""Self-contained brute-force verification of the core math.

Checks run here never reuse the closed-form fast paths they are checking:
marginals and posteriors are recomputed from explicitly materialized
transition matrices, and gradients are recomputed by central finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .diffusion import DiffusionProcess
from .model import ModelConfig, init_denoiser, loss_and_grads, nll_loss
from .schedule import make_schedule
from .vocab import build_vocabulary


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def check_schedule_consistency(max_T: int = 5) -> CheckResult:
    """alpha_bar must equal the running product of per-step alphas."""
    worst = 0.0
    for kind in ("linear", "cosine"):
        for T in range(1, max_T + 1):
            sch = make_schedule(kind, T)
            prod = 1.0
            for t in range(1, T + 1):
                prod *= sch.alpha[t]
                worst = max(worst, abs(sch.alpha_bar[t] - prod))
            if not all(sch.alpha_bar[t] <= sch.alpha_bar[t - 1] for t in range(1, T + 1)):
                return CheckResult("schedule_consistency", False, f"{kind} T={T} not monotone")
            if sch.alpha_bar[T] != 0.0:
                return CheckResult("schedule_consistency", False, f"{kind} T={T} terminal != 0")
    return CheckResult("schedule_consistency", worst <= 1e-12, f"max |abar - prod| = {worst:.2e}")


def check_row_stochastic(max_T: int = 5, uniform_noise: float = 0.0) -> CheckResult:
    vocab = build_vocabulary(["u"])  # K = 5
    worst = 0.0
    for kind in ("linear", "cosine"):
        for T in range(1, max_T + 1):
            dp = DiffusionProcess(make_schedule(kind, T), vocab, uniform_noise=uniform_noise)
            for t in range(1, T + 1):
                Q = dp.transition_matrix(t)
                worst = max(worst, float(np.abs(Q.sum(axis=1) - 1.0).max()))
    return CheckResult(
        f"row_stochastic(u={uniform_noise})", worst <= 1e-12, f"max row-sum error = {worst:.2e}"
    )


def check_chapman_kolmogorov(max_T: int = 5, uniform_noise: float = 0.0) -> CheckResult:
    """Sum_{x_t} q(x_{t-1}|x_t,x_0) q(x_t|x_0) must equal q(x_{t-1}|x_0).

    Marginals on the oracle side come from explicit matrix products, while the
    posterior under test comes from DiffusionProcess.posterior.
    """
    vocab = build_vocabulary(["u"])  # K = 5
    K = vocab.size
    worst = 0.0
    for kind in ("linear", "cosine"):
        for T in range(1, max_T + 1):
            dp = DiffusionProcess(make_schedule(kind, T), vocab, uniform_noise=uniform_noise)
            qbar = [np.eye(K)]
            for t in range(1, T + 1):
                qbar.append(qbar[-1] @ dp.transition_matrix(t))
            for x0 in range(K):
                if x0 == vocab.mask_id:
                    continue
                for t in range(1, T + 1):
                    marg_t = qbar[t][x0]
                    marg_prev = qbar[t - 1][x0]
                    acc = np.zeros(K)
                    for xt in range(K):
                        if marg_t[xt] == 0.0:
                            continue
                        acc += dp.posterior(xt, x0, t) * marg_t[xt]
                    worst = max(worst, float(np.abs(acc - marg_prev).max()))
    return CheckResult(
        f"chapman_kolmogorov(u={uniform_noise})", worst <= 1e-12, f"max error = {worst:.2e}"
    )


def finite_difference_check(seed: int = 0, eps: float = 1e-4) -> CheckResult:
    """Autograd vs central finite differences on a tiny denoiser, all parameters."""
    cfg = ModelConfig(
        vocab_size=9, d_model=8, n_heads=2, n_enc_layers=1, n_dec_layers=1,
        d_ff=16, max_src_len=6, max_tgt_len=5,
    )
    model = init_denoiser(cfg, seed)
    src = torch.tensor([[4, 5, 6, 0, 0]], dtype=torch.long)
    tgt = torch.tensor([[1, 4, 1, 7]], dtype=torch.long)  # contains mask ids
    gold = torch.tensor([[4, 5, 6, 7]], dtype=torch.long)

    def loss_value() -> torch.Tensor:
        return nll_loss(model(src, tgt), gold)

    grads = loss_and_grads(model, loss_value())
    worst = 0.0
    with torch.no_grad():
        for name, p in model.named_parameters():
            flat = p.view(-1)
            gflat = grads[name].view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = loss_value().item()
                flat[i] = orig - eps
                lo = loss_value().item()
                flat[i] = orig
                fd = (hi - lo) / (2 * eps)
                ad = gflat[i].item()
                rel = abs(fd - ad) / max(abs(fd) + abs(ad), 1e-6)
                worst = max(worst, rel)
    return CheckResult("gradient_finite_difference", worst < 1e-4, f"max rel error = {worst:.2e}")


def run_verify() -> list[CheckResult]:
    results = [
        check_schedule_consistency(),
        check_row_stochastic(),
        check_row_stochastic(uniform_noise=0.1),
        check_chapman_kolmogorov(),
        check_chapman_kolmogorov(uniform_noise=0.1),
        finite_difference_check(),
    ]
    return results
