"""Inference: iterative denoising from all-[MASK] with self-prompting turns.

Each diffusion step estimates the clean sequence in K+1 decoder passes (one
plain-conditioned, then K with the running estimate prefixed onto the
condition), then re-noises the estimate down to the next step of the plan.
The final step returns the clean estimate directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .diffusion import DiffusionProcess, make_step_plan
from .model import Denoiser, greedy_estimate, suppress_special_logits
from .vocab import Vocabulary


@dataclass
class SampleConfig:
    steps: int = 100  # inference steps S, <= the schedule's T
    sp_turns: int = 2  # self-prompting turns K per diffusion step
    length: int = 16  # target length n
    seed: int = 0
    mode: str = "marginal_renoise"  # or "posterior"
    temperature: float = 0.0  # 0 = greedy argmax
    carry_prompt: bool = False  # warm-start each step's turn 0 with the last estimate
    trace: bool = False

    def __post_init__(self):
        if self.sp_turns < 0:
            raise ValueError("sp_turns must be >= 0")
        if self.mode not in ("marginal_renoise", "posterior"):
            raise ValueError(f"unknown sampler mode: {self.mode!r}")


@dataclass
class TraceRecord:
    t: int
    y_t: list[int]
    y0_hat: list[int]


@dataclass
class GenerationTrace:
    records: list[TraceRecord] = field(default_factory=list)


def compose_condition(
    vocab: Vocabulary, y0_hat: list[int], cond: list[int], max_src_len: int
) -> list[int]:
    """Build the prompted condition [estimate; SEP; condition].

    Trailing pads are stripped from both parts; the condition tail is truncated
    first if the result would overflow, so the prompt always survives intact.
    """
    prompt = list(y0_hat)
    while prompt and prompt[-1] == vocab.pad_id:
        prompt.pop()
    base = list(cond)
    while base and base[-1] == vocab.pad_id:
        base.pop()
    if len(prompt) > max_src_len:
        raise ValueError("prompt alone exceeds max_src_len")
    room = max_src_len - len(prompt) - 1
    return prompt + [vocab.sep_id] + base[: max(room, 0)]


def _pad_batch(rows: list[list[int]], pad_id: int) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor([r + [pad_id] * (width - len(r)) for r in rows], dtype=torch.long)


def _pick_tokens(
    logits: torch.Tensor,
    vocab: Vocabulary,
    temperature: float,
    rng: np.random.Generator | None,
) -> torch.Tensor:
    if temperature <= 0.0:
        return greedy_estimate(logits, vocab)
    probs = torch.softmax(suppress_special_logits(logits, vocab) / temperature, dim=-1).numpy()
    B, L, K = probs.shape
    flat = probs.reshape(-1, K)
    picks = [rng.choice(K, p=row / row.sum()) for row in flat]
    return torch.tensor(picks, dtype=torch.long).reshape(B, L)


@torch.no_grad()
def estimate_y0_batch(
    model: Denoiser,
    vocab: Vocabulary,
    yt_rows: list[list[int]],
    cond_rows: list[list[int]],
    turns: int,
    init_prompt: list[list[int]] | None = None,
    temperature: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[list[int]]:
    """Clean-sequence estimates for a batch; `turns` extra self-prompted passes."""
    yt = _pad_batch(yt_rows, vocab.pad_id)
    if init_prompt is None:
        src_rows = [list(c) for c in cond_rows]
    else:
        src_rows = [
            compose_condition(vocab, p, c, model.cfg.max_src_len)
            for p, c in zip(init_prompt, cond_rows)
        ]
    for turn in range(turns + 1):
        src = _pad_batch(src_rows, vocab.pad_id)
        logits = model(src, yt)
        y0_hat = _pick_tokens(logits, vocab, temperature, rng)
        if turn < turns:
            src_rows = [
                compose_condition(vocab, row.tolist(), c, model.cfg.max_src_len)
                for row, c in zip(y0_hat, cond_rows)
            ]
    return [row.tolist() for row in y0_hat]


def estimate_y0(
    model: Denoiser,
    vocab: Vocabulary,
    yt: list[int],
    cond: list[int],
    turns: int,
) -> list[int]:
    return estimate_y0_batch(model, vocab, [yt], [cond], turns)[0]


def generate_batch(
    model: Denoiser,
    vocab: Vocabulary,
    conds: list[list[int]],
    dp: DiffusionProcess,
    sc: SampleConfig,
    rng: np.random.Generator,
) -> list[list[int]]:
    """Generate one output per condition; all share the same step plan."""
    model.eval()
    n = sc.length
    if n > model.cfg.max_tgt_len:
        raise ValueError("length exceeds max_tgt_len")
    plan = make_step_plan(dp.steps, sc.steps)
    B = len(conds)
    ys = [[vocab.mask_id] * n for _ in range(B)]
    prompt: list[list[int]] | None = None
    y0_hats: list[list[int]] = ys
    for i, t in enumerate(plan):
        y0_hats = estimate_y0_batch(
            model, vocab, ys, conds, sc.sp_turns,
            init_prompt=prompt, temperature=sc.temperature, rng=rng,
        )
        if sc.carry_prompt:
            prompt = y0_hats
        if i + 1 < len(plan):
            t_next = plan[i + 1]
            if sc.mode == "posterior":
                ys = [dp.posterior_step(y, h, t, t_next, rng) for y, h in zip(ys, y0_hats)]
            else:
                ys = [dp.renoise(h, t_next, rng) for h in y0_hats]
    return y0_hats


def generate(
    model: Denoiser,
    vocab: Vocabulary,
    cond: list[int],
    dp: DiffusionProcess,
    sc: SampleConfig,
    rng: np.random.Generator,
) -> tuple[list[int], GenerationTrace | None]:
    """Single-sequence generation, optionally recording per-step states."""
    if not sc.trace:
        return generate_batch(model, vocab, [cond], dp, sc, rng)[0], None
    model.eval()
    n = sc.length
    if n > model.cfg.max_tgt_len:
        raise ValueError("length exceeds max_tgt_len")
    plan = make_step_plan(dp.steps, sc.steps)
    y = [vocab.mask_id] * n
    prompt = None
    trace = GenerationTrace()
    y0_hat = y
    for i, t in enumerate(plan):
        y0_hat = estimate_y0_batch(
            model, vocab, [y], [cond], sc.sp_turns,
            init_prompt=None if prompt is None else [prompt],
            temperature=sc.temperature, rng=rng,
        )[0]
        trace.records.append(TraceRecord(t=t, y_t=list(y), y0_hat=list(y0_hat)))
        if sc.carry_prompt:
            prompt = y0_hat
        if i + 1 < len(plan):
            t_next = plan[i + 1]
            if sc.mode == "posterior":
                y = dp.posterior_step(y, y0_hat, t, t_next, rng)
            else:
                y = dp.renoise(y0_hat, t_next, rng)
    return y0_hat, trace
