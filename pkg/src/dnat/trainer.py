"""Diffusion training loop: sample t, corrupt, predict the clean sequence,
optionally self-prompt, take one AdamW step."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .diffusion import DiffusionProcess
from .model import (
    AdamWState,
    Denoiser,
    ModelConfig,
    adamw_step,
    greedy_estimate,
    init_adamw_state,
    init_denoiser,
    load_checkpoint,
    load_model_arrays,
    loss_and_grads,
    model_arrays,
    nll_loss,
    save_checkpoint,
)
from .sampler import _pad_batch, compose_condition
from .schedule import make_schedule
from .vocab import Vocabulary, encode


@dataclass
class TrainConfig:
    diffusion_steps: int = 1000
    schedule: str = "linear"
    batch_size: int = 512
    total_steps: int = 80000
    lr: float = 5e-5
    weight_decay: float = 0.0
    self_prompt_prob: float = 0.5
    loss_on_masked_only: bool = False
    seed: int = 0
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if not 0.0 <= self.self_prompt_prob <= 1.0:
            raise ValueError("self_prompt_prob must be in [0, 1]")
        if self.diffusion_steps < 1:
            raise ValueError("diffusion_steps must be >= 1")


@dataclass
class TrainExample:
    condition: list[int]
    target: list[int]  # clean Y_0, fixed length, no mask tokens


def prepare_examples(
    pairs: list[tuple[str, str]], vocab: Vocabulary, src_len: int, tgt_len: int
) -> list[TrainExample]:
    return [
        TrainExample(condition=encode(vocab, s, src_len), target=encode(vocab, t, tgt_len))
        for s, t in pairs
    ]


def train_step(
    model: Denoiser,
    batch: list[TrainExample],
    cfg: TrainConfig,
    dp: DiffusionProcess,
    vocab: Vocabulary,
    rng: np.random.Generator,
    opt_state: AdamWState,
) -> float:
    """One optimizer step over a batch; returns the batch loss."""
    if not batch:
        raise ValueError("empty batch")
    n = len(batch[0].target)
    if any(len(ex.target) != n for ex in batch):
        raise ValueError("mixed target lengths in batch")
    model.train()
    B = len(batch)
    ts = [int(rng.integers(1, cfg.diffusion_steps + 1)) for _ in range(B)]
    yts = [dp.forward_sample(ex.target, t, rng) for ex, t in zip(batch, ts)]
    prompted = rng.random(B) < cfg.self_prompt_prob

    src_rows = [list(ex.condition) for ex in batch]
    if prompted.any():
        # First pass: estimate a prompt with no gradient flow.
        sub = [i for i in range(B) if prompted[i]]
        with torch.no_grad():
            src = _pad_batch([src_rows[i] for i in sub], vocab.pad_id)
            tgt = _pad_batch([yts[i] for i in sub], vocab.pad_id)
            t_in = _time_input(model, [ts[i] for i in sub])
            y0_hat = greedy_estimate(model(src, tgt, t_in), vocab)
        for row, i in zip(y0_hat, sub):
            src_rows[i] = compose_condition(
                vocab, row.tolist(), batch[i].condition, model.cfg.max_src_len
            )

    src = _pad_batch(src_rows, vocab.pad_id)
    tgt = _pad_batch(yts, vocab.pad_id)
    gold = torch.tensor([ex.target for ex in batch], dtype=torch.long)
    logits = model(src, tgt, _time_input(model, ts))
    position_mask = None
    if cfg.loss_on_masked_only:
        position_mask = (tgt == vocab.mask_id).to(logits.dtype)
    loss = nll_loss(logits, gold, position_mask)
    grads = loss_and_grads(model, loss)
    adamw_step(model, grads, opt_state, lr=cfg.lr, weight_decay=cfg.weight_decay)
    return float(loss.detach())


def _time_input(model: Denoiser, ts: list[int]) -> torch.Tensor | None:
    if not model.cfg.time_embedding:
        return None
    return torch.tensor(ts, dtype=torch.long)


def _opt_arrays(state: AdamWState) -> dict[str, np.ndarray]:
    out = {}
    for name, t in state.exp_avg.items():
        out[f"opt.m.{name}"] = t.numpy()
    for name, t in state.exp_avg_sq.items():
        out[f"opt.v.{name}"] = t.numpy()
    return out


def save_train_checkpoint(
    path: str,
    model: Denoiser,
    cfg: TrainConfig,
    opt_state: AdamWState,
    step: int,
    rng: np.random.Generator,
) -> None:
    config = {
        "model": asdict(model.cfg),
        "diffusion": {"steps": cfg.diffusion_steps, "schedule": cfg.schedule},
        "train_state": {"step": step, "opt_step": opt_state.step, "rng": rng.bit_generator.state},
    }
    arrays = dict(model_arrays(model))
    arrays.update(_opt_arrays(opt_state))
    save_checkpoint(path, config, arrays)


def train(
    examples: list[TrainExample],
    vocab: Vocabulary,
    cfg: TrainConfig,
    model_cfg: ModelConfig,
    out_dir: str,
    resume: str | None = None,
) -> tuple[Denoiser, list[tuple[int, float]]]:
    """Run the full loop; writes checkpoint.dnat and loss_log.csv under out_dir."""
    if not examples:
        raise ValueError("empty corpus")
    os.makedirs(out_dir, exist_ok=True)
    schedule = make_schedule(cfg.schedule, cfg.diffusion_steps)
    dp = DiffusionProcess(schedule=schedule, vocab=vocab)

    start_step = 0
    if resume is None:
        model = init_denoiser(model_cfg, cfg.seed)
        opt_state = init_adamw_state(model)
        rng = np.random.default_rng(cfg.seed)
    else:
        config, arrays = load_checkpoint(resume)
        model = Denoiser(ModelConfig(**config["model"]))
        load_model_arrays(model, arrays)
        opt_state = init_adamw_state(model)
        opt_state.step = config["train_state"]["opt_step"]
        for name in opt_state.exp_avg:
            opt_state.exp_avg[name] = torch.from_numpy(arrays[f"opt.m.{name}"].copy())
            opt_state.exp_avg_sq[name] = torch.from_numpy(arrays[f"opt.v.{name}"].copy())
        rng = np.random.default_rng()
        rng.bit_generator.state = config["train_state"]["rng"]
        start_step = config["train_state"]["step"]

    ckpt_path = os.path.join(out_dir, "checkpoint.dnat")
    log_path = os.path.join(out_dir, "loss_log.csv")
    log: list[tuple[int, float]] = []
    with open(log_path, "a" if resume else "w") as log_file:
        if not resume:
            log_file.write("step,loss\n")
        for step in range(start_step, cfg.total_steps):
            idx = rng.integers(0, len(examples), cfg.batch_size)
            batch = [examples[i] for i in idx]
            loss = train_step(model, batch, cfg, dp, vocab, rng, opt_state)
            log.append((step + 1, loss))
            log_file.write(f"{step + 1},{loss:.6f}\n")
            if cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
                save_train_checkpoint(ckpt_path, model, cfg, opt_state, step + 1, rng)
    save_train_checkpoint(ckpt_path, model, cfg, opt_state, cfg.total_steps, rng)
    return model, log
