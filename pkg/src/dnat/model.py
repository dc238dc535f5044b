"""The NAR denoiser: a small encoder-decoder transformer in float64.

Pre-layer-norm blocks, GELU feed-forward, learned positional embeddings,
bidirectional (non-causal) decoder self-attention, and a token embedding
shared between encoder input, decoder input, and the output projection.
There is no time-step input by default; the corruption level is implicit in
how many [MASK] tokens the decoder sees. Reverse-mode gradients come from
torch autograd and are cross-checked against central finite differences in
the verify suite.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import Tensor, nn

from .vocab import Vocabulary

CHECKPOINT_MAGIC = b"DNAT"
CHECKPOINT_VERSION = 1

torch.set_default_dtype(torch.float64)


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    d_ff: int = 256
    max_src_len: int = 32
    max_tgt_len: int = 16
    dropout: float = 0.0
    time_embedding: bool = False
    time_steps: int = 1000  # size of the time table when time_embedding is on

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, query: Tensor, keyval: Tensor, key_pad: Tensor | None = None) -> Tensor:
        B, Lq, d = query.shape
        Lk = keyval.shape[1]
        q = self.q_proj(query).view(B, Lq, self.n_heads, self.d_head).transpose(1, 2)
        k = self.k_proj(keyval).view(B, Lk, self.n_heads, self.d_head).transpose(1, 2)
        v = self.v_proj(keyval).view(B, Lk, self.n_heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if key_pad is not None:
            scores = scores.masked_fill(key_pad[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, Lq, d)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.fc1 = nn.Linear(d_model, d_ff)
        self.fc2 = nn.Linear(d_ff, d_model)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(torch.nn.functional.gelu(self.fc1(x)))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)

    def forward(self, x: Tensor, pad: Tensor | None) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, pad)
        return x + self.ff(self.ln2(x))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)

    def forward(self, x: Tensor, memory: Tensor, src_pad: Tensor | None) -> Tensor:
        h = self.ln1(x)
        x = x + self.self_attn(h, h, None)  # bidirectional, no causal mask
        x = x + self.cross_attn(self.ln2(x), memory, src_pad)
        return x + self.ff(self.ln3(x))


class Denoiser(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        self.token_emb = nn.Parameter(torch.empty(cfg.vocab_size, d))
        self.pos_src = nn.Parameter(torch.empty(cfg.max_src_len, d))
        self.pos_tgt = nn.Parameter(torch.empty(cfg.max_tgt_len, d))
        if cfg.time_embedding:
            self.time_emb = nn.Parameter(torch.empty(cfg.time_steps + 1, d))
        self.enc_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_enc_layers))
        self.dec_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_dec_layers))
        self.enc_ln_out = nn.LayerNorm(d)
        self.dec_ln_out = nn.LayerNorm(d)
        self.pad_id = 0  # fixed by the vocabulary contract

    def encode(self, src_ids: Tensor) -> Tensor:
        """(B, Ls) token ids -> (B, Ls, d) memory. Pad positions are masked out."""
        if src_ids.shape[1] > self.cfg.max_src_len:
            raise ValueError("condition too long")
        pad = src_ids == self.pad_id
        x = self.token_emb[src_ids] + self.pos_src[: src_ids.shape[1]]
        for layer in self.enc_layers:
            x = layer(x, pad)
        return self.enc_ln_out(x)

    def decode(
        self,
        tgt_ids: Tensor,
        memory: Tensor,
        src_ids: Tensor,
        t: Tensor | None = None,
    ) -> Tensor:
        """(B, Lt) noised target ids -> (B, Lt, K) logits over the vocabulary."""
        if tgt_ids.shape[1] > self.cfg.max_tgt_len:
            raise ValueError("target too long")
        if self.cfg.time_embedding:
            if t is None:
                raise ValueError("time_embedding=true requires a time input")
        elif t is not None:
            raise ValueError("unexpected time input")
        x = self.token_emb[tgt_ids] + self.pos_tgt[: tgt_ids.shape[1]]
        if t is not None:
            x = x + self.time_emb[t][:, None, :]
        src_pad = src_ids == self.pad_id
        for layer in self.dec_layers:
            x = layer(x, memory, src_pad)
        return self.dec_ln_out(x) @ self.token_emb.T

    def forward(self, src_ids: Tensor, tgt_ids: Tensor, t: Tensor | None = None) -> Tensor:
        return self.decode(tgt_ids, self.encode(src_ids), src_ids, t)


def init_denoiser(cfg: ModelConfig, seed: int) -> Denoiser:
    """Fresh denoiser with scaled-normal weights (std 0.02), deterministic per seed."""
    model = Denoiser(cfg)
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, nn.Linear):
                m.weight.normal_(0.0, 0.02, generator=g)
                m.bias.zero_()
            elif isinstance(m, nn.LayerNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()
        model.token_emb.normal_(0.0, 0.02, generator=g)
        model.pos_src.normal_(0.0, 0.02, generator=g)
        model.pos_tgt.normal_(0.0, 0.02, generator=g)
        if cfg.time_embedding:
            model.time_emb.normal_(0.0, 0.02, generator=g)
    return model


def param_count(cfg: ModelConfig) -> int:
    """Closed-form trainable parameter count (output projection is tied)."""
    d, f = cfg.d_model, cfg.d_ff
    attn = 4 * (d * d + d)
    ff = 2 * d * f + f + d
    ln = 2 * d
    enc_layer = attn + ff + 2 * ln
    dec_layer = 2 * attn + ff + 3 * ln
    total = cfg.vocab_size * d + (cfg.max_src_len + cfg.max_tgt_len) * d
    total += cfg.n_enc_layers * enc_layer + cfg.n_dec_layers * dec_layer
    total += 2 * ln  # final encoder/decoder norms
    if cfg.time_embedding:
        total += (cfg.time_steps + 1) * d
    return total


def suppress_special_logits(logits: Tensor, vocab: Vocabulary) -> Tensor:
    """Forbid [MASK] and [SEP] so argmax/sampling always yields a clean estimate."""
    out = logits.clone()
    out[..., vocab.mask_id] = float("-inf")
    out[..., vocab.sep_id] = float("-inf")
    return out


def greedy_estimate(logits: Tensor, vocab: Vocabulary) -> Tensor:
    return suppress_special_logits(logits, vocab).argmax(dim=-1)


def nll_loss(logits: Tensor, y0: Tensor, position_mask: Tensor | None = None) -> Tensor:
    """Mean negative log-likelihood of the clean tokens over the selected positions."""
    if logits.shape[:-1] != y0.shape:
        raise ValueError("logits/target length mismatch")
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, y0.unsqueeze(-1)).squeeze(-1)
    if position_mask is not None:
        denom = position_mask.sum().clamp(min=1)
        return (nll * position_mask).sum() / denom
    return nll.mean()


def loss_and_grads(model: Denoiser, loss: Tensor) -> dict[str, Tensor]:
    """Backpropagate and return per-parameter gradients keyed by name."""
    model.zero_grad(set_to_none=True)
    loss.backward()
    return {
        n: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for n, p in model.named_parameters()
    }


@dataclass
class AdamWState:
    step: int = 0
    exp_avg: dict[str, Tensor] = field(default_factory=dict)
    exp_avg_sq: dict[str, Tensor] = field(default_factory=dict)


def init_adamw_state(model: Denoiser) -> AdamWState:
    return AdamWState(
        step=0,
        exp_avg={n: torch.zeros_like(p) for n, p in model.named_parameters()},
        exp_avg_sq={n: torch.zeros_like(p) for n, p in model.named_parameters()},
    )


def adamw_step(
    model: Denoiser,
    grads: dict[str, Tensor],
    state: AdamWState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> AdamWState:
    """One decoupled-weight-decay Adam update, in place."""
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    with torch.no_grad():
        for name, p in model.named_parameters():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}")
            m = state.exp_avg[name]
            v = state.exp_avg_sq[name]
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            if weight_decay:
                p.mul_(1.0 - lr * weight_decay)
            p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(eps), value=-lr)
    return state


# --- checkpoint format ---
# magic "DNAT", version u32 LE, u32-length-prefixed UTF-8 JSON config, then
# records {name_len u32, name, rank u32, dims u64 x rank, values f64 LE
# row-major}, terminated by name_len = 0.


def save_checkpoint(path: str, config: dict, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        blob = json.dumps(config, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", a.ndim))
            f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            f.write(a.tobytes())
        f.write(struct.pack("<I", 0))


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a denoiser checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (clen,) = struct.unpack("<I", f.read(4))
        config = json.loads(f.read(clen).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        while True:
            (nlen,) = struct.unpack("<I", f.read(4))
            if nlen == 0:
                break
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            arrays[name] = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(dims).copy()
        return config, arrays


def model_arrays(model: Denoiser) -> dict[str, np.ndarray]:
    return {n: p.detach().numpy() for n, p in model.named_parameters()}


def load_model_arrays(model: Denoiser, arrays: dict[str, np.ndarray]) -> None:
    with torch.no_grad():
        for n, p in model.named_parameters():
            if n not in arrays:
                raise ValueError(f"checkpoint missing parameter {n}")
            p.copy_(torch.from_numpy(arrays[n]))


def denoiser_from_checkpoint(path: str) -> tuple[Denoiser, dict]:
    config, arrays = load_checkpoint(path)
    model = Denoiser(ModelConfig(**config["model"]))
    load_model_arrays(model, arrays)
    return model, config
