"""Command line entry point: train, generate, evaluate, diffuse, verify."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, fields

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from .diffusion import DiffusionProcess
from .model import ModelConfig, denoiser_from_checkpoint
from .sampler import SampleConfig, generate
from .schedule import make_schedule
from .trainer import TrainConfig, prepare_examples, train
from .vocab import build_vocabulary, decode, encode, load_vocabulary, save_vocabulary
from .verify import run_verify

DATA_KEYS = {"corpus", "synthetic", "src_len", "tgt_len"}


def _section(config: dict, name: str, allowed: set[str]) -> dict:
    section = config.get(name, {})
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) in config section {name!r}: {sorted(unknown)}")
    return dict(section)


def load_run_config(config: dict) -> dict:
    """Validate the four-section run config; unknown keys are rejected."""
    unknown = set(config) - {"model", "train", "sample", "data"}
    if unknown:
        raise ValueError(f"unknown config section(s): {sorted(unknown)}")
    model_keys = {f.name for f in fields(ModelConfig)} - {"vocab_size"}
    return {
        "model": _section(config, "model", model_keys),
        "train": _section(config, "train", {f.name for f in fields(TrainConfig)}),
        "sample": _section(config, "sample", {f.name for f in fields(SampleConfig)}),
        "data": _section(config, "data", DATA_KEYS),
    }


def _apply_overrides(config: dict, overrides: list[str]) -> None:
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValueError(f"override must look like section.key=value: {item!r}")
        path, raw = item.split("=", 1)
        section, key = path.split(".", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config.setdefault(section, {})[key] = value


def _parse_synthetic(spec: str) -> data_mod.SyntheticTaskSpec:
    """Parse e.g. 'copy,K=20,len=8,n=5000,seed=7' (len accepts 'lo-hi')."""
    parts = spec.split(",")
    kwargs: dict = {"kind": parts[0]}
    for part in parts[1:]:
        key, _, value = part.partition("=")
        if key == "K":
            kwargs["vocab_size"] = int(value)
        elif key == "len":
            lo, _, hi = value.partition("-")
            kwargs["min_len"] = int(lo)
            kwargs["max_len"] = int(hi or lo)
        elif key == "n":
            kwargs["n_examples"] = int(value)
        elif key == "seed":
            kwargs["seed"] = int(value)
        else:
            raise ValueError(f"unknown synthetic option: {key!r}")
    return data_mod.SyntheticTaskSpec(**kwargs)


def _load_corpus(data_cfg: dict) -> data_mod.ParallelCorpus:
    if "corpus" in data_cfg and "synthetic" in data_cfg:
        raise ValueError("config data section must name either corpus or synthetic, not both")
    if "corpus" in data_cfg:
        return data_mod.load_tsv(data_cfg["corpus"])
    if "synthetic" in data_cfg:
        syn = data_cfg["synthetic"]
        spec = _parse_synthetic(syn) if isinstance(syn, str) else data_mod.SyntheticTaskSpec(**syn)
        return data_mod.generate_synthetic(spec)
    raise ValueError("no corpus configured (data.corpus or data.synthetic)")


def cmd_train(args) -> int:
    config = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            config = json.load(f)
    if args.corpus:
        config.setdefault("data", {})["corpus"] = args.corpus
    if args.synthetic:
        config.setdefault("data", {})["synthetic"] = args.synthetic
    _apply_overrides(config, args.set or [])
    config = load_run_config(config)
    if args.print_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    if not args.out:
        raise ValueError("--out is required to train")

    corpus = _load_corpus(config["data"])
    train_pairs = corpus.split("train")
    vocab = build_vocabulary([f"{s} {t}" for s, t in corpus.pairs])
    model_cfg = ModelConfig(vocab_size=vocab.size, **config["model"])
    train_cfg = TrainConfig(**config["train"])
    if model_cfg.time_embedding:
        model_cfg.time_steps = train_cfg.diffusion_steps

    src_len = config["data"].get(
        "src_len", min(max(len(s.split()) for s, _ in train_pairs), model_cfg.max_src_len)
    )
    tgt_len = config["data"].get(
        "tgt_len", min(max(len(t.split()) for _, t in train_pairs), model_cfg.max_tgt_len)
    )
    examples = prepare_examples(train_pairs, vocab, src_len, tgt_len)

    os.makedirs(args.out, exist_ok=True)
    save_vocabulary(vocab, os.path.join(args.out, "vocab.txt"))
    with open(os.path.join(args.out, "config.json"), "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)
    t0 = time.time()
    _, log = train(examples, vocab, train_cfg, model_cfg, args.out, resume=args.resume)
    last = log[-1][1] if log else float("nan")
    print(f"trained {train_cfg.total_steps} steps in {time.time() - t0:.1f}s, "
          f"final loss {last:.4f}; checkpoint in {args.out}")
    return 0


def cmd_generate(args) -> int:
    model, config = denoiser_from_checkpoint(args.checkpoint)
    vocab_path = args.vocab or os.path.join(os.path.dirname(args.checkpoint), "vocab.txt")
    vocab = load_vocabulary(vocab_path)
    T = config["diffusion"]["steps"]
    dp = DiffusionProcess(make_schedule(config["diffusion"]["schedule"], T), vocab)
    sc = SampleConfig(
        steps=min(args.steps, T),
        sp_turns=args.sp_turns,
        length=args.length or model.cfg.max_tgt_len,
        seed=args.seed,
        mode=args.mode,
        trace=bool(args.trace),
    )
    if os.path.exists(args.input):
        with open(args.input, encoding="utf-8") as f:
            texts = [line.rstrip("\n") for line in f if line.strip()]
    else:
        texts = [args.input]
    trace_file = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        for i, text in enumerate(texts):
            cond = encode(vocab, text, min(max(len(text.split()), 1), model.cfg.max_src_len))
            rng = np.random.default_rng(np.random.SeedSequence([sc.seed, i]))
            out, trace = generate(model, vocab, cond, dp, sc, rng)
            print(decode(vocab, out))
            if trace_file is not None:
                for rec in trace.records:
                    trace_file.write(json.dumps({
                        "input": i,
                        "t": rec.t,
                        "y_t": [vocab.tokens[j] for j in rec.y_t],
                        "y0_hat": [vocab.tokens[j] for j in rec.y0_hat],
                    }) + "\n")
    finally:
        if trace_file is not None:
            trace_file.close()
    return 0


def cmd_evaluate(args) -> int:
    with open(args.hyp, encoding="utf-8") as f:
        hyps = [line.split() for line in f.read().splitlines()]
    with open(args.ref, encoding="utf-8") as f:
        refs = [line.split() for line in f.read().splitlines()]
    names = args.metrics.split(",")
    report = metrics_mod.evaluate(hyps, refs, names)
    for name in names:
        print(f"{name}\t{100.0 * report[name]:.2f}")
    return 0


def cmd_diffuse(args) -> int:
    vocab = build_vocabulary([args.text])
    schedule = make_schedule(args.schedule, args.steps)
    dp = DiffusionProcess(schedule, vocab)
    if not 0 <= args.t <= args.steps:
        raise ValueError("step out of range")
    ids = [vocab.id_of(t) for t in args.text.split()]
    rng = np.random.default_rng(args.seed)
    noised = dp.forward_sample(ids, args.t, rng)
    print(" ".join(vocab.tokens[i] for i in noised))
    return 0


def cmd_verify(args) -> int:
    results = run_verify()
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name}: {r.detail}")
        ok = ok and r.passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dnat", description="Discrete absorbing-state diffusion for NAR text generation"
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", help="train a denoiser")
    p.add_argument("--corpus", help="TSV corpus path (source<TAB>target per line)")
    p.add_argument("--synthetic", help="synthetic task spec, e.g. copy,K=20,len=8,n=5000,seed=7")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--out", help="output directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--print-config", action="store_true",
                   help="print the effective config and exit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate from a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", help="vocab file (default: vocab.txt beside the checkpoint)")
    p.add_argument("--input", required=True, help="input text, or a file of lines")
    p.add_argument("--steps", type=int, default=100, help="inference steps S")
    p.add_argument("--sp-turns", type=int, default=2, help="self-prompting turns K")
    p.add_argument("--length", type=int, default=0, help="target length n")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", default="marginal_renoise", choices=["marginal_renoise", "posterior"])
    p.add_argument("--trace", help="write per-step states to this JSONL file")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score hypothesis vs reference files")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metrics", default="bleu1,bleu2,distinct1,distinct2,rouge1,rouge2,rougeL,f1,em")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diffuse", help="show the forward corruption of a text")
    p.add_argument("--text", required=True)
    p.add_argument("--t", type=int, required=True, help="corruption step")
    p.add_argument("--steps", type=int, default=1000, help="total diffusion steps T")
    p.add_argument("--schedule", default="linear", choices=["linear", "cosine"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("verify", help="run the brute-force oracle checks")
    p.set_defaults(func=cmd_verify)
    return parser


def dispatch(argv: list[str]) -> int:
    threads = os.environ.get("DNAT_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
