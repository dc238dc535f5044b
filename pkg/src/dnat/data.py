"""Corpus loading (TSV) and synthetic desk-scale task generators."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass
class ParallelCorpus:
    pairs: list[tuple[str, str]]
    name: str
    train_idx: list[int]
    valid_idx: list[int]
    test_idx: list[int]

    def split(self, which: str) -> list[tuple[str, str]]:
        idx = {"train": self.train_idx, "valid": self.valid_idx, "test": self.test_idx}[which]
        return [self.pairs[i] for i in idx]


@dataclass
class SyntheticTaskSpec:
    kind: str  # copy | reverse | sort_digits
    vocab_size: int = 20
    min_len: int = 4
    max_len: int = 8
    n_examples: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("copy", "reverse", "sort_digits"):
            raise ValueError(f"unknown synthetic task: {self.kind!r}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")


def _index_hash(i: int) -> int:
    return int.from_bytes(hashlib.sha256(str(i).encode()).digest()[:8], "little")


def _default_splits(n: int) -> tuple[list[int], list[int], list[int]]:
    """Deterministic 90/5/5 split: indices ordered by hash, then sliced."""
    order = sorted(range(n), key=_index_hash)
    n_train = int(n * 0.90)
    n_valid = int(n * 0.05)
    return (
        sorted(order[:n_train]),
        sorted(order[n_train : n_train + n_valid]),
        sorted(order[n_train + n_valid :]),
    )


def load_tsv(path: str) -> ParallelCorpus:
    """One `source<TAB>target` pair per line, UTF-8."""
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise ValueError(f"cannot read corpus {path}: {e}") from e
    pairs = []
    bad = []
    for lineno, line in enumerate(lines, start=1):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[1].strip():
            bad.append(lineno)
            continue
        pairs.append((parts[0], parts[1]))
    if bad:
        shown = ", ".join(str(b) for b in bad[:10])
        raise ValueError(f"{path}: {len(bad)} malformed line(s), first at line(s) {shown}")
    if not pairs:
        raise ValueError(f"{path}: empty corpus")
    tr, va, te = _default_splits(len(pairs))
    return ParallelCorpus(pairs=pairs, name=path, train_idx=tr, valid_idx=va, test_idx=te)


def generate_synthetic(spec: SyntheticTaskSpec) -> ParallelCorpus:
    """Deterministic synthetic corpus; sources are unique within the corpus."""
    rng = np.random.default_rng(spec.seed)
    n_tokens = spec.vocab_size if spec.kind != "sort_digits" else min(spec.vocab_size, 10)
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    attempts = 0
    while len(pairs) < spec.n_examples:
        attempts += 1
        if attempts > 100 * spec.n_examples:
            raise ValueError("task space too small for requested n_examples")
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        toks = [str(int(x)) for x in rng.integers(0, n_tokens, length)]
        source = " ".join(toks)
        if source in seen:
            continue
        seen.add(source)
        if spec.kind == "copy":
            target = source
        elif spec.kind == "reverse":
            target = " ".join(reversed(toks))
        else:
            target = " ".join(sorted(toks, key=int))
        pairs.append((source, target))
    tr, va, te = _default_splits(len(pairs))
    return ParallelCorpus(
        pairs=pairs, name=f"synthetic:{spec.kind}", train_idx=tr, valid_idx=va, test_idx=te
    )
