"""Word-level vocabulary with the reserved special tokens used everywhere else.

Special tokens occupy fixed ids 0-3 ([PAD], [MASK], [SEP], [UNK]) so that
checkpoints and vocab files stay portable across rebuilds.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

PAD_TOKEN = "[PAD]"
MASK_TOKEN = "[MASK]"
SEP_TOKEN = "[SEP]"
UNK_TOKEN = "[UNK]"

SPECIAL_TOKENS = (PAD_TOKEN, MASK_TOKEN, SEP_TOKEN, UNK_TOKEN)


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    token_to_id: dict[str, int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def mask_id(self) -> int:
        return 1

    @property
    def sep_id(self) -> int:
        return 2

    @property
    def unk_id(self) -> int:
        return 3

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)


def _make_vocabulary(tokens: list[str]) -> Vocabulary:
    if len(tokens) < 5:
        raise ValueError("vocabulary needs at least one content token")
    if len(set(tokens)) != len(tokens):
        raise ValueError("duplicate tokens in vocabulary")
    return Vocabulary(tokens=tuple(tokens), token_to_id={t: i for i, t in enumerate(tokens)})


def build_vocabulary(corpus_lines: list[str], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary from whitespace-tokenized lines.

    Content tokens are ordered by (descending count, ascending lexicographic)
    after the four specials, so id assignment is deterministic.
    """
    if not corpus_lines:
        raise ValueError("empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for line in corpus_lines:
        counts.update(line.split())
    content = sorted(
        (t for t, c in counts.items() if c >= min_count and t not in SPECIAL_TOKENS),
        key=lambda t: (-counts[t], t),
    )
    return _make_vocabulary(list(SPECIAL_TOKENS) + content)


def encode(v: Vocabulary, text: str, target_len: int) -> list[int]:
    """Whitespace-tokenize, map unknowns to [UNK], pad/truncate to target_len."""
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    ids = [v.id_of(t) for t in text.split()][:target_len]
    ids.extend([v.pad_id] * (target_len - len(ids)))
    return ids


def decode(v: Vocabulary, ids: list[int]) -> str:
    """Join tokens with spaces, dropping [PAD]/[MASK]/[SEP]."""
    dropped = {v.pad_id, v.mask_id, v.sep_id}
    out = []
    for i in ids:
        if i >= v.size or i < 0:
            raise ValueError(f"id out of range: {i}")
        if i not in dropped:
            out.append(v.tokens[i])
    return " ".join(out)


def save_vocabulary(v: Vocabulary, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in v.tokens:
            f.write(t + "\n")


def load_vocabulary(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        tokens = [line.rstrip("\n") for line in f]
    if tokens[:4] != list(SPECIAL_TOKENS):
        raise ValueError(f"vocab file {path} does not start with the special tokens")
    return _make_vocabulary(tokens)
