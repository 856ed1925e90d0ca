"""Word-level vocabulary, tokenization, and token-masking augmentation.

Tokens are lowercased runs of letters and digits (chemical formula strings
stay intact as single tokens) plus individual punctuation marks. Masking is
the text-side augmentation: each non-[CLS] position is independently kept
with probability p_keep or replaced with [MASK].
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

PAD_ID, CLS_ID, MASK_ID, UNK_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("[PAD]", "[CLS]", "[MASK]", "[UNK]")
N_RESERVED = len(RESERVED_TOKENS)

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^a-z0-9\s]")


def split_text(text: str) -> list[str]:
    """Lowercase and split into word/number runs and punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocab:
    """Immutable token table; ids 0..3 are reserved ([PAD],[CLS],[MASK],[UNK])."""

    tokens: tuple[str, ...]  # non-reserved tokens; token i has id i + N_RESERVED

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if any(t in RESERVED_TOKENS for t in self.tokens):
            raise ValueError("reserved tokens may not appear in the token list")
        object.__setattr__(self, "_ids", {t: i + N_RESERVED for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens) + N_RESERVED

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        if 0 <= token_id < N_RESERVED:
            return RESERVED_TOKENS[token_id]
        if token_id < self.size:
            return self.tokens[token_id - N_RESERVED]
        raise ValueError(f"token id {token_id} out of range for vocab of size {self.size}")

    def __contains__(self, token: str) -> bool:
        return token in self._ids


def build_vocab(corpus: list[str], min_freq: int = 1, max_size: int = 4096) -> Vocab:
    """Frequency-ranked vocabulary; ties broken lexicographically."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for doc in corpus:
        counts.update(split_text(doc))
    survivors = [(tok, n) for tok, n in counts.items() if n >= min_freq]
    survivors.sort(key=lambda item: (-item[1], item[0]))
    return Vocab(tuple(tok for tok, _ in survivors[:max_size]))


def save_vocab(vocab: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.tokens:
            fh.write(tok + "\n")


def load_vocab(path) -> Vocab:
    with open(path, encoding="utf-8") as fh:
        return Vocab(tuple(line.rstrip("\n") for line in fh if line.rstrip("\n")))


@dataclass(frozen=True)
class TokenSequence:
    """Token ids with [CLS] at position 0; never padded internally."""

    ids: tuple[int, ...]

    def __post_init__(self):
        if not self.ids or self.ids[0] != CLS_ID or CLS_ID in self.ids[1:]:
            raise ValueError("sequence must contain exactly one [CLS], at position 0")

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str, vocab: Vocab, max_len: int = 128) -> TokenSequence:
    """[CLS]-prefixed id sequence, truncated to max_len; unknowns map to [UNK]."""
    ids = [CLS_ID] + [vocab.id_of(tok) for tok in split_text(text)]
    return TokenSequence(tuple(ids[:max_len]))


def detokenize(seq_ids, vocab: Vocab) -> list[str]:
    return [vocab.token_of(i) for i in seq_ids]


@dataclass(frozen=True)
class MaskedSample:
    """Masked view of a sequence plus the original tokens at masked positions."""

    input_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    mask_positions: tuple[int, ...]

    def __post_init__(self):
        if len(self.target_ids) != len(self.mask_positions):
            raise ValueError("one target per masked position required")
        for pos in self.mask_positions:
            if pos <= 0 or pos >= len(self.input_ids):
                raise ValueError(f"mask position {pos} outside maskable range")
            if self.input_ids[pos] != MASK_ID:
                raise ValueError(f"position {pos} claimed masked but is not [MASK]")


def mask_tokens(seq: TokenSequence, p_keep: float, seed: int) -> MaskedSample:
    """Independently keep each non-[CLS] token with probability p_keep.

    Deterministic in (seq, p_keep, seed); [CLS] is never masked because it
    anchors pooling.
    """
    if not 0.0 <= p_keep <= 1.0:
        raise ValueError(f"p_keep must lie in [0, 1], got {p_keep}")
    rng = np.random.default_rng(seed)
    draws = rng.random(len(seq.ids) - 1)
    input_ids = list(seq.ids)
    positions, targets = [], []
    for pos in range(1, len(seq.ids)):
        if draws[pos - 1] >= p_keep:
            positions.append(pos)
            targets.append(seq.ids[pos])
            input_ids[pos] = MASK_ID
    return MaskedSample(tuple(input_ids), tuple(targets), tuple(positions))
