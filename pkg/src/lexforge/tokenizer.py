"""Byte-level BPE tokenizer trained from scratch on the pre-training corpus.

Atoms are the 256 byte values, so any UTF-8 text (Chinese legal prose
included) encodes without an out-of-vocabulary path. Merges are learned
greedily by pair frequency; BOS/EOS/PAD are appended after all merges so
their ids depend only on the merge count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import CorpusEmpty, UnknownToken, VersionError, VocabTooSmall

BYTE_BASE = 256
NUM_SPECIALS = 3  # BOS, EOS, PAD, in that order
MIN_VOCAB_SIZE = BYTE_BASE + NUM_SPECIALS

VOCAB_MAGIC = "bpe-v1"

# Separator placed between documents so pair counting never crosses them.
_DOC_SEP = np.int64(-1)


@dataclass(frozen=True)
class Vocabulary:
    """A trained merge list plus the derived id layout.

    Ids 0..255 are the raw bytes, id 256+k is the k-th merge, and the three
    specials sit after the last merge.
    """

    target_size: int
    merges: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        next_id = BYTE_BASE
        for left, right in self.merges:
            if not (0 <= left < next_id and 0 <= right < next_id):
                raise ValueError(f"merge ({left}, {right}) references an undefined id")
            next_id += 1

    @property
    def size(self) -> int:
        return BYTE_BASE + len(self.merges) + NUM_SPECIALS

    @property
    def bos_id(self) -> int:
        return BYTE_BASE + len(self.merges)

    @property
    def eos_id(self) -> int:
        return self.bos_id + 1

    @property
    def pad_id(self) -> int:
        return self.bos_id + 2

    @cached_property
    def _expansions(self) -> list[bytes]:
        table = [bytes([i]) for i in range(BYTE_BASE)]
        for left, right in self.merges:
            table.append(table[left] + table[right])
        table.extend([b""] * NUM_SPECIALS)  # specials are invisible in text
        return table


def _apply_merge(ids: np.ndarray, left: int, right: int, new_id: int) -> np.ndarray:
    """Replace every non-overlapping (left, right) adjacency, leftmost first."""
    matches = np.nonzero((ids[:-1] == left) & (ids[1:] == right))[0]
    if matches.size == 0:
        return ids
    if left == right:
        # overlapping runs like "aaa": greedy leftmost consumes pairs 0-1, 2-3, ...
        kept = []
        last = -2
        for i in matches.tolist():
            if i == last + 1:
                continue
            kept.append(i)
            last = i
        matches = np.asarray(kept, dtype=np.int64)
    ids = ids.copy()
    ids[matches] = new_id
    keep = np.ones(ids.shape[0], dtype=bool)
    keep[matches + 1] = False
    return ids[keep]


def train_bpe(corpus: list[str], target_size: int) -> Vocabulary:
    """Learn (target_size - 259) merges by greedy highest pair frequency.

    Ties break on the lexicographically smallest (left, right) id pair, which
    makes the merge list a pure function of the corpus and target size. If the
    corpus runs out of adjacent pairs the merge list ends early.
    """
    if target_size < MIN_VOCAB_SIZE:
        raise VocabTooSmall(
            f"target_size {target_size} < {MIN_VOCAB_SIZE} (bytes + specials)"
        )
    if not corpus or all(len(doc.encode("utf-8")) == 0 for doc in corpus):
        raise CorpusEmpty("tokenizer training corpus holds no text")

    num_merges = target_size - MIN_VOCAB_SIZE
    parts: list[np.ndarray] = []
    for doc in corpus:
        raw = np.frombuffer(doc.encode("utf-8"), dtype=np.uint8).astype(np.int64)
        if raw.size:
            parts.append(raw)
            parts.append(np.asarray([_DOC_SEP]))
    joined = np.concatenate(parts[:-1]) if len(parts) > 1 else parts[0]

    # Pair keys live below base**2, small enough for bincount counting.
    base = BYTE_BASE + num_merges
    merges: list[tuple[int, int]] = []
    for k in range(num_merges):
        left, right = joined[:-1], joined[1:]
        valid = (left >= 0) & (right >= 0)
        if not valid.any():
            break
        keys = left[valid] * base + right[valid]
        counts = np.bincount(keys)
        best_count = counts.max()
        if best_count < 1:
            break
        best_key = int(np.nonzero(counts == best_count)[0][0])
        pair = (best_key // base, best_key % base)
        merges.append(pair)
        joined = _apply_merge(joined, pair[0], pair[1], BYTE_BASE + k)
        if joined.size < 2:
            break
    return Vocabulary(target_size=target_size, merges=tuple(merges))


def encode(vocab: Vocabulary, text: str) -> list[int]:
    """UTF-8 bytes of `text` with merges applied in training order."""
    ids = np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)
    for k, (left, right) in enumerate(vocab.merges):
        if ids.size < 2:
            break
        ids = _apply_merge(ids, left, right, BYTE_BASE + k)
    return ids.tolist()


def decode(vocab: Vocabulary, tokens: list[int]) -> str:
    """Concatenate each id's byte expansion; specials vanish."""
    table = vocab._expansions
    size = vocab.size
    chunks = []
    for t in tokens:
        if not 0 <= t < size:
            raise UnknownToken(f"id {t} outside vocabulary of size {size}")
        chunks.append(table[t])
    return b"".join(chunks).decode("utf-8", errors="replace")


def save_vocabulary(vocab: Vocabulary, path) -> None:
    lines = [VOCAB_MAGIC, str(vocab.target_size)]
    lines.extend(f"{left} {right}" for left, right in vocab.merges)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocabulary(path) -> Vocabulary:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != VOCAB_MAGIC:
        raise VersionError(f"not a {VOCAB_MAGIC} vocabulary file: {path}")
    if len(lines) < 2:
        raise VersionError(f"vocabulary file truncated: {path}")
    target_size = int(lines[1])
    merges = []
    for line in lines[2:]:
        if not line:
            continue
        left, right = line.split(" ")
        merges.append((int(left), int(right)))
    return Vocabulary(target_size=target_size, merges=tuple(merges))
