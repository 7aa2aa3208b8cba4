"""Word-level corpus ingestion: vocabulary, encoding, and contiguous batches.

The corpus format is pre-tokenized text (one sentence per line, tokens
separated by whitespace). An ``<eos>`` token is appended to every line and
``<unk>`` absorbs out-of-vocabulary tokens at encode time. Vocabulary ids
are assigned by descending frequency with lexicographic tie-breaking, so
identical input files always produce identical vocabularies.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CorpusTooSmall, EmptyCorpus, VocabError

UNK_TOKEN = "<unk>"
EOS_TOKEN = "<eos>"


@dataclass
class Vocab:
    token_to_id: dict[str, int]
    id_to_token: list[str]
    unk_id: int
    eos_id: int

    def __len__(self) -> int:
        return len(self.id_to_token)


@dataclass
class TokenBatch:
    """One training batch: ``targets[b, t]`` is the stream successor of ``inputs[b, t]``."""

    inputs: np.ndarray  # (batch_size, seq_len) int32
    targets: np.ndarray  # (batch_size, seq_len) int32


def read_lines(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def build_vocab(lines: Iterable[str], max_size: int) -> Vocab:
    """Build a frequency-ordered vocabulary of at most ``max_size`` tokens.

    ``<eos>`` is counted once per line; ``<unk>`` is added (frequency of its
    literal occurrences, possibly zero) and both specials are guaranteed a
    slot even when ``max_size`` truncates the tail of the distribution.
    """
    if max_size < 2:
        raise ValueError("max_size must allow at least <unk> and <eos>")
    freq: Counter[str] = Counter()
    n_lines = 0
    for line in lines:
        n_lines += 1
        freq.update(line.split())
    if sum(freq.values()) == 0:
        raise EmptyCorpus("corpus contains no tokens")
    freq[EOS_TOKEN] += n_lines
    if UNK_TOKEN not in freq:
        freq[UNK_TOKEN] = 0

    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    chosen = ranked[:max_size]
    kept = {tok for tok, _ in chosen}
    for special in (UNK_TOKEN, EOS_TOKEN):
        if special not in kept:
            # Evict the lowest-ranked non-special entry to make room.
            for i in range(len(chosen) - 1, -1, -1):
                if chosen[i][0] not in (UNK_TOKEN, EOS_TOKEN):
                    del chosen[i]
                    break
            chosen.append((special, freq[special]))
            kept.add(special)
    chosen.sort(key=lambda kv: (-kv[1], kv[0]))

    id_to_token = [tok for tok, _ in chosen]
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocab(
        token_to_id=token_to_id,
        id_to_token=id_to_token,
        unk_id=token_to_id[UNK_TOKEN],
        eos_id=token_to_id[EOS_TOKEN],
    )


def encode(lines: Iterable[str], vocab: Vocab) -> np.ndarray:
    """Encode lines to ids: one id per token plus ``eos_id`` per line."""
    t2i = vocab.token_to_id
    unk = vocab.unk_id
    eos = vocab.eos_id
    ids: list[int] = []
    for line in lines:
        for tok in line.split():
            ids.append(t2i.get(tok, unk))
        ids.append(eos)
    return np.asarray(ids, dtype=np.int32)


def decode(ids: Sequence[int], vocab: Vocab) -> list[str]:
    out = []
    for i in ids:
        if i < 0 or i >= len(vocab.id_to_token):
            raise VocabError(f"id {i} outside vocabulary of size {len(vocab)}")
        out.append(vocab.id_to_token[i])
    return out


def oov_rate(lines: Iterable[str], vocab: Vocab) -> float:
    """Fraction of word tokens (``<eos>`` excluded) absent from the vocabulary."""
    total = 0
    oov = 0
    for line in lines:
        for tok in line.split():
            total += 1
            if tok not in vocab.token_to_id:
                oov += 1
    return oov / total if total else 0.0


def make_batches(ids: np.ndarray, batch_size: int, seq_len: int) -> list[TokenBatch]:
    """Split the id stream into continuous-lane next-token batches.

    Lane ``b`` covers a contiguous stretch of the stream; each batch advances
    every lane by ``seq_len``. The trailing remainder is dropped. Raises
    :class:`CorpusTooSmall` when not even one batch fits.
    """
    n = len(ids)
    lane_len = n // batch_size
    n_batches = (lane_len - 1) // seq_len if lane_len >= 1 else 0
    if n_batches < 1:
        raise CorpusTooSmall(
            f"{n} tokens cannot fill one {batch_size}x{seq_len} batch (+1 target)"
        )
    lanes = np.asarray(ids[: lane_len * batch_size], dtype=np.int32).reshape(
        batch_size, lane_len
    )
    batches = []
    for i in range(n_batches):
        lo = i * seq_len
        batches.append(
            TokenBatch(
                inputs=lanes[:, lo : lo + seq_len].copy(),
                targets=lanes[:, lo + 1 : lo + seq_len + 1].copy(),
            )
        )
    return batches


def save_vocab(vocab: Vocab, path: str) -> None:
    """Write one token per line in id order, for inspection and pinning."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.id_to_token:
            fh.write(tok + "\n")
