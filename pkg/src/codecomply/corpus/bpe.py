"""Byte-pair-encoding vocabulary: training, tokenization, serialization.

The vocabulary is byte-level: the base alphabet is the set of bytes that occur
in the training corpus (not all 256 values), so text containing unseen bytes
tokenizes those bytes to [UNK]. Merge rules never cross chunk boundaries,
where a chunk is a whitespace-attached run produced by ``_chunk``; since chunks
partition the text, detokenization of covered text is byte-exact.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from codecomply.errors import TokenizerError

PAD, UNK, SEP, FACET_PLUS, FACET_MINUS = "[PAD]", "[UNK]", "[SEP]", "[FACET+]", "[FACET-]"
RESERVED_TOKENS = (PAD, UNK, SEP, FACET_PLUS, FACET_MINUS)

DEFAULT_MAX_SEQ_LEN = 128

# A chunk is either whitespace followed by non-whitespace, or a trailing run of
# either kind alone; chunks concatenate back to the original text.
_CHUNK_RE = re.compile(rb"\s*\S+|\s+")


def _chunk(data: bytes) -> list[bytes]:
    return _CHUNK_RE.findall(data)


@dataclass
class Vocabulary:
    """Ordered merge rules plus the id table they induce.

    ``token_to_id`` maps byte-sequence tokens to ids; reserved symbolic tokens
    live in ``reserved`` and occupy ids below every byte token. Immutable after
    training (the tokenization memo is a private cache).
    """

    merges: list[tuple[bytes, bytes]]
    alphabet: list[bytes]
    token_to_id: dict[bytes, int]
    reserved: dict[str, int]
    _ranks: dict[tuple[bytes, bytes], int] = field(default_factory=dict, repr=False)
    _memo: dict[bytes, tuple[int, ...]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._ranks:
            self._ranks = {pair: i for i, pair in enumerate(self.merges)}

    @property
    def size(self) -> int:
        return len(self.reserved) + len(self.token_to_id)

    @property
    def id_to_token(self) -> dict[int, bytes]:
        return {i: t for t, i in self.token_to_id.items()}

    def facet_id(self, compliant: bool) -> int:
        return self.reserved[FACET_PLUS if compliant else FACET_MINUS]

    def content_hash(self) -> str:
        payload = json.dumps(_to_jsonable(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def _pair_counts(chunks: dict[tuple[bytes, ...], int]) -> Counter:
    counts: Counter = Counter()
    for parts, freq in chunks.items():
        for pair in zip(parts, parts[1:]):
            counts[pair] += freq
    return counts


def _merge_parts(parts: tuple[bytes, ...], pair: tuple[bytes, bytes]) -> tuple[bytes, ...]:
    merged = pair[0] + pair[1]
    out: list[bytes] = []
    i = 0
    while i < len(parts):
        if i + 1 < len(parts) and parts[i] == pair[0] and parts[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(parts[i])
            i += 1
    return tuple(out)


def train_bpe(texts: Sequence[str], vocab_size: int) -> Vocabulary:
    """Learn merge rules from ``texts`` until the vocabulary reaches ``vocab_size``.

    Deterministic given input order; frequency ties break on the
    lexicographically smaller (left, right) byte pair. ``vocab_size`` counts
    reserved tokens, the base byte alphabet and merge products together.
    """
    data = [t.encode("utf-8") for t in texts]
    if not data or all(len(d) == 0 for d in data):
        raise TokenizerError("empty corpus: nothing to train on")

    alphabet = sorted({bytes([b]) for blob in data for b in blob})
    floor = len(alphabet) + len(RESERVED_TOKENS)
    if vocab_size <= floor:
        raise TokenizerError(
            f"vocab_size {vocab_size} too small: need > {floor} "
            f"({len(alphabet)} distinct bytes + {len(RESERVED_TOKENS)} reserved)"
        )

    chunk_freq: Counter = Counter()
    for blob in data:
        chunk_freq.update(_chunk(blob))
    chunks: dict[tuple[bytes, ...], int] = {
        tuple(bytes([b]) for b in chunk): freq for chunk, freq in chunk_freq.items()
    }

    merges: list[tuple[bytes, bytes]] = []
    for _ in range(vocab_size - floor):
        counts = _pair_counts(chunks)
        if not counts:
            break
        best = max(counts.items(), key=lambda kv: (kv[1], _neg_lex(kv[0])))
        pair = best[0]
        merges.append(pair)
        chunks = {_merge_parts(parts, pair): freq for parts, freq in chunks.items()}

    reserved = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
    token_to_id = _build_id_table(alphabet, merges, len(reserved))
    return Vocabulary(merges=merges, alphabet=alphabet, token_to_id=token_to_id, reserved=reserved)


def _build_id_table(
    alphabet: list[bytes], merges: list[tuple[bytes, bytes]], n_reserved: int
) -> dict[bytes, int]:
    token_to_id: dict[bytes, int] = {}
    next_id = n_reserved
    for tok in alphabet:
        token_to_id[tok] = next_id
        next_id += 1
    for left, right in merges:
        product = left + right
        if product in token_to_id:
            raise TokenizerError(f"merge product collides with existing token: {product!r}")
        token_to_id[product] = next_id
        next_id += 1
    return token_to_id


class _NegBytes:
    """Reverses byte-string ordering so max() picks the lexicographically smaller pair."""

    __slots__ = ("b",)

    def __init__(self, b: bytes) -> None:
        self.b = b

    def __lt__(self, other: "_NegBytes") -> bool:
        return self.b > other.b

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _NegBytes) and self.b == other.b


def _neg_lex(pair: tuple[bytes, bytes]) -> tuple[_NegBytes, _NegBytes]:
    return (_NegBytes(pair[0]), _NegBytes(pair[1]))


def _encode_chunk(chunk: bytes, vocab: Vocabulary) -> tuple[int, ...]:
    cached = vocab._memo.get(chunk)
    if cached is not None:
        return cached
    unk = vocab.reserved[UNK]
    parts: list[bytes] = [bytes([b]) for b in chunk]
    ranks = vocab._ranks
    while len(parts) > 1:
        best_rank = None
        best_pair = None
        for pair in zip(parts, parts[1:]):
            rank = ranks.get(pair)
            if rank is not None and (best_rank is None or rank < best_rank):
                best_rank, best_pair = rank, pair
        if best_pair is None:
            break
        parts = list(_merge_parts(tuple(parts), best_pair))
    ids = tuple(vocab.token_to_id.get(p, unk) for p in parts)
    vocab._memo[chunk] = ids
    return ids


def tokenize(text: str, vocab: Vocabulary, max_seq_len: int = DEFAULT_MAX_SEQ_LEN) -> list[int]:
    """Text to token ids; total function, truncates the tail to ``max_seq_len``."""
    ids: list[int] = []
    for chunk in _chunk(text.encode("utf-8")):
        ids.extend(_encode_chunk(chunk, vocab))
        if len(ids) >= max_seq_len:
            return ids[:max_seq_len]
    return ids


def detokenize(ids: Iterable[int], vocab: Vocabulary) -> str:
    """Ids back to text; reserved ids are dropped, byte tokens concatenate."""
    table = vocab.id_to_token
    blob = b"".join(table.get(i, b"") for i in ids)
    return blob.decode("utf-8", errors="replace")


def _to_jsonable(vocab: Vocabulary) -> dict:
    return {
        "format": 1,
        "merges": [[l.decode("latin-1"), r.decode("latin-1")] for l, r in vocab.merges],
        "alphabet": [a.decode("latin-1") for a in vocab.alphabet],
        "reserved": dict(vocab.reserved),
    }


def save_vocab(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_text(json.dumps(_to_jsonable(vocab), indent=0), encoding="utf-8")


def _from_jsonable(raw: dict) -> Vocabulary:
    if raw.get("format") != 1:
        raise TokenizerError(f"unsupported vocab format: {raw.get('format')!r}")
    merges = [(l.encode("latin-1"), r.encode("latin-1")) for l, r in raw["merges"]]
    alphabet = [a.encode("latin-1") for a in raw["alphabet"]]
    reserved = {str(k): int(v) for k, v in raw["reserved"].items()}
    token_to_id = _build_id_table(alphabet, merges, len(reserved))
    return Vocabulary(merges=merges, alphabet=alphabet, token_to_id=token_to_id, reserved=reserved)


def load_vocab(path: str | Path) -> Vocabulary:
    return _from_jsonable(json.loads(Path(path).read_text(encoding="utf-8")))
