"""Records, record pairs, and their serialization into token id sequences.

A record is an ordered list of (attribute, value) pairs.  A candidate pair of
records is flattened into a single marked-up text sequence and then mapped to
fixed-length token ids that the encoders consume.  All functions here are pure
and deterministic.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
COL_TOKEN = "[COL]"
VAL_TOKEN = "[VAL]"

RESERVED_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, COL_TOKEN, VAL_TOKEN)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, COL_ID, VAL_ID = range(len(RESERVED_TOKENS))

_RESERVED_SET = frozenset(RESERVED_TOKENS)

# Alphanumeric runs stay whole; every other non-space character is its own token.
_WORD_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class Record:
    """One data entry: an ordered tuple of (attribute name, value) pairs."""

    attributes: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        if len(self.attributes) == 0:
            raise ValueError("record must have at least one attribute")
        for name, _ in self.attributes:
            if not name:
                raise ValueError("attribute names must be non-empty")

    @property
    def num_attributes(self) -> int:
        return len(self.attributes)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "Record":
        return cls(tuple((str(k), str(v)) for k, v in pairs))


@dataclass(frozen=True)
class RecordPair:
    """Candidate pair with an optional binary match label (1=match)."""

    left: Record
    right: Record
    label: Optional[int] = None

    def __post_init__(self) -> None:
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


def serialize_record(record: Record) -> str:
    """Flatten a record to '[COL] name [VAL] value ...' marked-up text.

    Attribute order is preserved; empty values leave nothing after [VAL].
    """
    parts: list[str] = []
    for name, value in record.attributes:
        parts.append(COL_TOKEN)
        parts.append(name)
        parts.append(VAL_TOKEN)
        if value:
            parts.append(value)
    return " ".join(parts)


def serialize_pair(pair: RecordPair) -> str:
    """Flatten a candidate pair into one sequence with [CLS]/[SEP] markers."""
    return (
        f"{CLS_TOKEN} {serialize_record(pair.left)} {SEP_TOKEN} "
        f"{serialize_record(pair.right)} {SEP_TOKEN}"
    )


def split_text(text: str) -> list[str]:
    """Split text into tokens: lowercased words and single punctuation marks.

    Chunks that are exactly one of the reserved marker tokens pass through
    unchanged so that serialized pairs re-tokenize losslessly.
    """
    tokens: list[str] = []
    for chunk in text.split():
        if chunk in _RESERVED_SET:
            tokens.append(chunk)
        else:
            tokens.extend(_WORD_RE.findall(chunk.lower()))
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Injective token -> id map with the six reserved ids fixed at 0..5."""

    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        if self.id_to_token[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise ValueError("vocabulary tokens must be unique")
        if not self.token_to_id:
            object.__setattr__(
                self,
                "token_to_id",
                {tok: i for i, tok in enumerate(self.id_to_token)},
            )

    def __len__(self) -> int:
        return len(self.id_to_token)

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def save(self, path: str | Path) -> None:
        """One token per line; the line number is the id."""
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines))


def build_vocab(corpora: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Count tokens over the corpora and keep those seen at least min_count times.

    Ids are assigned by descending frequency, ties broken lexicographically,
    starting after the reserved ids.  Marker tokens are never counted.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: Counter[str] = Counter()
    for text in corpora:
        for token in split_text(text):
            if token not in _RESERVED_SET:
                counts[token] += 1
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(RESERVED_TOKENS + tuple(kept))


@dataclass(frozen=True)
class SerializedPair:
    """Fixed-length token ids plus a 0/1 attention mask (1 on real tokens)."""

    token_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.token_ids) != len(self.attention_mask):
            raise ValueError("token_ids and attention_mask lengths differ")

    def __len__(self) -> int:
        return len(self.token_ids)

    @property
    def num_real_tokens(self) -> int:
        return sum(self.attention_mask)


def tokenize(text: str, vocab: Vocabulary, max_len: int = 128) -> SerializedPair:
    """Map serialized pair text to padded ids of length exactly max_len.

    Truncation drops the tail but re-inserts the trailing [SEP] at the final
    position so every sequence still ends like a well-formed pair.
    """
    if max_len < 8:
        raise ValueError("max_len must be >= 8")
    ids = [vocab.lookup(t) for t in split_text(text)]
    if len(ids) > max_len:
        ids = ids[:max_len]
        ids[-1] = SEP_ID
    mask = [1] * len(ids) + [0] * (max_len - len(ids))
    ids = ids + [PAD_ID] * (max_len - len(ids))
    return SerializedPair(tuple(ids), tuple(mask))


@dataclass(frozen=True)
class PairCodec:
    """Bundles the vocabulary and max length used to encode record pairs."""

    vocab: Vocabulary
    max_len: int = 128

    def encode_pair(self, pair: RecordPair) -> SerializedPair:
        return tokenize(serialize_pair(pair), self.vocab, self.max_len)

    def encode_pairs(self, pairs: Sequence[RecordPair]) -> list[SerializedPair]:
        return [self.encode_pair(p) for p in pairs]
