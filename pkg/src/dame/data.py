"""Loading and sampling entity matching datasets.

A domain lives in one directory with two record tables and three pair files:

    tableA.csv   header: id,<attr>,...      left-side records
    tableB.csv   header: id,<attr>,...      right-side records
    train.csv    header: ltable_id,rtable_id,label
    valid.csv    header: ltable_id,rtable_id,label
    test.csv     header: ltable_id,rtable_id,label

Labels are 0/1; an empty label cell is kept as None so targets can ship
unlabeled pairs in the same format.  A registry groups several labeled source
domains with one target domain.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .records import (
    PairCodec,
    Record,
    RecordPair,
    SerializedPair,
    Vocabulary,
    build_vocab,
    serialize_record,
)

TABLE_FILES = ("tableA.csv", "tableB.csv")
SPLIT_FILES = ("train.csv", "valid.csv", "test.csv")
SPLIT_NAMES = ("train", "valid", "test")


@dataclass(frozen=True)
class Domain:
    """One dataset: records by id per side plus labeled pair splits."""

    name: str
    table_a: dict[str, Record]
    table_b: dict[str, Record]
    splits: dict[str, list[RecordPair]]
    # (ltable_id, rtable_id) per pair, split -> list, parallel to `splits`
    pair_ids: dict[str, list[tuple[str, str]]]
    attribute_names: tuple[str, ...]

    @property
    def train(self) -> list[RecordPair]:
        return self.splits["train"]

    @property
    def valid(self) -> list[RecordPair]:
        return self.splits["valid"]

    @property
    def test(self) -> list[RecordPair]:
        return self.splits["test"]

    def all_pairs(self) -> list[RecordPair]:
        return self.train + self.valid + self.test

    def all_records(self) -> list[Record]:
        return list(self.table_a.values()) + list(self.table_b.values())


def _read_table(path: Path) -> tuple[dict[str, Record], tuple[str, ...]]:
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty table file") from None
        if not header or header[0] != "id":
            raise ValueError(f"{path}: first header column must be 'id'")
        attr_names = tuple(header[1:])
        if not attr_names:
            raise ValueError(f"{path}: table needs at least one attribute column")
        records: dict[str, Record] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            rid = row[0]
            if rid in records:
                raise ValueError(f"{path}:{lineno}: duplicate record id {rid!r}")
            records[rid] = Record.from_pairs(zip(attr_names, row[1:]))
    return records, attr_names


def _parse_label(raw: str, path: Path, lineno: int) -> Optional[int]:
    raw = raw.strip()
    if raw == "":
        return None
    if raw == "0":
        return 0
    if raw == "1":
        return 1
    raise ValueError(f"{path}:{lineno}: label must be 0, 1, or empty, got {raw!r}")


def _read_pairs(
    path: Path,
    table_a: dict[str, Record],
    table_b: dict[str, Record],
) -> tuple[list[RecordPair], list[tuple[str, str]]]:
    pairs: list[RecordPair] = []
    ids: list[tuple[str, str]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty pair file") from None
        if header[:3] != ["ltable_id", "rtable_id", "label"]:
            raise ValueError(f"{path}: header must be ltable_id,rtable_id,label")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            lid, rid, raw = row
            if lid not in table_a:
                raise ValueError(f"{path}:{lineno}: ltable_id {lid!r} not present in tableA.csv")
            if rid not in table_b:
                raise ValueError(f"{path}:{lineno}: rtable_id {rid!r} not present in tableB.csv")
            label = _parse_label(raw, path, lineno)
            pairs.append(RecordPair(table_a[lid], table_b[rid], label))
            ids.append((lid, rid))
    return pairs, ids


def load_domain(directory: str | Path, name: Optional[str] = None) -> Domain:
    """Load one domain directory, validating layout and referential integrity."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"domain directory not found: {root}")
    for fname in TABLE_FILES + SPLIT_FILES:
        if not (root / fname).is_file():
            raise FileNotFoundError(f"{root}: missing required file {fname}")
    table_a, attrs_a = _read_table(root / "tableA.csv")
    table_b, attrs_b = _read_table(root / "tableB.csv")
    if attrs_a != attrs_b:
        raise ValueError(f"{root}: tableA and tableB attribute columns differ: {attrs_a} vs {attrs_b}")
    splits: dict[str, list[RecordPair]] = {}
    pair_ids: dict[str, list[tuple[str, str]]] = {}
    for split, fname in zip(SPLIT_NAMES, SPLIT_FILES):
        splits[split], pair_ids[split] = _read_pairs(root / fname, table_a, table_b)
    return Domain(
        name=name if name is not None else root.name,
        table_a=table_a,
        table_b=table_b,
        splits=splits,
        pair_ids=pair_ids,
        attribute_names=attrs_a,
    )


def save_domain(domain: Domain, directory: str | Path) -> None:
    """Write a domain back to disk in the same five-file layout."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    header = ["id", *domain.attribute_names]
    for fname, table in zip(TABLE_FILES, (domain.table_a, domain.table_b)):
        with (root / fname).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rid, rec in table.items():
                writer.writerow([rid, *(v for _, v in rec.attributes)])
    for split, fname in zip(SPLIT_NAMES, SPLIT_FILES):
        with (root / fname).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["ltable_id", "rtable_id", "label"])
            for (lid, rid), pair in zip(domain.pair_ids[split], domain.splits[split]):
                writer.writerow([lid, rid, "" if pair.label is None else pair.label])


def domain_stats(domain: Domain) -> dict[str, float | int]:
    """Size (labeled pairs across splits), match rate, and attribute count."""
    labeled = [p for p in domain.all_pairs() if p.label is not None]
    size = len(labeled)
    matches = sum(p.label for p in labeled)
    return {
        "size": size,
        "match_rate": matches / size if size else 0.0,
        "num_attributes": len(domain.attribute_names),
    }


def sample_batch(
    domain: Domain,
    split: str,
    batch_size: int,
    rng: np.random.Generator,
    codec: Optional[PairCodec] = None,
) -> tuple[list[RecordPair], Optional[list[SerializedPair]]]:
    """Draw batch_size pairs uniformly without replacement from one split.

    With a codec the encoded sequences are returned alongside the pairs.
    """
    pool = domain.splits[split]
    if batch_size > len(pool):
        raise ValueError(
            f"batch size {batch_size} exceeds {split} split of {domain.name} ({len(pool)} pairs)"
        )
    idx = rng.choice(len(pool), size=batch_size, replace=False)
    chosen = [pool[i] for i in idx]
    encoded = codec.encode_pairs(chosen) if codec is not None else None
    return chosen, encoded


@dataclass(frozen=True)
class DomainRegistry:
    """Several labeled source domains and one target domain."""

    sources: tuple[Domain, ...]
    target: Domain

    def __post_init__(self) -> None:
        if not self.sources:
            raise ValueError("registry needs at least one source domain")
        names = [d.name for d in self.sources] + [self.target.name]
        if len(set(names)) != len(names):
            raise ValueError(f"domain names must be unique, got {names}")

    @property
    def num_sources(self) -> int:
        return len(self.sources)

    def source_schedule(self, num_steps: int) -> Iterator[int]:
        """Round-robin source index sequence: 0, 1, ..., K-1, 0, 1, ..."""
        for step in range(num_steps):
            yield step % len(self.sources)


def build_registry_vocab(registry: DomainRegistry, min_count: int = 1) -> Vocabulary:
    """Vocabulary over every record of every domain, target tables included.

    Target labels never enter here; using the target's raw text mirrors a
    tokenizer fixed before any training.
    """
    corpus = (
        serialize_record(record)
        for domain in (*registry.sources, registry.target)
        for record in domain.all_records()
    )
    return build_vocab(corpus, min_count=min_count)


def load_registry(path: str | Path) -> DomainRegistry:
    """Read a registry JSON file: {"sources": [dir, ...], "target": dir}.

    Relative directories resolve against the JSON file's location.
    """
    path = Path(path)
    listing = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(listing, dict) or set(listing) != {"sources", "target"}:
        raise ValueError(f"{path}: registry must have exactly 'sources' and 'target' keys")
    base = path.parent
    sources = tuple(load_domain(base / p) for p in listing["sources"])
    target = load_domain(base / listing["target"])
    return DomainRegistry(sources=sources, target=target)
