"""Synthetic multi-domain matching benchmark.

Builds several source domains and one target domain of title records.  Every
domain draws words from its own vocabulary: a private set of words plus a
sampled slice of a common pool, so domains overlap partially but never
coincide.  A pair matches exactly when the Jaccard similarity of its two
title token sets is at least 1/2; generation steers clear of the boundary,
but the stored label always comes from applying the rule to the actual
titles.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import json

import numpy as np

from .data import Domain, DomainRegistry, save_domain
from .records import Record, RecordPair

MATCH_THRESHOLD = 0.5

SOURCE_NAMES = ("alpha", "beta", "gamma", "epsilon", "zeta", "eta", "theta", "iota")
TARGET_NAME = "delta"


@dataclass(frozen=True)
class SynthConfig:
    num_sources: int = 3
    pairs_per_source: int = 2500
    target_pairs: int = 500
    match_fraction: float = 0.5
    title_len_lo: int = 5
    title_len_hi: int = 5
    shared_pool_size: int = 120
    shared_per_domain: int = 90
    unique_per_domain: int = 30
    max_match_perturb: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.num_sources <= len(SOURCE_NAMES):
            raise ValueError(f"num_sources must be in 1..{len(SOURCE_NAMES)}")
        if self.pairs_per_source < 20 or self.target_pairs < 20:
            raise ValueError("domains need at least 20 pairs to split")
        if not 0.0 < self.match_fraction < 1.0:
            raise ValueError("match_fraction must be strictly between 0 and 1")
        if self.title_len_lo < 3 or self.title_len_hi < self.title_len_lo:
            raise ValueError("title length range must satisfy 3 <= lo <= hi")
        if self.shared_per_domain > self.shared_pool_size:
            raise ValueError("shared_per_domain cannot exceed shared_pool_size")
        # A perturbed match keeps J >= 1/2 only while (L - r) / (L + r) >= 1/2,
        # i.e. while 3r <= L for the shortest title.
        if 3 * self.max_match_perturb > self.title_len_lo:
            raise ValueError("max_match_perturb too large for the shortest title")


def jaccard(a: set[str], b: set[str]) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def _domain_words(name: str, cfg: SynthConfig, rng: np.random.Generator) -> list[str]:
    shared = [f"com{i:03d}" for i in range(cfg.shared_pool_size)]
    picked = rng.choice(cfg.shared_pool_size, size=cfg.shared_per_domain, replace=False)
    own = [f"{name}{i:03d}" for i in range(cfg.unique_per_domain)]
    return [shared[i] for i in sorted(picked)] + own


def _sample_title(words: list[str], length: int, rng: np.random.Generator) -> list[str]:
    idx = rng.choice(len(words), size=length, replace=False)
    return [words[i] for i in idx]


def _perturb_title(title: list[str], words: list[str], r: int, rng: np.random.Generator) -> list[str]:
    """Replace r positions with fresh words not already in the title."""
    if r == 0:
        return list(title)
    current = set(title)
    fresh_pool = [w for w in words if w not in current]
    replacements = [fresh_pool[i] for i in rng.choice(len(fresh_pool), size=r, replace=False)]
    out = list(title)
    for pos, word in zip(rng.choice(len(title), size=r, replace=False), replacements):
        out[pos] = word
    return out


def _fresh_title(
    left: list[str], words: list[str], length: int, overlap: int, rng: np.random.Generator
) -> list[str]:
    """A new title sharing exactly `overlap` words with the left title."""
    keep = [left[i] for i in rng.choice(len(left), size=overlap, replace=False)]
    pool = [w for w in words if w not in set(left)]
    rest = [pool[i] for i in rng.choice(len(pool), size=length - overlap, replace=False)]
    title = keep + rest
    return [title[i] for i in rng.permutation(len(title))]


def _make_domain(name: str, n_pairs: int, cfg: SynthConfig, rng: np.random.Generator) -> Domain:
    words = _domain_words(name, cfg, rng)
    n_matches = round(cfg.match_fraction * n_pairs)
    want_match = np.zeros(n_pairs, dtype=bool)
    want_match[:n_matches] = True
    want_match = want_match[rng.permutation(n_pairs)]

    table_a: dict[str, Record] = {}
    table_b: dict[str, Record] = {}
    pairs: list[RecordPair] = []
    ids: list[tuple[str, str]] = []
    for i in range(n_pairs):
        length = int(rng.integers(cfg.title_len_lo, cfg.title_len_hi + 1))
        left = _sample_title(words, length, rng)
        if want_match[i]:
            r = int(rng.integers(0, cfg.max_match_perturb + 1))
            right = _perturb_title(left, words, r, rng)
        else:
            # One kept word at most: J <= 1 / (2 * 3 - 1) < 1/2.
            overlap = int(rng.integers(0, 2))
            right = _fresh_title(left, words, length, overlap, rng)
        label = int(jaccard(set(left), set(right)) >= MATCH_THRESHOLD)
        rid = str(i)
        table_a[rid] = Record((("title", " ".join(left)),))
        table_b[rid] = Record((("title", " ".join(right)),))
        pairs.append(RecordPair(table_a[rid], table_b[rid], label))
        ids.append((rid, rid))

    order = rng.permutation(n_pairs)
    n_train = round(0.7 * n_pairs)
    n_valid = round(0.15 * n_pairs)
    split_idx = {
        "train": order[:n_train],
        "valid": order[n_train : n_train + n_valid],
        "test": order[n_train + n_valid :],
    }
    splits = {s: [pairs[i] for i in idx] for s, idx in split_idx.items()}
    pair_ids = {s: [ids[i] for i in idx] for s, idx in split_idx.items()}
    return Domain(
        name=name,
        table_a=table_a,
        table_b=table_b,
        splits=splits,
        pair_ids=pair_ids,
        attribute_names=("title",),
    )


def build_transfer_registry(cfg: SynthConfig = SynthConfig()) -> DomainRegistry:
    """In-memory registry: cfg.num_sources source domains plus one target."""
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.num_sources + 1)
    sources = tuple(
        _make_domain(SOURCE_NAMES[i], cfg.pairs_per_source, cfg, np.random.default_rng(seqs[i]))
        for i in range(cfg.num_sources)
    )
    target = _make_domain(TARGET_NAME, cfg.target_pairs, cfg, np.random.default_rng(seqs[-1]))
    return DomainRegistry(sources=sources, target=target)


def write_transfer_registry(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Materialize the benchmark on disk; returns the registry JSON path."""
    registry = build_transfer_registry(cfg)
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for domain in (*registry.sources, registry.target):
        save_domain(domain, root / domain.name)
    listing = {
        "sources": [d.name for d in registry.sources],
        "target": registry.target.name,
    }
    path = root / "domains.json"
    path.write_text(json.dumps(listing, indent=2) + "\n", encoding="utf-8")
    return path
