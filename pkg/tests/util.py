"""Shared helpers for the test suite."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import torch

from dame.data import Domain, DomainRegistry
from dame.records import Record, RecordPair


def finite_difference_gradients(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.nn.Parameter],
    eps: float = 1e-5,
) -> list[torch.Tensor]:
    """Central-difference gradient of loss_fn with respect to each parameter.

    loss_fn must be deterministic and evaluated at float64 for the comparison
    against autograd to be meaningful at tight tolerances.
    """
    grads = []
    with torch.no_grad():
        for p in params:
            flat = p.data.view(-1)
            g = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = float(loss_fn())
                flat[i] = orig - eps
                down = float(loss_fn())
                flat[i] = orig
                g[i] = (up - down) / (2.0 * eps)
            grads.append(g.view_as(p))
    return grads


def max_relative_error(
    analytic: Sequence[torch.Tensor],
    numeric: Sequence[torch.Tensor],
    floor: float = 1e-3,
) -> float:
    """Worst elementwise |a - n| / max(|a|, |n|, floor) across all tensors.

    The floor turns the comparison absolute for near-zero gradients, where a
    pure ratio would amplify finite-difference noise.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = torch.maximum(torch.maximum(a.abs(), n.abs()), torch.full_like(a, floor))
        worst = max(worst, float(((a - n).abs() / denom).max()))
    return worst


def toy_pairs(n: int, seed: int = 0, vocab_words: int = 12, title_len: int = 3) -> list[RecordPair]:
    """Tiny labeled record pairs over a small closed vocabulary."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab_words)]
    pairs = []
    for i in range(n):
        left = [words[j] for j in rng.choice(vocab_words, size=title_len, replace=False)]
        if rng.random() < 0.5:
            right = list(left)
            label = 1
        else:
            right = [words[j] for j in rng.choice(vocab_words, size=title_len, replace=False)]
            label = int(set(right) == set(left))
        pairs.append(
            RecordPair(
                Record((("title", " ".join(left)),)),
                Record((("title", " ".join(right)),)),
                label,
            )
        )
    return pairs


def domain_from_pairs(name: str, pairs: list[RecordPair], train_frac: float = 1.0) -> Domain:
    """Wrap pairs into a Domain, reusing each pair's records as table rows."""
    table_a = {str(i): p.left for i, p in enumerate(pairs)}
    table_b = {str(i): p.right for i, p in enumerate(pairs)}
    ids = [(str(i), str(i)) for i in range(len(pairs))]
    n_train = max(1, round(train_frac * len(pairs)))
    n_rest = len(pairs) - n_train
    n_valid = n_rest // 2
    splits = {
        "train": pairs[:n_train],
        "valid": pairs[n_train : n_train + n_valid],
        "test": pairs[n_train + n_valid :],
    }
    pair_ids = {
        "train": ids[:n_train],
        "valid": ids[n_train : n_train + n_valid],
        "test": ids[n_train + n_valid :],
    }
    return Domain(
        name=name,
        table_a=table_a,
        table_b=table_b,
        splits=splits,
        pair_ids=pair_ids,
        attribute_names=("title",),
    )


def tiny_registry(num_sources: int = 2, pairs_each: int = 8, seed: int = 0) -> DomainRegistry:
    names = ["src_a", "src_b", "src_c", "src_d"]
    sources = tuple(
        domain_from_pairs(names[i], toy_pairs(pairs_each, seed=seed + i))
        for i in range(num_sources)
    )
    target = domain_from_pairs("tgt", toy_pairs(pairs_each, seed=seed + 99))
    return DomainRegistry(sources=sources, target=target)
