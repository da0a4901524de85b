"""Target-domain adaptation: frozen-expert fine-tuning and sample selection.

Fine-tuning adjusts only the global encoder, the fusion attention, and the
final head; every expert encoder and expert head keeps its exact weights.
Sample selection ranks an unlabeled pool and returns the indices worth
labeling under a budget, using either model uncertainty or embedding-space
coverage.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .data import Domain
from .encoder import batch_tensors
from .evaluation import fused_embeddings, predict_probs
from .model import DameModel
from .records import PairCodec, RecordPair
from .seeding import SeedPlan
from .training import cross_entropy_logits

STRATEGIES = (
    "random",
    "least_confidence",
    "entropy",
    "usde",
    "bald",
    "k_centers_greedy",
    "k_means",
    "core_set",
)

_ENTROPY_FLOOR = 1e-12


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 10
    batch_size: int = 16
    # An order smaller than the training default: adaptation should nudge the
    # global path, not retrain it.
    learning_rate: float = 1e-4
    seed: int = 0
    fraction: Optional[float] = None
    indices: Optional[tuple[int, ...]] = None

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.fraction is not None and self.indices is not None:
            raise ValueError("give either fraction or indices, not both")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")


def _select_pairs(pool: Sequence[RecordPair], cfg: FinetuneConfig, rng: np.random.Generator) -> list[RecordPair]:
    if cfg.indices is not None:
        seen = set()
        chosen = []
        for i in cfg.indices:
            if not 0 <= i < len(pool):
                raise ValueError(f"index {i} out of range for pool of {len(pool)}")
            if i in seen:
                raise ValueError(f"duplicate index {i}")
            seen.add(i)
            chosen.append(pool[i])
    elif cfg.fraction is not None:
        n = max(1, round(cfg.fraction * len(pool)))
        idx = sorted(rng.choice(len(pool), size=n, replace=False))
        chosen = [pool[i] for i in idx]
    else:
        chosen = list(pool)
    for i, p in enumerate(chosen):
        if p.label is None:
            raise ValueError(f"selected pair {i} has no label; fine-tuning needs labels")
    return chosen


def finetune(
    model: DameModel,
    target: Domain,
    codec: PairCodec,
    cfg: FinetuneConfig = FinetuneConfig(),
) -> tuple[DameModel, list[dict]]:
    """Adapt a copy of the model to the target's training pairs.

    The input model is never mutated.  Returns the adapted copy and per-step
    loss records.
    """
    seq = SeedPlan(cfg.seed).sequence("finetune")
    order_seq, dropout_seq = seq.spawn(2)
    rng = np.random.default_rng(order_seq)
    dropout_gen = torch.Generator()
    dropout_gen.manual_seed(int(dropout_seq.generate_state(1, dtype=np.uint64)[0] >> 1))

    tuned = copy.deepcopy(model)
    chosen = _select_pairs(target.train, cfg, rng)

    trainable = {id(p) for p in tuned.finetune_parameters()}
    for p in tuned.parameters():
        p.requires_grad_(id(p) in trainable)
    opt = torch.optim.Adam(tuned.finetune_parameters(), lr=cfg.learning_rate)

    tuned.train()
    records: list[dict] = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(chosen))
        for start in range(0, len(chosen), cfg.batch_size):
            batch = [chosen[i] for i in order[start : start + cfg.batch_size]]
            ids, mask = batch_tensors(codec.encode_pairs(batch))
            labels = torch.tensor([p.label for p in batch], dtype=torch.long)
            logits = tuned(ids, mask, dropout_gen)
            loss = cross_entropy_logits(logits, labels)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            step += 1
            records.append({"step": step, "epoch": epoch, "loss": float(loss.detach())})
    tuned.eval()
    for p in tuned.parameters():
        p.requires_grad_(True)
    return tuned, records


# ----------------------------------------------------------------------
# active learning selection

@dataclass(frozen=True)
class ALRequest:
    strategy: str
    budget: int
    mc_passes: int = 10
    seed: int = 0
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected one of {STRATEGIES}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.mc_passes < 2:
            raise ValueError("mc_passes must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _rank_take(scores: np.ndarray, budget: int) -> list[int]:
    """Indices of the `budget` largest scores; ties favor the lower index."""
    order = np.lexsort((np.arange(len(scores)), -scores))
    return sorted(int(i) for i in order[:budget])


def rank_least_confidence(probs: np.ndarray, budget: int) -> list[int]:
    """Pairs whose top class probability is smallest."""
    return _rank_take(-np.asarray(probs).max(axis=1), budget)


def rank_entropy(probs: np.ndarray, budget: int) -> list[int]:
    """Pairs with the highest predictive entropy."""
    return _rank_take(_entropy(np.asarray(probs)), budget)


def rank_usde(pass_probs: np.ndarray, budget: int) -> list[int]:
    """Pairs whose match probability varies most across stochastic passes.

    pass_probs has shape (passes, n, 2); the score is the population variance
    of the match column over the pass axis.
    """
    return _rank_take(np.asarray(pass_probs)[:, :, 1].var(axis=0), budget)


def rank_bald(pass_probs: np.ndarray, budget: int) -> list[int]:
    """Pairs with the largest mutual information between prediction and pass.

    Scored as entropy of the mean prediction minus mean per-pass entropy.
    """
    p = np.asarray(pass_probs)
    return _rank_take(_entropy(p.mean(axis=0)) - _entropy(p).mean(axis=0), budget)


def _mc_prob_passes(
    model: DameModel,
    pool: Sequence[RecordPair],
    codec: PairCodec,
    request: ALRequest,
) -> np.ndarray:
    """Match probabilities under dropout, shape (passes, n, 2)."""
    gen = SeedPlan(request.seed).torch_generator("active_learning")
    was_training = model.training
    model.train()
    out = np.empty((request.mc_passes, len(pool), 2), dtype=np.float64)
    try:
        with torch.no_grad():
            for t in range(request.mc_passes):
                for start in range(0, len(pool), request.batch_size):
                    batch = [pool[i] for i in range(start, min(start + request.batch_size, len(pool)))]
                    ids, mask = batch_tensors(codec.encode_pairs(batch))
                    probs = torch.softmax(model(ids, mask, gen), dim=-1)
                    out[t, start : start + len(batch)] = probs.double().numpy()
    finally:
        if not was_training:
            model.eval()
    return out


def _entropy(probs: np.ndarray) -> np.ndarray:
    p = np.clip(probs, _ENTROPY_FLOOR, 1.0)
    return -(p * np.log(p)).sum(axis=-1)


def greedy_k_centers(emb: np.ndarray, budget: int, first: int) -> list[int]:
    """Farthest-point traversal from a fixed first center.

    Classic greedy 2-approximation of the k-center cover: each round adds the
    point farthest from the chosen set.  Ties resolve to the lowest index.
    """
    n = emb.shape[0]
    chosen = [first]
    min_dist = np.sqrt(((emb - emb[first]) ** 2).sum(-1))
    while len(chosen) < budget:
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, np.sqrt(((emb - emb[nxt]) ** 2).sum(-1)))
    return chosen


def _k_means_representatives(emb: np.ndarray, budget: int, rng: np.random.Generator) -> list[int]:
    n = emb.shape[0]
    centroids = emb[rng.choice(n, size=budget, replace=False)].copy()
    assign = np.full(n, -1)
    for _ in range(50):
        dist = ((emb[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        new_assign = dist.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(budget):
            members = emb[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    chosen: list[int] = []
    taken = np.zeros(n, dtype=bool)
    for c in range(budget):
        dist = np.sqrt(((emb - centroids[c]) ** 2).sum(-1))
        dist[taken] = np.inf
        pick = int(np.argmin(dist))
        chosen.append(pick)
        taken[pick] = True
    return chosen


def select_al(
    model: DameModel,
    pool: Sequence[RecordPair],
    codec: PairCodec,
    request: ALRequest,
) -> list[int]:
    """Choose `budget` pool indices to label; always returned sorted.

    Uncertainty strategies score each pair with the model; coverage strategies
    work on the fused embeddings.  All randomness comes from the request seed.
    """
    n = len(pool)
    if request.budget > n:
        raise ValueError(f"budget {request.budget} exceeds pool size {n}")
    rng = SeedPlan(request.seed).numpy_rng("active_learning")

    if request.strategy == "random":
        return sorted(int(i) for i in rng.choice(n, size=request.budget, replace=False))

    if request.strategy == "least_confidence":
        return rank_least_confidence(predict_probs(model, pool, codec, request.batch_size), request.budget)

    if request.strategy == "entropy":
        return rank_entropy(predict_probs(model, pool, codec, request.batch_size), request.budget)

    if request.strategy == "usde":
        return rank_usde(_mc_prob_passes(model, pool, codec, request), request.budget)

    if request.strategy == "bald":
        return rank_bald(_mc_prob_passes(model, pool, codec, request), request.budget)

    emb = fused_embeddings(model, pool, codec, request.batch_size)
    if request.strategy == "k_centers_greedy":
        first = int(rng.integers(n))
        return sorted(greedy_k_centers(emb, request.budget, first))
    if request.strategy == "k_means":
        return sorted(_k_means_representatives(emb, request.budget, rng))
    # core_set: deterministic farthest-point sweep seeded at the pool's
    # most central pair.
    center_dist = np.sqrt(((emb - emb.mean(axis=0)) ** 2).sum(-1))
    return sorted(greedy_k_centers(emb, request.budget, int(np.argmin(center_dist))))


def write_selection(path: str | Path, request: ALRequest, indices: Sequence[int]) -> None:
    payload = {
        "strategy": request.strategy,
        "budget": request.budget,
        "indices": [int(i) for i in indices],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
