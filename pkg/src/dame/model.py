"""Mixture model: expert encoders fused by attention guided by a global encoder.

The model holds K expert encoders and one global encoder, all structurally
identical and started from the same initial weights.  For a pair x it computes
expert embeddings E = (e_1, ..., e_K) and a global embedding q, then fuses the
experts with scaled dot-product attention where q supplies the query:

    alpha = q Q        keys = E K        values = E V
    weights = softmax(alpha keys^T / sqrt(d))        fused = weights values

A linear head maps the fused vector to match/non-match logits.  Auxiliary
heads (one per expert, one for the global encoder) and a domain discriminator
over the global embedding exist for training only.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import torch
from torch import Tensor, nn

from .encoder import EncoderConfig, PairEncoder, init_parameters
from .seeding import spawn_integer_seeds

NUM_CLASSES = 2


class AttentionParams(nn.Module):
    """The three learned d x d maps of the fusion attention."""

    def __init__(self, d: int, seed: int) -> None:
        super().__init__()
        self.query_map = nn.Parameter(torch.empty(d, d))
        self.key_map = nn.Parameter(torch.empty(d, d))
        self.value_map = nn.Parameter(torch.empty(d, d))
        init_parameters(self, seed)


def attend(
    expert_embs: Tensor,
    global_emb: Tensor,
    att: AttentionParams,
) -> tuple[Tensor, Tensor]:
    """Fuse expert embeddings (batch, k, d) under a global query (batch, d).

    Returns (fused (batch, d), weights (batch, k)).  With zero experts the
    fused vector degenerates to the value-mapped query and weights are empty.
    """
    d = global_emb.shape[-1]
    if expert_embs.shape[1] == 0:
        weights = expert_embs.new_zeros(expert_embs.shape[:2])
        return global_emb @ att.value_map, weights
    alpha = global_emb @ att.query_map
    keys = expert_embs @ att.key_map
    values = expert_embs @ att.value_map
    scores = torch.einsum("bd,bkd->bk", alpha, keys) / math.sqrt(d)
    weights = torch.softmax(scores, dim=-1)
    fused = torch.einsum("bk,bkd->bd", weights, values)
    return fused, weights


class DameModel(nn.Module):
    """K expert encoders, a global encoder, fusion attention, and heads."""

    def __init__(
        self,
        encoder_cfg: EncoderConfig,
        num_experts: int,
        num_domains: Optional[int] = None,
        seed: int = 0,
    ) -> None:
        super().__init__()
        if num_experts < 1:
            raise ValueError("need at least one expert")
        if num_domains is None:
            num_domains = num_experts
        if num_domains not in (num_experts, num_experts + 1):
            raise ValueError(
                f"num_domains must be {num_experts} or {num_experts + 1}, got {num_domains}"
            )
        self.encoder_cfg = encoder_cfg
        self.num_experts = num_experts
        self.num_domains = num_domains
        enc_seed, head_seed, att_seed, disc_seed = spawn_integer_seeds(seed, 4)
        # Every encoder starts from the same weights, standing in for a shared
        # pretrained initialization; heads likewise.
        self.experts = nn.ModuleList(
            PairEncoder(encoder_cfg, enc_seed) for _ in range(num_experts)
        )
        self.global_encoder = PairEncoder(encoder_cfg, enc_seed)
        self.att = AttentionParams(encoder_cfg.d, att_seed)
        self.expert_heads = nn.ModuleList(
            nn.Linear(encoder_cfg.d, NUM_CLASSES) for _ in range(num_experts)
        )
        self.global_head = nn.Linear(encoder_cfg.d, NUM_CLASSES)
        self.final_head = nn.Linear(encoder_cfg.d, NUM_CLASSES)
        for head in (*self.expert_heads, self.global_head, self.final_head):
            init_parameters(head, head_seed)
        self.discriminator = nn.Sequential(
            nn.Linear(encoder_cfg.d, encoder_cfg.d),
            nn.Tanh(),
            nn.Linear(encoder_cfg.d, num_domains),
        )
        init_parameters(self.discriminator, disc_seed)

    # ------------------------------------------------------------------
    # feature extraction and fusion

    def extract_features(
        self,
        token_ids: Tensor,
        mask: Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> tuple[Tensor, Tensor]:
        """Expert embeddings (batch, k, d) and global embedding (batch, d)."""
        expert_embs = torch.stack(
            [expert.encode(token_ids, mask, generator) for expert in self.experts],
            dim=1,
        )
        global_emb = self.global_encoder.encode(token_ids, mask, generator)
        return expert_embs, global_emb

    def fuse(
        self,
        token_ids: Tensor,
        mask: Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> tuple[Tensor, Tensor]:
        expert_embs, global_emb = self.extract_features(token_ids, mask, generator)
        return attend(expert_embs, global_emb, self.att)

    def forward(
        self,
        token_ids: Tensor,
        mask: Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        """Match logits (batch, 2) from the fully fused representation."""
        fused, _ = self.fuse(token_ids, mask, generator)
        return self.final_head(fused)

    def subset_forward(
        self,
        token_ids: Tensor,
        mask: Tensor,
        expert_indices: Sequence[int],
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        """Match logits using only the listed experts in the fusion.

        The softmax renormalizes over the kept experts, so a strict subset is
        a genuine ablation rather than a zeroing.
        """
        indices = list(expert_indices)
        if not indices:
            raise ValueError("expert subset must be non-empty")
        if len(set(indices)) != len(indices):
            raise ValueError(f"duplicate expert indices: {indices}")
        for j in indices:
            if not 0 <= j < self.num_experts:
                raise ValueError(f"expert index {j} out of range 0..{self.num_experts - 1}")
        expert_embs, global_emb = self.extract_features(token_ids, mask, generator)
        fused, _ = attend(expert_embs[:, indices, :], global_emb, self.att)
        return self.final_head(fused)

    def meta_forward(
        self,
        token_ids: Tensor,
        mask: Tensor,
        exclude_expert: int,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        """Match logits with one expert held out of the fusion.

        Training uses this as a proxy for the unseen-domain case: the held-out
        expert's domain plays the target and the remaining experts must cover
        it.  With a single expert the fusion degenerates to the value-mapped
        global embedding.
        """
        if not 0 <= exclude_expert < self.num_experts:
            raise ValueError(f"expert index {exclude_expert} out of range")
        expert_embs, global_emb = self.extract_features(token_ids, mask, generator)
        kept = [j for j in range(self.num_experts) if j != exclude_expert]
        fused, _ = attend(expert_embs[:, kept, :], global_emb, self.att)
        return self.final_head(fused)

    # ------------------------------------------------------------------
    # auxiliary training heads

    def expert_logits(
        self,
        expert: int,
        token_ids: Tensor,
        mask: Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        if not 0 <= expert < self.num_experts:
            raise ValueError(f"expert index {expert} out of range")
        emb = self.experts[expert].encode(token_ids, mask, generator)
        return self.expert_heads[expert](emb)

    def global_logits(
        self,
        token_ids: Tensor,
        mask: Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        emb = self.global_encoder.encode(token_ids, mask, generator)
        return self.global_head(emb)

    def discriminate(self, global_emb: Tensor) -> Tensor:
        """Domain logits (batch, num_domains) from a global embedding."""
        return self.discriminator(global_emb)

    # ------------------------------------------------------------------
    # parameter groups

    def discriminator_parameters(self) -> list[nn.Parameter]:
        return list(self.discriminator.parameters())

    def task_parameters(self) -> list[nn.Parameter]:
        """Everything the main objective updates: all but the discriminator."""
        skip = {id(p) for p in self.discriminator.parameters()}
        return [p for p in self.parameters() if id(p) not in skip]

    def finetune_parameters(self) -> list[nn.Parameter]:
        """Adaptation updates the global encoder, fusion, and final head only."""
        return [
            *self.global_encoder.parameters(),
            *self.att.parameters(),
            *self.final_head.parameters(),
        ]

    def frozen_during_finetune(self) -> list[tuple[str, nn.Parameter]]:
        """Named parameters that adaptation must leave bitwise untouched."""
        updated = {id(p) for p in self.finetune_parameters()}
        return [(n, p) for n, p in self.named_parameters() if id(p) not in updated]
