"""Transformer encoder over serialized record pairs.

A small pre-norm transformer: token + position embeddings, stacked
self-attention blocks with GELU feed-forward layers, and a final layer norm.
The pair embedding is the hidden state at position 0 (the [CLS] slot) of the
last layer.

Dropout never uses torch's global RNG.  Callers in train mode must hand in an
explicit torch.Generator; eval mode is deterministic and generator-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import Tensor, nn

from .records import SerializedPair
from .seeding import spawn_integer_seeds


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 128
    max_len: int = 128
    dropout_rate: float = 0.1

    def __post_init__(self) -> None:
        if self.vocab_size < 7:
            raise ValueError("vocab_size must cover the six reserved ids plus content")
        for name in ("d", "n_layers", "n_heads", "ffn_dim", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.d % self.n_heads != 0:
            raise ValueError(f"d={self.d} must be divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


def seeded_dropout(x: Tensor, p: float, generator: Optional[torch.Generator]) -> Tensor:
    """Inverted dropout driven by an explicit generator."""
    if p == 0.0:
        return x
    if generator is None:
        raise ValueError("dropout in train mode requires an explicit generator")
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype, device=x.device) >= p
    return x * keep.to(x.dtype) / (1.0 - p)


class SelfAttention(nn.Module):
    """Multi-head self-attention with key-side padding masks."""

    def __init__(self, d: int, n_heads: int) -> None:
        super().__init__()
        self.d = d
        self.n_heads = n_heads
        self.head_dim = d // n_heads
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(d, d)
        self.v_proj = nn.Linear(d, d)
        self.out_proj = nn.Linear(d, d)

    def forward(self, x: Tensor, mask: Tensor) -> Tensor:
        b, length, _ = x.shape
        shape = (b, length, self.n_heads, self.head_dim)
        q = self.q_proj(x).view(shape).transpose(1, 2)
        k = self.k_proj(x).view(shape).transpose(1, 2)
        v = self.v_proj(x).view(shape).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        # mask: (b, length), 1 on real tokens.  Padded keys get -inf so they
        # receive zero attention from every query.
        key_mask = mask[:, None, None, :] == 0
        scores = scores.masked_fill(key_mask, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, length, self.d)
        return self.out_proj(out)


class EncoderBlock(nn.Module):
    """Pre-norm transformer block: LN -> attention -> LN -> feed-forward."""

    def __init__(self, cfg: EncoderConfig) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d)
        self.attn = SelfAttention(cfg.d, cfg.n_heads)
        self.norm2 = nn.LayerNorm(cfg.d)
        self.ffn_in = nn.Linear(cfg.d, cfg.ffn_dim)
        self.ffn_out = nn.Linear(cfg.ffn_dim, cfg.d)
        self.dropout_rate = cfg.dropout_rate

    def forward(self, x: Tensor, mask: Tensor, generator: Optional[torch.Generator]) -> Tensor:
        h = self.attn(self.norm1(x), mask)
        if self.training:
            h = seeded_dropout(h, self.dropout_rate, generator)
        x = x + h
        h = self.ffn_out(nn.functional.gelu(self.ffn_in(self.norm2(x))))
        if self.training:
            h = seeded_dropout(h, self.dropout_rate, generator)
        return x + h


class PairEncoder(nn.Module):
    """Encodes a tokenized pair into one d-dimensional vector."""

    def __init__(self, cfg: EncoderConfig, seed: int) -> None:
        super().__init__()
        self.cfg = cfg
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.d)
        self.position_embedding = nn.Embedding(cfg.max_len, cfg.d)
        self.blocks = nn.ModuleList(EncoderBlock(cfg) for _ in range(cfg.n_layers))
        self.final_norm = nn.LayerNorm(cfg.d)
        init_parameters(self, seed)

    def forward(
        self,
        token_ids: Tensor,
        mask: Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        """Hidden states (batch, length, d) for already-padded id tensors."""
        if token_ids.shape != mask.shape:
            raise ValueError(f"ids {tuple(token_ids.shape)} and mask {tuple(mask.shape)} differ")
        if token_ids.shape[1] > self.cfg.max_len:
            raise ValueError(f"sequence length {token_ids.shape[1]} exceeds max_len {self.cfg.max_len}")
        positions = torch.arange(token_ids.shape[1], device=token_ids.device)
        x = self.token_embedding(token_ids) + self.position_embedding(positions)[None, :, :]
        mask = mask.to(x.dtype)
        if self.training:
            x = seeded_dropout(x, self.cfg.dropout_rate, generator)
        for block in self.blocks:
            x = block(x, mask, generator)
        return self.final_norm(x)

    def encode(
        self,
        token_ids: Tensor,
        mask: Tensor,
        generator: Optional[torch.Generator] = None,
    ) -> Tensor:
        """Pair embedding (batch, d): the position-0 state of the last layer."""
        return self.forward(token_ids, mask, generator)[:, 0, :]


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministically initialize every parameter of the module.

    Weights and biases draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); embedding
    rows use their own width as fan-in; layer norms start at identity.  The
    fill order is the module's parameter registration order, which is fixed by
    construction, so equal seeds give bitwise-equal parameters.
    """
    gen = torch.Generator()
    gen.manual_seed(seed)
    with torch.no_grad():
        for mod in module.modules():
            if isinstance(mod, nn.Linear):
                bound = 1.0 / math.sqrt(mod.in_features)
                mod.weight.uniform_(-bound, bound, generator=gen)
                if mod.bias is not None:
                    mod.bias.uniform_(-bound, bound, generator=gen)
            elif isinstance(mod, nn.Embedding):
                bound = 1.0 / math.sqrt(mod.embedding_dim)
                mod.weight.uniform_(-bound, bound, generator=gen)
            elif isinstance(mod, nn.LayerNorm):
                mod.weight.fill_(1.0)
                mod.bias.fill_(0.0)
        # Bare parameters registered outside the layers above (e.g. plain
        # d x d matrices) also draw from the same stream, in name order.
        handled = {
            id(p)
            for mod in module.modules()
            if isinstance(mod, (nn.Linear, nn.Embedding, nn.LayerNorm))
            for p in mod.parameters(recurse=False)
        }
        for _, param in module.named_parameters():
            if id(param) not in handled:
                bound = 1.0 / math.sqrt(param.shape[-1])
                param.uniform_(-bound, bound, generator=gen)


def batch_tensors(encoded: Sequence[SerializedPair]) -> tuple[Tensor, Tensor]:
    """Stack encoded pairs into (ids, mask) tensors of shape (batch, length)."""
    if not encoded:
        raise ValueError("cannot batch zero pairs")
    ids = torch.tensor([e.token_ids for e in encoded], dtype=torch.long)
    mask = torch.tensor([e.attention_mask for e in encoded], dtype=torch.float32)
    return ids, mask


__all__ = [
    "EncoderConfig",
    "PairEncoder",
    "SelfAttention",
    "EncoderBlock",
    "seeded_dropout",
    "init_parameters",
    "batch_tensors",
    "spawn_integer_seeds",
]
