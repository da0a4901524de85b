import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dame.encoder import EncoderConfig, PairEncoder, batch_tensors, seeded_dropout
from dame.records import PairCodec, build_vocab, serialize_pair

from util import finite_difference_gradients, max_relative_error, toy_pairs

VOCAB = build_vocab([serialize_pair(p) for p in toy_pairs(20, seed=0, vocab_words=14)])


def small_config(**over):
    base = dict(vocab_size=len(VOCAB), d=16, n_layers=2, n_heads=4, ffn_dim=32, max_len=16, dropout_rate=0.1)
    base.update(over)
    return EncoderConfig(**base)


def encode_batch(n=4, max_len=16, seed=0):
    codec = PairCodec(VOCAB, max_len)
    return batch_tensors(codec.encode_pairs(toy_pairs(n, seed=seed, vocab_words=14)))


class TestConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            small_config(d=10, n_heads=4)

    def test_dropout_range(self):
        with pytest.raises(ValueError):
            small_config(dropout_rate=1.0)
        with pytest.raises(ValueError):
            small_config(dropout_rate=-0.1)

    def test_vocab_floor(self):
        with pytest.raises(ValueError):
            small_config(vocab_size=6)

    def test_positive_dims(self):
        with pytest.raises(ValueError):
            small_config(n_layers=0)


class TestInit:
    def test_same_seed_bitwise_equal(self):
        a = PairEncoder(small_config(), seed=42)
        b = PairEncoder(small_config(), seed=42)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_different_seed_differs(self):
        a = PairEncoder(small_config(), seed=1)
        b = PairEncoder(small_config(), seed=2)
        assert any(not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters()))

    def test_uniform_bounds(self):
        enc = PairEncoder(small_config(), seed=7)
        for mod in enc.modules():
            if isinstance(mod, torch.nn.Linear):
                bound = 1.0 / math.sqrt(mod.in_features)
                assert mod.weight.abs().max() <= bound
                assert mod.bias.abs().max() <= bound
            elif isinstance(mod, torch.nn.LayerNorm):
                assert torch.equal(mod.weight, torch.ones_like(mod.weight))
                assert torch.equal(mod.bias, torch.zeros_like(mod.bias))
        bound = 1.0 / math.sqrt(enc.cfg.d)
        assert enc.token_embedding.weight.abs().max() <= bound


class TestForward:
    def test_shapes(self):
        enc = PairEncoder(small_config(), seed=0).eval()
        ids, mask = encode_batch(3)
        hidden = enc(ids, mask)
        assert hidden.shape == (3, 16, 16)
        assert enc.encode(ids, mask).shape == (3, 16)

    def test_encode_is_position_zero(self):
        enc = PairEncoder(small_config(), seed=0).eval()
        ids, mask = encode_batch(2)
        assert torch.equal(enc.encode(ids, mask), enc(ids, mask)[:, 0, :])

    def test_shape_mismatch_rejected(self):
        enc = PairEncoder(small_config(), seed=0).eval()
        ids, mask = encode_batch(2)
        with pytest.raises(ValueError):
            enc(ids, mask[:, :-1])

    def test_too_long_rejected(self):
        enc = PairEncoder(small_config(max_len=8), seed=0).eval()
        ids, mask = encode_batch(2, max_len=16)
        with pytest.raises(ValueError, match="max_len"):
            enc(ids, mask)

    def test_padding_content_invariance(self):
        # garbage written into masked positions must not leak into the output
        enc = PairEncoder(small_config(), seed=0).eval()
        ids, mask = encode_batch(4)
        assert (mask == 0).any(), "test needs padded positions"
        corrupted = ids.clone()
        corrupted[mask == 0] = 9
        delta = (enc.encode(ids, mask) - enc.encode(corrupted, mask)).abs().max()
        assert delta <= 1e-6

    def test_padding_amount_invariance(self):
        # the same real tokens with a longer padded tail encode identically
        enc = PairEncoder(small_config(max_len=32), seed=0).eval()
        ids, mask = encode_batch(4, max_len=12)
        pad = torch.zeros((4, 8), dtype=torch.long)
        longer_ids = torch.cat([ids, pad], dim=1)
        longer_mask = torch.cat([mask, pad.float()], dim=1)
        delta = (enc.encode(ids, mask) - enc.encode(longer_ids, longer_mask)).abs().max()
        assert delta <= 1e-6

    def test_eval_purity(self):
        enc = PairEncoder(small_config(), seed=0).eval()
        ids, mask = encode_batch(2)
        assert torch.equal(enc.encode(ids, mask), enc.encode(ids, mask))


class TestDropout:
    def test_train_mode_requires_generator(self):
        enc = PairEncoder(small_config(), seed=0).train()
        ids, mask = encode_batch(2)
        with pytest.raises(ValueError, match="generator"):
            enc(ids, mask)

    def test_train_mode_deterministic_per_seed(self):
        enc = PairEncoder(small_config(), seed=0).train()
        ids, mask = encode_batch(2)
        outs = []
        for _ in range(2):
            gen = torch.Generator()
            gen.manual_seed(5)
            outs.append(enc.encode(ids, mask, gen))
        assert torch.equal(outs[0], outs[1])

    def test_generator_seed_changes_masks(self):
        enc = PairEncoder(small_config(dropout_rate=0.5), seed=0).train()
        ids, mask = encode_batch(2)
        g1, g2 = torch.Generator(), torch.Generator()
        g1.manual_seed(1)
        g2.manual_seed(2)
        assert not torch.equal(enc.encode(ids, mask, g1), enc.encode(ids, mask, g2))

    def test_zero_rate_is_identity(self):
        x = torch.randn(5, 5)
        assert seeded_dropout(x, 0.0, None) is x

    def test_inverted_scaling(self):
        gen = torch.Generator()
        gen.manual_seed(3)
        x = torch.ones(1000)
        y = seeded_dropout(x, 0.25, gen)
        kept = y[y != 0]
        assert torch.allclose(kept, torch.full_like(kept, 1 / 0.75))
        assert abs(float((y == 0).float().mean()) - 0.25) < 0.05

    @given(st.integers(0, 10_000), st.floats(0.05, 0.9))
    @settings(max_examples=50, deadline=None)
    def test_elements_zero_or_scaled(self, seed, p):
        gen = torch.Generator()
        gen.manual_seed(seed)
        x = torch.randn(64, generator=torch.Generator().manual_seed(seed + 1))
        y = seeded_dropout(x, p, gen)
        scaled = x / (1 - p)
        assert bool(((y == 0) | (y.isclose(scaled))).all())


class TestGradients:
    def test_finite_difference_toy(self):
        # d=8, one layer, tiny vocabulary and length, checked at float64
        cfg = EncoderConfig(vocab_size=len(VOCAB), d=8, n_layers=1, n_heads=2, ffn_dim=16, max_len=12, dropout_rate=0.0)
        enc = PairEncoder(cfg, seed=3).double().eval()
        ids, mask = encode_batch(2, max_len=12)
        target = torch.randn(2, 8, dtype=torch.float64, generator=torch.Generator().manual_seed(0))

        def loss_fn():
            return ((enc.encode(ids, mask) - target) ** 2).mean()

        loss = loss_fn()
        enc.zero_grad()
        loss.backward()
        analytic = [p.grad.detach().clone() for p in enc.parameters()]
        numeric = finite_difference_gradients(loss_fn, list(enc.parameters()))
        assert max_relative_error(analytic, numeric) < 1e-4


class TestBatchTensors:
    def test_shapes_and_dtypes(self):
        ids, mask = encode_batch(3)
        assert ids.dtype == torch.long
        assert mask.dtype == torch.float32
        assert ids.shape == mask.shape == (3, 16)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            batch_tensors([])
