import numpy as np
import pytest
import torch

from dame.seeding import STREAM_NAMES, SeedPlan, spawn_integer_seeds


def test_stream_roster_is_stable():
    assert STREAM_NAMES == ("init", "sampling", "dropout", "target", "finetune", "active_learning")


def test_unknown_stream_rejected():
    with pytest.raises(KeyError, match="decoding"):
        SeedPlan(0).sequence("decoding")


def test_same_plan_same_draws():
    a = SeedPlan(42).numpy_rng("sampling").integers(0, 1000, size=10)
    b = SeedPlan(42).numpy_rng("sampling").integers(0, 1000, size=10)
    assert np.array_equal(a, b)


def test_streams_are_independent():
    draws = {
        name: tuple(SeedPlan(42).numpy_rng(name).integers(0, 2**31, size=4))
        for name in STREAM_NAMES
    }
    assert len(set(draws.values())) == len(STREAM_NAMES)


def test_master_seed_changes_every_stream():
    for name in STREAM_NAMES:
        a = SeedPlan(0).integer_seed(name)
        b = SeedPlan(1).integer_seed(name)
        assert a != b


def test_integer_seed_fits_torch():
    for seed in (0, 1, 2**32, 2**62):
        value = SeedPlan(seed).integer_seed("init")
        assert 0 <= value < 2**63
        torch.Generator().manual_seed(value)


def test_torch_generator_reproducible():
    a = torch.rand(5, generator=SeedPlan(3).torch_generator("dropout"))
    b = torch.rand(5, generator=SeedPlan(3).torch_generator("dropout"))
    assert torch.equal(a, b)


def test_spawn_integer_seeds_distinct_and_stable():
    seeds = spawn_integer_seeds(7, 4)
    assert seeds == spawn_integer_seeds(7, 4)
    assert len(set(seeds)) == 4
    assert all(0 <= s < 2**63 for s in seeds)


def test_spawned_seeds_differ_between_parents():
    assert spawn_integer_seeds(0, 3) != spawn_integer_seeds(1, 3)
