"""Compare sample-selection strategies across label budgets.

Trains one zero-shot model on synthetic sources, then for each strategy and
budget: selects pairs from the target training split, fine-tunes on exactly
those pairs (experts frozen), and scores the target test split.
"""

import argparse
import time

from dame.adapt import ALRequest, FinetuneConfig, STRATEGIES, finetune, select_al
from dame.data import build_registry_vocab
from dame.encoder import EncoderConfig
from dame.evaluation import evaluate
from dame.model import DameModel
from dame.records import PairCodec
from dame.seeding import SeedPlan
from dame.synth import SynthConfig, build_transfer_registry
from dame.training import LossWeights, TrainConfig, train_da


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sources", type=int, default=3)
    parser.add_argument("--pairs-per-source", type=int, default=2500)
    parser.add_argument("--target-pairs", type=int, default=500)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--strategies",
        default="random,entropy,usde,core_set",
        help=f"comma-separated subset of {', '.join(STRATEGIES)}",
    )
    parser.add_argument(
        "--budget-fractions",
        default="0.1,0.25",
        help="comma-separated shares of the target training split to label",
    )
    args = parser.parse_args()

    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    fractions = [float(f) for f in args.budget_fractions.split(",")]

    registry = build_transfer_registry(
        SynthConfig(
            num_sources=args.sources,
            pairs_per_source=args.pairs_per_source,
            target_pairs=args.target_pairs,
            seed=args.seed,
        )
    )
    vocab = build_registry_vocab(registry)
    codec = PairCodec(vocab, 24)
    model = DameModel(
        EncoderConfig(vocab_size=len(vocab), d=64, n_layers=2, n_heads=4, ffn_dim=128, max_len=24),
        num_experts=registry.num_sources,
        seed=SeedPlan(args.seed).integer_seed("init"),
    )

    start = time.monotonic()
    train_da(model, registry, codec, TrainConfig(epochs=args.epochs, seed=args.seed), LossWeights())
    target = registry.target
    zsl = evaluate(model, target.test, codec).f1
    pool = target.train
    print(f"trained in {time.monotonic() - start:.1f}s; zero-shot f1={zsl:.4f}; pool={len(pool)}")
    print()

    header = f"{'strategy':<18}" + "".join(f"  f={frac:<6}" for frac in fractions)
    print(header)
    print("-" * len(header))
    for strategy in strategies:
        cells = []
        for frac in fractions:
            budget = max(1, round(frac * len(pool)))
            request = ALRequest(strategy, budget=budget, seed=args.seed)
            indices = select_al(model, pool, codec, request)
            tuned, _ = finetune(
                model, target, codec, FinetuneConfig(seed=args.seed, indices=tuple(indices))
            )
            cells.append(evaluate(tuned, target.test, codec).f1)
        print(f"{strategy:<18}" + "".join(f"  {f1:.4f} " for f1 in cells))


if __name__ == "__main__":
    main()
