"""Command-line entry points.

One optional JSON config file covers every phase; sections and their defaults
are printed in --help.  Flags override the config, the config overrides the
defaults.  Every command takes --out DIR and writes its outputs plus a
resolved_config.json snapshot there, so a run can always be reproduced from
its own output directory.

Set DAME_NUM_THREADS to cap the number of threads used for scoring.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path
from typing import Optional

import torch

from .adapt import ALRequest, FinetuneConfig, STRATEGIES, finetune, select_al, write_selection
from .data import DomainRegistry, build_registry_vocab, load_registry
from .encoder import EncoderConfig
from .evaluation import evaluate, export_embeddings
from .model import DameModel
from .records import PairCodec, Vocabulary
from .seeding import SeedPlan
from .training import LossWeights, TrainConfig, load_checkpoint, save_checkpoint, train_da

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "max_len": 128,
    "encoder": {
        "d": 64,
        "n_layers": 2,
        "n_heads": 4,
        "ffn_dim": 128,
        "dropout_rate": 0.1,
    },
    "training": {
        "epochs": 3,
        "batch_size": 16,
        "learning_rate": 1e-3,
        "optimizer": "adam",
        "use_target_in_adversarial": False,
        "alternation_ratio": 1,
    },
    "loss_weights": {
        "expert_weight": 1.0,
        "global_weight": 1.0,
        "meta_weight": 1.0,
        "adversarial_weight": 0.1,
    },
    "finetune": {
        "epochs": 10,
        "batch_size": 16,
        "learning_rate": 1e-4,
        "fraction": None,
        "indices": None,
    },
    "active_learning": {
        "strategy": "entropy",
        "budget": 10,
        "mc_passes": 10,
        "batch_size": 64,
    },
}


def _merge_config(path: Optional[str]) -> dict:
    """Defaults overlaid with the user config; unknown keys are an error."""
    resolved = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is None:
        return resolved
    user = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(user, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    for key, value in user.items():
        if key not in resolved:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(resolved[key], dict):
            if not isinstance(value, dict):
                raise ValueError(f"config key {key!r} must be an object")
            for sub, subval in value.items():
                if sub not in resolved[key]:
                    raise ValueError(f"unknown config key '{key}.{sub}'")
                resolved[key][sub] = subval
        else:
            resolved[key] = value
    return resolved


def _apply_thread_cap() -> None:
    cap = os.environ.get("DAME_NUM_THREADS")
    if cap:
        torch.set_num_threads(max(1, int(cap)))


def _build_parser() -> argparse.ArgumentParser:
    epilog = (
        "config file sections and defaults:\n"
        + json.dumps(DEFAULT_CONFIG, indent=2)
        + "\n\nThe encoder section applies when a model is created (train-da); other\n"
        "commands rebuild the model from --checkpoint.  DAME_NUM_THREADS caps\n"
        "scoring threads."
    )
    parser = argparse.ArgumentParser(
        prog="dame",
        description="Multi-source domain-adaptive entity matching.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override it (default: built-ins)")
    common.add_argument("--registry", required=True, help="registry JSON listing source and target domain directories")
    common.add_argument("--out", required=True, help="output directory for this run")
    common.add_argument("--seed", type=int, help="master seed; derives all per-component streams (default: 0)")

    ckpt = argparse.ArgumentParser(add_help=False)
    ckpt.add_argument("--checkpoint", required=True, help="checkpoint directory written by train-da or finetune")

    p = sub.add_parser("train-da", parents=[common], help="train the mixture on all source domains")
    p.add_argument(
        "--use-target-adversarial",
        action="store_true",
        help="include unlabeled target batches as an extra discriminator class (default: off)",
    )

    p = sub.add_parser("finetune", parents=[common, ckpt], help="adapt a trained model to the target domain")
    p.add_argument("--fraction", type=float, help="labeled share of the target training split, in (0, 1] (default: all)")
    p.add_argument("--indices", help="comma-separated target training indices to use instead of a fraction")

    sub.add_parser("evaluate", parents=[common, ckpt], aliases=["predict"], help="score the target test split")

    p = sub.add_parser("select-al", parents=[common, ckpt], help="pick target training pairs to label under a budget")
    p.add_argument("--strategy", choices=STRATEGIES, help="selection strategy (default: entropy)")
    p.add_argument("--budget", type=int, help="number of pairs to select (default: 10)")

    sub.add_parser(
        "export-embeddings",
        parents=[common, ckpt],
        help="write fused embeddings of the target test split to CSV",
    )
    return parser


def _prepare(args) -> tuple[dict, DomainRegistry, Path]:
    cfg = _merge_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    registry = load_registry(args.registry)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, registry, out


def _snapshot(cfg: dict, out: Path, command: str) -> None:
    payload = {"command": command, **cfg}
    (out / "resolved_config.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _load_model_and_codec(checkpoint: str) -> tuple[DameModel, PairCodec, dict]:
    model, manifest = load_checkpoint(checkpoint)
    vocab_path = Path(checkpoint) / "vocab.txt"
    if not vocab_path.is_file():
        raise FileNotFoundError(f"{checkpoint}: missing vocab.txt")
    vocab = Vocabulary.load(vocab_path)
    if len(vocab) != model.encoder_cfg.vocab_size:
        raise ValueError(
            f"vocab.txt has {len(vocab)} tokens but the model expects {model.encoder_cfg.vocab_size}"
        )
    codec = PairCodec(vocab, model.encoder_cfg.max_len)
    return model, codec, manifest


def _cmd_train_da(args) -> int:
    cfg, registry, out = _prepare(args)
    if args.use_target_adversarial:
        cfg["training"]["use_target_in_adversarial"] = True
    _snapshot(cfg, out, "train-da")
    vocab = build_registry_vocab(registry)
    codec = PairCodec(vocab, cfg["max_len"])
    enc_cfg = EncoderConfig(vocab_size=len(vocab), max_len=cfg["max_len"], **cfg["encoder"])
    train_cfg = TrainConfig(seed=cfg["seed"], **cfg["training"])
    k = registry.num_sources
    model = DameModel(
        enc_cfg,
        num_experts=k,
        num_domains=k + 1 if train_cfg.use_target_in_adversarial else k,
        seed=SeedPlan(cfg["seed"]).integer_seed("init"),
    )
    weights = LossWeights(**cfg["loss_weights"])
    records = train_da(model, registry, codec, train_cfg, weights, log_path=out / "train_log.jsonl")
    ckpt_dir = out / "checkpoint"
    save_checkpoint(model, ckpt_dir, step=len(records), extra_config=cfg)
    vocab.save(ckpt_dir / "vocab.txt")
    print(f"trained {len(records)} steps on {k} sources; checkpoint at {ckpt_dir}")
    return 0


def _parse_indices(raw: Optional[str]) -> Optional[tuple[int, ...]]:
    if raw is None:
        return None
    try:
        return tuple(int(tok) for tok in raw.split(",") if tok.strip() != "")
    except ValueError:
        raise ValueError(f"--indices must be comma-separated integers, got {raw!r}") from None


def _cmd_finetune(args) -> int:
    cfg, registry, out = _prepare(args)
    indices = _parse_indices(args.indices)
    if args.fraction is not None:
        cfg["finetune"]["fraction"] = args.fraction
    if indices is not None:
        cfg["finetune"]["indices"] = list(indices)
    _snapshot(cfg, out, "finetune")
    model, codec, _ = _load_model_and_codec(args.checkpoint)
    section = dict(cfg["finetune"])
    if section["indices"] is not None:
        section["indices"] = tuple(section["indices"])
    ft_cfg = FinetuneConfig(seed=cfg["seed"], **section)
    tuned, records = finetune(model, registry.target, codec, ft_cfg)
    with (out / "finetune_log.jsonl").open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    ckpt_dir = out / "checkpoint"
    save_checkpoint(tuned, ckpt_dir, step=len(records), extra_config=cfg)
    shutil.copy(Path(args.checkpoint) / "vocab.txt", ckpt_dir / "vocab.txt")
    print(f"fine-tuned for {len(records)} steps on {registry.target.name}; checkpoint at {ckpt_dir}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg, registry, out = _prepare(args)
    _snapshot(cfg, out, "evaluate")
    model, codec, _ = _load_model_and_codec(args.checkpoint)
    report = evaluate(model, registry.target.test, codec)
    (out / "metrics.json").write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
    print(
        f"{registry.target.name} test: precision={report.precision:.4f} "
        f"recall={report.recall:.4f} f1={report.f1:.4f} accuracy={report.accuracy:.4f}"
    )
    return 0


def _cmd_select_al(args) -> int:
    cfg, registry, out = _prepare(args)
    if args.strategy is not None:
        cfg["active_learning"]["strategy"] = args.strategy
    if args.budget is not None:
        cfg["active_learning"]["budget"] = args.budget
    _snapshot(cfg, out, "select-al")
    model, codec, _ = _load_model_and_codec(args.checkpoint)
    request = ALRequest(seed=cfg["seed"], **cfg["active_learning"])
    indices = select_al(model, registry.target.train, codec, request)
    write_selection(out / "selection.json", request, indices)
    print(f"selected {len(indices)} of {len(registry.target.train)} pairs with {request.strategy}")
    return 0


def _cmd_export_embeddings(args) -> int:
    cfg, registry, out = _prepare(args)
    _snapshot(cfg, out, "export-embeddings")
    model, codec, _ = _load_model_and_codec(args.checkpoint)
    path = out / "embeddings.csv"
    export_embeddings(model, registry.target.test, codec, path)
    print(f"wrote {len(registry.target.test)} embeddings to {path}")
    return 0


_COMMANDS = {
    "train-da": _cmd_train_da,
    "finetune": _cmd_finetune,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_evaluate,
    "select-al": _cmd_select_al,
    "export-embeddings": _cmd_export_embeddings,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    _apply_thread_cap()
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
