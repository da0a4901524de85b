"""Multi-source training of the mixture model and checkpoint serialization.

One optimization step works on a batch from a single source domain j, chosen
round-robin.  Four loss terms act on the batch:

    l1  cross-entropy of expert j's own head on its embedding
    l2  cross-entropy of the global head on the global embedding
    l3  cross-entropy of the fused prediction with expert j held out,
        rehearsing transfer to a domain with no expert of its own
    l4  negated discriminator loss, pushing the global embedding to be
        domain-invariant

The discriminator is trained in opposition: each step first minimizes its
domain-classification loss with every other parameter frozen, then the main
objective l = w1 l1 + w2 l2 + w3 l3 + w4 l4 updates everything except the
discriminator.  Optionally a same-size unlabeled batch from the target domain
joins the discriminator's batches as an extra domain class.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import Tensor

from .data import DomainRegistry, sample_batch
from .encoder import EncoderConfig, batch_tensors
from .model import DameModel, attend
from .records import PairCodec
from .seeding import SeedPlan

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LossWeights:
    expert_weight: float = 1.0
    global_weight: float = 1.0
    meta_weight: float = 1.0
    adversarial_weight: float = 0.1

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    use_target_in_adversarial: bool = False
    alternation_ratio: int = 1

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.alternation_ratio < 1:
            raise ValueError("alternation_ratio must be >= 1")


def cross_entropy(probs: Tensor, labels: Tensor) -> Tensor:
    """Mean negative log-probability of the true class.

    Probabilities are floored at 1e-12 so a confidently wrong prediction
    yields a large finite loss instead of an infinity.
    """
    if probs.ndim != 2:
        raise ValueError(f"probs must be (batch, classes), got shape {tuple(probs.shape)}")
    picked = probs.gather(1, labels.view(-1, 1)).squeeze(1)
    return -picked.clamp_min(PROB_FLOOR).log().mean()


def cross_entropy_logits(logits: Tensor, labels: Tensor) -> Tensor:
    return cross_entropy(torch.softmax(logits, dim=-1), labels)


def total_loss(weights: LossWeights, l1, l2, l3, l4):
    """Weighted sum of the four components; l4 arrives already negated."""
    return (
        weights.expert_weight * l1
        + weights.global_weight * l2
        + weights.meta_weight * l3
        + weights.adversarial_weight * l4
    )


def build_optimizer(params, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.learning_rate)
    return torch.optim.SGD(params, lr=cfg.learning_rate)


def _labels_tensor(pairs) -> Tensor:
    labels = []
    for p in pairs:
        if p.label is None:
            raise ValueError("training batch contains an unlabeled pair")
        labels.append(p.label)
    return torch.tensor(labels, dtype=torch.long)


def train_da(
    model: DameModel,
    registry: DomainRegistry,
    codec: PairCodec,
    cfg: TrainConfig = TrainConfig(),
    weights: LossWeights = LossWeights(),
    log_path: Optional[str | Path] = None,
) -> list[dict]:
    """Train the mixture on all source domains; returns per-step log records.

    An epoch makes enough round-robin steps for the pooled source training
    data to be seen once in expectation.  Batches are drawn uniformly without
    replacement within each step.
    """
    k = registry.num_sources
    if model.num_experts != k:
        raise ValueError(f"model has {model.num_experts} experts but registry has {k} sources")
    expected_domains = k + 1 if cfg.use_target_in_adversarial else k
    if model.num_domains != expected_domains:
        raise ValueError(
            f"model discriminates {model.num_domains} domains but this run needs "
            f"{expected_domains} (use_target_in_adversarial={cfg.use_target_in_adversarial})"
        )

    plan = SeedPlan(cfg.seed)
    source_rng = plan.numpy_rng("sampling")
    target_rng = plan.numpy_rng("target")
    dropout_gen = plan.torch_generator("dropout")

    total_train = sum(len(d.train) for d in registry.sources)
    steps_per_epoch = k * math.ceil(total_train / (k * cfg.batch_size))
    num_steps = cfg.epochs * steps_per_epoch

    task_opt = build_optimizer(model.task_parameters(), cfg)
    disc_opt = build_optimizer(model.discriminator_parameters(), cfg)

    model.train()
    records: list[dict] = []
    for step, j in enumerate(registry.source_schedule(num_steps), start=1):
        source = registry.sources[j]
        pairs, encoded = sample_batch(source, "train", cfg.batch_size, source_rng, codec)
        ids, mask = batch_tensors(encoded)
        labels = _labels_tensor(pairs)

        expert_embs, global_emb = model.extract_features(ids, mask, dropout_gen)
        domain_embs = global_emb
        domain_labels = torch.full((ids.shape[0],), j, dtype=torch.long)
        if cfg.use_target_in_adversarial:
            _, t_encoded = sample_batch(
                registry.target, "train", cfg.batch_size, target_rng, codec
            )
            t_ids, t_mask = batch_tensors(t_encoded)
            t_global = model.global_encoder.encode(t_ids, t_mask, dropout_gen)
            domain_embs = torch.cat([global_emb, t_global], dim=0)
            domain_labels = torch.cat(
                [domain_labels, torch.full((t_ids.shape[0],), k, dtype=torch.long)]
            )

        # Discriminator turn: its loss on detached embeddings touches no
        # encoder parameter.
        for _ in range(cfg.alternation_ratio):
            disc_opt.zero_grad(set_to_none=True)
            d_loss = cross_entropy_logits(
                model.discriminate(domain_embs.detach()), domain_labels
            )
            d_loss.backward()
            disc_opt.step()

        # Main turn against the freshly updated discriminator.
        l1 = cross_entropy_logits(model.expert_heads[j](expert_embs[:, j, :]), labels)
        l2 = cross_entropy_logits(model.global_head(global_emb), labels)
        kept = [i for i in range(k) if i != j]
        fused, _ = attend(expert_embs[:, kept, :], global_emb, model.att)
        l3 = cross_entropy_logits(model.final_head(fused), labels)
        l_d = cross_entropy_logits(model.discriminate(domain_embs), domain_labels)
        l4 = -l_d
        loss = total_loss(weights, l1, l2, l3, l4)

        task_opt.zero_grad(set_to_none=True)
        disc_opt.zero_grad(set_to_none=True)
        loss.backward()
        task_opt.step()

        records.append(
            {
                "step": step,
                "domain": source.name,
                "l1": float(l1.detach()),
                "l2": float(l2.detach()),
                "l3": float(l3.detach()),
                "l_d": float(l_d.detach()),
                "total": float(loss.detach()),
            }
        )

    model.eval()
    if log_path is not None:
        write_train_log(records, log_path)
    return records


def write_train_log(records: list[dict], path: str | Path) -> None:
    """One JSON object per line, in step order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


# ----------------------------------------------------------------------
# checkpoints: manifest.json + params.bin + config.json in one directory

def save_checkpoint(
    model: DameModel,
    directory: str | Path,
    step: int = 0,
    extra_config: Optional[dict] = None,
) -> None:
    """Write the model to a directory as a manifest, raw blob, and config.

    params.bin holds every tensor's raw little-endian float32 bytes in
    state-dict order; manifest.json records name, shape, and offsets so the
    blob can be validated before anything is loaded.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name, tensor in model.state_dict().items():
        if tensor.dtype != torch.float32:
            raise ValueError(f"tensor {name!r} has dtype {tensor.dtype}, checkpoint stores float32")
        raw = tensor.detach().cpu().numpy().astype("<f4", copy=False).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(tensor.shape),
                "dtype": "float32",
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    (root / "params.bin").write_bytes(b"".join(blobs))
    manifest = {"format_version": CHECKPOINT_VERSION, "step": step, "tensors": entries}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    config = {
        "encoder": asdict(model.encoder_cfg),
        "num_experts": model.num_experts,
        "num_domains": model.num_domains,
    }
    if extra_config:
        config["run"] = extra_config
    (root / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")


def load_checkpoint(directory: str | Path) -> tuple[DameModel, dict]:
    """Rebuild a model from a checkpoint directory; returns (model, manifest)."""
    root = Path(directory)
    for fname in ("manifest.json", "params.bin", "config.json"):
        if not (root / fname).is_file():
            raise FileNotFoundError(f"{root}: missing checkpoint file {fname}")
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unknown checkpoint format version {version!r}, expected {CHECKPOINT_VERSION}")
    config = json.loads((root / "config.json").read_text(encoding="utf-8"))
    model = DameModel(
        EncoderConfig(**config["encoder"]),
        num_experts=config["num_experts"],
        num_domains=config["num_domains"],
        seed=0,
    )
    blob = (root / "params.bin").read_bytes()
    expected = sum(e["nbytes"] for e in manifest["tensors"])
    if len(blob) != expected:
        raise ValueError(f"params.bin truncated or padded: expected {expected} bytes, found {len(blob)}")
    state = model.state_dict()
    manifest_names = [e["name"] for e in manifest["tensors"]]
    missing = [n for n in state if n not in set(manifest_names)]
    extra = [n for n in manifest_names if n not in state]
    if missing or extra:
        raise ValueError(f"checkpoint tensors do not match model: missing {missing}, unexpected {extra}")
    new_state = {}
    for entry in manifest["tensors"]:
        name = entry["name"]
        want = tuple(state[name].shape)
        have = tuple(entry["shape"])
        if want != have:
            raise ValueError(f"tensor {name!r}: checkpoint shape {have} does not match model shape {want}")
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f4").reshape(have).copy()
        new_state[name] = torch.from_numpy(arr)
    model.load_state_dict(new_state, strict=True)
    model.eval()
    return model, manifest
