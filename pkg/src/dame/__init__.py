"""Domain-adaptive entity matching with a mixture of expert encoders."""

from .adapt import ALRequest, FinetuneConfig, STRATEGIES, finetune, select_al
from .data import (
    Domain,
    DomainRegistry,
    build_registry_vocab,
    domain_stats,
    load_domain,
    load_registry,
    sample_batch,
    save_domain,
)
from .encoder import EncoderConfig, PairEncoder, batch_tensors
from .evaluation import (
    MetricReport,
    compute_metrics,
    evaluate,
    evaluate_expert_subset,
    export_embeddings,
    global_only_evaluate,
    metrics_from_counts,
    predict_probs,
)
from .model import AttentionParams, DameModel, attend
from .records import (
    PairCodec,
    Record,
    RecordPair,
    SerializedPair,
    Vocabulary,
    build_vocab,
    serialize_pair,
    serialize_record,
    tokenize,
)
from .seeding import SeedPlan
from .training import (
    LossWeights,
    TrainConfig,
    cross_entropy,
    load_checkpoint,
    save_checkpoint,
    total_loss,
    train_da,
)

__version__ = "0.1.0"

__all__ = [
    "ALRequest",
    "AttentionParams",
    "DameModel",
    "Domain",
    "DomainRegistry",
    "EncoderConfig",
    "FinetuneConfig",
    "LossWeights",
    "MetricReport",
    "PairCodec",
    "PairEncoder",
    "Record",
    "RecordPair",
    "STRATEGIES",
    "SeedPlan",
    "SerializedPair",
    "TrainConfig",
    "Vocabulary",
    "attend",
    "batch_tensors",
    "build_registry_vocab",
    "build_vocab",
    "compute_metrics",
    "cross_entropy",
    "domain_stats",
    "evaluate",
    "evaluate_expert_subset",
    "export_embeddings",
    "finetune",
    "global_only_evaluate",
    "load_checkpoint",
    "load_domain",
    "load_registry",
    "metrics_from_counts",
    "predict_probs",
    "sample_batch",
    "save_checkpoint",
    "save_domain",
    "select_al",
    "serialize_pair",
    "serialize_record",
    "tokenize",
    "total_loss",
    "train_da",
]
