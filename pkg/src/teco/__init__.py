"""Trainable multimodal intent-recognition fusion stack.

Commonsense relation retrieval, dual-perspective textual enhancement,
and gated multimodal alignment fusion over precomputed or synthetic
feature bundles, with a reproducible experiment harness.
"""

from .autodiff import Parameter, Tensor
from .bundle import (DatasetManifest, RelationQuad, SyntheticConfig,
                     UtteranceRecord, generate_synthetic, load_bundle,
                     pad_or_truncate, write_bundle)
from .config import ExperimentConfig, ModelConfig, TrainConfig
from .errors import (ConfigError, DataError, DivergenceError, ShapeError,
                     TecoError)
from .knowledge import (HashSentenceEncoder, KnowledgeStore,
                        RelationPhrasePair, assemble_quad, cosine_similarity,
                        load_store, render_template, retrieve, save_store)
from .metrics import MetricsReport, compute_metrics
from .model import TecoModel
from .rng import Rng
from .train import AdamW, cross_entropy_loss, evaluate, fit

__all__ = [
    "AdamW", "ConfigError", "DataError", "DatasetManifest", "DivergenceError",
    "ExperimentConfig", "HashSentenceEncoder", "KnowledgeStore",
    "MetricsReport", "ModelConfig", "Parameter", "RelationPhrasePair",
    "RelationQuad", "Rng", "ShapeError", "SyntheticConfig", "TecoError",
    "TecoModel", "Tensor", "TrainConfig", "UtteranceRecord", "assemble_quad",
    "compute_metrics", "cosine_similarity", "cross_entropy_loss", "evaluate",
    "fit", "generate_synthetic", "load_bundle", "load_store",
    "pad_or_truncate", "render_template", "retrieve", "save_store",
    "write_bundle",
]
