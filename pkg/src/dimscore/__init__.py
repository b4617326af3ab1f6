"""Multi-dimensional essay scoring on a from-scratch autodiff stack.

A small transformer encoder reads an essay (and optionally its prompt),
per-dimension classification heads and a shared regression head score it
against a rubric, and quadratic-weighted kappa plus macro metrics report
agreement. Everything is deterministic given seeds, and gradients are
verifiable against central differences.
"""

from .corpus import (Corpus, EssayRecord, RubricSpec, build_vocab,
                     ellipse_style, ielts_style, load_corpus, make_batches,
                     resolve_rubric, save_corpus, split, Vocab)
from .encoder import EncoderConfig, combine_repr, encode, encode_batch, tokenize
from .errors import (CheckpointError, ConfigError, CorruptionError, DataError,
                     DimscoreError, DomainError, NumericAbort, SchemaError,
                     ShapeError, UnsupportedVersionError, UsageError)
from .heads import (DimensionScores, LossBreakdown, LossWeights, combined_loss,
                    cross_entropy, cross_entropy_batch, mse, nt_xent,
                    predict_scores, snap_to_band)
from .metrics import (DimensionMetrics, MetricsReport, confusion, evaluate_corpus,
                      f1_macro, precision_macro, qwk, render_report)
from .model import Model, build_model, predict_records, score_text
from .synth import surface_scores, synth_corpus
from .tensor import Tensor, backward, grad_check, grad_check_leaves, no_grad
from .trainer import (Checkpoint, TrainConfig, TrainLog, effective_config,
                      load_checkpoint, lr_at, preset_config, save_checkpoint,
                      train)

__version__ = "0.1.0"
