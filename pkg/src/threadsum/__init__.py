"""Hierarchical attentive summarization of interleaved discussion threads.

A numpy-only toolkit: a reverse-mode autodiff engine with LSTM/attention
layers, a synthetic corpus interleaver, four encoder/decoder variants with
three-level gated attention, Adam training with finite-difference gradient
verification, ROUGE-1/2/L evaluation, and a deterministic CLI.
"""

from .autodiff import Tensor, backward, no_grad
from .checkpoint import CheckpointBundle, load_checkpoint, save_checkpoint
from .corpus import (PRESETS, CorpusInstance, InterleavePreset, SourceDoc,
                     density_order, interleave_window, load_corpus,
                     synthesize_corpus, write_corpus)
from .errors import (ConfigurationError, DimensionError, InvalidInputError,
                     ModelTooLargeError, SchemaError, ThreadsumError,
                     TrainingDivergedError)
from .gradcheck import GradCheckReport, check_config, finite_diff_gradcheck
from .model import (GAMMA_MODES, VARIANTS, AttentionMaps, ForwardResult,
                    GenerationResult, ModelConfig, Summarizer)
from .optim import AdamState, adam_step, clip_gradients
from .rouge import (METRIC_KEYS, MODES, EvalReport, RougeComponent,
                    evaluate_corpus, rouge_l, rouge_n, score_pair)
from .textproc import (EOS_ID, PAD_ID, SEP_ID, SOS_ID, UNK_ID, Batch,
                       EncodedInstance, Limits, Vocab, build_vocab, collate,
                       encode_instance, tokenize)
from .training import (LossBreakdown, TrainResult, TrainSchedule, compute_loss,
                       encode_corpus, evaluate_model, fit_limits,
                       generate_summaries, stop_accuracy, train)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "AttentionMaps", "Batch", "CheckpointBundle",
    "ConfigurationError", "CorpusInstance", "DimensionError", "EOS_ID",
    "EncodedInstance", "EvalReport", "ForwardResult", "GAMMA_MODES",
    "GenerationResult", "GradCheckReport", "InterleavePreset",
    "InvalidInputError", "Limits", "LossBreakdown", "METRIC_KEYS", "MODES",
    "ModelConfig", "ModelTooLargeError", "PAD_ID", "PRESETS",
    "RougeComponent", "SEP_ID", "SOS_ID", "SchemaError", "SourceDoc",
    "Summarizer", "Tensor", "ThreadsumError", "TrainResult", "TrainSchedule",
    "TrainingDivergedError", "UNK_ID", "VARIANTS", "Vocab", "backward",
    "build_vocab", "check_config", "clip_gradients", "collate",
    "compute_loss", "density_order", "encode_corpus", "encode_instance",
    "evaluate_corpus", "evaluate_model", "finite_diff_gradcheck",
    "fit_limits", "generate_summaries", "interleave_window", "load_checkpoint",
    "load_corpus", "no_grad", "rouge_l", "rouge_n", "save_checkpoint",
    "score_pair", "stop_accuracy", "synthesize_corpus", "tokenize", "train",
    "write_corpus", "adam_step", "__version__",
]
