"""Soft convex mixing of paired sequences (and its hard-mask siblings) for
sequence-to-sequence data augmentation, with a self-contained LSTM trainer."""

__version__ = "0.1.0"

from .data import Dataset, GrammarSpec, Vocabulary, gen_minigrammar, gen_reversal
from .estimator import SeqMixSeq2Seq
from .mixer import MixedExample, SequencePair, SoftSequence, mix_hard, mix_soft
from .model import ModelParams, init_params
from .sampling import Method, MethodConfig, RngStream
from .trainer import MetricsRecord, TrainConfig, run_experiment, train

__all__ = [
    "Dataset",
    "GrammarSpec",
    "Vocabulary",
    "gen_minigrammar",
    "gen_reversal",
    "SeqMixSeq2Seq",
    "MixedExample",
    "SequencePair",
    "SoftSequence",
    "mix_hard",
    "mix_soft",
    "ModelParams",
    "init_params",
    "Method",
    "MethodConfig",
    "RngStream",
    "MetricsRecord",
    "TrainConfig",
    "run_experiment",
    "train",
    "__version__",
]
