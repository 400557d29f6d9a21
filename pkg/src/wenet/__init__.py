"""Writing-editing network for generating scientific abstracts from titles."""

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import CorpusSplit, Document, Vocabulary, build_vocab, load_and_split, tokenize
from .estimator import WritingEditingNetwork
from .evaluation import (
    EvalReport, NGramIndex, evaluate_corpus, meteor_exact, ngram_plagiarism, rouge_l,
)
from .model import Draft, ModelParams, edit_draft, generate, write_draft
from .training import Checkpoint, TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "CorpusSplit",
    "Document",
    "Draft",
    "EvalReport",
    "ModelParams",
    "NGramIndex",
    "TrainConfig",
    "Vocabulary",
    "WritingEditingNetwork",
    "build_vocab",
    "edit_draft",
    "evaluate_corpus",
    "generate",
    "load_and_split",
    "load_checkpoint",
    "meteor_exact",
    "ngram_plagiarism",
    "rouge_l",
    "save_checkpoint",
    "tokenize",
    "train",
    "write_draft",
]
