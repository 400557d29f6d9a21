"""Multi-draft teacher-forced training with Adam and gradient clipping."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EOS, CorpusSplit, Document, Vocabulary, build_vocab
from .exceptions import ArgumentError, ConfigError, NumericError
from .model import ModelParams, forward_teacher_forced

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Hyperparameters with desk-scale defaults."""

    embedding_dim: int = 64
    encoder_hidden: int = 64
    decoder_hidden: int = 128
    vocab_size: int = 5000
    iterations: int = 2
    learning_rate: float = 1e-3
    clip_norm: float = 5.0
    batch_size: int = 1
    epochs: int = 30
    patience: int = 5
    seed: int = 0
    max_decode_len: int = 200

    def __post_init__(self):
        self.validate()

    def validate(self):
        for f in fields(self):
            value = getattr(self, f.name)
            expected = float if f.type in ("float", float) else int
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{f.name} must be numeric, got {value!r}")
            if expected is int and not float(value).is_integer():
                raise ConfigError(f"{f.name} must be an integer, got {value!r}")
            setattr(self, f.name, expected(value))
        if self.decoder_hidden != 2 * self.encoder_hidden:
            raise ConfigError(
                f"decoder_hidden ({self.decoder_hidden}) must be 2 x encoder_hidden "
                f"({self.encoder_hidden})"
            )
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        for name in ("embedding_dim", "encoder_hidden", "batch_size", "epochs",
                     "patience", "max_decode_len", "clip_norm"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.vocab_size < 5:
            raise ConfigError("vocab_size must be at least 5")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)


@dataclass
class OptimizerState:
    """Adam first/second moments keyed by parameter name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "OptimizerState":
        return cls(m={k: np.zeros(t.shape) for k, t in params.items()},
                   v={k: np.zeros(t.shape) for k, t in params.items()})

    def copy(self) -> "OptimizerState":
        return OptimizerState({k: a.copy() for k, a in self.m.items()},
                              {k: a.copy() for k, a in self.v.items()}, self.step)


BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> tuple[dict, float]:
    """Rescale so the global L2 norm is at most ``clip_norm``; returns the pre-clip norm."""
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > clip_norm:
        scale = clip_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def optimizer_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
                   state: OptimizerState, lr: float, clip_norm: float) -> float:
    """Clip, then apply one bias-corrected Adam update in place.

    Tensors whose gradient is identically zero are left untouched, moments
    included. Returns the pre-clip gradient norm.
    """
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ArgumentError(f"gradient for {name} has shape {g.shape}, "
                                f"parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    grads, norm = clip_gradients(grads, clip_norm)
    state.step += 1
    t = state.step
    c1, c2 = 1.0 - BETA1 ** t, 1.0 - BETA2 ** t
    for name, g in grads.items():
        if not g.any():
            continue
        m = state.m.setdefault(name, np.zeros(g.shape))
        v = state.v.setdefault(name, np.zeros(g.shape))
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        params[name].data -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return norm


def multi_draft_loss(logits: Sequence[Tensor], gold_ids: Sequence[int]) -> Tensor:
    """Mean over drafts of the padding-ignoring cross-entropy against gold."""
    if not logits:
        raise ArgumentError("multi_draft_loss needs at least one draft")
    losses = [ad.cross_entropy_loss(block, gold_ids) for block in logits]
    if len(losses) == 1:
        return losses[0]
    return ad.mean(ad.stack(losses))


def encode_pair(doc: Document, vocab: Vocabulary) -> tuple[list[int], list[int]]:
    """Title ids and gold target ids (abstract followed by EOS)."""
    return vocab.encode(doc.title), vocab.encode(doc.abstract) + [EOS]


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    valid_loss: float | None


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocabulary
    params: ModelParams
    optimizer: OptimizerState
    epoch: int = 0


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochLog]
    steps: int


def document_loss(doc_ids, params: ModelParams, cfg: TrainConfig) -> Tensor:
    title, gold = doc_ids
    logits = forward_teacher_forced(title, gold, params, cfg.iterations, cfg.max_decode_len)
    return multi_draft_loss(logits, gold)


def evaluate_loss(encoded, params: ModelParams, cfg: TrainConfig) -> float:
    with ad.no_record():
        return float(np.mean([document_loss(pair, params, cfg).item() for pair in encoded]))


def train(corpus: CorpusSplit, cfg: TrainConfig, vocab: Vocabulary | None = None,
          max_steps: int | None = None,
          on_epoch: Callable[[EpochLog], None] | None = None) -> TrainResult:
    """Train from scratch and return the best checkpoint with the epoch log.

    The best checkpoint is chosen on validation loss, or on training loss
    when the validation split is empty. Training stops after ``cfg.epochs``
    epochs, after ``cfg.patience`` epochs without improvement, or once
    ``max_steps`` optimizer steps have been taken.
    """
    if not corpus.train:
        raise ArgumentError("training split is empty")
    if vocab is None:
        vocab = build_vocab(corpus.train, min_freq=1, max_size=cfg.vocab_size)
    params = ModelParams.init(len(vocab), cfg.embedding_dim, cfg.encoder_hidden,
                              cfg.decoder_hidden, seed=cfg.seed)
    named = params.named_tensors()
    state = OptimizerState.for_params(named)
    train_ids = [encode_pair(doc, vocab) for doc in corpus.train]
    valid_ids = [encode_pair(doc, vocab) for doc in corpus.validation]
    rng = random.Random(cfg.seed)

    history: list[EpochLog] = []
    best_loss, best = math.inf, None
    stale = 0
    steps = 0
    for epoch in range(1, cfg.epochs + 1):
        order = list(range(len(train_ids)))
        rng.shuffle(order)
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            total = None
            for index in batch:
                with ad.record():
                    loss = document_loss(train_ids[index], params, cfg)
                    value = loss.item()
                    if not math.isfinite(value):
                        raise NumericError(f"non-finite loss on training document {index}")
                    grads = ad.backward(loss, named)
                epoch_losses.append(value)
                if total is None:
                    total = grads
                else:
                    total = {k: total[k] + grads[k] for k in total}
            if len(batch) > 1:
                total = {k: g / len(batch) for k, g in total.items()}
            optimizer_step(named, total, state, cfg.learning_rate, cfg.clip_norm)
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break

        train_loss = float(np.mean(epoch_losses))
        valid_loss = evaluate_loss(valid_ids, params, cfg) if valid_ids else None
        log = EpochLog(epoch, train_loss, valid_loss)
        history.append(log)
        logger.info("epoch %d train %.4f valid %s", epoch, train_loss,
                    "-" if valid_loss is None else f"{valid_loss:.4f}")
        if on_epoch is not None:
            on_epoch(log)

        score = valid_loss if valid_loss is not None else train_loss
        if score < best_loss:
            best_loss, stale = score, 0
            best = Checkpoint(cfg, vocab, params.copy(), state.copy(), epoch)
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        if max_steps is not None and steps >= max_steps:
            break
    return TrainResult(best, history, steps)
