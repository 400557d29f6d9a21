"""scikit-learn style wrapper: ``fit(titles, abstracts)`` / ``predict(titles)``."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import CorpusSplit, Document, build_vocab, tokenize
from .evaluation import rouge_l
from .model import generate
from .training import Checkpoint, TrainConfig, train


def check_texts(X, name: str = "X") -> list[str]:
    """Validate a 1-D collection of strings and return it as a list."""
    if isinstance(X, (str, bytes)):
        raise ValueError(f"{name} must be a sequence of strings, not a single string")
    arr = np.asarray(X, dtype=object)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    bad = [i for i, v in enumerate(arr) if not isinstance(v, str)]
    if bad:
        raise TypeError(f"{name}[{bad[0]}] is {type(arr[bad[0]]).__name__}, expected str")
    return list(arr)


def check_text_pairs(X, y) -> list[Document]:
    titles, abstracts = check_texts(X, "X"), check_texts(y, "y")
    if len(titles) != len(abstracts):
        raise ValueError(f"X has {len(titles)} titles but y has {len(abstracts)} abstracts")
    docs = []
    for i, (t, a) in enumerate(zip(titles, abstracts)):
        doc = Document.from_text(t, a)
        if not doc.title or not doc.abstract:
            raise ValueError(f"pair {i} has an empty title or abstract after tokenization")
        docs.append(doc)
    return docs


class WritingEditingNetwork(BaseEstimator):
    """Title-to-abstract generator that writes a draft and edits it ``iterations`` times.

    Parameters mirror :class:`~wenet.training.TrainConfig`; the decoder width
    is always twice ``encoder_hidden``.
    """

    def __init__(self, embedding_dim=64, encoder_hidden=64, iterations=2, learning_rate=1e-3,
                 clip_norm=5.0, batch_size=1, epochs=30, patience=5, max_decode_len=200,
                 min_freq=1, vocab_size=5000, random_state=0):
        self.embedding_dim = embedding_dim
        self.encoder_hidden = encoder_hidden
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.batch_size = batch_size
        self.epochs = epochs
        self.patience = patience
        self.max_decode_len = max_decode_len
        self.min_freq = min_freq
        self.vocab_size = vocab_size
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            embedding_dim=self.embedding_dim, encoder_hidden=self.encoder_hidden,
            decoder_hidden=2 * self.encoder_hidden, vocab_size=self.vocab_size,
            iterations=self.iterations, learning_rate=self.learning_rate,
            clip_norm=self.clip_norm, batch_size=self.batch_size, epochs=self.epochs,
            patience=self.patience, seed=self.random_state, max_decode_len=self.max_decode_len,
        )

    def fit(self, X, y, X_val=None, y_val=None, max_steps=None):
        docs = check_text_pairs(X, y)
        val_docs = [] if X_val is None else check_text_pairs(X_val, y_val)
        cfg = self._config()
        vocab = build_vocab(docs, min_freq=self.min_freq, max_size=self.vocab_size)
        result = train(CorpusSplit(docs, val_docs, []), cfg, vocab=vocab, max_steps=max_steps)
        self._set_checkpoint(result.checkpoint)
        self.history_ = result.history
        self.n_steps_ = result.steps
        return self

    def _set_checkpoint(self, ckpt: Checkpoint):
        self.checkpoint_ = ckpt
        self.vocab_ = ckpt.vocab
        self.params_ = ckpt.params

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "WritingEditingNetwork":
        cfg = ckpt.config
        est = cls(embedding_dim=cfg.embedding_dim, encoder_hidden=cfg.encoder_hidden,
                  iterations=cfg.iterations, learning_rate=cfg.learning_rate,
                  clip_norm=cfg.clip_norm, batch_size=cfg.batch_size, epochs=cfg.epochs,
                  patience=cfg.patience, max_decode_len=cfg.max_decode_len,
                  vocab_size=cfg.vocab_size, random_state=cfg.seed)
        est._set_checkpoint(ckpt)
        return est

    def generate_drafts(self, X, iterations: int | None = None) -> list[list[list[str]]]:
        """All drafts ``X^(0)..X^(d)`` per title, as token lists."""
        check_is_fitted(self, "params_")
        d = self.iterations if iterations is None else iterations
        out = []
        for title in check_texts(X):
            ids = self.vocab_.encode(tokenize(title))
            if not ids:
                raise ValueError(f"title {title!r} is empty after tokenization")
            drafts = generate(ids, self.params_, d, self.max_decode_len)
            out.append([self.vocab_.decode(dr.without_eos()) for dr in drafts])
        return out

    def predict(self, X, iterations: int | None = None) -> list[str]:
        """Final draft for each title, space-joined."""
        return [" ".join(drafts[-1]) for drafts in self.generate_drafts(X, iterations)]

    def score(self, X, y, iterations: int | None = None) -> float:
        """Mean ROUGE-L of the final drafts against the given abstracts."""
        refs = [tokenize(a) for a in check_texts(y, "y")]
        hyps = [drafts[-1] for drafts in self.generate_drafts(X, iterations)]
        if len(hyps) != len(refs):
            raise ValueError("X and y have different lengths")
        return float(np.mean([rouge_l(h, r) if h else 0.0 for h, r in zip(hyps, refs)]))

    def _more_tags(self):
        return {"X_types": ["string"], "requires_y": True}

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.target_tags.required = True
        return tags
