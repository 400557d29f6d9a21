"""Writing-editing network: attentive GRU seq2seq plus an iterative editor.

Conventions: vectors are 1-D tensors, weight matrices are stored as
``(input_dim, output_dim)`` so a linear map reads ``x @ W + b``.

The writing pass encodes the title with a bi-GRU and decodes a first draft
while attending over the title states. Each editing pass re-encodes the
previous draft with a separate bi-GRU, attends to both the draft and the
title, fuses the two contexts with the revision gate, and feeds the result
through the *same* decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import EOS, SOS
from .exceptions import ArgumentError, DimensionError

DEFAULT_MAX_LEN = 200
INIT_SCALE = 0.08


def _weight(rng, rows, cols):
    return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=(rows, cols)), requires_grad=True)


def _vector(rng, n):
    return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=n), requires_grad=True)


def _bias(n):
    return Tensor(np.zeros(n), requires_grad=True)


class _ParamGroup:
    def named(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for f in fields(self):
            yield f"{prefix}.{f.name}", getattr(self, f.name)


@dataclass
class GruParams(_ParamGroup):
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng) -> "GruParams":
        return cls(
            W_z=_weight(rng, input_dim, hidden_dim), U_z=_weight(rng, hidden_dim, hidden_dim),
            b_z=_bias(hidden_dim),
            W_r=_weight(rng, input_dim, hidden_dim), U_r=_weight(rng, hidden_dim, hidden_dim),
            b_r=_bias(hidden_dim),
            W_h=_weight(rng, input_dim, hidden_dim), U_h=_weight(rng, hidden_dim, hidden_dim),
            b_h=_bias(hidden_dim),
        )

    @property
    def hidden_dim(self) -> int:
        return self.U_z.shape[0]


@dataclass
class AttentionParams(_ParamGroup):
    """Additive scorer ``v . tanh(s @ W_s + h @ W_h + b_a)``."""

    W_s: Tensor
    W_h: Tensor
    v: Tensor
    b_a: Tensor

    @classmethod
    def init(cls, state_dim: int, key_dim: int, attn_dim: int, rng) -> "AttentionParams":
        return cls(W_s=_weight(rng, state_dim, attn_dim), W_h=_weight(rng, key_dim, attn_dim),
                   v=_vector(rng, attn_dim), b_a=_bias(attn_dim))


@dataclass
class RevisionGateParams(_ParamGroup):
    W_rc: Tensor
    W_rt: Tensor
    b_r: Tensor
    W_zc: Tensor
    W_zt: Tensor
    b_z: Tensor
    W_pc: Tensor
    W_pt: Tensor
    b_p: Tensor

    @classmethod
    def init(cls, dim: int, rng) -> "RevisionGateParams":
        return cls(
            W_rc=_weight(rng, dim, dim), W_rt=_weight(rng, dim, dim), b_r=_bias(dim),
            W_zc=_weight(rng, dim, dim), W_zt=_weight(rng, dim, dim), b_z=_bias(dim),
            W_pc=_weight(rng, dim, dim), W_pt=_weight(rng, dim, dim), b_p=_bias(dim),
        )


@dataclass
class ModelParams:
    """Every learned tensor of the network.

    There is exactly one ``decoder``; writing and editing passes both use it.
    """

    embedding: Tensor
    title_fwd: GruParams
    title_bwd: GruParams
    draft_fwd: GruParams
    draft_bwd: GruParams
    decoder: GruParams
    write_attn: AttentionParams
    edit_title_attn: AttentionParams
    edit_draft_attn: AttentionParams
    gate: RevisionGateParams
    W_o: Tensor
    b_o: Tensor

    @classmethod
    def init(cls, vocab_size: int, embedding_dim: int, encoder_hidden: int,
             decoder_hidden: int | None = None, seed: int = 0) -> "ModelParams":
        """Uniform(-0.08, 0.08) weights and zero biases from a seeded generator."""
        ctx = 2 * encoder_hidden
        if decoder_hidden is None:
            decoder_hidden = ctx
        if decoder_hidden != ctx:
            raise DimensionError(
                f"decoder hidden size {decoder_hidden} must equal 2 x encoder hidden ({ctx})"
            )
        if min(vocab_size, embedding_dim, encoder_hidden) < 1:
            raise ArgumentError("model dimensions must be positive")
        rng = np.random.default_rng(seed)
        emb = Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, size=(vocab_size, embedding_dim)),
                     requires_grad=True)
        return cls(
            embedding=emb,
            title_fwd=GruParams.init(embedding_dim, encoder_hidden, rng),
            title_bwd=GruParams.init(embedding_dim, encoder_hidden, rng),
            draft_fwd=GruParams.init(embedding_dim, encoder_hidden, rng),
            draft_bwd=GruParams.init(embedding_dim, encoder_hidden, rng),
            decoder=GruParams.init(embedding_dim + ctx, decoder_hidden, rng),
            write_attn=AttentionParams.init(decoder_hidden, ctx, decoder_hidden, rng),
            edit_title_attn=AttentionParams.init(decoder_hidden, ctx, decoder_hidden, rng),
            edit_draft_attn=AttentionParams.init(decoder_hidden, ctx, decoder_hidden, rng),
            gate=RevisionGateParams.init(ctx, rng),
            W_o=_weight(rng, embedding_dim + decoder_hidden + ctx, vocab_size),
            b_o=_bias(vocab_size),
        )

    def named_tensors(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, _ParamGroup):
                out.update(value.named(f.name))
        out["W_o"] = self.W_o
        out["b_o"] = self.b_o
        return out

    @classmethod
    def from_named(cls, tensors: dict[str, np.ndarray]) -> "ModelParams":
        def take(name):
            try:
                return Tensor(tensors[name], requires_grad=True)
            except KeyError:
                raise ArgumentError(f"missing parameter tensor {name!r}") from None

        kwargs = {}
        for f in fields(cls):
            if f.name in ("embedding", "W_o", "b_o"):
                kwargs[f.name] = take(f.name)
                continue
            group_cls = {"gate": RevisionGateParams}.get(f.name)
            if group_cls is None:
                group_cls = AttentionParams if f.name.endswith("attn") else GruParams
            kwargs[f.name] = group_cls(**{g.name: take(f"{f.name}.{g.name}")
                                          for g in fields(group_cls)})
        params = cls(**kwargs)
        params.check_shapes()
        return params

    def copy(self) -> "ModelParams":
        return ModelParams.from_named({k: t.data.copy() for k, t in self.named_tensors().items()})

    def check_shapes(self):
        reference = ModelParams.init(self.vocab_size, self.embedding_dim, self.encoder_hidden)
        for (name, t), ref in zip(self.named_tensors().items(),
                                  reference.named_tensors().values()):
            if t.shape != ref.shape:
                raise DimensionError(f"parameter {name} has shape {t.shape}, expected {ref.shape}")

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def embedding_dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def encoder_hidden(self) -> int:
        return self.title_fwd.hidden_dim

    @property
    def decoder_hidden(self) -> int:
        return self.decoder.hidden_dim


@dataclass
class Draft:
    """One generated sequence with its per-step attention weights."""

    iteration: int
    tokens: list[int]
    title_attention: list[np.ndarray] = field(default_factory=list)
    draft_attention: list[np.ndarray] | None = None

    def without_eos(self) -> list[int]:
        return self.tokens[:-1] if self.tokens and self.tokens[-1] == EOS else list(self.tokens)


@dataclass
class Encoded:
    states: Tensor  # [K x 2H_e]
    final: Tensor   # h_{w_K}


def gru_cell_step(x: Tensor, h_prev: Tensor, p: GruParams) -> Tensor:
    z = ad.sigmoid(x @ p.W_z + h_prev @ p.U_z + p.b_z)
    r = ad.sigmoid(x @ p.W_r + h_prev @ p.U_r + p.b_r)
    h_tilde = ad.tanh(x @ p.W_h + (r * h_prev) @ p.U_h + p.b_h)
    return z * h_prev + (1.0 - z) * h_tilde


def bigru_encode(ids: Sequence[int], embedding: Tensor, fwd: GruParams,
                 bwd: GruParams) -> Encoded:
    """Per-token states ``concat(forward_k, backward_k)`` and the last one."""
    if len(ids) == 0:
        raise ArgumentError("cannot encode an empty sequence")
    x = ad.embedding_lookup(embedding, list(ids))
    rows = [x[k] for k in range(len(ids))]
    h = Tensor(np.zeros(fwd.hidden_dim))
    forward = []
    for xk in rows:
        h = gru_cell_step(xk, h, fwd)
        forward.append(h)
    h = Tensor(np.zeros(bwd.hidden_dim))
    backward = [None] * len(rows)
    for k in range(len(rows) - 1, -1, -1):
        h = gru_cell_step(rows[k], h, bwd)
        backward[k] = h
    states = ad.concat([ad.stack(forward), ad.stack(backward)], axis=1)
    return Encoded(states=states, final=states[len(ids) - 1])


def attention_keys(states: Tensor, p: AttentionParams) -> Tensor:
    """The step-independent part of the scores, ``states @ W_h + b_a``."""
    return states @ p.W_h + p.b_a


def attend(s_prev: Tensor, states: Tensor, p: AttentionParams,
           keys: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Soft attention over ``states``; returns ``(context, weights)``.

    ``keys`` may carry a precomputed :func:`attention_keys` for ``states``.
    """
    if states.ndim != 2 or states.shape[0] == 0:
        raise ArgumentError("attend needs a non-empty matrix of states")
    if keys is None:
        keys = attention_keys(states, p)
    scores = ad.tanh(keys + s_prev @ p.W_s) @ p.v
    weights = ad.softmax(scores)
    return weights @ states, weights


def decoder_step(prev_id: int, s_prev: Tensor, ctx: Tensor,
                 params: ModelParams) -> tuple[Tensor, Tensor]:
    """One decoder step; returns the new state and next-token logits."""
    e = ad.embedding_lookup(params.embedding, int(prev_id))
    s = gru_cell_step(ad.concat([e, ctx]), s_prev, params.decoder)
    logits = ad.concat([e, s, ctx]) @ params.W_o + params.b_o
    return s, logits


def gate_activations(c: Tensor, tau: Tensor, p: RevisionGateParams):
    """Revision gate internals ``(r, z, rho, a)`` for draft context ``c``
    and title context ``tau``."""
    r = ad.sigmoid(c @ p.W_rc + tau @ p.W_rt + p.b_r)
    z = ad.sigmoid(c @ p.W_zc + tau @ p.W_zt + p.b_z)
    rho = ad.tanh(c @ p.W_pc + z * (tau @ p.W_pt + p.b_p))
    a = r * c + (1.0 - r) * rho
    return r, z, rho, a


def revision_gate(c: Tensor, tau: Tensor, p: RevisionGateParams) -> Tensor:
    return gate_activations(c, tau, p)[3]


def encode_title(title_ids: Sequence[int], params: ModelParams) -> Encoded:
    return bigru_encode(title_ids, params.embedding, params.title_fwd, params.title_bwd)


def encode_draft(draft_ids: Sequence[int], params: ModelParams) -> Encoded:
    if len(draft_ids) == 0:
        raise ArgumentError("previous draft is empty")
    return bigru_encode(draft_ids, params.embedding, params.draft_fwd, params.draft_bwd)


def _greedy(first_state, context_fn, params, max_len):
    if max_len < 1:
        raise ArgumentError("max_len must be at least 1")
    tokens, title_attn, draft_attn = [], [], []
    s, prev = first_state, SOS
    for _ in range(max_len):
        ctx, alpha, beta = context_fn(s)
        s, logits = decoder_step(prev, s, ctx, params)
        prev = int(np.argmax(logits.data))  # first maximum, i.e. lowest id on ties
        tokens.append(prev)
        title_attn.append(alpha.data)
        if beta is not None:
            draft_attn.append(beta.data)
        if prev == EOS:
            break
    return tokens, title_attn, draft_attn


def _write(title: Encoded, params: ModelParams, max_len: int) -> Draft:
    keys = attention_keys(title.states, params.write_attn)

    def context(s):
        tau, alpha = attend(s, title.states, params.write_attn, keys)
        return tau, alpha, None

    tokens, alphas, _ = _greedy(title.final, context, params, max_len)
    return Draft(iteration=0, tokens=tokens, title_attention=alphas)


def _edit(title: Encoded, prev: Draft, params: ModelParams, max_len: int) -> Draft:
    draft = encode_draft(prev.tokens, params)
    title_keys = attention_keys(title.states, params.edit_title_attn)
    draft_keys = attention_keys(draft.states, params.edit_draft_attn)

    def context(s):
        c, beta = attend(s, draft.states, params.edit_draft_attn, draft_keys)
        tau, alpha = attend(s, title.states, params.edit_title_attn, title_keys)
        return revision_gate(c, tau, params.gate), alpha, beta

    tokens, alphas, betas = _greedy(title.final, context, params, max_len)
    return Draft(iteration=prev.iteration + 1, tokens=tokens,
                 title_attention=alphas, draft_attention=betas)


def write_draft(title_ids: Sequence[int], params: ModelParams,
                max_len: int = DEFAULT_MAX_LEN) -> Draft:
    """Greedy first draft from the writing pass."""
    with ad.no_record():
        return _write(encode_title(title_ids, params), params, max_len)


def edit_draft(title_ids: Sequence[int], prev: Draft, params: ModelParams,
               max_len: int = DEFAULT_MAX_LEN) -> Draft:
    """Greedy revision of ``prev`` by one editing pass."""
    if not prev.tokens:
        raise ArgumentError("previous draft is empty")
    with ad.no_record():
        return _edit(encode_title(title_ids, params), prev, params, max_len)


def generate(title_ids: Sequence[int], params: ModelParams, d: int = 2,
             max_len: int = DEFAULT_MAX_LEN) -> list[Draft]:
    """Drafts ``X^(0) .. X^(d)``: one writing pass then ``d`` editing passes."""
    if d < 0:
        raise ArgumentError("iteration count d must be non-negative")
    with ad.no_record():
        title = encode_title(title_ids, params)
        drafts = [_write(title, params, max_len)]
        for _ in range(d):
            drafts.append(_edit(title, drafts[-1], params, max_len))
    return drafts


def _teacher_forced_pass(title: Encoded, inputs: Tensor, prev_ids, params, context_fn):
    s = title.final
    states, contexts = [], []
    for t in range(len(prev_ids)):
        e = inputs[t]
        ctx = context_fn(s)
        s = gru_cell_step(ad.concat([e, ctx]), s, params.decoder)
        states.append(s)
        contexts.append(ctx)
    features = ad.concat([inputs, ad.stack(states), ad.stack(contexts)], axis=1)
    return features @ params.W_o + params.b_o


def forward_teacher_forced(title_ids: Sequence[int], gold_ids: Sequence[int],
                           params: ModelParams, d: int = 2,
                           max_len: int = DEFAULT_MAX_LEN,
                           drafts: Sequence | None = None) -> list[Tensor]:
    """Per-pass logits ``[T_gold x V]`` with gold tokens as decoder inputs.

    Editing pass ``i`` reads the greedy draft of pass ``i - 1`` under the
    current parameters; those tokens are constants, so no gradient flows
    back through them. ``drafts`` may supply the ``d`` input drafts
    (``Draft`` objects or id lists) instead.
    """
    if len(gold_ids) == 0:
        raise ArgumentError("gold sequence is empty")
    if d < 0:
        raise ArgumentError("iteration count d must be non-negative")
    if drafts is None:
        drafts = generate(title_ids, params, d - 1, max_len) if d > 0 else []
    elif len(drafts) < d:
        raise ArgumentError(f"need {d} input drafts, got {len(drafts)}")
    draft_ids = [list(x.tokens) if isinstance(x, Draft) else list(x) for x in drafts[:d]]

    prev_ids = [SOS] + list(gold_ids[:-1])
    title = encode_title(title_ids, params)
    inputs = ad.embedding_lookup(params.embedding, prev_ids)

    write_keys = attention_keys(title.states, params.write_attn)
    logits = [_teacher_forced_pass(
        title, inputs, prev_ids, params,
        lambda s: attend(s, title.states, params.write_attn, write_keys)[0],
    )]
    title_keys = attention_keys(title.states, params.edit_title_attn)
    for ids in draft_ids:
        draft = encode_draft(ids, params)
        draft_keys = attention_keys(draft.states, params.edit_draft_attn)

        def context(s, draft=draft, draft_keys=draft_keys):
            c, _ = attend(s, draft.states, params.edit_draft_attn, draft_keys)
            tau, _ = attend(s, title.states, params.edit_title_attn, title_keys)
            return revision_gate(c, tau, params.gate)

        logits.append(_teacher_forced_pass(title, inputs, prev_ids, params, context))
    return logits
