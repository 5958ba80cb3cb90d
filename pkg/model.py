# Harakat, diacritic restoration for Arabic script
# Copyright (C) 2025  The Harakat contributors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

"""Character-level encoder-decoder with general global attention.

The encoder is a stack of bidirectional LSTM layers; the decoder is a stack
of LSTM layers with input feeding. Attention scores are bilinear
(``h_t^T W_a h_s``) and the attentional state is ``tanh(W_c [c_t; h_t])``.
All arrays are batch-major.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from corpus import (BOUNDARY, SENTENCE, ChunkPair, DiacriticSet, collapse,
                    detokenize, normalize, strip_diacritics, tokenize_chars)
from neuralcore import (NonFiniteError, Parameter, ShapeError, add_rowwise,
                        check_finite, concat_cols, concat_cols_backward,
                        cross_entropy, dropout, dropout_backward, dtype_for,
                        log_softmax_rows, matmul, matmul_backward, sigmoid,
                        sigmoid_backward, softmax_rows, softmax_rows_backward,
                        tanh, tanh_backward)

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ('<pad>', '<s>', '</s>', '<unk>')
UNK_MARK = '�'

CHECKPOINT_MAGIC = b'HARAKAT-CHECKPOINT'
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


class CheckpointError(ModelError):
    pass


class CharVocab:
    """Bijection between character tokens and ids; ids 0-3 are reserved."""

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if tokens[:len(RESERVED)] != RESERVED:
            raise ModelError(f'vocabulary must start with {RESERVED}')
        if len(set(tokens)) != len(tokens):
            raise ModelError('vocabulary tokens are not unique')
        self.tokens = tokens
        self.index = {token: i for i, token in enumerate(tokens)}

    @classmethod
    def build(cls, chunks: Iterable[ChunkPair]) -> 'CharVocab':
        chars = {BOUNDARY}
        for chunk in chunks:
            chars.update(chunk.src_tokens)
            chars.update(chunk.tgt_tokens)
        chars.difference_update(RESERVED)
        return cls(RESERVED + tuple(sorted(chars)))

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, CharVocab) and self.tokens == other.tokens

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(token, UNK) if len(token) == 1 else UNK for token in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if i == UNK:
                out.append(UNK_MARK)
            elif i > UNK:
                out.append(self.tokens[i])
        return out


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    hidden_dim: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    dropout: float = 0.0
    attention: str = 'general'
    input_feed: bool = True
    max_decode_factor: float = 3.0
    chunk_size: int = 5
    param_init: float = 0.1
    beam_width: int = 5

    def __post_init__(self):
        if self.embed_dim <= 0 or self.hidden_dim <= 0:
            raise ModelError('embed_dim and hidden_dim must be positive')
        if self.enc_layers < 1 or self.dec_layers < 1:
            raise ModelError('layer counts must be at least 1')
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f'dropout must be in [0, 1), got {self.dropout}')
        if self.attention != 'general':
            raise ModelError(f'unsupported attention {self.attention!r}')
        if self.max_decode_factor <= 0:
            raise ModelError('max_decode_factor must be positive')
        if self.beam_width < 1:
            raise ModelError('beam_width must be at least 1')


@dataclass
class EncoderStates:
    annotations: np.ndarray  # (batch, source length, 2 * hidden)
    mask: np.ndarray | None
    finals: list  # per layer: (h, c), each the [forward; backward] concatenation
    cache: tuple | None = field(default=None, repr=False)


@dataclass
class Batch:
    src: np.ndarray
    src_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @classmethod
    def from_chunks(cls, chunks: Sequence[ChunkPair], vocab: CharVocab, dtype=np.float64) -> 'Batch':
        if not chunks:
            raise ModelError('cannot build an empty batch')
        src_ids = [vocab.encode(c.src_tokens) for c in chunks]
        tgt_ids = [vocab.encode(c.tgt_tokens) for c in chunks]
        if any(not s for s in src_ids) or any(not t for t in tgt_ids):
            raise ModelError('source and target must be non-empty')
        size, src_len = len(chunks), max(map(len, src_ids))
        tgt_len = max(map(len, tgt_ids)) + 1
        src = np.full((size, src_len), PAD, dtype=np.int64)
        src_mask = np.zeros((size, src_len), dtype=dtype)
        tgt_in = np.full((size, tgt_len), PAD, dtype=np.int64)
        tgt_out = np.full((size, tgt_len), PAD, dtype=np.int64)
        tgt_mask = np.zeros((size, tgt_len), dtype=dtype)
        for b, (s, t) in enumerate(zip(src_ids, tgt_ids)):
            src[b, :len(s)] = s
            src_mask[b, :len(s)] = 1
            tgt_in[b, :len(t) + 1] = [BOS] + t
            tgt_out[b, :len(t) + 1] = t + [EOS]
            tgt_mask[b, :len(t) + 1] = 1
        return cls(src, src_mask, tgt_in, tgt_out, tgt_mask)


@dataclass
class Hypothesis:
    ids: tuple
    log_prob: float
    finished: bool
    attention: list = field(default_factory=list, repr=False)

    @property
    def length(self) -> int:
        return len(self.ids) + (1 if self.finished else 0)

    @property
    def normalized(self) -> float:
        return self.log_prob / max(self.length, 1)


@dataclass(frozen=True)
class ChunkDiagnostic:
    index: int
    input_words: int
    output_words: int
    mismatch: bool
    finished: bool


@dataclass
class Prediction:
    text: str
    chunks: list

    @property
    def mismatches(self) -> int:
        return sum(1 for c in self.chunks if c.mismatch)


def lstm_cell(x, h_prev, c_prev, weight, bias, mask=None):
    """One LSTM step with gates ordered input, forget, output, candidate.

    ``weight`` maps ``[x; h_prev]`` to the four gate pre-activations. Rows
    where ``mask`` is 0 carry ``h_prev``/``c_prev`` through unchanged.
    Returns ``(h, c, cache)``.
    """
    hidden = h_prev.shape[1]
    xh = concat_cols(x, h_prev)
    z = add_rowwise(matmul(xh, weight), bias)
    if z.shape[1] != 4 * hidden:
        raise ShapeError(f'lstm_cell: gate weights {weight.shape} do not match hidden size {hidden}')
    i = sigmoid(z[:, :hidden])
    f = sigmoid(z[:, hidden:2 * hidden])
    o = sigmoid(z[:, 2 * hidden:3 * hidden])
    g = tanh(z[:, 3 * hidden:])
    c = f * c_prev + i * g
    tc = tanh(c)
    h = o * tc
    if mask is not None:
        h = mask * h + (1.0 - mask) * h_prev
        c = mask * c + (1.0 - mask) * c_prev
    return h, c, (xh, i, f, o, g, tc, c_prev, mask, weight, x.shape[1])


def lstm_cell_backward(dh_out, dc_out, cache):
    """Returns ``(dx, dh_prev, dc_prev, dweight, dbias)``."""
    xh, i, f, o, g, tc, c_prev, mask, weight, n_in = cache
    if mask is not None:
        dh, dc = dh_out * mask, dc_out * mask
    else:
        dh, dc = dh_out, dc_out
    dc = dc + tanh_backward(dh * o, tc)
    dz = np.concatenate([
        sigmoid_backward(dc * g, i),
        sigmoid_backward(dc * c_prev, f),
        sigmoid_backward(dh * tc, o),
        tanh_backward(dc * i, g),
    ], axis=1)
    dxh, dweight = matmul_backward(dz, xh, weight)
    dx, dh_prev = concat_cols_backward(dxh, n_in)
    dc_prev = dc * f
    if mask is not None:
        dh_prev = dh_prev + (1.0 - mask) * dh_out
        dc_prev = dc_prev + (1.0 - mask) * dc_out
    return dx, dh_prev, dc_prev, dweight, dz.sum(axis=0)


def attend(query, annotations, W_a, W_c, mask=None):
    """General global attention.

    ``query`` is (batch, hidden), ``annotations`` (batch, source, dim).
    Returns the attentional state, the weights over source positions and a
    cache for :func:`attend_backward`.
    """
    if annotations.ndim != 3 or annotations.shape[0] != query.shape[0]:
        raise ShapeError(f'attend: annotations {annotations.shape} do not match query {query.shape}')
    proj = matmul(query, W_a)
    scores = np.einsum('bd,bsd->bs', proj, annotations)
    if mask is not None:
        scores = np.where(mask > 0, scores, -np.inf)
    alpha = softmax_rows(scores)
    context = np.einsum('bs,bsd->bd', alpha, annotations)
    joined = concat_cols(context, query)
    attn_h = tanh(matmul(joined, W_c))
    return attn_h, alpha, (query, annotations, W_a, W_c, proj, alpha, joined, attn_h)


def attend_backward(d_attn_h, cache):
    """Returns ``(dquery, dannotations, dW_a, dW_c)``."""
    query, annotations, W_a, W_c, proj, alpha, joined, attn_h = cache
    djoined, dW_c = matmul_backward(tanh_backward(d_attn_h, attn_h), joined, W_c)
    dcontext, dquery = concat_cols_backward(djoined, annotations.shape[2])
    dalpha = np.einsum('bd,bsd->bs', dcontext, annotations)
    dannotations = alpha[:, :, None] * dcontext[:, None, :]
    dscores = softmax_rows_backward(dalpha, alpha)
    dproj = np.einsum('bs,bsd->bd', dscores, annotations)
    dannotations += dscores[:, :, None] * proj[:, None, :]
    dq, dW_a = matmul_backward(dproj, query, W_a)
    return dquery + dq, dannotations, dW_a, dW_c


@dataclass
class _StepCache:
    y_prev: np.ndarray
    embed_dim: int
    layers: list
    attn: tuple
    out_in: np.ndarray
    out_keep: np.ndarray | None


@dataclass
class _EncoderLayerCache:
    inputs: np.ndarray
    keep: np.ndarray | None
    steps: dict


@dataclass
class _Beam:
    ids: tuple
    log_prob: float
    state: list
    feed: np.ndarray
    attention: list


class Seq2Seq:
    def __init__(self, config: ModelConfig, vocab: CharVocab, params: dict):
        self.config = config
        self.vocab = vocab
        self.params = params
        missing = {name for name, _ in self.parameter_shapes(config, len(vocab))} - set(params)
        if missing:
            raise ModelError(f'missing parameters: {", ".join(sorted(missing))}')
        for name, param in params.items():
            try:
                check_finite(param.value, name)
            except NonFiniteError as e:
                raise ModelError(f'parameter {e}') from e

    @staticmethod
    def parameter_shapes(config: ModelConfig, vocab_size: int) -> list:
        E, H = config.embed_dim, config.hidden_dim
        shapes = [('src_embed', (vocab_size, E)), ('tgt_embed', (vocab_size, E))]
        for l in range(config.enc_layers):
            n_in = E if l == 0 else 2 * H
            for direction in ('fwd', 'bwd'):
                shapes.append((f'enc{l}.{direction}.weight', (n_in + H, 4 * H)))
                shapes.append((f'enc{l}.{direction}.bias', (4 * H,)))
        for l in range(config.dec_layers):
            for part in ('h', 'c'):
                shapes.append((f'bridge{l}.{part}.weight', (2 * H, H)))
                shapes.append((f'bridge{l}.{part}.bias', (H,)))
        for l in range(config.dec_layers):
            n_in = (E + H if config.input_feed else E) if l == 0 else H
            shapes.append((f'dec{l}.weight', (n_in + H, 4 * H)))
            shapes.append((f'dec{l}.bias', (4 * H,)))
        shapes += [
            ('attn.W_a', (H, 2 * H)),
            ('attn.W_c', (3 * H, H)),
            ('out.weight', (H, vocab_size)),
            ('out.bias', (vocab_size,)),
        ]
        return shapes

    @classmethod
    def create(cls, config: ModelConfig, vocab: CharVocab, seed: int = 1, precision: int = 64) -> 'Seq2Seq':
        dtype = dtype_for(precision)
        rng = np.random.Generator(np.random.PCG64(seed))
        params = {}
        for name, shape in cls.parameter_shapes(config, len(vocab)):
            value = rng.uniform(-config.param_init, config.param_init, size=shape).astype(dtype)
            params[name] = Parameter(name, value)
        return cls(config, vocab, params)

    def __getitem__(self, name) -> np.ndarray:
        return self.params[name].value

    @property
    def dtype(self):
        return self.params['out.bias'].value.dtype

    @property
    def precision(self) -> int:
        return 32 if self.dtype == np.float32 else 64

    def parameters(self) -> list:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def _bridge_source(self, layer: int) -> int:
        return min(layer, self.config.enc_layers - 1)

    def encode(self, src, src_mask=None, training=False, rng=None) -> EncoderStates:
        src = np.atleast_2d(np.asarray(src, dtype=np.int64))
        if src.size == 0:
            raise ModelError('cannot encode an empty sequence')
        if src.min() < 0 or src.max() >= len(self.vocab):
            raise ModelError('source id outside the vocabulary')
        B, S = src.shape
        H = self.config.hidden_dim
        mask = None if src_mask is None else np.asarray(src_mask, dtype=self.dtype)
        layer_in = self['src_embed'][src]
        finals, caches = [], []
        for l in range(self.config.enc_layers):
            keep = None
            if l > 0:
                layer_in, keep = dropout(layer_in, self.config.dropout, rng, training)
            outputs = np.zeros((B, S, 2 * H), dtype=self.dtype)
            steps, last = {}, {}
            for direction, order, cols in (('fwd', range(S), slice(0, H)),
                                           ('bwd', range(S - 1, -1, -1), slice(H, 2 * H))):
                weight = self[f'enc{l}.{direction}.weight']
                bias = self[f'enc{l}.{direction}.bias']
                h = np.zeros((B, H), dtype=self.dtype)
                c = np.zeros((B, H), dtype=self.dtype)
                step_caches = [None] * S
                for t in order:
                    m = None if mask is None else mask[:, t:t + 1]
                    h, c, step_caches[t] = lstm_cell(layer_in[:, t], h, c, weight, bias, m)
                    outputs[:, t, cols] = h
                steps[direction] = step_caches
                last[direction] = (h, c)
            finals.append((concat_cols(last['fwd'][0], last['bwd'][0]),
                           concat_cols(last['fwd'][1], last['bwd'][1])))
            caches.append(_EncoderLayerCache(layer_in, keep, steps))
            layer_in = outputs
        return EncoderStates(layer_in, mask, finals, (src, caches))

    def _initial_state(self, enc: EncoderStates) -> list:
        state = []
        for l in range(self.config.dec_layers):
            h_cat, c_cat = enc.finals[self._bridge_source(l)]
            h = add_rowwise(matmul(h_cat, self[f'bridge{l}.h.weight']), self[f'bridge{l}.h.bias'])
            c = add_rowwise(matmul(c_cat, self[f'bridge{l}.c.weight']), self[f'bridge{l}.c.bias'])
            state.append((h, c))
        return state

    def _decoder_step(self, y_prev, feed, state, enc, training=False, rng=None):
        emb = self['tgt_embed'][y_prev]
        inp = concat_cols(emb, feed) if self.config.input_feed else emb
        new_state, layers = [], []
        for l in range(self.config.dec_layers):
            keep = None
            if l > 0:
                inp, keep = dropout(inp, self.config.dropout, rng, training)
            h, c, cell = lstm_cell(inp, *state[l], self[f'dec{l}.weight'], self[f'dec{l}.bias'])
            new_state.append((h, c))
            layers.append((keep, cell))
            inp = h
        attn_h, alpha, attn_cache = attend(inp, enc.annotations, self['attn.W_a'], self['attn.W_c'], enc.mask)
        out_in, out_keep = dropout(attn_h, self.config.dropout, rng, training)
        logits = add_rowwise(matmul(out_in, self['out.weight']), self['out.bias'])
        cache = _StepCache(y_prev, emb.shape[1], layers, attn_cache, out_in, out_keep)
        return logits, attn_h, new_state, alpha, cache

    def forward_loss(self, batch, training=False, rng=None, backward=True) -> float:
        """Teacher-forced cross entropy, averaged per pair and then over pairs.

        Each row is normalized by its own unpadded target length, so a batch
        scores the same as the mean of its pairs scored one at a time. With
        ``backward`` the gradients of every parameter are recomputed
        from zero.
        """
        if isinstance(batch, ChunkPair):
            batch = [batch]
        if not isinstance(batch, Batch):
            batch = Batch.from_chunks(list(batch), self.vocab, self.dtype)
        enc = self.encode(batch.src, batch.src_mask, training, rng)
        state = self._initial_state(enc)
        B, T = batch.tgt_in.shape
        V = len(self.vocab)
        feed = np.zeros((B, self.config.hidden_dim), dtype=self.dtype)
        logits = np.empty((B, T, V), dtype=self.dtype)
        caches = []
        for t in range(T):
            logits[:, t], feed, state, _, cache = self._decoder_step(
                batch.tgt_in[:, t], feed, state, enc, training, rng)
            caches.append(cache)
        weights = batch.tgt_mask / batch.tgt_mask.sum(axis=1, keepdims=True)
        loss, dlogits = cross_entropy(logits.reshape(B * T, V), batch.tgt_out.reshape(-1),
                                      weights.reshape(-1))
        if backward:
            self.zero_grad()
            self._backward(dlogits.reshape(B, T, V), enc, caches)
        return loss

    def _backward(self, dlogits, enc, caches):
        grads = {name: p.grad for name, p in self.params.items()}
        cfg = self.config
        H, L = cfg.hidden_dim, cfg.dec_layers
        B = dlogits.shape[0]
        d_ann = np.zeros_like(enc.annotations)
        dh = [np.zeros((B, H), dtype=self.dtype) for _ in range(L)]
        dc = [np.zeros((B, H), dtype=self.dtype) for _ in range(L)]
        dfeed = np.zeros((B, H), dtype=self.dtype)

        for t in reversed(range(len(caches))):
            cache = caches[t]
            dlog = dlogits[:, t]
            d_out_in, dW = matmul_backward(dlog, cache.out_in, self['out.weight'])
            grads['out.weight'] += dW
            grads['out.bias'] += dlog.sum(axis=0)
            d_attn_h = dropout_backward(d_out_in, cache.out_keep) + dfeed
            dquery, d_ann_t, dW_a, dW_c = attend_backward(d_attn_h, cache.attn)
            d_ann += d_ann_t
            grads['attn.W_a'] += dW_a
            grads['attn.W_c'] += dW_c
            dh[L - 1] = dh[L - 1] + dquery
            for l in reversed(range(L)):
                keep, cell = cache.layers[l]
                dx, dh[l], dc[l], dW, db = lstm_cell_backward(dh[l], dc[l], cell)
                grads[f'dec{l}.weight'] += dW
                grads[f'dec{l}.bias'] += db
                if l > 0:
                    dh[l - 1] = dh[l - 1] + dropout_backward(dx, keep)
                    continue
                demb, dfeed = concat_cols_backward(dx, cache.embed_dim)
                if not cfg.input_feed:
                    dfeed = np.zeros((B, H), dtype=self.dtype)
                np.add.at(grads['tgt_embed'], cache.y_prev, demb)

        d_finals = [[np.zeros((B, 2 * H), dtype=self.dtype) for _ in range(2)]
                    for _ in range(cfg.enc_layers)]
        for l in range(L):
            source = self._bridge_source(l)
            for k, (part, d_state) in enumerate((('h', dh[l]), ('c', dc[l]))):
                d_cat, dW = matmul_backward(d_state, enc.finals[source][k], self[f'bridge{l}.{part}.weight'])
                grads[f'bridge{l}.{part}.weight'] += dW
                grads[f'bridge{l}.{part}.bias'] += d_state.sum(axis=0)
                d_finals[source][k] += d_cat

        src, layer_caches = enc.cache
        S = src.shape[1]
        d_out = d_ann
        for l in reversed(range(cfg.enc_layers)):
            lc = layer_caches[l]
            d_in = np.zeros_like(lc.inputs)
            for direction, order, cols in (('fwd', range(S - 1, -1, -1), slice(0, H)),
                                           ('bwd', range(S), slice(H, 2 * H))):
                dh_t = d_finals[l][0][:, cols].copy()
                dc_t = d_finals[l][1][:, cols].copy()
                for t in order:
                    dh_t = dh_t + d_out[:, t, cols]
                    dx, dh_t, dc_t, dW, db = lstm_cell_backward(dh_t, dc_t, lc.steps[direction][t])
                    grads[f'enc{l}.{direction}.weight'] += dW
                    grads[f'enc{l}.{direction}.bias'] += db
                    d_in[:, t] += dx
            if l > 0:
                d_out = dropout_backward(d_in, lc.keep)
            else:
                np.add.at(grads['src_embed'], src, d_in)

    def decode_limit(self, src_len: int) -> int:
        return math.ceil(self.config.max_decode_factor * src_len)

    def _log_probs(self, logits) -> np.ndarray:
        logp = log_softmax_rows(logits)[0].astype(np.float64)
        logp[[PAD, BOS]] = -np.inf
        return logp

    def _start(self, src_ids):
        src = np.asarray(src_ids, dtype=np.int64).reshape(1, -1)
        enc = self.encode(src)
        feed = np.zeros((1, self.config.hidden_dim), dtype=self.dtype)
        return enc, self._initial_state(enc), feed, self.decode_limit(src.shape[1])

    def greedy_decode(self, src_ids) -> Hypothesis:
        """Argmax decoding; ties go to the lowest id."""
        enc, state, feed, limit = self._start(src_ids)
        ids, log_prob, attention = [], 0.0, []
        y = BOS
        for _ in range(limit):
            logits, feed, state, alpha, _ = self._decoder_step(np.array([y]), feed, state, enc)
            logp = self._log_probs(logits)
            y = int(np.argmax(logp))
            log_prob += float(logp[y])
            attention.append(alpha[0])
            if y == EOS:
                return Hypothesis(tuple(ids), log_prob, True, attention)
            ids.append(y)
        return Hypothesis(tuple(ids), log_prob, False, attention)

    def beam_decode(self, src_ids, beam_width: int | None = None) -> Hypothesis:
        """Beam search ranked by length-normalized log-probability."""
        width = self.config.beam_width if beam_width is None else beam_width
        if width < 1:
            raise ModelError('beam_width must be at least 1')
        enc, state, feed, limit = self._start(src_ids)
        alive = [_Beam((), 0.0, state, feed, [])]
        finished = []
        exhausted = True
        for _ in range(limit):
            candidates = []
            for index, beam in enumerate(alive):
                y = beam.ids[-1] if beam.ids else BOS
                logits, new_feed, new_state, alpha, _ = self._decoder_step(np.array([y]), beam.feed, beam.state, enc)
                logp = self._log_probs(logits)
                for token in np.flatnonzero(np.isfinite(logp)):
                    candidates.append((beam.log_prob + float(logp[token]), index, int(token),
                                       new_state, new_feed, alpha))
            candidates.sort(key=lambda cand: (-cand[0], cand[1], cand[2]))
            parents, alive = alive, []
            for score, index, token, new_state, new_feed, alpha in candidates[:width]:
                parent = parents[index]
                attention = parent.attention + [alpha[0]]
                if token == EOS:
                    finished.append(Hypothesis(parent.ids, score, True, attention))
                else:
                    alive.append(_Beam(parent.ids + (token,), score, new_state, new_feed, attention))
            if not alive or len(finished) >= width:
                exhausted = False
                break
        pool = list(finished)
        if exhausted:
            pool += [Hypothesis(b.ids, b.log_prob, False, b.attention) for b in alive]
        pool.append(self.greedy_decode(src_ids))
        return max(pool, key=lambda hyp: hyp.normalized)

    def score_hypothesis(self, src_ids, tgt_ids, finished=True) -> float:
        """Log-probability the decoder assigns to ``tgt_ids`` (plus EOS when finished)."""
        enc, state, feed, _ = self._start(src_ids)
        targets = list(tgt_ids) + ([EOS] if finished else [])
        total, y = 0.0, BOS
        for target in targets:
            logits, feed, state, _, _ = self._decoder_step(np.array([y]), feed, state, enc)
            total += float(self._log_probs(logits)[target])
            y = target
        return total

    def predict_sentence(self, text: str, beam_width: int = 1, dset: DiacriticSet | None = None) -> Prediction:
        """Diacritize one sentence chunk by chunk."""
        words = collapse(strip_diacritics(normalize(text), dset)).split()
        if not words:
            return Prediction('', [])
        n = self.config.chunk_size
        width = len(words) if n == SENTENCE else n
        outputs, diagnostics = [], []
        for index, start in enumerate(range(0, len(words), width)):
            piece = words[start:start + width]
            ids = self.vocab.encode(tokenize_chars(' '.join(piece).replace(BOUNDARY, UNK_MARK)))
            hyp = self.greedy_decode(ids) if beam_width <= 1 else self.beam_decode(ids, beam_width)
            out = detokenize(self.vocab.decode(hyp.ids))
            out_words = len(out.split())
            if out_words != len(piece):
                logger.warning('chunk %d: %d word(s) in, %d out', index, len(piece), out_words)
            outputs.append(out)
            diagnostics.append(ChunkDiagnostic(index, len(piece), out_words, out_words != len(piece), hyp.finished))
        return Prediction(' '.join(outputs), diagnostics)

    def translate_chunk(self, chunk: ChunkPair, beam_width: int = 1) -> str:
        ids = self.vocab.encode(chunk.src_tokens)
        hyp = self.greedy_decode(ids) if beam_width <= 1 else self.beam_decode(ids, beam_width)
        return detokenize(self.vocab.decode(hyp.ids))


def save_checkpoint(model: Seq2Seq, path, meta: dict | None = None):
    """Write the model to ``path``; equal models give equal bytes."""
    table, offset = [], 0
    for name, param in model.params.items():
        table.append({'name': name, 'shape': list(param.shape), 'offset': offset})
        offset += param.value.size
    header = {
        'config': asdict(model.config),
        'meta': meta or {},
        'params': table,
        'precision': model.precision,
        'vocab': list(model.vocab.tokens),
    }
    path = Path(path)
    tmp = path.with_name(path.name + '.tmp')
    try:
        with tmp.open('wb') as f:
            f.write(CHECKPOINT_MAGIC + b' %d\n' % CHECKPOINT_VERSION)
            f.write(json.dumps(header, sort_keys=True, ensure_ascii=False).encode('utf-8') + b'\n')
            for param in model.params.values():
                f.write(np.ascontiguousarray(param.value, dtype='<f8').tobytes())
        os.replace(tmp, path)
    except OSError as e:
        raise OSError(f'cannot write checkpoint {path}: {e.strerror or e}') from e


def load_checkpoint(path) -> tuple[Seq2Seq, dict]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OSError(f'cannot read checkpoint {path}: {e.strerror or e}') from e
    first = data.find(b'\n')
    second = data.find(b'\n', first + 1)
    if first < 0 or second < 0:
        raise CheckpointError(f'{path}: truncated checkpoint')
    magic, _, version = data[:first].partition(b' ')
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f'{path}: not a checkpoint file')
    if version != b'%d' % CHECKPOINT_VERSION:
        raise CheckpointError(f'{path}: unsupported checkpoint version {version.decode(errors="replace")}')
    try:
        header = json.loads(data[first + 1:second].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f'{path}: corrupt header ({e})') from e

    try:
        values = np.frombuffer(data[second + 1:], dtype='<f8')
        expected = sum(math.prod(entry['shape']) for entry in header['params'])
        if values.size != expected:
            raise CheckpointError(f'{path}: payload holds {values.size} values, header expects {expected}')
        try:
            check_finite(values, 'payload')
        except NonFiniteError as e:
            raise CheckpointError(f'{path}: {e}') from e
        dtype = dtype_for(header['precision'])
        params = {}
        for entry in header['params']:
            size = math.prod(entry['shape'])
            chunk = values[entry['offset']:entry['offset'] + size].reshape(entry['shape'])
            params[entry['name']] = Parameter(entry['name'], chunk.astype(dtype))
        model = Seq2Seq(ModelConfig(**header['config']), CharVocab(header['vocab']), params)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f'{path}: inconsistent header ({e})') from e
    return model, header.get('meta', {})
