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

import itertools
import math
from dataclasses import replace

import numpy as np
import pytest

from corpus import SENTENCE, ChunkPair, chunk_pairs, strip_diacritics
from model import (BOS, EOS, PAD, RESERVED, UNK, UNK_MARK, Batch, CharVocab,
                   CheckpointError, ModelConfig, ModelError, Seq2Seq, attend,
                   lstm_cell, load_checkpoint, save_checkpoint)
from neuralcore import Parameter, grad_check
from trainer import Adam


def chunk(src, tgt):
    return ChunkPair(tuple(src), tuple(tgt))


@pytest.fixture
def small_vocab():
    return CharVocab.build([chunk("abc", "axbycz")])


def make_model(vocab, seed=0, **overrides):
    settings = dict(embed_dim=8, hidden_dim=16, enc_layers=2, dec_layers=2, param_init=0.5)
    settings.update(overrides)
    return Seq2Seq.create(ModelConfig(**settings), vocab, seed=seed)


def test_vocab_layout(small_vocab):
    assert small_vocab.tokens[:4] == RESERVED
    assert list(small_vocab.tokens[4:]) == sorted(small_vocab.tokens[4:])
    assert "_" in small_vocab.index
    assert small_vocab.encode(["a", "q"]) == [small_vocab.index["a"], UNK]


def test_vocab_decode_skips_control_ids(small_vocab):
    a = small_vocab.index["a"]
    assert small_vocab.decode([BOS, a, UNK, PAD, EOS]) == ["a", UNK_MARK]


def test_vocab_rejects_bad_layouts():
    with pytest.raises(ModelError):
        CharVocab(["a", "b"])
    with pytest.raises(ModelError):
        CharVocab(list(RESERVED) + ["a", "a"])


def test_config_validation():
    with pytest.raises(ModelError):
        ModelConfig(attention="dot")
    with pytest.raises(ModelError):
        ModelConfig(dropout=1.0)
    with pytest.raises(ModelError):
        ModelConfig(enc_layers=0)


def test_lstm_cell_with_zero_weights():
    h, c, _ = lstm_cell(np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)), np.zeros((7, 16)), np.zeros(16))
    assert np.all(h == 0.0) and np.all(c == 0.0)


def test_lstm_cell_matches_scalar_formulas():
    rng = np.random.default_rng(3)
    x, h_prev, c_prev = rng.normal(size=(1, 2)), rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    weight, bias = rng.normal(size=(5, 12)), rng.normal(size=12)
    h, c, _ = lstm_cell(x, h_prev, c_prev, weight, bias)

    inputs = list(x[0]) + list(h_prev[0])
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    for j in range(3):
        z = [sum(inputs[k] * weight[k, g * 3 + j] for k in range(5)) + bias[g * 3 + j] for g in range(4)]
        cell = sig(z[1]) * c_prev[0, j] + sig(z[0]) * math.tanh(z[3])
        assert c[0, j] == pytest.approx(cell, abs=1e-12)
        assert h[0, j] == pytest.approx(sig(z[2]) * math.tanh(cell), abs=1e-12)


def test_lstm_cell_mask_carries_state():
    rng = np.random.default_rng(4)
    h_prev, c_prev = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    h, c, _ = lstm_cell(rng.normal(size=(2, 2)), h_prev, c_prev, rng.normal(size=(5, 12)), np.zeros(12),
                        mask=np.array([[1.0], [0.0]]))
    assert np.array_equal(h[1], h_prev[1])
    assert np.array_equal(c[1], c_prev[1])
    assert not np.array_equal(h[0], h_prev[0])


def test_attend_single_position():
    rng = np.random.default_rng(5)
    _, alpha, _ = attend(rng.normal(size=(1, 3)), rng.normal(size=(1, 1, 6)), rng.normal(size=(3, 6)),
                         rng.normal(size=(9, 3)))
    assert alpha.tolist() == [[1.0]]


def test_attend_identical_annotations_are_uniform():
    rng = np.random.default_rng(6)
    annotations = np.repeat(rng.normal(size=(1, 1, 6)), 4, axis=1)
    _, alpha, _ = attend(rng.normal(size=(1, 3)), annotations, rng.normal(size=(3, 6)), rng.normal(size=(9, 3)))
    assert np.allclose(alpha, 0.25, atol=1e-12)


def test_attend_with_zero_scores_is_uniform():
    rng = np.random.default_rng(8)
    _, alpha, _ = attend(rng.normal(size=(2, 3)), rng.normal(size=(2, 5, 6)), np.zeros((3, 6)),
                         rng.normal(size=(9, 3)))
    assert np.allclose(alpha, 0.2, atol=1e-12)


def test_attend_matches_direct_formula():
    rng = np.random.default_rng(9)
    query, annotations = rng.normal(size=(1, 3)), rng.normal(size=(1, 4, 6))
    W_a, W_c = rng.normal(size=(3, 6)), rng.normal(size=(9, 3))
    attn_h, alpha, _ = attend(query, annotations, W_a, W_c)

    q, ann = query[0], annotations[0]
    scores = [sum(q[i] * W_a[i, j] * ann[s, j] for i in range(3) for j in range(6)) for s in range(4)]
    weights = [math.exp(v) / sum(math.exp(u) for u in scores) for v in scores]
    context = [sum(weights[s] * ann[s, j] for s in range(4)) for j in range(6)]
    joined = context + list(q)
    expected = [math.tanh(sum(joined[k] * W_c[k, j] for k in range(9))) for j in range(3)]
    assert alpha[0].tolist() == pytest.approx(weights, abs=1e-12)
    assert attn_h[0].tolist() == pytest.approx(expected, abs=1e-12)


def test_attend_weights_are_a_distribution_and_respect_mask():
    rng = np.random.default_rng(7)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=float)
    attn_h, alpha, _ = attend(rng.normal(size=(2, 3)), rng.normal(size=(2, 4, 6)), rng.normal(size=(3, 6)),
                              rng.normal(size=(9, 3)), mask)
    assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(alpha[1, 2:] == 0.0)
    assert attn_h.shape == (2, 3)


def reference_lstm_step(x, h, c, weight, bias):
    hidden = h.shape[0]
    z = np.concatenate([x, h]) @ weight + bias
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    i, f, o = sig(z[:hidden]), sig(z[hidden:2 * hidden]), sig(z[2 * hidden:3 * hidden])
    c = f * c + i * np.tanh(z[3 * hidden:])
    return o * np.tanh(c), c


def test_encode_matches_unrolled_loop(small_vocab):
    model = make_model(small_vocab)
    ids = small_vocab.encode("abcab")
    enc = model.encode(ids)
    H = model.config.hidden_dim

    inputs = [model["src_embed"][i] for i in ids]
    for l in range(model.config.enc_layers):
        forward, backward = [None] * len(ids), [None] * len(ids)
        h, c = np.zeros(H), np.zeros(H)
        for t in range(len(ids)):
            h, c = reference_lstm_step(inputs[t], h, c, model[f"enc{l}.fwd.weight"], model[f"enc{l}.fwd.bias"])
            forward[t] = h
        last_forward = (h, c)
        h, c = np.zeros(H), np.zeros(H)
        for t in reversed(range(len(ids))):
            h, c = reference_lstm_step(inputs[t], h, c, model[f"enc{l}.bwd.weight"], model[f"enc{l}.bwd.bias"])
            backward[t] = h
        inputs = [np.concatenate([f, b]) for f, b in zip(forward, backward)]
        h_final, c_final = enc.finals[l]
        # the backward direction ends on the first source position
        assert np.allclose(h_final[0], np.concatenate([last_forward[0], backward[0]]), atol=1e-12)
        assert np.allclose(c_final[0], np.concatenate([last_forward[1], c]), atol=1e-12)

    assert np.allclose(enc.annotations[0], np.stack(inputs), atol=1e-12)


def test_encode_shapes_and_empty_input(small_vocab):
    model = make_model(small_vocab)
    enc = model.encode(small_vocab.encode("abc"))
    assert enc.annotations.shape == (1, 3, 32)
    assert len(enc.finals) == 2
    with pytest.raises(ModelError):
        model.encode([])


@pytest.mark.parametrize("overrides, training", [
    ({}, False),
    ({"dropout": 0.3}, True),
    ({"input_feed": False, "enc_layers": 1, "dec_layers": 3}, False),
])
def test_gradients_match_finite_differences(small_vocab, overrides, training):
    # unit-scale init keeps every sampled gradient well above rounding noise
    model = make_model(small_vocab, param_init=1.0, **overrides)
    batch = Batch.from_chunks([chunk("abc", "axbyc")], small_vocab)

    def loss_fn(with_grad):
        rng = np.random.default_rng(5)
        return model.forward_loss(batch, training=training, rng=rng, backward=with_grad)

    assert grad_check(loss_fn, model.parameters(), samples=300) < 1e-4


def test_batched_gradients_match_padded_pairs(toy_vocab, toy_chunks):
    model = make_model(toy_vocab, hidden_dim=6, embed_dim=5)
    chunks = sorted(toy_chunks[:5], key=lambda c: len(c.src_tokens))
    assert len({len(c.src_tokens) for c in chunks}) > 1
    assert len({len(c.tgt_tokens) for c in chunks}) > 1

    batch = Batch.from_chunks(chunks, toy_vocab)
    batch_loss = model.forward_loss(batch)
    batch_grads = {name: p.grad.copy() for name, p in model.params.items()}

    total = 0.0
    summed = {name: np.zeros_like(g) for name, g in batch_grads.items()}
    for c in chunks:
        total += model.forward_loss(c)
        for name, p in model.params.items():
            summed[name] += p.grad

    assert batch_loss == pytest.approx(total / len(chunks), abs=1e-9)
    for name, grad in batch_grads.items():
        assert np.allclose(grad, summed[name] / len(chunks), atol=1e-9), name


def test_batch_loss_is_the_mean_of_pair_losses(small_vocab):
    model = make_model(small_vocab)
    pairs = [chunk("a", "ax"), chunk("abc", "axbycz"), chunk("ab", "ab")]
    singles = [model.forward_loss(p, backward=False) for p in pairs]
    assert model.forward_loss(pairs, backward=False) == pytest.approx(np.mean(singles), abs=1e-9)


def test_untrained_loss_is_near_uniform(toy_vocab, toy_chunks):
    model = Seq2Seq.create(ModelConfig(embed_dim=16, hidden_dim=32), toy_vocab, seed=1)
    loss = model.forward_loss(toy_chunks[:8], backward=False)
    assert abs(loss - math.log(len(toy_vocab))) < 0.15 * math.log(len(toy_vocab))


def test_batch_rejects_empty_chunks(small_vocab):
    with pytest.raises(ModelError):
        Batch.from_chunks([], small_vocab)
    with pytest.raises(ModelError):
        Batch.from_chunks([chunk("", "a")], small_vocab)


def test_greedy_decode_contract(tiny_model, toy_chunks):
    for c in toy_chunks[:10]:
        ids = tiny_model.vocab.encode(c.src_tokens)
        hyp = tiny_model.greedy_decode(ids)
        assert PAD not in hyp.ids and BOS not in hyp.ids and EOS not in hyp.ids
        assert len(hyp.ids) <= tiny_model.decode_limit(len(ids))
        assert all(abs(a.sum() - 1.0) < 1e-9 for a in hyp.attention)
        assert hyp.log_prob == pytest.approx(tiny_model.score_hypothesis(ids, hyp.ids, hyp.finished), abs=1e-9)


def test_beam_of_one_is_greedy(toy_vocab):
    rng = np.random.default_rng(0)
    letters = toy_vocab.tokens[4:]
    for trial in range(100):
        model = Seq2Seq.create(ModelConfig(embed_dim=4, hidden_dim=4, enc_layers=1, dec_layers=1,
                                           param_init=1.0, max_decode_factor=1.5), toy_vocab, seed=trial)
        ids = toy_vocab.encode(rng.choice(letters, size=int(rng.integers(1, 5))))
        assert model.beam_decode(ids, 1).ids == model.greedy_decode(ids).ids


def test_beam_is_never_worse_than_greedy(tiny_model, toy_chunks):
    for c in toy_chunks[:5]:
        ids = tiny_model.vocab.encode(c.src_tokens)
        assert tiny_model.beam_decode(ids, 3).normalized >= tiny_model.greedy_decode(ids).normalized


def test_beam_matches_exhaustive_search():
    vocab = CharVocab(list(RESERVED) + ["a", "b"])
    choices = [UNK, 4, 5]
    for seed in range(5):
        model = Seq2Seq.create(ModelConfig(embed_dim=4, hidden_dim=5, param_init=1.0, max_decode_factor=2.0),
                               vocab, seed=seed)
        src = [4]
        candidates = [((), True)] + [((t,), True) for t in choices]
        candidates += [(pair, False) for pair in itertools.product(choices, repeat=2)]

        def normalized(cand):
            ids, finished = cand
            length = len(ids) + (1 if finished else 0)
            return model.score_hypothesis(src, ids, finished) / length

        best = max(candidates, key=normalized)
        found = model.beam_decode(src, 16)
        assert found.normalized == pytest.approx(normalized(best), abs=1e-9)
        assert found.ids == best[0]


def test_beam_rejects_zero_width(tiny_model):
    with pytest.raises(ModelError):
        tiny_model.beam_decode([4], 0)


def test_predict_sentence_chunks_and_strips(tiny_model, toy_pairs):
    model = Seq2Seq(replace(tiny_model.config, chunk_size=2), tiny_model.vocab, tiny_model.params)
    sentence = " ".join(toy_pairs[0].tgt.split() * 3)
    prediction = model.predict_sentence(sentence)
    assert len(prediction.chunks) == math.ceil(len(sentence.split()) / 2)
    assert [c.input_words for c in prediction.chunks][0] == 2
    assert prediction.text == model.predict_sentence(strip_diacritics(sentence)).text


def test_predict_sentence_edge_cases(tiny_model):
    assert tiny_model.predict_sentence("   ").text == ""
    assert tiny_model.predict_sentence("   ").chunks == []
    prediction = tiny_model.predict_sentence("a_b")
    assert len(prediction.chunks) == 1


def test_single_pair_is_memorized(toy_pairs):
    pair = toy_pairs[0]
    (c,) = chunk_pairs(pair, SENTENCE)
    vocab = CharVocab.build([c])
    model = Seq2Seq.create(ModelConfig(embed_dim=16, hidden_dim=32, chunk_size=SENTENCE), vocab, seed=2)
    optimizer = Adam(model.parameters())
    batch = Batch.from_chunks([c], vocab)
    for _ in range(400):
        loss = model.forward_loss(batch)
        optimizer.step(0.01)
    assert loss < 0.05
    assert model.predict_sentence(pair.src).text == pair.tgt


def test_checkpoint_roundtrip(tmp_path, tiny_model):
    path = tmp_path / "model.ckpt"
    save_checkpoint(tiny_model, path, {"profile": "desk", "step": 3})
    loaded, meta = load_checkpoint(path)
    assert meta == {"profile": "desk", "step": 3}
    assert loaded.config == tiny_model.config
    assert loaded.vocab == tiny_model.vocab
    for name, p in tiny_model.params.items():
        assert np.array_equal(loaded[name], p.value)
    save_checkpoint(loaded, tmp_path / "again.ckpt", meta)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
    assert path.read_bytes().startswith(b"HARAKAT-CHECKPOINT 1\n")


def test_checkpoint_keeps_precision(tmp_path, toy_vocab):
    model = Seq2Seq.create(ModelConfig(embed_dim=4, hidden_dim=4), toy_vocab, seed=1, precision=32)
    save_checkpoint(model, tmp_path / "m.ckpt")
    loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
    assert loaded.dtype == np.float32
    assert loaded.precision == 32


def test_checkpoint_rejects_damaged_files(tmp_path, tiny_model):
    path = tmp_path / "model.ckpt"
    save_checkpoint(tiny_model, path)
    data = path.read_bytes()
    (tmp_path / "short.ckpt").write_bytes(data[:-8])
    (tmp_path / "ragged.ckpt").write_bytes(data[:-3])
    (tmp_path / "magic.ckpt").write_bytes(b"OTHER" + data[len(b"HARAKAT-CHECKPOINT"):])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short.ckpt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ragged.ckpt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "magic.ckpt")
    with pytest.raises(OSError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_checkpoint_with_non_finite_values_is_rejected(tmp_path, tiny_model):
    path = tmp_path / "model.ckpt"
    save_checkpoint(tiny_model, path)
    data = bytearray(path.read_bytes())
    data[-8:] = np.array([np.nan], dtype="<f8").tobytes()
    (tmp_path / "nan.ckpt").write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="NaN or Inf"):
        load_checkpoint(tmp_path / "nan.ckpt")


def test_model_rejects_non_finite_parameters(tiny_model):
    params = {name: Parameter(name, p.value.copy()) for name, p in tiny_model.params.items()}
    params["out.bias"].value[0] = np.inf
    with pytest.raises(ModelError, match="out.bias"):
        Seq2Seq(tiny_model.config, tiny_model.vocab, params)
