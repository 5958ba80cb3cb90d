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

"""Mini-batch training, validation and the chunk-size sweep."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence, TextIO

import numpy as np

from ambiguity import build_lexicon
from corpus import (MAX_CHUNK, SENTENCE, ChunkPair, CorpusSplit, DiacriticSet,
                    chunk_corpus, chunk_label)
from evaluation import baseline_report, corpus_wer, no_prediction
from model import Batch, CharVocab, ModelConfig, Seq2Seq, save_checkpoint
from neuralcore import Parameter, clip_grad_norm

logger = logging.getLogger(__name__)

SWEEP_SIZES = tuple(range(1, MAX_CHUNK + 1)) + (SENTENCE,)
OPTIMIZERS = ('adam', 'sgd')


class TrainingError(RuntimeError):
    def __init__(self, message: str, step: int, last_good_step: int):
        super().__init__(message)
        self.step = step
        self.last_good_step = last_good_step


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 64
    optimizer: str = 'adam'
    learning_rate: float = 1e-3
    decay: float = 1.0
    decay_start: int = 0
    decay_every: int = 0
    max_grad_norm: float = 5.0
    seed: int = 1
    validate_every: int = 500
    checkpoint_every: int = 500
    log_every: int = 100
    shuffle_window: int = 20
    precision: int = 64
    profile: str = 'desk'

    def __post_init__(self):
        if self.steps <= 0:
            raise ValueError(f'steps must be positive, got {self.steps}')
        if self.batch_size < 1:
            raise ValueError(f'batch_size must be at least 1, got {self.batch_size}')
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f'optimizer must be one of {", ".join(OPTIMIZERS)}')
        if self.learning_rate <= 0:
            raise ValueError('learning_rate must be positive')
        if self.decay_start and self.decay_every <= 0:
            raise ValueError('decay_every must be positive when decay_start is set')

    @classmethod
    def for_profile(cls, profile: str, **overrides) -> 'TrainConfig':
        """``desk`` trains small models with Adam; ``paper`` uses plain SGD with halving."""
        if profile == 'desk':
            base = dict(optimizer='adam', learning_rate=1e-3)
        elif profile == 'paper':
            steps = overrides.get('steps', 100_000)
            base = dict(steps=steps, optimizer='sgd', learning_rate=1.0, decay=0.5,
                        decay_start=steps // 2, decay_every=max(steps // 10, 1),
                        validate_every=5000, checkpoint_every=5000)
        else:
            raise ValueError(f'unknown profile {profile!r}')
        base.update(overrides)
        return cls(profile=profile, **base)

    def learning_rate_at(self, step: int) -> float:
        if not self.decay_start or step <= self.decay_start:
            return self.learning_rate
        halvings = 1 + (step - self.decay_start - 1) // self.decay_every
        return self.learning_rate * self.decay ** halvings


class SGD:
    def __init__(self, params: list[Parameter]):
        self.params = params

    def step(self, lr: float):
        for p in self.params:
            p.value -= lr * p.grad


class Adam:
    def __init__(self, params: list[Parameter], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for p, m, v in zip(self.params, self.m, self.v):
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            p.value -= scale * m / (np.sqrt(v) + self.eps)


def make_optimizer(config: TrainConfig, params: list[Parameter]):
    return Adam(params) if config.optimizer == 'adam' else SGD(params)


def make_batches(chunks: Sequence[ChunkPair], batch_size: int, seed, window: int = 20) -> Iterator[list[ChunkPair]]:
    """Endless stream of batches, reshuffled every epoch.

    Each epoch is shuffled, cut into windows of ``window`` batches, and
    each window is sorted by source length before being batched.
    """
    if not chunks:
        raise ValueError('cannot batch an empty dataset')
    if batch_size < 1:
        raise ValueError('batch_size must be at least 1')
    rng = np.random.Generator(np.random.PCG64(seed))
    span = batch_size * max(window, 1)
    while True:
        order = rng.permutation(len(chunks))
        for start in range(0, len(order), span):
            piece = sorted(order[start:start + span], key=lambda i: len(chunks[i].src_tokens))
            for b in range(0, len(piece), batch_size):
                yield [chunks[i] for i in piece[b:b + batch_size]]


@dataclass
class TrainLog:
    losses: list = field(default_factory=list)
    validations: list = field(default_factory=list)
    elapsed: float = 0.0

    def record_loss(self, step: int, loss: float):
        if self.losses and step <= self.losses[-1][0]:
            raise ValueError(f'step {step} is not after {self.losses[-1][0]}')
        self.losses.append((step, loss))

    def record_validation(self, step: int, loss: float, wer: float):
        if self.validations and step <= self.validations[-1][0]:
            raise ValueError(f'step {step} is not after {self.validations[-1][0]}')
        self.validations.append((step, loss, wer))

    def write(self, directory):
        directory = Path(directory)
        with (directory / 'train.log').open('w', encoding='utf-8', newline='\n') as f:
            for step, loss in self.losses:
                f.write(f'{step}\t{loss!r}\n')
        with (directory / 'valid.log').open('w', encoding='utf-8', newline='\n') as f:
            for step, loss, wer in self.validations:
                f.write(f'{step}\t{loss!r}\t{wer!r}\n')


@dataclass
class TrainResult:
    model: Seq2Seq
    best: Seq2Seq | None
    log: TrainLog
    best_step: int = 0

    @property
    def selected(self) -> Seq2Seq:
        """Best validation model, falling back to the final one."""
        return self.best if self.best is not None else self.model


def _snapshot(model: Seq2Seq) -> Seq2Seq:
    params = {name: Parameter(name, p.value.copy()) for name, p in model.params.items()}
    return Seq2Seq(model.config, model.vocab, params)


def batch_loss(model: Seq2Seq, chunks: Sequence[ChunkPair], batch_size: int = 64) -> float:
    """Mean per-pair loss over ``chunks``, no gradients."""
    total = 0.0
    for start in range(0, len(chunks), batch_size):
        batch = Batch.from_chunks(chunks[start:start + batch_size], model.vocab, model.dtype)
        total += model.forward_loss(batch, backward=False) * batch.size
    return total / len(chunks)


def validate(model: Seq2Seq, chunks: Sequence[ChunkPair], batch_size: int = 64) -> tuple[float, float]:
    """Teacher-forced loss and greedy chunk-level WER."""
    if not chunks:
        raise ValueError('validation set is empty')
    loss = batch_loss(model, chunks, batch_size)
    hyps = [model.translate_chunk(chunk) for chunk in chunks]
    report = corpus_wer([chunk.tgt_text for chunk in chunks], hyps)
    return loss, report.micro


def train(train_chunks: Sequence[ChunkPair], model: Seq2Seq, config: TrainConfig,
          valid_chunks: Sequence[ChunkPair] = (), out_dir=None, meta: dict | None = None) -> TrainResult:
    """Run exactly ``config.steps`` updates on ``model`` in place."""
    batch_seed, dropout_seed = np.random.SeedSequence(config.seed).spawn(2)
    batches = make_batches(train_chunks, config.batch_size, batch_seed, config.shuffle_window)
    dropout_rng = np.random.Generator(np.random.PCG64(dropout_seed))
    params = model.parameters()
    optimizer = make_optimizer(config, params)
    out_dir = Path(out_dir) if out_dir is not None else None
    meta = dict(meta or {}, profile=config.profile, seed=config.seed)

    log = TrainLog()
    best, best_step, best_loss = None, 0, math.inf
    last_good = 0
    started = time.monotonic()
    logger.info('training %d steps, batch %d, %s lr %g', config.steps, config.batch_size,
                config.optimizer, config.learning_rate)
    for step in range(1, config.steps + 1):
        batch = Batch.from_chunks(next(batches), model.vocab, model.dtype)
        loss = model.forward_loss(batch, training=True, rng=dropout_rng)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(p.grad)) for p in params):
            if out_dir is not None:
                save_checkpoint(model, out_dir / 'last.ckpt', dict(meta, step=last_good))
                log.write(out_dir)
            raise TrainingError(f'non-finite loss at step {step}', step, last_good)
        clip_grad_norm(params, config.max_grad_norm)
        optimizer.step(config.learning_rate_at(step))
        log.record_loss(step, loss)
        last_good = step
        if step % config.log_every == 0:
            logger.info('step %d loss %.4f', step, loss)

        if valid_chunks and (step % config.validate_every == 0 or step == config.steps):
            v_loss, v_wer = validate(model, valid_chunks, config.batch_size)
            log.record_validation(step, v_loss, v_wer)
            logger.info('step %d valid loss %.4f wer %.2f', step, v_loss, 100.0 * v_wer)
            if v_loss < best_loss:
                best, best_step, best_loss = _snapshot(model), step, v_loss
                if out_dir is not None:
                    save_checkpoint(best, out_dir / 'best.ckpt', dict(meta, step=step))
        if out_dir is not None and (step % config.checkpoint_every == 0 or step == config.steps):
            save_checkpoint(model, out_dir / 'last.ckpt', dict(meta, step=step))

    log.elapsed = time.monotonic() - started
    if out_dir is not None:
        log.write(out_dir)
    return TrainResult(model=model, best=best, log=log, best_step=best_step)


@dataclass
class SweepCell:
    chunk_size: int
    wer: float | None = None
    error: str | None = None

    @property
    def label(self) -> str:
        if self.chunk_size == SENTENCE:
            return 'Sentence'
        return f'{self.chunk_size} word' + ('' if self.chunk_size == 1 else 's')


@dataclass
class SweepReport:
    no_prediction: float
    cells: list
    baseline: float | None = None

    @property
    def columns(self) -> list[tuple[str, float | None]]:
        cols = [('No prediction', self.no_prediction)]
        if self.baseline is not None:
            cols.append(('Baseline', self.baseline))
        cols += [(cell.label, cell.wer) for cell in self.cells]
        return cols

    @property
    def best(self) -> SweepCell | None:
        done = [cell for cell in self.cells if cell.wer is not None]
        return min(done, key=lambda cell: cell.wer) if done else None

    @property
    def reduction(self) -> float | None:
        best = self.best
        return None if best is None else self.no_prediction - best.wer

    def write_csv(self, stream: TextIO):
        best = self.best
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow([label for label, _ in self.columns] + ['Best', 'Reduction'])
        writer.writerow([_percent(value) for _, value in self.columns]
                        + [best.label if best else 'none', _percent(self.reduction)])

    def context(self) -> dict:
        best = self.best
        return {
            'columns': [(label, _percent(value)) for label, value in self.columns],
            'best': best.label if best else None,
            'reduction': _percent(self.reduction),
            'failures': [(cell.label, cell.error) for cell in self.cells if cell.error],
        }


def _percent(value: float | None) -> str:
    return 'failed' if value is None else f'{100.0 * value:.2f}'


def run_cell(chunk_size: int, split: CorpusSplit, model_config: ModelConfig,
             train_config: TrainConfig, out_dir=None, meta: dict | None = None) -> SweepCell:
    """Train and test one chunk size; failures are reported, not raised.

    ``meta`` goes into every checkpoint of the cell; its ``diacritics`` entry,
    when present, is the set stripped from the test sources.
    """
    label = chunk_label(chunk_size)
    try:
        dset = DiacriticSet.parse(meta['diacritics']) if meta and 'diacritics' in meta else None
        train_chunks, _ = chunk_corpus(split.train, chunk_size)
        valid_chunks, _ = chunk_corpus(split.valid, chunk_size)
        vocab = CharVocab.build(train_chunks)
        config = replace(model_config, chunk_size=chunk_size)
        model = Seq2Seq.create(config, vocab, seed=train_config.seed, precision=train_config.precision)
        cell_dir = None
        if out_dir is not None:
            cell_dir = Path(out_dir) / f'c{label}'
            cell_dir.mkdir(parents=True, exist_ok=True)
        result = train(train_chunks, model, train_config, valid_chunks, cell_dir, meta)
        selected = result.selected
        hyps = [selected.predict_sentence(pair.src, dset=dset).text for pair in split.test]
        report = corpus_wer([pair.tgt for pair in split.test], hyps)
        logger.info('chunk size %s: test WER %s', label, report.as_percent())
        return SweepCell(chunk_size, wer=report.micro)
    except Exception as e:
        logger.error('chunk size %s failed: %s', label, e)
        return SweepCell(chunk_size, error=str(e) or type(e).__name__)


def sweep(split: CorpusSplit, model_config: ModelConfig, train_config: TrainConfig,
          sizes: Sequence[int] = SWEEP_SIZES, workers: int = 1, baseline: bool = True,
          out_dir=None, meta: dict | None = None) -> SweepReport:
    """One model per chunk size, same split and seed, scored on the test split."""
    if not split.test:
        raise ValueError('the test split is empty')
    refs = [pair.tgt for pair in split.test]
    srcs = [pair.src for pair in split.test]
    report = SweepReport(no_prediction=no_prediction(refs, srcs).micro, cells=[])
    if baseline:
        report.baseline = baseline_report(build_lexicon(split.train), srcs, refs).micro

    args = [(size, split, model_config, train_config, out_dir, meta) for size in sizes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, *a) for a in args]
            report.cells = [f.result() for f in futures]
    else:
        report.cells = [run_cell(*a) for a in args]
    return report
