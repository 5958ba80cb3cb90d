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

"""Dense numeric layer the seq2seq network is assembled from.

Every op comes as a forward function plus a hand-derived ``*_backward``
counterpart. Matrices are plain 2-D numpy arrays in row-major order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

logger = logging.getLogger(__name__)

Matrix = np.ndarray

DTYPES = {32: np.float32, 64: np.float64}


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def dtype_for(precision: int):
    try:
        return DTYPES[int(precision)]
    except (KeyError, ValueError):
        raise ValueError(f'precision must be 32 or 64, got {precision!r}') from None


def check_finite(a: Matrix, name: str = 'matrix') -> Matrix:
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f'{name} contains NaN or Inf')
    return a


@dataclass(eq=False)
class Parameter:
    """A learnable tensor with its gradient buffer."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0)


def _require_2d(a: Matrix, op: str):
    if a.ndim != 2:
        raise ShapeError(f'{op}: expected a 2-D matrix, got shape {a.shape}')


def matmul(a: Matrix, b: Matrix) -> Matrix:
    _require_2d(a, 'matmul')
    _require_2d(b, 'matmul')
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f'matmul: cannot multiply {a.shape} by {b.shape}')
    return a @ b


def matmul_backward(dc: Matrix, a: Matrix, b: Matrix) -> tuple[Matrix, Matrix]:
    return dc @ b.T, a.T @ dc


def add_rowwise(a: Matrix, b: np.ndarray) -> Matrix:
    """Add the vector ``b`` to every row of ``a``."""
    _require_2d(a, 'add_rowwise')
    if b.size != a.shape[1] or b.ndim > 2 or (b.ndim == 2 and b.shape[0] != 1):
        raise ShapeError(f'add_rowwise: cannot add {b.shape} to rows of {a.shape}')
    return a + b.reshape(1, -1)


def add_rowwise_backward(dc: Matrix) -> tuple[Matrix, np.ndarray]:
    return dc, dc.sum(axis=0)


def concat_cols(a: Matrix, b: Matrix) -> Matrix:
    _require_2d(a, 'concat_cols')
    _require_2d(b, 'concat_cols')
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f'concat_cols: row counts differ, {a.shape} and {b.shape}')
    return np.concatenate([a, b], axis=1)


def concat_cols_backward(dc: Matrix, left_cols: int) -> tuple[Matrix, Matrix]:
    return dc[:, :left_cols], dc[:, left_cols:]


def sigmoid(a: Matrix) -> Matrix:
    # tanh form never overflows and gives exactly 0.5 at 0
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def sigmoid_backward(dy: Matrix, y: Matrix) -> Matrix:
    return dy * y * (1.0 - y)


def tanh(a: Matrix) -> Matrix:
    return np.tanh(a)


def tanh_backward(dy: Matrix, y: Matrix) -> Matrix:
    return dy * (1.0 - y * y)


def softmax_rows(a: Matrix) -> Matrix:
    shifted = a - a.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(dy: Matrix, y: Matrix) -> Matrix:
    return y * (dy - (dy * y).sum(axis=1, keepdims=True))


def log_softmax_rows(a: Matrix) -> Matrix:
    shifted = a - a.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: Matrix, targets: Iterable[int], mask=None) -> tuple[float, Matrix]:
    """Mean negative log-probability of ``targets`` over unmasked rows.

    Returns the loss together with its gradient with respect to ``logits``.
    Masked rows contribute neither to the loss nor to the gradient.
    """
    _require_2d(logits, 'cross_entropy')
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    rows, classes = logits.shape
    if targets.shape[0] != rows:
        raise ShapeError(f'cross_entropy: {rows} rows but {targets.shape[0]} targets')
    if targets.size and (targets.min() < 0 or targets.max() >= classes):
        raise IndexError(f'cross_entropy: target index out of range [0, {classes})')
    weights = np.ones(rows, dtype=logits.dtype) if mask is None else np.asarray(mask, dtype=logits.dtype).reshape(-1)
    count = weights.sum()
    if count <= 0:
        raise ValueError('cross_entropy: every position is masked')

    logp = log_softmax_rows(logits)
    index = np.arange(rows)
    nll = -logp[index, targets]
    loss = float((nll * weights).sum() / count)

    grad = np.exp(logp)
    grad[index, targets] -= 1.0
    grad *= (weights / count)[:, None]
    return loss, grad


def dropout(a: Matrix, rate: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout. Returns the output and the scaled keep mask (or None)."""
    if not training or rate <= 0.0 or rng is None:
        return a, None
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    return a * keep, keep


def dropout_backward(d: Matrix, keep) -> Matrix:
    return d if keep is None else d * keep


def global_norm(params: Iterable[Parameter]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params)))


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    norm = global_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


def grad_check(loss_fn: Callable[[bool], float], params: list[Parameter],
               eps: float = 1e-5, samples: int = 200, seed: int = 0) -> float:
    """Compare analytic gradients against central differences.

    ``loss_fn(True)`` must return the loss and leave fresh gradients in every
    ``Parameter.grad``; ``loss_fn(False)`` only returns the loss. At most
    ``samples`` coordinates are checked (all of them when there are fewer).
    Returns the largest relative error, with denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    for p in params:
        if p.value.dtype != np.float64:
            raise ValueError(f'grad_check needs 64-bit parameters; {p.name} is {p.value.dtype}')

    base = loss_fn(True)
    if not np.isfinite(base):
        raise NonFiniteError('grad_check: loss is not finite')
    analytic = [p.grad.copy() for p in params]

    sizes = np.array([p.value.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    if total <= samples:
        picks = np.arange(total)
    else:
        picks = np.sort(rng.choice(total, size=samples, replace=False))

    worst = 0.0
    for flat in picks:
        which = int(np.searchsorted(offsets, flat, side='right') - 1)
        param = params[which]
        index = np.unravel_index(int(flat - offsets[which]), param.shape)
        original = param.value[index]
        param.value[index] = original + eps
        plus = loss_fn(False)
        param.value[index] = original - eps
        minus = loss_fn(False)
        param.value[index] = original
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NonFiniteError(f'grad_check: loss not finite around {param.name}{list(index)}')
        numeric = (plus - minus) / (2.0 * eps)
        exact = float(analytic[which][index])
        error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
        if error > worst:
            logger.debug('grad_check %s%s analytic=%.6e numeric=%.6e', param.name, list(index), exact, numeric)
            worst = error
    return worst
