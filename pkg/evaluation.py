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

"""Word error rate over diacritized words, plus the two reference baselines.

A word counts as correct only when every one of its diacritics matches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ambiguity import AmbiguityLexicon
from corpus import normalize

logger = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class WerCounts:
    S: int = 0
    D: int = 0
    I: int = 0
    C: int = 0

    def __add__(self, other: 'WerCounts') -> 'WerCounts':
        return WerCounts(self.S + other.S, self.D + other.D, self.I + other.I, self.C + other.C)

    @property
    def ref_len(self) -> int:
        return self.S + self.D + self.C

    @property
    def hyp_len(self) -> int:
        return self.S + self.I + self.C


def align_words(ref: Sequence[str], hyp: Sequence[str]) -> WerCounts:
    """Minimal edit alignment; among minimal ones, the most matches win."""
    ref = [normalize(w) for w in ref]
    hyp = [normalize(w) for w in hyp]
    n, m = len(ref), len(hyp)
    # cell = (edits, -correct), compared lexicographically
    edits = np.zeros((n + 1, m + 1), dtype=np.int64)
    correct = np.zeros((n + 1, m + 1), dtype=np.int64)
    edits[:, 0] = np.arange(n + 1)
    edits[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            same = ref[i - 1] == hyp[j - 1]
            options = (
                (edits[i - 1, j - 1] + (0 if same else 1), -(correct[i - 1, j - 1] + (1 if same else 0))),
                (edits[i - 1, j] + 1, -correct[i - 1, j]),
                (edits[i, j - 1] + 1, -correct[i, j - 1]),
            )
            e, neg_c = min(options)
            edits[i, j], correct[i, j] = e, -neg_c
    e, c = int(edits[n, m]), int(correct[n, m])
    s = (n - c) + (m - c) - e
    return WerCounts(S=s, D=n - c - s, I=m - c - s, C=c)


def wer(counts: WerCounts) -> float:
    denominator = counts.S + counts.D + counts.C
    if denominator == 0:
        raise EvaluationError('WER is undefined for an empty reference')
    return (counts.S + counts.D + counts.I) / denominator


@dataclass
class WerReport:
    sentences: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.sentences)

    @property
    def totals(self) -> WerCounts:
        return sum(self.sentences, WerCounts())

    @property
    def micro(self) -> float:
        return wer(self.totals)

    @property
    def macro(self) -> float:
        """Mean per-sentence WER; sentences with an empty reference are left out."""
        scored = [wer(c) for c in self.sentences if c.ref_len]
        if not scored:
            raise EvaluationError('every reference sentence is empty')
        return float(np.mean(scored))

    def as_percent(self, macro: bool = False) -> str:
        return f'{100.0 * (self.macro if macro else self.micro):.2f}'

    def summary(self) -> dict:
        totals = self.totals
        return {
            'sentences': self.count,
            'micro': self.as_percent(),
            'macro': self.as_percent(macro=True),
            'S': totals.S, 'D': totals.D, 'I': totals.I, 'C': totals.C,
        }


def corpus_wer(refs: Sequence[str], hyps: Sequence[str]) -> WerReport:
    if len(refs) != len(hyps):
        raise EvaluationError(f'{len(refs)} reference sentences but {len(hyps)} hypotheses')
    if not refs:
        raise EvaluationError('cannot score an empty corpus')
    report = WerReport([align_words(r.split(), h.split()) for r, h in zip(refs, hyps)])
    if report.totals.ref_len == 0:
        raise EvaluationError('every reference sentence is empty')
    return report


def no_prediction(refs: Sequence[str], srcs: Sequence[str]) -> WerReport:
    """Score the undiacritized input verbatim."""
    return corpus_wer(refs, srcs)


def lexicon_baseline(lexicon: AmbiguityLexicon, src: str) -> str:
    words = []
    for word in src.split():
        form = lexicon.best_form(word)
        words.append(word if form is None else form)
    return ' '.join(words)


def baseline_report(lexicon: AmbiguityLexicon, srcs: Iterable[str], refs: Sequence[str]) -> WerReport:
    return corpus_wer(refs, [lexicon_baseline(lexicon, s) for s in srcs])


def read_lines(path) -> list[str]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise OSError(f'cannot read {path}: {e.strerror or e}') from e
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise EvaluationError(f'{path}: not valid UTF-8 at byte {e.start}') from None
    if '\r' in text:
        raise EvaluationError(f'{path}: CR line endings are not allowed')
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    return lines
