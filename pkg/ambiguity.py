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

"""How many diacritized variants each bare word has, by type and by token."""

from __future__ import annotations

import csv
import enum
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, TextIO

from corpus import SentencePair

logger = logging.getLogger(__name__)

CSV_HEADER = ('k', 'type_count', 'type_pct', 'token_count', 'token_pct')


class AmbiguityError(ValueError):
    pass


class Mode(enum.Enum):
    TYPE = 'type'
    TOKEN = 'token'


@dataclass
class AmbiguityLexicon:
    """Bare word -> Counter of its diacritized forms, keys kept sorted."""

    entries: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, word):
        return word in self.entries

    def forms(self, word) -> Counter:
        return self.entries[word]

    @property
    def token_count(self) -> int:
        return sum(sum(forms.values()) for forms in self.entries.values())

    def best_form(self, word) -> str | None:
        """Most frequent form; ties go to the lexicographically smallest."""
        forms = self.entries.get(word)
        if not forms:
            return None
        return min(forms.items(), key=lambda item: (-item[1], item[0]))[0]


@dataclass(frozen=True)
class Bucket:
    type_count: int
    type_pct: float
    token_count: int
    token_pct: float


@dataclass
class AmbiguityHistogram:
    buckets: dict
    max_k: int
    mode: Mode = Mode.TYPE

    def share(self, k: int, mode: Mode | None = None) -> float:
        bucket = self.buckets.get(k)
        if bucket is None:
            return 0.0
        mode = mode or self.mode
        return bucket.type_pct if mode is Mode.TYPE else bucket.token_pct

    @property
    def percentages(self) -> dict:
        return {k: self.share(k) for k in sorted(self.buckets)}

    def rows(self):
        for k in sorted(self.buckets):
            b = self.buckets[k]
            yield k, b.type_count, b.type_pct, b.token_count, b.token_pct


def build_lexicon(pairs: Iterable[SentencePair]) -> AmbiguityLexicon:
    counts = {}
    for pair in pairs:
        src_words, tgt_words = pair.src.split(), pair.tgt.split()
        if len(src_words) != len(tgt_words):
            logger.warning('pair %s skipped: word counts differ', pair.id)
            continue
        for bare, form in zip(src_words, tgt_words):
            counts.setdefault(bare, Counter())[form] += 1
    return AmbiguityLexicon({key: counts[key] for key in sorted(counts)})


def histogram(lexicon: AmbiguityLexicon, mode: Mode | str = Mode.TYPE) -> AmbiguityHistogram:
    """Bucket the lexicon keys by their number of distinct forms.

    Both the type and token columns are filled; ``mode`` picks which one
    ``share`` and ``percentages`` report.
    """
    if not len(lexicon):
        raise AmbiguityError('cannot build a histogram of an empty lexicon')
    mode = Mode(mode)
    types, tokens = Counter(), Counter()
    for forms in lexicon.entries.values():
        k = len(forms)
        types[k] += 1
        tokens[k] += sum(forms.values())
    total_types, total_tokens = sum(types.values()), sum(tokens.values())
    buckets = {
        k: Bucket(
            type_count=types[k],
            type_pct=100.0 * types[k] / total_types,
            token_count=tokens[k],
            token_pct=100.0 * tokens[k] / total_tokens,
        )
        for k in sorted(types)
    }
    return AmbiguityHistogram(buckets=buckets, max_k=max(buckets), mode=mode)


def most_ambiguous(lexicon: AmbiguityLexicon) -> tuple[int, list[str]]:
    if not len(lexicon):
        raise AmbiguityError('empty lexicon')
    max_k = max(len(forms) for forms in lexicon.entries.values())
    return max_k, [key for key, forms in lexicon.entries.items() if len(forms) == max_k]


def write_histogram_csv(hist: AmbiguityHistogram, stream: TextIO):
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(CSV_HEADER)
    for k, type_count, type_pct, token_count, token_pct in hist.rows():
        writer.writerow((k, type_count, f'{type_pct:.2f}', token_count, f'{token_pct:.2f}'))


def summary(lexicon: AmbiguityLexicon) -> dict:
    """Figures for the ambiguity summary template."""
    hist = histogram(lexicon)
    max_k, words = most_ambiguous(lexicon)
    return {
        'keys': len(lexicon),
        'tokens': lexicon.token_count,
        'single_type_pct': hist.share(1, Mode.TYPE),
        'single_token_pct': hist.share(1, Mode.TOKEN),
        'max_k': max_k,
        'max_words': words,
        'rows': list(hist.rows()),
    }
