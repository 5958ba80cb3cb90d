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

"""Deterministic toy corpora: every consonant gets one fixed vowel mark."""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

import numpy as np

FATHA, DAMMA, KASRA = 'َ', 'ُ', 'ِ'

CONSONANTS = 'بتثجحخدذرزسشصضطظعغفقكلمنهي'
VOWEL_FOR = {ch: (FATHA, DAMMA, KASRA)[i % 3] for i, ch in enumerate(CONSONANTS)}


def rule_diacritize(word: str) -> str:
    return ''.join(ch + VOWEL_FOR.get(ch, '') for ch in word)


def toy_sentences(count: int, seed: int, words=(3, 8), letters=(2, 5)) -> list[str]:
    """``count`` diacritized sentences of random bare words."""
    if count < 0:
        raise ValueError('count must be non-negative')
    rng = np.random.Generator(np.random.PCG64(seed))
    letter_lo, letter_hi = letters
    sentences = []
    for _ in range(count):
        length = int(rng.integers(words[0], words[1] + 1))
        bare = [''.join(rng.choice(list(CONSONANTS), size=int(rng.integers(letter_lo, letter_hi + 1))))
                for _ in range(length)]
        sentences.append(' '.join(rule_diacritize(w) for w in bare))
    return sentences


def write_corpus(sentences: Iterable[str], path):
    path = Path(path)
    try:
        with path.open('w', encoding='utf-8', newline='\n') as f:
            for sentence in sentences:
                f.write(sentence + '\n')
    except OSError as e:
        raise OSError(f'cannot write {path}: {e.strerror or e}') from e
