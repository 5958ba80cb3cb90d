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

"""Parallel corpus construction: ingestion, stripping, splitting, chunking
and the character-token dataset format."""

from __future__ import annotations

import hashlib
import logging
import re
import unicodedata
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

BOUNDARY = '_'
SENTENCE = 0  # chunk size meaning "the whole sentence"
MAX_CHUNK = 10
SPLIT_RATIOS = (0.70, 0.15, 0.15)
MIN_PAIRS_TO_SPLIT = 10

# tanwin, short vowels, shadda, sukun and the dagger alif
DEFAULT_DIACRITICS = frozenset(range(0x064B, 0x0653)) | {0x0670}
# maddah above, hamza above, hamza below
EXTENDED_DIACRITICS = frozenset(range(0x0653, 0x0656))

_WHITESPACE = re.compile(r'\s+')


class CorpusError(ValueError):
    pass


class DatasetFormatError(CorpusError):
    pass


class NoMatchesError(CorpusError):
    pass


class XmlParseError(CorpusError):
    def __init__(self, message, offset, line, column):
        super().__init__(f'{message} (byte offset {offset}, line {line}, column {column})')
        self.offset = offset
        self.line = line
        self.column = column


@dataclass(frozen=True)
class DiacriticSet:
    codepoints: frozenset

    def __post_init__(self):
        if not self.codepoints:
            raise CorpusError('diacritic set is empty')
        for cp in self.codepoints:
            ch = chr(cp)
            if not 0x0600 <= cp <= 0x06FF or unicodedata.category(ch) != 'Mn':
                raise CorpusError(f'U+{cp:04X} is not a combining mark of the Arabic block')

    @classmethod
    def default(cls) -> 'DiacriticSet':
        return cls(DEFAULT_DIACRITICS)

    @classmethod
    def extended(cls) -> 'DiacriticSet':
        return cls(DEFAULT_DIACRITICS | EXTENDED_DIACRITICS)

    @classmethod
    def from_config(cls, extended: bool) -> 'DiacriticSet':
        return cls.extended() if extended else cls.default()

    def __contains__(self, ch) -> bool:
        if isinstance(ch, str):
            return len(ch) == 1 and ord(ch) in self.codepoints
        return ch in self.codepoints

    def describe(self) -> str:
        return ','.join(f'U+{cp:04X}' for cp in sorted(self.codepoints))

    @classmethod
    def parse(cls, text: str) -> 'DiacriticSet':
        """Inverse of :meth:`describe`."""
        codepoints = set()
        for item in text.split(','):
            item = item.strip()
            if not item.upper().startswith('U+'):
                raise CorpusError(f'bad code point {item!r} in diacritic set')
            try:
                codepoints.add(int(item[2:], 16))
            except ValueError:
                raise CorpusError(f'bad code point {item!r} in diacritic set') from None
        return cls(frozenset(codepoints))

    @cached_property
    def table(self) -> dict:
        return dict.fromkeys(self.codepoints)


_DEFAULT_SET = DiacriticSet.default()


@dataclass(frozen=True)
class SentencePair:
    src: str
    tgt: str
    id: int


@dataclass
class CorpusSplit:
    train: list
    valid: list
    test: list
    seed: int
    ratios: tuple = SPLIT_RATIOS

    @property
    def parts(self) -> dict:
        return {'train': self.train, 'valid': self.valid, 'test': self.test}


@dataclass(frozen=True)
class ChunkPair:
    src_tokens: tuple
    tgt_tokens: tuple
    chunk_size: int = field(default=SENTENCE, compare=False)
    origin: tuple = field(default=(0, 0), compare=False)

    @property
    def src_text(self) -> str:
        return detokenize(self.src_tokens)

    @property
    def tgt_text(self) -> str:
        return detokenize(self.tgt_tokens)


@dataclass
class PairBuild:
    pairs: list
    dropped: int = 0


def normalize(text: str) -> str:
    return unicodedata.normalize('NFC', text)


def collapse(text: str) -> str:
    return _WHITESPACE.sub(' ', text).strip()


def parse_chunk_size(value) -> int:
    text = str(value).strip().lower()
    if text in ('sentence', 'sent', '0'):
        return SENTENCE
    try:
        n = int(text)
    except ValueError:
        raise CorpusError(f'chunk size must be 1..{MAX_CHUNK} or "sentence", got {value!r}') from None
    if not 1 <= n <= MAX_CHUNK:
        raise CorpusError(f'chunk size must be 1..{MAX_CHUNK} or "sentence", got {value!r}')
    return n


def chunk_label(n: int) -> str:
    return 'sentence' if n == SENTENCE else str(n)


def _xml_error(exc: ET.ParseError, data: bytes) -> XmlParseError:
    line, column = exc.position
    lines = data.split(b'\n')
    offset = sum(len(chunk) + 1 for chunk in lines[:line - 1])
    if 0 < line <= len(lines):
        # expat counts columns in characters
        offset += len(lines[line - 1].decode('utf-8', 'replace')[:column].encode('utf-8'))
    return XmlParseError(f'malformed XML: {exc}', offset, line, column)


def extract_sentences(document, selector: str | None = None) -> list[str]:
    """Read sentences from an XML document or a plaintext file.

    ``document`` is a path or raw bytes. With a ``selector`` the document is
    parsed as XML and the text content of every matching element becomes one
    sentence; without one, every non-blank line is a sentence.
    """
    if isinstance(document, (bytes, bytearray)):
        data = bytes(document)
    else:
        path = Path(document)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise OSError(f'cannot read {path}: {e.strerror or e}') from e
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise CorpusError(f'input is not UTF-8 (byte offset {e.start})') from e

    if selector is None:
        raw = text.splitlines()
    else:
        try:
            root = ET.fromstring(data)
        except ET.ParseError as e:
            raise _xml_error(e, data) from e
        path_expr = selector if '/' in selector else f'.//{selector}'
        matches = list(root.iterfind(path_expr))
        if root.tag == selector:
            matches.insert(0, root)
        if not matches:
            raise NoMatchesError(f'no matches for selector {selector!r}')
        raw = [''.join(el.itertext()) for el in matches]

    sentences = [normalize(collapse(s)) for s in raw]
    return [s for s in sentences if s]


def strip_diacritics(text: str, dset: DiacriticSet | None = None) -> str:
    dset = dset or _DEFAULT_SET
    return text.translate(dset.table)


def build_pairs(sentences: Iterable[str], dset: DiacriticSet | None = None) -> PairBuild:
    """Pair every sentence with its undiacritized form.

    Words made only of diacritics are removed from the target so both sides
    keep the same word count. Sentences that strip to nothing are dropped.
    """
    dset = dset or DiacriticSet.default()
    pairs, dropped = [], 0
    for sentence in sentences:
        words = [w for w in normalize(sentence).split() if strip_diacritics(w, dset)]
        if not words:
            dropped += 1
            continue
        tgt = ' '.join(words)
        pairs.append(SentencePair(src=strip_diacritics(tgt, dset), tgt=tgt, id=len(pairs)))
    if dropped:
        logger.info('dropped %d sentence(s) that were empty without diacritics', dropped)
    return PairBuild(pairs, dropped)


def verify_pairs(pairs: Iterable[SentencePair], dset: DiacriticSet | None = None) -> int:
    """Re-check strip(tgt) == src on every pair; returns the number checked."""
    dset = dset or DiacriticSet.default()
    count = 0
    for pair in pairs:
        if strip_diacritics(pair.tgt, dset) != pair.src:
            raise CorpusError(f'pair {pair.id}: target does not strip to source')
        count += 1
    return count


def split_corpus(pairs: Sequence[SentencePair], seed: int) -> CorpusSplit:
    """Shuffle with PCG64 seeded by ``seed`` and cut 70/15/15."""
    n = len(pairs)
    if n < MIN_PAIRS_TO_SPLIT:
        raise CorpusError(f'need at least {MIN_PAIRS_TO_SPLIT} pairs to split, got {n}')
    order = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    n_train = round(n * SPLIT_RATIOS[0])
    n_valid = round(n * SPLIT_RATIOS[1])
    shuffled = [pairs[i] for i in order]
    return CorpusSplit(
        train=shuffled[:n_train],
        valid=shuffled[n_train:n_train + n_valid],
        test=shuffled[n_train + n_valid:],
        seed=seed,
    )


def chunk_pairs(pair: SentencePair, n: int) -> list[ChunkPair]:
    """Cut a pair into consecutive, non-overlapping windows of ``n`` words."""
    src_words, tgt_words = pair.src.split(), pair.tgt.split()
    if len(src_words) != len(tgt_words):
        logger.warning('pair %s skipped: %d source words, %d target words',
                       pair.id, len(src_words), len(tgt_words))
        return []
    if not src_words:
        return []
    width = len(src_words) if n == SENTENCE else n
    chunks = []
    for index, start in enumerate(range(0, len(src_words), width)):
        try:
            src_tokens = tokenize_chars(' '.join(src_words[start:start + width]))
            tgt_tokens = tokenize_chars(' '.join(tgt_words[start:start + width]))
        except CorpusError as e:
            logger.warning('pair %s skipped: %s', pair.id, e)
            return []
        chunks.append(ChunkPair(tuple(src_tokens), tuple(tgt_tokens), chunk_size=n, origin=(pair.id, index)))
    return chunks


def chunk_corpus(pairs: Iterable[SentencePair], n: int) -> tuple[list[ChunkPair], int]:
    chunks, skipped = [], 0
    for pair in pairs:
        pieces = chunk_pairs(pair, n)
        if not pieces:
            skipped += 1
        chunks.extend(pieces)
    return chunks, skipped


def tokenize_chars(text: str) -> list[str]:
    if BOUNDARY in text:
        raise CorpusError(f'text contains the reserved boundary token {BOUNDARY!r}')
    if text != text.strip() or '  ' in text:
        raise CorpusError('text has leading, trailing or repeated spaces')
    tokens = []
    for ch in text:
        if ch == ' ':
            tokens.append(BOUNDARY)
        elif ch.isspace():
            raise CorpusError(f'unexpected whitespace U+{ord(ch):04X}')
        else:
            tokens.append(ch)
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    return ''.join(' ' if t == BOUNDARY else t for t in tokens)


def dataset_paths(prefix) -> tuple[Path, Path]:
    prefix = str(prefix)
    return Path(prefix + '.src'), Path(prefix + '.tgt')


def _write_lines(path: Path, lines: Iterable[str]):
    try:
        with path.open('w', encoding='utf-8', newline='\n') as f:
            for line in lines:
                f.write(line + '\n')
    except OSError as e:
        raise OSError(f'cannot write {path}: {e.strerror or e}') from e


def _read_lines(path: Path) -> list[str]:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise OSError(f'cannot read {path}: {e.strerror or e}') from e
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise DatasetFormatError(f'{path}: not UTF-8 (byte offset {e.start})') from e
    if '\r' in text:
        raise DatasetFormatError(f'{path}: CR characters found; LF line endings required')
    if '\t' in text:
        raise DatasetFormatError(f'{path}: tab characters are not allowed')
    if not text:
        return []
    if not text.endswith('\n'):
        raise DatasetFormatError(f'{path}: last line is not terminated by LF')
    return text[:-1].split('\n')


def write_dataset(chunks: Iterable[ChunkPair], prefix):
    """Write ``<prefix>.src`` and ``<prefix>.tgt``, one chunk per line."""
    chunks = list(chunks)
    src_path, tgt_path = dataset_paths(prefix)
    _write_lines(src_path, (' '.join(c.src_tokens) for c in chunks))
    _write_lines(tgt_path, (' '.join(c.tgt_tokens) for c in chunks))


def _parse_tokens(line: str, path: Path, number: int) -> tuple:
    if not line:
        raise DatasetFormatError(f'{path}:{number}: empty line')
    tokens = line.split(' ')
    if any(t == '' or len(t) != 1 for t in tokens):
        raise DatasetFormatError(f'{path}:{number}: tokens must be single characters separated by one space')
    return tuple(tokens)


def read_dataset(prefix, chunk_size: int = SENTENCE) -> list[ChunkPair]:
    src_path, tgt_path = dataset_paths(prefix)
    src_lines, tgt_lines = _read_lines(src_path), _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise DatasetFormatError(f'{src_path} has {len(src_lines)} lines but {tgt_path} has {len(tgt_lines)}')
    return [
        ChunkPair(_parse_tokens(s, src_path, i + 1), _parse_tokens(t, tgt_path, i + 1),
                  chunk_size=chunk_size, origin=(i, 0))
        for i, (s, t) in enumerate(zip(src_lines, tgt_lines))
    ]


def write_sentences(pairs: Iterable[SentencePair], prefix):
    pairs = list(pairs)
    src_path, tgt_path = dataset_paths(prefix)
    _write_lines(src_path, (p.src for p in pairs))
    _write_lines(tgt_path, (p.tgt for p in pairs))


def read_sentences(prefix) -> list[SentencePair]:
    src_path, tgt_path = dataset_paths(prefix)
    src_lines, tgt_lines = _read_lines(src_path), _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise DatasetFormatError(f'{src_path} and {tgt_path} are not line-aligned')
    return [SentencePair(src=s, tgt=t, id=i) for i, (s, t) in enumerate(zip(src_lines, tgt_lines))]


def file_checksum(path) -> str:
    digest = hashlib.sha256()
    try:
        with Path(path).open('rb') as f:
            for block in iter(lambda: f.read(1 << 16), b''):
                digest.update(block)
    except OSError as e:
        raise OSError(f'cannot read {path}: {e.strerror or e}') from e
    return digest.hexdigest()


def write_manifest(path, entries: dict):
    _write_lines(Path(path), (f'{key} = {value}' for key, value in entries.items()))


def read_manifest(path) -> dict:
    entries = {}
    for number, line in enumerate(_read_lines(Path(path)), 1):
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise DatasetFormatError(f'{path}:{number}: expected "key = value"')
        entries[key.strip()] = value.strip()
    return entries
