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

import io
import random

import pytest

from ambiguity import (CSV_HEADER, AmbiguityError, Mode, build_lexicon,
                       histogram, most_ambiguous, summary,
                       write_histogram_csv)
from corpus import SentencePair, build_pairs
from extensions import render


def pairs_from(sentences):
    return build_pairs(sentences).pairs


@pytest.fixture
def lexicon():
    # كتب appears as three forms over four tokens, قلم once
    return build_lexicon(pairs_from(["كَتَبَ قَلَم", "كُتِبَ", "كُتُب", "كَتَبَ"]))


def test_build_lexicon_counts_forms(lexicon):
    assert list(lexicon.entries) == sorted(lexicon.entries)
    assert lexicon.forms("كتب") == {"كَتَبَ": 2, "كُتِبَ": 1, "كُتُب": 1}
    assert len(lexicon) == 2
    assert lexicon.token_count == 5


def test_best_form_prefers_frequency_then_smallest_string():
    lex = build_lexicon(pairs_from(["بَ", "بُ"]))
    assert lex.best_form("ب") == min("بَ", "بُ")
    assert lex.best_form("missing") is None


def test_build_lexicon_skips_mismatched_pairs():
    lex = build_lexicon([SentencePair(src="a b", tgt="a", id=0)])
    assert len(lex) == 0


def test_type_histogram(lexicon):
    hist = histogram(lexicon, Mode.TYPE)
    assert hist.percentages == {1: 50.0, 3: 50.0}
    assert hist.max_k == 3


def test_token_histogram(lexicon):
    hist = histogram(lexicon, "token")
    assert hist.share(1) == pytest.approx(20.0)
    assert hist.share(3) == pytest.approx(80.0)
    assert hist.share(2) == 0.0


def test_histogram_sums_to_hundred(toy_pairs):
    hist = histogram(build_lexicon(toy_pairs))
    assert sum(hist.share(k, Mode.TYPE) for k in hist.buckets) == pytest.approx(100.0)
    assert sum(hist.share(k, Mode.TOKEN) for k in hist.buckets) == pytest.approx(100.0)


def test_lexicon_and_histogram_ignore_corpus_order(toy_pairs):
    pairs = toy_pairs + pairs_from(["كَتَبَ قَلَم", "كُتِبَ", "كُتُب", "كَتَبَ"])
    shuffled = list(pairs)
    random.Random(5).shuffle(shuffled)
    assert shuffled != pairs
    original, reordered = build_lexicon(pairs), build_lexicon(shuffled)
    assert list(reordered.entries) == list(original.entries)
    assert reordered.entries == original.entries
    for mode in Mode:
        assert histogram(reordered, mode).buckets == histogram(original, mode).buckets
    assert most_ambiguous(reordered) == most_ambiguous(original)


def test_rule_corpus_is_unambiguous(toy_pairs):
    hist = histogram(build_lexicon(toy_pairs))
    assert hist.percentages == {1: 100.0}


def test_empty_lexicon_is_an_error():
    with pytest.raises(AmbiguityError):
        histogram(build_lexicon([]))
    with pytest.raises(AmbiguityError):
        most_ambiguous(build_lexicon([]))


def test_most_ambiguous(lexicon):
    assert most_ambiguous(lexicon) == (3, ["كتب"])


def test_histogram_csv(lexicon):
    out = io.StringIO()
    write_histogram_csv(histogram(lexicon), out)
    lines = out.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1:] == ["1,1,50.00,1,20.00", "3,1,50.00,4,80.00"]


def test_summary_template(lexicon):
    text = render("ambiguity.txt", **summary(lexicon))
    assert "Maximum ambiguity:        3 forms (كتب)" in text
    assert "50.00% of types, 20.00% of tokens" in text
