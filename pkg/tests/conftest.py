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

import pytest
from click.testing import CliRunner

from corpus import SENTENCE, build_pairs, chunk_corpus
from model import CharVocab, ModelConfig, Seq2Seq
from synthetic import toy_sentences, write_corpus


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance test, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def toy_pairs():
    return build_pairs(toy_sentences(50, seed=3, words=(1, 3), letters=(2, 3))).pairs


@pytest.fixture
def toy_chunks(toy_pairs):
    chunks, skipped = chunk_corpus(toy_pairs, SENTENCE)
    assert skipped == 0
    return chunks


@pytest.fixture
def toy_vocab(toy_chunks):
    return CharVocab.build(toy_chunks)


@pytest.fixture
def tiny_model(toy_vocab):
    config = ModelConfig(embed_dim=6, hidden_dim=5, enc_layers=2, dec_layers=2, chunk_size=SENTENCE)
    return Seq2Seq.create(config, toy_vocab, seed=7)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.txt"
    write_corpus(toy_sentences(40, seed=5, words=(2, 6), letters=(2, 4)), path)
    return path


@pytest.fixture
def prepared_dir(tmp_path, runner, corpus_file):
    from app import cli

    out = tmp_path / "prepared"
    result = runner.invoke(cli, ["--seed", "1", "prepare", str(corpus_file), "--chunk-size", "2", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out
