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

import functools
import io
import logging
from pathlib import Path

import click

from ambiguity import build_lexicon, histogram, summary, write_histogram_csv
from corpus import (SPLIT_RATIOS, CorpusSplit, DiacriticSet, build_pairs,
                    chunk_corpus, chunk_label, dataset_paths, extract_sentences,
                    file_checksum, read_dataset, read_manifest, read_sentences,
                    split_corpus, verify_pairs, write_dataset, write_manifest,
                    write_sentences)
from evaluation import corpus_wer, read_lines
from extensions import configure_logging, render
from model import CharVocab, Seq2Seq, load_checkpoint, save_checkpoint
from settings import PROFILES, RunConfig, dump_config, load_config
from synthetic import toy_sentences, write_corpus
from trainer import TrainingError, sweep, train

logger = logging.getLogger('harakat')

SPLITS = ('train', 'valid', 'test')


def handle_errors(f):
    """Map exceptions to exit codes: 2 for bad input, 1 for everything else."""
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except TrainingError as e:
            click.echo(f'error: {e} (last good step {e.last_good_step})', err=True)
            raise click.exceptions.Exit(1)
        except (ValueError, OSError) as e:
            click.echo(f'error: {e}', err=True)
            raise click.exceptions.Exit(2)
        except Exception as e:
            logger.debug('unexpected failure', exc_info=True)
            click.echo(f'internal error: {type(e).__name__}: {e}', err=True)
            raise click.exceptions.Exit(1)
    return wrapper


def resolve(ctx, **overrides):
    """Layer the command's flags over the group options and config files."""
    opts = ctx.find_root().obj
    merged = {'seed': opts['seed'], 'precision': opts['precision']}
    merged.update(overrides)
    return load_config(opts['profile'], opts['config'], merged)


def load_split(data_dir: Path) -> CorpusSplit:
    manifest = read_manifest(data_dir / 'manifest.txt')
    parts = {name: read_sentences(data_dir / name) for name in SPLITS}
    return CorpusSplit(**parts, seed=int(manifest.get('seed', 0)))


def dataset_meta(data_dir: Path, config: RunConfig) -> tuple[dict, DiacriticSet]:
    """Checkpoint provenance for a prepared directory and its diacritic set."""
    manifest = read_manifest(data_dir / 'manifest.txt')
    dset = DiacriticSet.parse(manifest['diacritics']) if 'diacritics' in manifest else config.diacritics
    meta = {'manifest_sha256': file_checksum(data_dir / 'manifest.txt'), 'diacritics': dset.describe()}
    return meta, dset


def load_chunks(
data_dir: Path, split: str, sentences, chunk_size: int):
    prefix = data_dir / f'{split}.c{chunk_label(chunk_size)}'
    if all(p.exists() for p in dataset_paths(prefix)):
        return read_dataset(prefix, chunk_size)
    chunks, skipped = chunk_corpus(sentences, chunk_size)
    if skipped:
        logger.warning('%s: %d pair(s) skipped while chunking', split, skipped)
    return chunks


@click.group()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='key = value file layered over the profile.')
@click.option('--seed', type=int, default=None, help='Seed for splitting, initialization and batching.')
@click.option('--profile', type=click.Choice(PROFILES), default='desk', show_default=True)
@click.option('--precision', type=click.Choice(['32', '64']), default=None, help='Float width.')
@click.option('-v', '--verbose', count=True, help='More logging on stderr (repeatable).')
@click.pass_context
def cli(ctx, config_path, seed, profile, precision, verbose):
    """Restore Arabic diacritics with a character-level seq2seq model."""
    configure_logging(verbose)
    ctx.obj = {
        'config': config_path,
        'seed': seed,
        'profile': profile,
        'precision': None if precision is None else int(precision),
    }


@cli.command()
@click.argument('input_path', metavar='INPUT', type=click.Path(exists=True, dir_okay=False))
@click.option('--selector', default=None, help='XML element holding one sentence; plaintext when omitted.')
@click.option('--chunk-size', default=None, help='1..10 or "sentence".')
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))
@click.pass_context
@handle_errors
def prepare(ctx, input_path, selector, chunk_size, out_dir):
    """Build the parallel corpus, split it and write chunk datasets."""
    config = resolve(ctx, selector=selector, chunk_size=chunk_size)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    sentences = extract_sentences(input_path, config.selector or None)
    built = build_pairs(sentences, config.diacritics)
    verify_pairs(built.pairs, config.diacritics)
    split = split_corpus(built.pairs, config.seed)

    entries = {
        'input': Path(input_path).name,
        'input_sha256': file_checksum(input_path),
        'seed': config.seed,
        'ratios': ','.join(f'{r:.2f}' for r in SPLIT_RATIOS),
        'diacritics': config.diacritics.describe(),
        'chunk_size': chunk_label(config.chunk),
        'sentences': len(built.pairs),
        'dropped': built.dropped,
    }
    for name, pairs in split.parts.items():
        write_sentences(pairs, out / name)
        chunks, skipped = chunk_corpus(pairs, config.chunk)
        write_dataset(chunks, out / f'{name}.c{chunk_label(config.chunk)}')
        entries[f'{name}_sentences'] = len(pairs)
        entries[f'{name}_chunks'] = len(chunks)
        entries[f'{name}_skipped'] = skipped
    write_manifest(out / 'manifest.txt', entries)
    dump_config(config, out / 'config.txt')
    logger.info('prepared %d pairs into %s', len(built.pairs), out)


@cli.command()
@click.argument('corpus', type=click.Path(exists=True))
@click.option('--selector', default=None, help='XML element holding one sentence.')
@click.option('--format', 'fmt', type=click.Choice(['csv', 'text']), default='csv', show_default=True)
@click.pass_context
@handle_errors
def stats(ctx, corpus, selector, fmt):
    """Ambiguity histogram of a diacritized corpus or a prepared directory."""
    config = resolve(ctx, selector=selector)
    path = Path(corpus)
    if path.is_dir():
        pairs = [pair for name in SPLITS for pair in read_sentences(path / name)]
    else:
        pairs = build_pairs(extract_sentences(path, config.selector or None), config.diacritics).pairs
    lexicon = build_lexicon(pairs)
    if fmt == 'text':
        click.echo(render('ambiguity.txt', **summary(lexicon)), nl=False)
        return
    buffer = io.StringIO()
    write_histogram_csv(histogram(lexicon), buffer)
    click.echo(buffer.getvalue(), nl=False)


@cli.command()
@click.argument('count', type=click.IntRange(min=0))
@click.option('--out', 'out_path', required=True, type=click.Path(dir_okay=False))
@click.pass_context
@handle_errors
def synth(ctx, count, out_path):
    """Write a synthetic rule-diacritized corpus."""
    config = resolve(ctx)
    write_corpus(toy_sentences(count, config.seed), out_path)


@cli.command('train')
@click.argument('data_dir', metavar='DATA', type=click.Path(exists=True, file_okay=False))
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))
@click.option('--chunk-size', default=None, help='1..10 or "sentence".')
@click.option('--steps', type=int, default=None)
@click.option('--batch-size', type=int, default=None)
@click.pass_context
@handle_errors
def train_command(ctx, data_dir, out_dir, chunk_size, steps, batch_size):
    """Train one model and print its test-split WER."""
    config = resolve(ctx, chunk_size=chunk_size, steps=steps, batch_size=batch_size)
    data, out = Path(data_dir), Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / 'config.txt')

    split = load_split(data)
    train_chunks = load_chunks(data, 'train', split.train, config.chunk)
    valid_chunks = load_chunks(data, 'valid', split.valid, config.chunk)
    vocab = CharVocab.build(train_chunks)
    model = Seq2Seq.create(config.model_config(), vocab, seed=config.seed, precision=config.precision)
    meta, dset = dataset_meta(data, config)
    result = train(train_chunks, model, config.train_config(), valid_chunks, out, meta)
    if result.best is None:
        save_checkpoint(result.model, out / 'best.ckpt', dict(meta, profile=config.profile, step=config.steps))

    if split.test:
        selected = result.selected
        hyps = [selected.predict_sentence(pair.src, dset=dset).text for pair in split.test]
        (out / 'test.hyp').write_text(''.join(h + '\n' for h in hyps), encoding='utf-8')
        click.echo(corpus_wer([pair.tgt for pair in split.test], hyps).as_percent())


@cli.command('sweep')
@click.argument('data_dir', metavar='DATA', type=click.Path(exists=True, file_okay=False))
@click.option('--out', 'out_dir', required=True, type=click.Path(file_okay=False))
@click.option('--sizes', default=None, help='Comma-separated chunk sizes, e.g. 1,3,5,sentence.')
@click.option('--workers', type=int, default=None)
@click.option('--steps', type=int, default=None)
@click.option('--no-baseline', is_flag=True, default=False)
@click.pass_context
@handle_errors
def sweep_command(ctx, data_dir, out_dir, sizes, workers, steps, no_baseline):
    """Train one model per chunk size and print the results table as CSV."""
    config = resolve(ctx, sweep_sizes=sizes, workers=workers, steps=steps,
                     baseline=False if no_baseline else None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(config, out / 'config.txt')

    data = Path(data_dir)
    meta, _ = dataset_meta(data, config)
    report = sweep(load_split(data), config.model_config(), config.train_config(),
                   sizes=config.sweep_size_list, workers=config.workers,
                   baseline=config.baseline, out_dir=out, meta=meta)
    buffer = io.StringIO()
    report.write_csv(buffer)
    (out / 'results.csv').write_text(buffer.getvalue(), encoding='utf-8')
    (out / 'results.txt').write_text(render('results.txt', **report.context()), encoding='utf-8')
    click.echo(buffer.getvalue(), nl=False)


@cli.command()
@click.argument('ref', type=click.Path(exists=True, dir_okay=False))
@click.argument('hyp', type=click.Path(exists=True, dir_okay=False))
@click.option('--macro', is_flag=True, default=False, help='Mean of per-sentence WER instead of summed counts.')
@click.option('--counts', is_flag=True, default=False, help='Also print the summed edit counts.')
@handle_errors
def evaluate(ref, hyp, macro, counts):
    """Print the WER of HYP against REF as a percentage."""
    report = corpus_wer(read_lines(ref), read_lines(hyp))
    click.echo(report.as_percent(macro=macro))
    if counts:
        click.echo(' '.join(f'{key}={value}' for key, value in report.summary().items()))


@cli.command()
@click.argument('checkpoint', type=click.Path(exists=True, dir_okay=False))
@click.option('--beam', type=click.IntRange(min=1), default=1, show_default=True, help='Beam width; 1 is greedy.')
@handle_errors
def predict(checkpoint, beam):
    """Diacritize stdin line by line."""
    model, meta = load_checkpoint(checkpoint)
    dset = DiacriticSet.parse(meta['diacritics']) if 'diacritics' in meta else None
    stdin = click.get_text_stream('stdin', encoding='utf-8')
    for number, line in enumerate(stdin, 1):
        prediction = model.predict_sentence(line.rstrip('\n'), beam_width=beam, dset=dset)
        if prediction.mismatches:
            logger.warning('line %d: %d chunk(s) changed word count', number, prediction.mismatches)
        click.echo(prediction.text)


if __name__ == '__main__':
    cli()
