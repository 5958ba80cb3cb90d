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

"""Run configuration: defaults, profile file, user file, then flags."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from dotenv import dotenv_values

from corpus import DiacriticSet, chunk_label, parse_chunk_size
from model import ModelConfig
from trainer import OPTIMIZERS, TrainConfig

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parent / "config"
PROFILES = ('desk', 'paper')
TRUE_WORDS = {'1', 'true', 'yes', 'on'}
FALSE_WORDS = {'0', 'false', 'no', 'off'}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    profile: str = 'desk'
    seed: int = 1
    precision: int = 64

    # corpus
    selector: str = ''
    chunk_size: str = '5'
    extended_diacritics: bool = False

    # model
    embed_dim: int = 32
    hidden_dim: int = 64
    enc_layers: int = 2
    dec_layers: int = 2
    dropout: float = 0.0
    input_feed: bool = True
    max_decode_factor: float = 3.0
    param_init: float = 0.1
    beam_width: int = 5

    # training
    steps: int = 2000
    batch_size: int = 64
    optimizer: str = 'adam'
    learning_rate: float = 0.001
    decay: float = 1.0
    decay_start: int = 0
    decay_every: int = 0
    max_grad_norm: float = 5.0
    validate_every: int = 500
    checkpoint_every: int = 500
    log_every: int = 100

    # sweep
    sweep_sizes: str = '1,2,3,4,5,6,7,8,9,10,sentence'
    workers: int = 1
    baseline: bool = True

    def validate_profile(self):
        if self.profile not in PROFILES:
            raise ConfigError(f'profile must be one of {", ".join(PROFILES)}')

    def validate_precision(self):
        if self.precision not in (32, 64):
            raise ConfigError('precision must be 32 or 64')

    def validate_chunk_size(self):
        parse_chunk_size(self.chunk_size)

    def validate_sweep_sizes(self):
        if not self.sweep_size_list:
            raise ConfigError('sweep_sizes is empty')

    def validate_optimizer(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f'optimizer must be one of {", ".join(OPTIMIZERS)}')

    def validate_steps(self):
        if self.steps <= 0:
            raise ConfigError('steps must be positive')

    def validate_batch_size(self):
        if self.batch_size < 1:
            raise ConfigError('batch_size must be at least 1')

    def validate_workers(self):
        if self.workers < 1:
            raise ConfigError('workers must be at least 1')

    def validate_intervals(self):
        for name in ('validate_every', 'checkpoint_every', 'log_every'):
            if getattr(self, name) < 1:
                raise ConfigError(f'{name} must be at least 1')

    def validate(self) -> 'RunConfig':
        for name in dir(self):
            if name.startswith('validate_') and callable(getattr(self, name)):
                try:
                    getattr(self, name)()
                except ConfigError:
                    raise
                except ValueError as e:
                    raise ConfigError(str(e)) from e
        try:
            self.model_config()
            self.train_config()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self

    @property
    def chunk(self) -> int:
        return parse_chunk_size(self.chunk_size)

    @property
    def sweep_size_list(self) -> list[int]:
        return [parse_chunk_size(part) for part in self.sweep_sizes.split(',') if part.strip()]

    @property
    def diacritics(self) -> DiacriticSet:
        return DiacriticSet.from_config(self.extended_diacritics)

    def model_config(self, chunk_size: int | None = None) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
            enc_layers=self.enc_layers, dec_layers=self.dec_layers,
            dropout=self.dropout, input_feed=self.input_feed,
            max_decode_factor=self.max_decode_factor,
            chunk_size=self.chunk if chunk_size is None else chunk_size,
            param_init=self.param_init, beam_width=self.beam_width,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            steps=self.steps, batch_size=self.batch_size, optimizer=self.optimizer,
            learning_rate=self.learning_rate, decay=self.decay,
            decay_start=self.decay_start, decay_every=self.decay_every,
            max_grad_norm=self.max_grad_norm, seed=self.seed,
            validate_every=self.validate_every, checkpoint_every=self.checkpoint_every,
            log_every=self.log_every, precision=self.precision, profile=self.profile,
        )


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value, source: str):
    kind = FIELD_TYPES[key]
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if kind == 'int':
            return int(text)
        if kind == 'float':
            return float(text)
        if kind == 'bool':
            lowered = text.lower()
            if lowered in TRUE_WORDS:
                return True
            if lowered in FALSE_WORDS:
                return False
            raise ValueError(text)
        if key == 'chunk_size':
            return chunk_label(parse_chunk_size(text))
    except ValueError:
        raise ConfigError(f'{source}: {key} expects {kind}, got {value!r}') from None
    return text


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; unknown or empty keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'config file not found: {path}')
    values = dotenv_values(path, interpolate=False, encoding='utf-8')
    parsed = {}
    for key, value in values.items():
        if key not in FIELD_TYPES or key == 'profile':
            raise ConfigError(f'{path}: unknown key {key!r}')
        if value is None or (value == '' and FIELD_TYPES[key] != 'str'):
            raise ConfigError(f'{path}: key {key!r} has no value')
        parsed[key] = _coerce(key, value, str(path))
    return parsed


def load_config(profile: str = 'desk', path=None, overrides: dict | None = None) -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f'profile must be one of {", ".join(PROFILES)}')
    values = asdict(RunConfig())
    values['profile'] = profile
    layers = [CONFIG_DIR / f'{profile}.conf']
    if path is not None:
        layers.append(Path(path))
    for layer in layers:
        values.update(read_config_file(layer))
        logger.debug('loaded config layer %s', layer)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in FIELD_TYPES:
            raise ConfigError(f'unknown setting {key!r}')
        values[key] = _coerce(key, value, 'command line')
    return RunConfig(**values).validate()


def dump_config(config: RunConfig, path):
    path = Path(path)
    lines = []
    for key, value in asdict(config).items():
        if key == 'profile':
            lines.append(f'# profile: {value}')
            continue
        if isinstance(value, bool):
            value = 'true' if value else 'false'
        lines.append(f'{key} = {value}')
    try:
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    except OSError as e:
        raise OSError(f'cannot write {path}: {e.strerror or e}') from e

