import io
import os

import pytest

from ecosim.config import (
    ConfigFile, flatten, load_config, parse_bool, parse_tokens, threads_from_env,
)
from ecosim.ecosystem import EcosystemConfig
from ecosim.exception import ConfigError
from ecosim.habitat import Strategy


def build(text):
    return ConfigFile(io.StringIO(text)).build()


def test_config_file():
    cfg = build('# experiment settings\n'
                '\n'
                'ga.population_size = 20\n'
                '  ga.crossover_rate = 0.5  # inline comment\n'
                'habitat.decay_on_escape = yes\n'
                'workload.community.1.tokens = 8, 9, 10\n'
                'join.strategy = clone\n'
                'execution_threshold =\n'
                'migration_enabled = false\n')

    assert cfg.ga.population_size == 20
    assert cfg.ga.crossover_rate == 0.5
    assert cfg.ga.generations_max == 100
    assert cfg.habitat.decay_on_escape is True
    assert cfg.workload.community_tokens == ((), (8, 9, 10))
    assert cfg.join.strategy == Strategy.CLONE
    assert cfg.execution_threshold is None
    assert cfg.migration_enabled is False


def test_empty_config_keeps_defaults():
    assert build('# nothing\n') == EcosystemConfig()


def test_unknown_keys():
    with pytest.raises(ConfigError) as e:
        build('ga.bogus = 1\n')
    assert e.value.field == 'ga.bogus'

    with pytest.raises(ConfigError) as e:
        build('colour = blue\n')
    assert e.value.field == 'colour'

    with pytest.raises(ConfigError):
        build('network.p_min = 0.1\n')


def test_malformed_line():
    with pytest.raises(ConfigError) as e:
        build('ga.population_size = 20\nthis is not a setting\n')
    assert e.value.field == 'line 2'


def test_unparseable_value():
    with pytest.raises(ConfigError) as e:
        build('ga.population_size = many\n')
    assert e.value.field == 'ga.population_size'

    with pytest.raises(ConfigError) as e:
        build('migration_enabled = perhaps\n')
    assert e.value.field == 'migration_enabled'


def test_range_violation():
    with pytest.raises(ConfigError) as e:
        build('ga.crossover_rate = 1.5\n')
    assert str(e.value) == 'ga.crossover_rate: must be in [0, 1]'

    with pytest.raises(ConfigError) as e:
        build('workload.community.0.tokens = 1, 64\n')
    assert e.value.field == 'workload.community.0.tokens'


def test_load_config(tmp_path):
    assert load_config() == EcosystemConfig()

    path = tmp_path / 'ecosim.conf'
    path.write_text('habitat.unused_threshold = 4\n', encoding='utf-8')
    assert load_config(str(path)).habitat.unused_threshold == 4

    with pytest.raises(OSError):
        load_config(str(tmp_path / 'missing.conf'))


def test_flatten():
    flat = flatten(EcosystemConfig())
    assert flat['ga.population_size'] == 50
    assert flat['habitat.p_min'] == 0.05
    assert flat['join.strategy'] == 'random'
    assert flat['migration_enabled'] is True
    assert 'workload.community_tokens' not in flat

    flat = flatten(build('workload.community.0.tokens = 3, 4\n'))
    assert flat['workload.community.0.tokens'] == [3, 4]


def test_parse_helpers():
    assert parse_bool('True') is True
    assert parse_bool('off') is False
    with pytest.raises(ConfigError):
        parse_bool('maybe')

    assert parse_tokens('1, 2 3') == (1, 2, 3)
    with pytest.raises(ConfigError):
        parse_tokens('1, two')


def test_threads_from_env():
    assert threads_from_env({}) == 1
    assert threads_from_env({'ECOSIM_THREADS': '4'}) == 4
    with pytest.raises(ConfigError):
        threads_from_env({'ECOSIM_THREADS': '0'})
    with pytest.raises(ConfigError):
        threads_from_env({'ECOSIM_THREADS': 'many'})


def test_example_config_documents_defaults():
    path = os.path.join(os.path.dirname(__file__), '..', '..', 'ecosim.conf.example')
    cfg = load_config(path)
    assert cfg == EcosystemConfig()

    with open(path, 'r', encoding='utf-8') as f:
        documented = set(ConfigFile(f).values)
    assert documented == set(flatten(cfg))
