import glob
import json
import os

import jsonschema
import numpy as np
import pytest

from metasimplex.config import (CONFIG_DIR, SCHEMA_PATH, ExperimentConfig, bundled_configs, load_config,
                                parse_config, resolve_config_path)
from metasimplex.errors import ConfigError

TESTCASE_DIR = os.path.join(os.path.dirname(__file__), '..', 'testcases', 'configs')

# field reported for every invalid testcase
INVALID_FIELDS = {
    'asymmetric-potential': 'payoff.a_bar',
    'initial-state': 'initial.state',
    'missing-b': 'payoff.b',
    'missing-payoff': '',
    'omega-shape': 'payoff.omega',
    'size-cap': 'size_cap',
    'unknown-scheme': 'integrator.scheme',
}


@pytest.fixture(scope="session")
def schema():
    with open(SCHEMA_PATH, 'r', encoding='UTF-8') as f:
        return json.load(f)


@pytest.mark.parametrize(
    "testcase_file",
    sorted(glob.glob(os.path.join(TESTCASE_DIR, '*.json'))),
)
def test_load(schema, testcase_file):
    name = os.path.basename(testcase_file)
    if name.endswith('.invalid.json'):
        with pytest.raises(ConfigError) as info:
            load_config(testcase_file)
        assert info.value.field == INVALID_FIELDS[name[:-len('.invalid.json')]]
    else:
        with open(testcase_file, 'r', encoding='UTF-8') as f:
            jsonschema.validate(instance=json.load(f), schema=schema)
        config = load_config(testcase_file)
        model = config.build_model()
        assert model.dims == (config.dims.n, config.dims.c)
        assert config.initial_state().shape == model.dims


def test_every_invalid_testcase_is_listed():
    names = {os.path.basename(path)[:-len('.invalid.json')]
             for path in glob.glob(os.path.join(TESTCASE_DIR, '*.invalid.json'))}
    assert names == set(INVALID_FIELDS)


@pytest.mark.parametrize("name", bundled_configs())
def test_bundled(schema, name):
    with open(os.path.join(CONFIG_DIR, f'{name}.json'), 'r', encoding='UTF-8') as f:
        jsonschema.validate(instance=json.load(f), schema=schema)
    config = load_config(name)
    assert config.title
    assert config.selection_labels()['kind'] == [config.payoff.kind]
    assert config.selection_values()['N'] == [config.dims.c ** config.dims.n]


def test_bundled_names():
    assert bundled_configs() == ['egn-2x2', 'multigame-wright', 'sflow-path', 'zero-payoff']


def test_defaults():
    config = parse_config({'title': 'minimal', 'dims': {'n': 2, 'c': 3}, 'payoff': {'kind': 'zero'}})
    assert config.integrator.scheme == 'geometric-euler'
    assert config.initial.kind == 'barycenter'
    assert config.analysis.nash
    assert not config.analysis.embedded
    assert config.tags == []
    assert np.allclose(config.initial_state(), 1 / 3)


def test_explicit_initial_state():
    config = load_config(os.path.join(TESTCASE_DIR, 'explicit-initial.json'))
    assert np.array_equal(config.initial_state(), [[0.2, 0.3, 0.5], [0.6, 0.3, 0.1]])
    assert config.output_dir == 'explicit'
    assert config.integrator.stride == 10


def test_random_initial_state_is_seeded():
    config = load_config(os.path.join(TESTCASE_DIR, 'potential-path.json'))
    assert np.array_equal(config.initial_state(), config.initial_state())
    assert np.all(config.initial_state().max(axis=1) >= 0.8)
    other = config.with_overrides(seed=8)
    assert not np.array_equal(config.initial_state(), other.initial_state())


@pytest.mark.parametrize("graph", ['identity', 'path', 'complete'])
def test_named_graphs(graph):
    config = parse_config({'title': graph, 'dims': {'n': 3, 'c': 2}, 'payoff': {'kind': 'sflow', 'graph': graph}})
    omega = config.build_model().omega.omega
    assert np.allclose(omega.sum(axis=1), 1)


def test_multigame_needs_game_per_node():
    with pytest.raises(ConfigError) as info:
        parse_config({'title': 'games', 'dims': {'n': 2, 'c': 2},
                      'payoff': {'kind': 'multigame', 'games': [[[1, 0], [0, 1]]]}})
    assert info.value.field == 'payoff.games'


def test_with_overrides():
    config = load_config('egn-2x2')
    changed = config.with_overrides(seed=5, h=0.5, t_end=2.0, output_dir='elsewhere', size_cap=64)
    assert (changed.seed, changed.integrator.h, changed.integrator.t_end) == (5, 0.5, 2.0)
    assert changed.output_dir == 'elsewhere'
    assert changed.size_cap == 64
    assert changed.integrator.scheme == config.integrator.scheme
    assert config.with_overrides() == config
    with pytest.raises(ConfigError):
        config.with_overrides(size_cap=2)
    with pytest.raises(ConfigError):
        config.with_overrides(h=-1.0)


def test_round_trip():
    config = load_config('sflow-path')
    assert ExperimentConfig.from_dict(config.to_dict()) == config


def test_resolve():
    assert resolve_config_path('zero-payoff') == os.path.join(CONFIG_DIR, 'zero-payoff.json')
    with pytest.raises(ConfigError) as info:
        resolve_config_path('no-such-config')
    assert 'zero-payoff' in str(info.value)


def test_malformed_json(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"title": ', encoding='UTF-8')
    with pytest.raises(ConfigError) as info:
        load_config(str(path))
    assert 'broken.json: line 1' in str(info.value)
