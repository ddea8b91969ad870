"""Tests for reading, writing and resolving run configs."""

import json
import os

import numpy as np
import pytest

import config
from src.config_loader import (RunSpecLoader, apply_overrides, parse_triplet, reference_run_spec,
                               resolve_output_dir)
from src.exceptions import ConfigError
from src.models import ScalingConfig


def reference_text():
    return RunSpecLoader().dumps(reference_run_spec())


def test_round_trip_is_identical():
    loader = RunSpecLoader()
    spec = reference_run_spec()
    assert loader.parse(loader.dumps(spec)) == spec

    tuned = apply_overrides(spec, gain=2.0, policy='even', out='runs/a')
    assert loader.parse(loader.dumps(tuned)) == tuned


def test_save_and_load(tmp_path):
    loader = RunSpecLoader()
    path = loader.save(reference_run_spec(), str(tmp_path / 'run.json'))
    assert loader.load(path) == reference_run_spec()


def test_defaults_and_identity_scaling():
    data = json.loads(reference_text())
    del data['integrator']
    del data['controller']
    data['scaling'] = 'identity'
    spec = RunSpecLoader().parse(json.dumps(data))
    assert spec.dt == config.DEFAULT_DT
    assert spec.policy == config.DEFAULT_POLICY
    assert spec.scaling == ScalingConfig.identity(3)


def test_triplets_accept_strings_and_lists():
    assert parse_triplet('(2,1,3)', 'k') == (2, 1, 3)
    assert parse_triplet(' ( 2, 1, 3 ) ', 'k') == (2, 1, 3)
    assert parse_triplet([3, 2, 1], 'k') == (3, 2, 1)
    with pytest.raises(ConfigError):
        parse_triplet('2,1,3', 'k')
    with pytest.raises(ConfigError):
        parse_triplet([1, 2], 'k')


def test_malformed_json_reports_line():
    text = reference_text().replace('"lu"', 'lu', 1)
    with pytest.raises(ConfigError) as info:
        RunSpecLoader().parse(text)
    assert info.value.line is not None
    assert 'Malformed JSON' in str(info.value)


def test_bad_value_names_key_and_line():
    text = reference_text().replace('"z-channel"', '"sideways"')
    with pytest.raises(ConfigError) as info:
        RunSpecLoader().parse(text)
    assert info.value.key == 'controller.policy'
    lines = text.splitlines()
    assert '"policy"' in lines[info.value.line - 1]
    assert '[key: controller.policy]' in str(info.value)


def test_wrong_vector_length():
    data = json.loads(reference_text())
    data['initial_conditions']['z2'] = [1.0, 2.0]
    with pytest.raises(ConfigError) as info:
        RunSpecLoader().parse(json.dumps(data, indent=2))
    assert info.value.key == 'initial_conditions.z2'
    assert info.value.line is not None


def test_missing_sections_and_unknown_keys():
    data = json.loads(reference_text())
    del data['systems']
    with pytest.raises(ConfigError) as info:
        RunSpecLoader().parse(json.dumps(data))
    assert info.value.key == 'systems'

    data = json.loads(reference_text())
    data['plotting'] = {}
    with pytest.raises(ConfigError):
        RunSpecLoader().parse(json.dumps(data))

    data = json.loads(reference_text())
    data['integrator']['dt'] = -1
    with pytest.raises(ConfigError):
        RunSpecLoader().parse(json.dumps(data))


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError) as info:
        RunSpecLoader().load(str(tmp_path / 'absent.json'))
    assert 'Cannot read' in str(info.value)


def test_overrides_take_precedence():
    spec = reference_run_spec()
    updated = apply_overrides(spec, dt=0.01, t_end=2.0, gain=3.0, policy='w-channel', variant='baseline')
    assert (updated.dt, updated.t_end, updated.gain) == (0.01, 2.0, 3.0)
    assert updated.policy == 'w-channel'
    assert updated.variant == 'baseline'
    assert apply_overrides(spec) == spec

    with pytest.raises(ConfigError):
        apply_overrides(spec, dt=1.0, t_end=0.5)
    with pytest.raises(ConfigError):
        apply_overrides(spec, gain=-1.0)


def test_output_directory_precedence(tmp_path, monkeypatch):
    spec = reference_run_spec()
    monkeypatch.delenv(config.OUTPUT_ENV_VAR, raising=False)
    monkeypatch.chdir(tmp_path)
    assert resolve_output_dir(spec) == os.path.join(os.getcwd(), 'chaossync-out')

    monkeypatch.setenv(config.OUTPUT_ENV_VAR, str(tmp_path / 'env'))
    assert resolve_output_dir(spec) == str(tmp_path / 'env')

    assert resolve_output_dir(apply_overrides(spec, out=str(tmp_path / 'flag'))) == str(tmp_path / 'flag')


def test_system_params_reach_the_simulation():
    data = json.loads(reference_text())
    data['system_params'] = {'lu': {'c': 12.0}}
    loader = RunSpecLoader()
    spec = loader.parse(json.dumps(data))
    sim_config = loader.to_sim_config(spec)
    assert sim_config.systems['x2'].params['c'] == 12.0
    assert sim_config.systems['x1'].params['c'] == 6.0
    assert np.allclose(sim_config.initial_conditions['w1'], [1.0, -1.5, -2.0])


def test_unresolvable_systems_are_rejected():
    loader = RunSpecLoader()
    data = json.loads(reference_text())
    data['systems']['w2'] = 'chen'
    spec = loader.parse(json.dumps(data))
    assert any(problem.startswith('systems.w2') for problem in loader.check(spec))
    with pytest.raises(ConfigError):
        loader.to_sim_config(spec)

    data = json.loads(reference_text())
    data['system_params'] = {'lu': {'sigma': 1.0}}
    assert loader.check(loader.parse(json.dumps(data)))
