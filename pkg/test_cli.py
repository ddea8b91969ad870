"""Tests for the command-line interface."""

import json
import os
import re

from click.testing import CliRunner

from src.cli import main
from src.config_loader import RunSpecLoader, apply_overrides, reference_run_spec


def write_config(path, **overrides):
    spec = apply_overrides(reference_run_spec(), **overrides)
    return RunSpecLoader().save(spec, str(path))


def test_version():
    result = CliRunner().invoke(main, ['version'])
    assert result.exit_code == 0
    assert 'chaossync v1.0.0' in result.output


def test_enumerate_patterns():
    result = CliRunner().invoke(main, ['enumerate-patterns', '3'])
    assert result.exit_code == 0
    assert '78 valid switching tuples of 81' in result.output

    result = CliRunner().invoke(main, ['enumerate-patterns', '2', '--format', 'json'])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert (data['valid'], data['total']) == (14, 16)


def test_enumerate_patterns_rejects_n_one():
    result = CliRunner().invoke(main, ['enumerate-patterns', '1'])
    assert result.exit_code == 2
    assert 'no switching is possible' in result.output


def test_validate_reference_config(tmp_path):
    path = write_config(tmp_path / 'run.json')
    result = CliRunner().invoke(main, ['validate', '--config', path])
    assert result.exit_code == 0
    assert 'ok' in result.output.splitlines()[-1]
    assert 'j=m≠i≠l' in result.output

    result = CliRunner().invoke(main, ['validate', '--config', path, '--format', 'json'])
    data = json.loads(result.output)
    assert data['success']
    assert len(data['slots']) == 6


def test_validate_duplicate_l_index(tmp_path):
    path = write_config(tmp_path / 'run.json')
    with open(path) as handle:
        data = json.load(handle)
    data['assignment']['block1'][1] = '(1,3,3)'
    with open(path, 'w') as handle:
        json.dump(data, handle, indent=2)

    result = CliRunner().invoke(main, ['validate', '--config', path])
    assert result.exit_code == 2
    assert 'block1 slot 2' in result.output

    result = CliRunner().invoke(main, ['simulate', '--config', path, '--out', str(tmp_path / 'out')])
    assert result.exit_code == 2
    assert 'block1 slot 2' in result.output


def test_validate_flags_non_switching_and_scaling(tmp_path):
    path = write_config(tmp_path / 'run.json')
    with open(path) as handle:
        data = json.load(handle)
    data['assignment']['block1'] = ['(1,1,1)', '(2,3,2)', '(3,2,3)']
    for key in ('c1', 'c2', 'd1', 'd2'):
        data['scaling'][key] = [0.0, 0.0, 0.0]
    with open(path, 'w') as handle:
        json.dump(data, handle, indent=2)

    result = CliRunner().invoke(main, ['validate', '--config', path, '--format', 'json'])
    assert result.exit_code == 2
    violations = json.loads(result.output)['violations']
    assert any('non-switching' in v and 'block1 slot 1' in v for v in violations)
    assert any('admissibility' in v for v in violations)


def test_simulate_writes_artifacts(tmp_path):
    path = write_config(tmp_path / 'run.json', t_end=0.5)
    out = tmp_path / 'out'
    result = CliRunner().invoke(main, ['simulate', '--config', path, '--out', str(out)])
    assert result.exit_code == 0
    assert (out / 'trace.csv').exists()
    assert (out / 'report.csv').exists()


def test_simulate_flags_override_file(tmp_path):
    path = write_config(tmp_path / 'run.json', t_end=5.0)
    result = CliRunner().invoke(main, ['simulate', '--config', path, '--out', str(tmp_path / 'out'),
                                       '--t-end', '0.2', '--gain', '2', '--policy', 'w-channel',
                                       '--format', 'json'])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert data['policy'] == 'w-channel'
    # 0.2 / (1e-3 * 10) snapshots after t = 0
    assert data['samples'] == 21


def test_simulate_uses_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv('CHAOSSYNC_OUT', str(tmp_path / 'env-out'))
    path = write_config(tmp_path / 'run.json', t_end=0.1)
    result = CliRunner().invoke(main, ['simulate', '--config', path])
    assert result.exit_code == 0
    assert (tmp_path / 'env-out' / 'trace.csv').exists()


def test_simulate_missing_config(tmp_path):
    result = CliRunner().invoke(main, ['simulate', '--config', str(tmp_path / 'absent.json')])
    assert result.exit_code == 2
    assert 'Cannot read config file' in result.output


def test_simulate_divergence_exit_code(tmp_path):
    path = write_config(tmp_path / 'run.json', t_end=10.0)
    result = CliRunner().invoke(main, ['simulate', '--config', path, '--out', str(tmp_path / 'out'),
                                       '--dt', '0.5'])
    assert result.exit_code == 3


def test_reproduce_paper_is_deterministic(tmp_path):
    runner = CliRunner()
    first = runner.invoke(main, ['reproduce-paper', '--out', str(tmp_path / 'a')])
    second = runner.invoke(main, ['reproduce-paper', '--out', str(tmp_path / 'b')])
    assert first.exit_code == 0
    assert second.exit_code == 0

    names = sorted(os.listdir(tmp_path / 'a'))
    assert names == sorted(os.listdir(tmp_path / 'b'))
    assert {f"figure{k}.csv" for k in range(1, 8)} <= set(names)
    for name in names:
        with open(tmp_path / 'a' / name, 'rb') as a, open(tmp_path / 'b' / name, 'rb') as b:
            assert a.read() == b.read()

    with open(tmp_path / 'a' / 'figure1.csv') as handle:
        assert handle.readline().strip() == 't,x12+y11,z13+w11'


def test_reproduce_paper_figures_synchronize(tmp_path):
    from src.analysis import load_trace_csv

    result = CliRunner().invoke(main, ['reproduce-paper', '--out', str(tmp_path)])
    assert result.exit_code == 0

    figure1 = load_trace_csv(str(tmp_path / 'figure1.csv'))
    late = figure1['t'] > 8.7
    assert late.any()
    assert abs(figure1['x12+y11'][late] - figure1['z13+w11'][late]).max() < 1e-3

    figure7 = load_trace_csv(str(tmp_path / 'figure7.csv'))
    for label, values in figure7.items():
        if label != 't':
            assert abs(values[late]).max() < 1e-3


def test_sweep_runs_each_config(tmp_path):
    first = write_config(tmp_path / 'fast.json', t_end=0.2)
    second = write_config(tmp_path / 'slow.json', t_end=0.2, gain=0.5)
    out = tmp_path / 'sweep'
    result = CliRunner().invoke(main, ['sweep', first, second, '--out', str(out), '--workers', '2'])
    assert result.exit_code == 0
    assert (out / 'fast' / 'trace.csv').exists()
    assert (out / 'slow' / 'report.csv').exists()


def test_sweep_reports_worst_exit_code(tmp_path):
    good = write_config(tmp_path / 'good.json', t_end=0.2)
    result = CliRunner().invoke(main, ['sweep', good, str(tmp_path / 'missing.json'),
                                       '--out', str(tmp_path / 'sweep')])
    assert result.exit_code == 2


def test_simulate_even_split_diverges_on_reference_config(tmp_path):
    path = write_config(tmp_path / 'run.json', policy='even')
    result = CliRunner().invoke(main, ['simulate', '--config', path, '--out', str(tmp_path / 'out')])
    assert result.exit_code == 3
    assert re.search(r'exceeded .* at t=1\.[67]', result.output)


def test_validate_baseline_reports_identity_wiring(tmp_path):
    path = write_config(tmp_path / 'run.json')
    result = CliRunner().invoke(main, ['validate', '--config', path, '--variant', 'baseline', '--format', 'json'])
    assert result.exit_code == 0
    data = json.loads(result.output)
    assert [s['tuple'] for s in data['slots']] == ['1111', '2222', '3333'] * 2
    assert not any(s['switching'] for s in data['slots'])
