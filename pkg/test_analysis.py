"""Tests for convergence metrics and CSV export."""

import csv
from dataclasses import replace

import numpy as np
import pytest

from src.analysis import (convergence_report, decay_residual, error_labels, error_norm_series, export_csv,
                          export_figures, export_report_csv, figure_series, format_value, load_trace_csv,
                          lyapunov_series, settling_time, trace_columns)
from src.config_loader import RunSpecLoader, reference_run_spec
from src.models import ConvergenceReport
from src.simulate import run_closed_loop


def short_trace(t_end=0.5, **changes):
    sim_config = RunSpecLoader().to_sim_config(reference_run_spec())
    return run_closed_loop(replace(sim_config, t_end=t_end, **changes))


def test_format_value_significant_digits():
    assert float(format_value(-6.0)) == -6.0
    assert float(format_value(1.0 / 3.0)) == pytest.approx(1.0 / 3.0, rel=1e-8)
    assert 'e' not in format_value(1.23456789e-7)
    assert format_value(0.1) == format_value(0.1)


def test_settling_time():
    times = np.arange(6, dtype=float)
    assert settling_time(times, np.array([5.0, 2.0, 0.5, 0.01, 0.001, 0.0001]), 0.1) == 3.0
    assert settling_time(times, np.array([5.0, 0.01, 3.0, 0.01, 0.01, 0.01]), 0.1) == 3.0
    assert settling_time(times, np.full(6, 0.01), 0.1) == 0.0
    assert settling_time(times, np.array([0.01, 0.01, 0.01, 0.01, 0.01, 1.0]), 0.1) is None


def test_error_norm_series_starts_at_reference_norm():
    times, norms = error_norm_series(short_trace())
    assert times[0] == 0.0
    assert norms[0] == pytest.approx(np.sqrt(90.5))
    assert np.all(np.diff(norms) < 0)


def test_lyapunov_series_matches_errors():
    trace = short_trace()
    times, V = lyapunov_series(trace)
    assert V[0] == pytest.approx(45.25)
    assert np.allclose(V, 0.5 * np.sum(trace.stacked_errors() ** 2, axis=1))


def test_convergence_report():
    trace = short_trace(t_end=10.0)
    report = convergence_report(trace, 1e-3)
    assert report.lyapunov_monotone
    assert report.all_settled
    assert report.max_decay_residual < 1e-6
    # |e| < 1e-3 requires exp(-t) * 6 < 1e-3
    assert max(report.settling_times.values()) <= 8.8
    assert report.final_error_norm < 1e-3

    with pytest.raises(ValueError):
        convergence_report(trace, 0.0)


def test_report_marks_unsettled_components(tmp_path):
    report = convergence_report(short_trace(), 1e-3)
    assert not report.all_settled

    path = export_report_csv(report, str(tmp_path / 'report.csv'))
    with open(path, newline='') as handle:
        rows = dict(csv.reader(handle))
    assert rows['metric'] == 'value'
    assert rows['lyapunov_monotone'] == 'true'
    assert rows['settling_time:e11_2131'] == 'not-settled'


def test_trace_export_round_trip(tmp_path):
    trace = short_trace()
    path = export_csv(trace, str(tmp_path / 'nested' / 'trace.csv'))
    columns = load_trace_csv(path)

    assert list(columns) == trace_columns(trace)
    assert trace_columns(trace)[:3] == ['t', 'x11', 'x12']
    assert trace_columns(trace)[-1] == 'V'
    assert 'U23' in columns
    assert len(columns['t']) == len(trace)
    for k, label in enumerate(error_labels(trace)):
        assert np.allclose(columns[label], trace.stacked_errors()[:, k], rtol=1e-8, atol=1e-12)


def test_export_is_byte_identical(tmp_path):
    first = export_csv(short_trace(), str(tmp_path / 'a.csv'))
    second = export_csv(short_trace(), str(tmp_path / 'b.csv'))
    with open(first, 'rb') as a, open(second, 'rb') as b:
        assert a.read() == b.read()


def test_figure_series_labels():
    trace = short_trace()
    labels, rows = figure_series(trace, 1, 1)
    assert labels == ['t', 'x12+y11', 'z13+w11']
    assert rows.shape == (len(trace), 3)
    # drive minus response is the slot error
    assert np.allclose(rows[:, 1] - rows[:, 2], trace.errors[:, 0, 0])

    labels, _ = figure_series(trace, 2, 3)
    assert labels == ['t', 'x22+y21', 'z21+w23']


def test_export_figures(tmp_path):
    paths = export_figures(short_trace(), str(tmp_path))
    assert [p.rsplit('/', 1)[-1] for p in paths] == [f"figure{k}.csv" for k in range(1, 8)]
    figure7 = load_trace_csv(paths[-1])
    assert list(figure7)[1:] == ['e11_2131', 'e12_1322', 'e13_3213', 'e21_3221', 'e22_1332', 'e23_2113']


def test_report_type_and_explicit_gain():
    assert isinstance(convergence_report(short_trace(), 1.0), ConvergenceReport)
    assert decay_residual(short_trace(), gain=1.0) < 1e-6


def test_decay_residual_of_exact_exponential():
    trace = short_trace()
    e0 = np.array([-6.0, 6.0, -1.0, -1.5, -2.5, -3.0])
    times = np.linspace(0.0, 10.0, 1001)
    errors = (e0[None, :] * np.exp(-2.0 * times)[:, None]).reshape(len(times), 2, 3)
    exact = replace(trace, times=times, errors=errors, gain=2.0,
                    lyapunov=0.5 * np.sum(errors.reshape(len(times), -1) ** 2, axis=1))
    assert decay_residual(exact) <= 1e-9
    assert decay_residual(exact, gain=1.0) > 1.0


def test_settling_times_follow_exponential_decay():
    trace = short_trace(t_end=10.0)
    report = convergence_report(trace, 1e-3)
    for label, e0 in zip(error_labels(trace), trace.stacked_errors()[0]):
        assert report.settling_times[label] == pytest.approx(np.log(abs(e0) / 1e-3), abs=0.05)


def test_format_value_width_and_sign():
    assert format_value(45.25) == '45.2500000'
    assert format_value(2.5e-7) == '0.000000250000000'
    assert format_value(-6.0) == '-6.00000000'
    assert format_value(-0.0) == '0.00000000'
    assert format_value(0.0) == '0.00000000'
    assert format_value(999999999.6) == '1000000000'
    for value in (45.25, 2.5e-7, -6.0, 1.0 / 3.0, 123456.789):
        assert len(format_value(value).lstrip('-0.').replace('.', '')) == 9
