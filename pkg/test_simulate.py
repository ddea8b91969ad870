"""Tests for RK4 integration of the closed loop."""

from dataclasses import replace

import numpy as np
import pytest

from src.analysis import decay_residual, lyapunov_monotone
from src.config_loader import REFERENCE_ASSIGNMENT, RunSpecLoader, reference_run_spec
from src.exceptions import AssignmentError, DimensionError, DivergenceError, ScalingError
from src.models import ScalingConfig, SwitchAssignment
from src.simulate import build_control_law, rk4_step, run_closed_loop


def reference_config(**changes):
    """SimConfig of the reference run with some fields replaced."""
    sim_config = RunSpecLoader().to_sim_config(reference_run_spec())
    return replace(sim_config, **changes)


def test_rk4_step_on_linear_decay():
    dt = 0.1
    x = rk4_step(lambda s: -s, np.array([1.0, -2.0]), dt)
    z = -dt
    factor = 1 + z + z ** 2 / 2 + z ** 3 / 6 + z ** 4 / 24
    assert np.allclose(x, [factor, -2.0 * factor], atol=1e-15)

    with pytest.raises(ValueError):
        rk4_step(lambda s: -s, np.ones(2), 0.0)


def test_reference_run_decays_analytically():
    trace = run_closed_loop(reference_config(dt=1e-3, t_end=10.0, gain=1.0))

    assert trace.times[0] == 0.0
    assert trace.times[-1] == pytest.approx(10.0)
    assert np.allclose(trace.stacked_errors()[0], [-6, 6, -1, -1.5, -2.5, -3], atol=1e-12)
    assert decay_residual(trace) < 1e-6
    assert lyapunov_monotone(trace, ripple=1e-12)
    assert np.all(np.abs(trace.stacked_errors()[-1]) < 1e-3)


def test_trace_shapes_and_stride():
    trace = run_closed_loop(reference_config(t_end=0.5, record_stride=25))
    assert len(trace) == 21
    assert trace.states.shape == (21, 8, 3)
    assert trace.errors.shape == (21, 2, 3)
    assert trace.controls.shape == (21, 2, 3)
    assert np.allclose(np.diff(trace.times), 0.025)
    assert np.allclose(trace.state('x1')[0], [2.0, -3.0, 1.0])


def test_decay_residual_shrinks_with_step_size():
    residuals = []
    for dt in (0.02, 0.01, 0.005):
        trace = run_closed_loop(reference_config(dt=dt, t_end=1.0, record_stride=1))
        residuals.append(decay_residual(trace))
    # fourth-order method: halving dt cuts the residual by about 16
    assert residuals[0] / residuals[1] > 8
    assert residuals[1] / residuals[2] > 8


def test_larger_gain_decays_faster():
    slow = run_closed_loop(reference_config(t_end=2.0, gain=1.0))
    fast = run_closed_loop(reference_config(t_end=2.0, gain=3.0))
    assert np.linalg.norm(fast.stacked_errors()[-1]) < np.linalg.norm(slow.stacked_errors()[-1])
    assert decay_residual(fast) < 1e-6


def test_zero_initial_error_stays_zero():
    cfg = reference_config(t_end=2.0, policy='w-channel')
    ic = dict(cfg.initial_conditions)
    for block in (1, 2):
        ic[f"z{block}"] = ic[f"y{block}"].copy()
        x, y, z = ic[f"x{block}"], ic[f"y{block}"], ic[f"z{block}"]
        w = np.empty(3)
        for t in REFERENCE_ASSIGNMENT.block(block):
            w[t.m - 1] = x[t.i - 1] + y[t.j - 1] - z[t.l - 1]
        ic[f"w{block}"] = w
    trace = run_closed_loop(replace(cfg, initial_conditions=ic))
    assert np.max(np.abs(trace.stacked_errors())) < 1e-9


def test_uncontrolled_run_does_not_synchronize():
    trace = run_closed_loop(reference_config(t_end=2.0, controls_enabled=False))
    assert not np.any(trace.controls)
    assert decay_residual(trace) > 1.0


def test_split_policy_changes_states_not_errors():
    # even stays bounded on the reference run until t = 1.676
    even = run_closed_loop(reference_config(t_end=1.6, policy='even'))
    w_only = run_closed_loop(reference_config(t_end=1.6, policy='w-channel'))
    scale = 1.0 + max(np.abs(even.states).max(), np.abs(w_only.states).max())
    assert np.max(np.abs(even.stacked_errors() - w_only.stacked_errors())) < 1e-9 * scale
    assert np.max(np.abs(even.states - w_only.states)) > 1e-3

    z_only = run_closed_loop(reference_config(t_end=10.0, policy='z-channel'))
    w_only = run_closed_loop(reference_config(t_end=10.0, policy='w-channel'))
    assert np.max(np.abs(z_only.stacked_errors() - w_only.stacked_errors())) < 1e-8
    assert decay_residual(z_only) < 1e-6
    assert decay_residual(w_only) < 1e-6


def test_even_split_diverges_on_reference_run():
    with pytest.raises(DivergenceError) as info:
        run_closed_loop(reference_config(t_end=10.0, policy='even'))
    assert 1.6 < info.value.time < 1.8


def test_baseline_variant_uses_identity_wiring():
    trace = run_closed_loop(reference_config(t_end=1.0, variant='baseline'))
    assert trace.assignment.triplets(1) == [(1, 1, 1), (2, 2, 2), (3, 3, 3)]
    assert decay_residual(trace) < 1e-6


def test_reduced_variant_run():
    trace = run_closed_loop(reference_config(t_end=1.0, variant='corollary-2i', policy='even'))
    assert not np.any(trace.scaling.vector('c1'))
    assert decay_residual(trace) < 1e-6


def test_non_permutation_run_when_allowed():
    shared = SwitchAssignment.from_triplets([(2, 1, 3), (1, 3, 3), (3, 2, 1)], REFERENCE_ASSIGNMENT.triplets(2))
    with pytest.raises(AssignmentError):
        run_closed_loop(reference_config(t_end=0.5, assignment=shared))

    trace = run_closed_loop(reference_config(t_end=0.5, assignment=shared, allow_non_permutation=True))
    assert decay_residual(trace) < 1e-6


def test_divergence_guard():
    with pytest.raises(DivergenceError) as info:
        run_closed_loop(reference_config(t_end=1.0, divergence_limit=5.0))
    assert info.value.time is not None
    assert info.value.time <= 1.0


def test_config_checks():
    with pytest.raises(ValueError):
        run_closed_loop(reference_config(t_end=1e-4))
    with pytest.raises(ValueError):
        run_closed_loop(reference_config(record_stride=0))
    with pytest.raises(ScalingError):
        build_control_law(reference_config(scaling=ScalingConfig.identity(3).zeroed('c1', 'c2', 'd1', 'd2')))

    bad_ic = dict(reference_config().initial_conditions)
    bad_ic['z2'] = np.zeros(2)
    with pytest.raises(DimensionError):
        run_closed_loop(reference_config(initial_conditions=bad_ic))


def test_runs_are_deterministic():
    first = run_closed_loop(reference_config(t_end=0.5))
    second = run_closed_loop(reference_config(t_end=0.5))
    assert np.array_equal(first.states, second.states)
    assert np.array_equal(first.controls, second.controls)
