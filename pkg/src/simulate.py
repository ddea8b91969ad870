"""Fixed-step integration of the drive/response closed loop."""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .controller import ControlLaw, apply_variant
from .dynamics import as_state
from .exceptions import DimensionError, DivergenceError, NonFiniteStateError, ScalingError
from .models import ROLES, ClosedLoopTrace, SimConfig, SystemDef
from .scheme import effective_assignment, validate_assignment, validate_scaling


logger = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """Uncontrolled trajectory of a single system."""
    times: np.ndarray
    states: np.ndarray
    system: str


def rk4_step(field: Callable[[np.ndarray], np.ndarray], state: np.ndarray, dt: float) -> np.ndarray:
    """
    One classical fourth-order Runge-Kutta step.

    Args:
        field: Map from state to time derivative
        state: Current state (any array shape the field accepts)
        dt: Positive step size

    Returns:
        State after one step
    """
    if dt <= 0:
        raise ValueError(f"Step size must be positive, got {dt}")
    k1 = field(state)
    k2 = field(state + 0.5 * dt * k1)
    k3 = field(state + 0.5 * dt * k2)
    k4 = field(state + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NonFiniteStateError("Non-finite derivative encountered during RK4 step")
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _step_count(dt: float, t_end: float) -> int:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t_end < dt:
        raise ValueError(f"t_end ({t_end}) must be at least dt ({dt})")
    return int(round(t_end / dt))


class ClosedLoop:
    """The coupled system of eight states with controls fed into the responses.

    Controls are re-synthesized from the full state at every field
    evaluation, so each RK4 stage sees its own control.
    """

    def __init__(self, law: ControlLaw):
        self.law = law

    def __call__(self, X: np.ndarray) -> np.ndarray:
        F = self.law.derivatives(X)
        if self.law.enabled:
            E = self.law.errors(X)
            _, u = self.law.controls(X, F, E)
            # rows 4..7 are z1, z2, w1, w2, matching u1..u4
            F[4:] += u
        return F

    def snapshot(self, X: np.ndarray):
        """Errors, aggregate controls and Lyapunov value at a state."""
        E = self.law.errors(X)
        U, _ = self.law.controls(X, E=E)
        return E, U, 0.5 * float(np.sum(E * E))


def build_control_law(cfg: SimConfig) -> ControlLaw:
    """
    Validate a config and build the control law it describes.

    Args:
        cfg: Simulation config

    Returns:
        ControlLaw with the variant's scaling and assignment applied
    """
    n = cfg.dim
    for role in ROLES:
        system = cfg.systems[role]
        if system.dim != n:
            raise DimensionError(f"System '{system.name}' for role {role} has dimension {system.dim}, expected {n}")

    assignment = effective_assignment(cfg.assignment, cfg.variant)
    validate_assignment(assignment, n, allow_non_permutation=cfg.allow_non_permutation,
                        allow_non_switching=cfg.variant == 'baseline').raise_for_violations()

    scaling = apply_variant(cfg.scaling, cfg.variant)
    violations = validate_scaling(scaling, n, cfg.variant)
    if violations:
        raise ScalingError(violations)

    return ControlLaw(scaling, assignment, cfg.systems, gain=cfg.gain, policy=cfg.policy,
                      allow_non_permutation=cfg.allow_non_permutation, enabled=cfg.controls_enabled)


def run_closed_loop(cfg: SimConfig) -> ClosedLoopTrace:
    """
    Integrate the controlled drive/response system.

    Args:
        cfg: Simulation config

    Returns:
        ClosedLoopTrace sampled every record_stride steps, starting at t = 0
    """
    if cfg.record_stride < 1:
        raise ValueError(f"record_stride must be at least 1, got {cfg.record_stride}")
    steps = _step_count(cfg.dt, cfg.t_end)
    law = build_control_law(cfg)
    loop = ClosedLoop(law)
    n = law.n

    X = np.array([as_state(cfg.initial_conditions[role], n) for role in ROLES])
    samples = steps // cfg.record_stride + 1
    times = np.arange(samples) * (cfg.dt * cfg.record_stride)
    states = np.empty((samples, len(ROLES), n))
    errors = np.empty((samples, 2, n))
    controls = np.empty((samples, 2, n))
    lyapunov = np.empty(samples)

    logger.info(f"Closed-loop run: variant={cfg.variant}, policy={cfg.policy}, gain={cfg.gain:g}, "
                f"dt={cfg.dt:g}, t_end={cfg.t_end:g}, {steps} steps")

    def record(slot: int):
        states[slot] = X
        errors[slot], controls[slot], lyapunov[slot] = loop.snapshot(X)

    record(0)
    for step in range(1, steps + 1):
        X = rk4_step(loop, X, cfg.dt)
        peak = np.max(np.abs(X))
        if not np.isfinite(peak):
            raise NonFiniteStateError(f"Non-finite state at t={step * cfg.dt:g}")
        if peak > cfg.divergence_limit:
            t = step * cfg.dt
            logger.error(f"Divergence at t={t:g}: |state| reached {peak:.3e}")
            raise DivergenceError(f"State magnitude {peak:.3e} exceeded {cfg.divergence_limit:g} at t={t:g}", time=t)
        if step % cfg.record_stride == 0:
            record(step // cfg.record_stride)

    logger.info(f"Closed-loop run finished: |e(t_end)|={np.sqrt(2.0 * lyapunov[-1]):.3e}")
    return ClosedLoopTrace(
        times=times,
        states=states,
        errors=errors,
        controls=controls,
        lyapunov=lyapunov,
        assignment=law.assignment,
        scaling=law.scaling,
        gain=cfg.gain,
        dt=cfg.dt,
        record_stride=cfg.record_stride,
        policy=cfg.policy,
        variant=cfg.variant,
    )


def run_uncontrolled(system: SystemDef, x0, dt: float, t_end: float, record_stride: int = 1,
                     divergence_limit: float = 1e6) -> Trajectory:
    """
    Integrate a single system with no control.

    Args:
        system: System to integrate
        x0: Initial state
        dt: Step size
        t_end: Horizon
        record_stride: Keep every k-th step
        divergence_limit: Abort past this magnitude

    Returns:
        Trajectory
    """
    steps = _step_count(dt, t_end)
    x = as_state(x0, system.dim)
    samples = steps // record_stride + 1
    times = np.arange(samples) * (dt * record_stride)
    states = np.empty((samples, system.dim))
    states[0] = x
    for step in range(1, steps + 1):
        x = rk4_step(system, x, dt)
        if np.max(np.abs(x)) > divergence_limit:
            raise DivergenceError(f"{system.name} left |x| <= {divergence_limit:g} at t={step * dt:g}", time=step * dt)
        if step % record_stride == 0:
            states[step // record_stride] = x
    logger.debug(f"Uncontrolled {system.name}: {steps} steps, max |x|={np.max(np.abs(states)):.3g}")
    return Trajectory(times=times, states=states, system=system.name)


def separation_growth(system: SystemDef, x0, delta: float = 1e-8, dt: float = 1e-3, t_end: float = 10.0) -> float:
    """
    Growth factor of the distance between two nearby uncontrolled trajectories.

    Args:
        system: System whose sensitivity is measured
        x0: Reference initial state
        delta: Initial offset applied to the first component
        dt: Step size
        t_end: Horizon

    Returns:
        Final separation divided by the initial one
    """
    x0 = as_state(x0, system.dim)
    shifted = x0.copy()
    shifted[0] += delta
    a = run_uncontrolled(system, x0, dt, t_end, record_stride=_step_count(dt, t_end))
    b = run_uncontrolled(system, shifted, dt, t_end, record_stride=_step_count(dt, t_end))
    initial = np.linalg.norm(shifted - x0)
    return float(np.linalg.norm(b.states[-1] - a.states[-1]) / initial)
