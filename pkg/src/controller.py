"""Controller synthesis: aggregate controls, channel splitting and reduced schemes."""

import logging
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np

from .exceptions import DimensionError, UnrealizableControlError
from .models import (BLOCKS, POLICIES, ROLES, AggregateControl, ControlVectors, ErrorVector, ScalingConfig,
                     SwitchAssignment, SystemDef)
from .scheme import VARIANT_ZEROED, block_error, validate_assignment


logger = logging.getLogger(__name__)


StateInput = Union[Mapping[str, np.ndarray], Sequence[np.ndarray], np.ndarray]


def _rows(block: int):
    """Row indices of (x, y, z, w) for a block in ROLES order."""
    return block - 1, block + 1, block + 3, block + 5


def stack_states(states: StateInput, n: Optional[int] = None) -> np.ndarray:
    """
    Arrange the eight states as an (8, n) array in ROLES order.

    Args:
        states: Mapping role -> state, or a sequence in ROLES order
        n: Expected dimension

    Returns:
        numpy array of shape (8, n)
    """
    if isinstance(states, Mapping):
        missing = [role for role in ROLES if role not in states]
        if missing:
            raise KeyError(f"Missing states for roles: {', '.join(missing)}")
        states = [states[role] for role in ROLES]
    X = np.array([np.asarray(s, dtype=float) for s in states], dtype=float)
    if X.ndim != 2 or X.shape[0] != len(ROLES):
        raise DimensionError(f"Expected 8 states of equal dimension, got shape {X.shape}")
    if n is not None and X.shape[1] != n:
        raise DimensionError(f"Expected states of dimension {n}, got {X.shape[1]}")
    return X


def _system_list(systems: Union[Mapping[str, SystemDef], Sequence[SystemDef]]):
    if isinstance(systems, Mapping):
        return [systems[role] for role in ROLES]
    systems = list(systems)
    if len(systems) != len(ROLES):
        raise ValueError(f"Expected 8 systems, got {len(systems)}")
    return systems


class ControlLaw:
    """Aggregate control synthesis and channel split for a fixed scheme.

    Coefficients, index gathers and channel shares depend only on the
    scaling, assignment and policy, so they are computed once here and
    reused on every field evaluation.
    """

    def __init__(self, scaling: ScalingConfig, assignment: SwitchAssignment,
                 systems: Union[Mapping[str, SystemDef], Sequence[SystemDef]],
                 gain: float = 1.0, policy: str = 'even', allow_non_permutation: bool = False,
                 enabled: bool = True):
        if policy not in POLICIES:
            raise ValueError(f"Unknown split policy '{policy}' (choose from {', '.join(POLICIES)})")
        if gain <= 0:
            raise ValueError(f"Gain must be positive, got {gain}")
        self.n = assignment.dim
        if set(scaling.dims.values()) != {self.n}:
            raise DimensionError(f"Scaling vectors must all have dimension {self.n}")
        self.systems = _system_list(systems)
        for system in self.systems:
            if system.dim != self.n:
                raise DimensionError(f"System '{system.name}' has dimension {system.dim}, scheme needs {self.n}")
        self.scaling = scaling
        self.assignment = assignment
        self.gain = float(gain)
        self.policy = policy
        self.enabled = enabled
        self.coeffs = {b: scaling.block(b) for b in BLOCKS}
        self.idx = {b: assignment.indices(b) for b in BLOCKS}
        self.z_mul = {}
        self.w_mul = {}
        self.dead = {}
        self.split_problems: Dict[int, Optional[str]] = {}
        for b in BLOCKS:
            self._prepare_split(b, allow_non_permutation)

    def _prepare_split(self, block: int, allow_non_permutation: bool):
        _, _, c, d = self.coeffs[block]
        _, _, l_idx, m_idx = self.idx[block]
        cl = c[l_idx]
        dm = d[m_idx]
        counts = np.bincount(l_idx, minlength=self.n)
        shared = counts[l_idx] > 1
        self.split_problems[block] = None
        if shared.any() and not allow_non_permutation:
            self.split_problems[block] = (
                f"block{block}: l-indices repeat, so z-channel controls would be written twice")

        z_share = np.zeros(self.n)
        w_share = np.zeros(self.n)
        for k in range(self.n):
            if cl[k] == 0 and dm[k] == 0:
                continue
            if shared[k] or cl[k] == 0:
                if dm[k] == 0:
                    self.split_problems[block] = (
                        f"block{block} slot {k + 1}: z-channel unusable and d{block}[{k + 1}] = 0")
                    continue
                w_share[k] = 1.0
            elif dm[k] == 0:
                z_share[k] = 1.0
            elif self.policy == 'even':
                z_share[k] = w_share[k] = 0.5
            elif self.policy == 'w-channel':
                w_share[k] = 1.0
            else:
                z_share[k] = 1.0

        with np.errstate(divide='ignore', invalid='ignore'):
            self.z_mul[block] = np.where(z_share > 0, z_share / np.where(cl == 0, 1.0, cl), 0.0)
            self.w_mul[block] = np.where(w_share > 0, w_share / np.where(dm == 0, 1.0, dm), 0.0)
        self.dead[block] = (cl == 0) & (dm == 0)
        if shared.any():
            logger.debug(f"block{block}: shared l-indices routed to the w-channel")

    def derivatives(self, X: np.ndarray) -> np.ndarray:
        """Uncontrolled field values of all eight systems, shape (8, n)."""
        return np.array([system(X[k]) for k, system in enumerate(self.systems)])

    def errors(self, X: np.ndarray) -> np.ndarray:
        """Error blocks, shape (2, n)."""
        out = np.empty((2, self.n))
        for b in BLOCKS:
            x, y, z, w = _rows(b)
            out[b - 1] = block_error(X[x], X[y], X[z], X[w], self.coeffs[b], self.idx[b])
        return out

    def aggregate(self, X: np.ndarray, F: Optional[np.ndarray] = None,
                  E: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Aggregate controls U1, U2 for the current full state.

        Args:
            X: (8, n) states
            F: Precomputed uncontrolled derivatives, if available
            E: Precomputed errors, if available

        Returns:
            (2, n) array holding U1 and U2
        """
        if F is None:
            F = self.derivatives(X)
        if E is None:
            E = self.errors(X)
        U = np.empty((2, self.n))
        for b in BLOCKS:
            x, y, z, w = _rows(b)
            # same gather as the error, applied to the field values
            U[b - 1] = block_error(F[x], F[y], F[z], F[w], self.coeffs[b], self.idx[b]) + self.gain * E[b - 1]
        return U

    def split(self, U: np.ndarray) -> np.ndarray:
        """
        Split aggregate controls onto the four physical channels.

        Args:
            U: (2, n) aggregate controls

        Returns:
            (4, n) array holding u1, u2, u3, u4
        """
        u = np.zeros((4, self.n))
        for b in BLOCKS:
            if self.split_problems[b]:
                raise UnrealizableControlError(self.split_problems[b])
            Ub = U[b - 1]
            dead = self.dead[b]
            if dead.any() and np.any(Ub[dead] != 0):
                slot = int(np.flatnonzero(dead & (Ub != 0))[0]) + 1
                raise UnrealizableControlError(
                    f"block{b} slot {slot}: c and d are both zero but U{b}[{slot}] = {Ub[slot - 1]:g}")
            _, _, l_idx, m_idx = self.idx[b]
            u[b - 1][l_idx] = self.z_mul[b] * Ub
            u[b + 1][m_idx] = self.w_mul[b] * Ub
        return u

    def controls(self, X: np.ndarray, F: Optional[np.ndarray] = None, E: Optional[np.ndarray] = None):
        """Aggregate and split controls; zero when the law is disabled."""
        if not self.enabled:
            return np.zeros((2, self.n)), np.zeros((4, self.n))
        U = self.aggregate(X, F, E)
        return U, self.split(U)


def synthesize_aggregate(states: StateInput, s: ScalingConfig, a: SwitchAssignment,
                         fields: Union[Mapping[str, SystemDef], Sequence[SystemDef]],
                         gain: float = 1.0, check: bool = True) -> AggregateControl:
    """
    Aggregate controls U1, U2 that make the error obey de/dt = -gain * e.

    Args:
        states: The eight states (mapping by role or sequence in ROLES order)
        s: Scaling config
        a: Switching assignment
        fields: The eight systems
        gain: Positive decay rate
        check: Validate the assignment first

    Returns:
        AggregateControl
    """
    if check:
        validate_assignment(a, a.dim).raise_for_violations()
    X = stack_states(states, a.dim)
    law = ControlLaw(s, a, fields, gain=gain)
    U = law.aggregate(X)
    return AggregateControl(U1=U[0], U2=U[1])


def split_control(U: AggregateControl, s: ScalingConfig, a: SwitchAssignment, policy: str = 'even',
                  allow_non_permutation: bool = False) -> ControlVectors:
    """
    Split aggregate controls onto u1..u4 keeping c[l]*u[l] + d[m]*u[m] = U[m].

    Args:
        U: Aggregate controls
        s: Scaling config
        a: Switching assignment
        policy: 'even', 'w-channel' or 'z-channel'
        allow_non_permutation: Permit repeated l-indices (routed to the w-channel)

    Returns:
        ControlVectors
    """
    n = a.dim
    for vector in (U.U1, U.U2):
        if np.shape(vector) != (n,):
            raise DimensionError(f"Aggregate control must have dimension {n}")
    # split needs no field values, so any placeholder systems of the right size do
    placeholders = [_ShapeOnly(n)] * len(ROLES)
    law = ControlLaw(s, a, placeholders, policy=policy, allow_non_permutation=allow_non_permutation)
    u = law.split(np.array([U.U1, U.U2], dtype=float))
    return ControlVectors(*u)


class _ShapeOnly:
    """Stand-in system carrying only a dimension."""

    def __init__(self, dim: int):
        self.dim = dim
        self.name = 'shape-only'


def apply_variant(scaling: ScalingConfig, variant: str) -> ScalingConfig:
    """Zero the scaling vectors a reduction variant removes."""
    if variant not in VARIANT_ZEROED:
        raise ValueError(f"Unknown variant '{variant}'")
    zeroed = VARIANT_ZEROED[variant]
    return scaling.zeroed(*sorted(zeroed)) if zeroed else scaling


# Corollary closed forms: (block, channel) pairs that carry control.
_REDUCED_CHANNELS = {
    'corollary-2i': ((1, 'w'), (2, 'w')),
    'corollary-2ii': ((1, 'z'), (2, 'z')),
    'corollary-3i': ((2, 'w'),),
    'corollary-3ii': ((2, 'z'),),
    'corollary-3iii': ((1, 'w'),),
    'corollary-3iv': ((1, 'z'),),
}


def _single_channel(block: int, channel: str, X: np.ndarray, s: ScalingConfig, a: SwitchAssignment,
                    systems, gain: float) -> np.ndarray:
    """Closed-form controller of one surviving channel, slot by slot."""
    x, y, z, w = (X[r] for r in _rows(block))
    fx, fy, fz, fw = (systems[r] for r in _rows(block))
    coeff_a, coeff_b, coeff_c, coeff_d = s.block(block)
    f, g, h, k = fx(x), fy(y), fz(z), fw(w)
    u = np.zeros(a.dim)
    for t in a.block(block):
        i, j, l, m = t.i - 1, t.j - 1, t.l - 1, t.m - 1
        e = coeff_a[i] * x[i] + coeff_b[j] * y[j] - coeff_c[l] * z[l] - coeff_d[m] * w[m]
        drive = coeff_a[i] * f[i] + coeff_b[j] * g[j] + gain * e
        if channel == 'w':
            if coeff_d[m] == 0:
                raise UnrealizableControlError(f"d{block}[{m + 1}] = 0: cannot divide by the surviving coefficient")
            u[m] = drive / coeff_d[m] - k[m]
        else:
            if coeff_c[l] == 0:
                raise UnrealizableControlError(f"c{block}[{l + 1}] = 0: cannot divide by the surviving coefficient")
            u[l] = drive / coeff_c[l] - h[l]
    return u


def _block_aggregate(block: int, X: np.ndarray, s: ScalingConfig, a: SwitchAssignment, systems,
                     gain: float) -> np.ndarray:
    """Aggregate control of one full block, slot by slot."""
    x, y, z, w = (X[r] for r in _rows(block))
    fx, fy, fz, fw = (systems[r] for r in _rows(block))
    coeff_a, coeff_b, coeff_c, coeff_d = s.block(block)
    f, g, h, k = fx(x), fy(y), fz(z), fw(w)
    U = np.zeros(a.dim)
    for t in a.block(block):
        i, j, l, m = t.i - 1, t.j - 1, t.l - 1, t.m - 1
        e = coeff_a[i] * x[i] + coeff_b[j] * y[j] - coeff_c[l] * z[l] - coeff_d[m] * w[m]
        U[m] = (coeff_a[i] * f[i] + coeff_b[j] * g[j] - coeff_c[l] * h[l] - coeff_d[m] * k[m]
                + gain * e)
    return U


def reduced_control(variant: str, states: StateInput, s: ScalingConfig, a: SwitchAssignment,
                    fields: Union[Mapping[str, SystemDef], Sequence[SystemDef]], gain: float = 1.0,
                    policy: str = 'w-channel') -> ControlVectors:
    """
    Controllers of a reduced scheme in closed form.

    Corollary 1 variants keep one full block and split its aggregate with
    the given policy; Corollary 2 and 3 variants have a single surviving
    channel per block and use the explicit per-channel formulas.

    Args:
        variant: Reduction variant name
        states: The eight states
        s: Scaling config, already zeroed for the variant
        a: Switching assignment
        fields: The eight systems
        gain: Positive decay rate
        policy: Split policy for Corollary 1 and the full scheme

    Returns:
        ControlVectors
    """
    if variant not in VARIANT_ZEROED:
        raise ValueError(f"Unknown variant '{variant}'")
    not_zeroed = [key for key in VARIANT_ZEROED[variant] if np.any(s.vector(key))]
    if not_zeroed:
        raise ValueError(f"Variant '{variant}' requires zero scaling for: {', '.join(sorted(not_zeroed))}")
    X = stack_states(states, a.dim)
    systems = _system_list(fields)

    if variant in _REDUCED_CHANNELS:
        u = {name: np.zeros(a.dim) for name in ('u1', 'u2', 'u3', 'u4')}
        for block, channel in _REDUCED_CHANNELS[variant]:
            name = f"u{block}" if channel == 'z' else f"u{block + 2}"
            u[name] = _single_channel(block, channel, X, s, a, systems, gain)
        return ControlVectors(**u)

    law = ControlLaw(s, a, systems, gain=gain, policy=policy)
    if variant in ('corollary-1i', 'corollary-1ii'):
        live = 2 if variant == 'corollary-1i' else 1
        U = np.zeros((2, a.dim))
        U[live - 1] = _block_aggregate(live, X, s, a, systems, gain)
        return ControlVectors(*law.split(U))
    return ControlVectors(*law.controls(X)[1])


def lyapunov_value(e: Union[ErrorVector, np.ndarray]) -> float:
    """V = 1/2 e^T e over both blocks."""
    stacked = e.stacked() if isinstance(e, ErrorVector) else np.ravel(e)
    return 0.5 * float(np.dot(stacked, stacked))


def error_rate(law: ControlLaw, dX: np.ndarray) -> np.ndarray:
    """de/dt from closed-loop state derivatives (the error is linear in the states)."""
    return law.errors(dX)


def lyapunov_rate(states: StateInput, s: ScalingConfig, a: SwitchAssignment,
                  fields: Union[Mapping[str, SystemDef], Sequence[SystemDef]], gain: float = 1.0,
                  policy: str = 'even') -> float:
    """
    dV/dt = e^T de/dt along the controlled closed loop.

    Equals -gain * e^T e when the controllers are wired correctly.
    """
    X = stack_states(states, a.dim)
    law = ControlLaw(s, a, fields, gain=gain, policy=policy)
    F = law.derivatives(X)
    E = law.errors(X)
    _, u = law.controls(X, F, E)
    dX = F.copy()
    dX[4:] += u
    return float(np.sum(E * error_rate(law, dX)))
