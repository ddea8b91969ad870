"""Data models for drive/response synchronization runs."""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np


# The eight system roles. Block 1 is (x1, y1, z1, w1), block 2 is (x2, y2, z2, w2).
ROLES = ('x1', 'x2', 'y1', 'y2', 'z1', 'z2', 'w1', 'w2')
BLOCKS = (1, 2)

SCALING_KEYS = ('a1', 'a2', 'b1', 'b2', 'c1', 'c2', 'd1', 'd2')

POLICIES = ('even', 'w-channel', 'z-channel')
VARIANTS = (
    'full',
    'baseline',
    'corollary-1i', 'corollary-1ii',
    'corollary-2i', 'corollary-2ii',
    'corollary-3i', 'corollary-3ii', 'corollary-3iii', 'corollary-3iv',
)


def role_index(role: str) -> int:
    return ROLES.index(role)


@dataclass(frozen=True)
class SystemDef:
    """A named autonomous vector field of fixed dimension."""
    name: str
    dim: int
    params: Dict[str, float]
    rhs: Callable[[np.ndarray, Dict[str, float]], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray, Dict[str, float]], np.ndarray]] = None
    description: str = ''

    def __call__(self, state: np.ndarray) -> np.ndarray:
        return self.rhs(state, self.params)

    def jac(self, state: np.ndarray) -> np.ndarray:
        if self.jacobian is None:
            raise NotImplementedError(f"System '{self.name}' has no Jacobian")
        return self.jacobian(state, self.params)

    def with_params(self, **overrides: float) -> 'SystemDef':
        """Copy of this system with some parameters replaced."""
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise KeyError(f"System '{self.name}' has no parameter(s): {', '.join(sorted(unknown))}")
        params = dict(self.params)
        params.update({k: float(v) for k, v in overrides.items()})
        return replace(self, params=params)

    def __str__(self):
        params = ', '.join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.name} (n={self.dim}; {params})"


@dataclass(frozen=True)
class ScalingConfig:
    """Diagonals of the scaling matrices A1, A2, B1, B2, C1, C2, D1, D2."""
    a1: Tuple[float, ...]
    a2: Tuple[float, ...]
    b1: Tuple[float, ...]
    b2: Tuple[float, ...]
    c1: Tuple[float, ...]
    c2: Tuple[float, ...]
    d1: Tuple[float, ...]
    d2: Tuple[float, ...]

    def __post_init__(self):
        for key in SCALING_KEYS:
            object.__setattr__(self, key, tuple(float(v) for v in getattr(self, key)))

    @classmethod
    def identity(cls, n: int) -> 'ScalingConfig':
        ones = (1.0,) * n
        return cls(*([ones] * len(SCALING_KEYS)))

    @classmethod
    def from_dict(cls, data: Dict[str, List[float]]) -> 'ScalingConfig':
        return cls(**{key: tuple(data[key]) for key in SCALING_KEYS})

    def to_dict(self) -> Dict[str, List[float]]:
        return {key: list(getattr(self, key)) for key in SCALING_KEYS}

    @property
    def dims(self) -> Dict[str, int]:
        return {key: len(getattr(self, key)) for key in SCALING_KEYS}

    @property
    def dim(self) -> int:
        return len(self.a1)

    def vector(self, key: str) -> np.ndarray:
        return np.asarray(getattr(self, key), dtype=float)

    def block(self, block: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """The (a, b, c, d) coefficient vectors of one error block."""
        return tuple(self.vector(f"{letter}{block}") for letter in 'abcd')

    def zeroed(self, *keys: str) -> 'ScalingConfig':
        """Copy with the named coefficient vectors set to zero."""
        return replace(self, **{key: (0.0,) * len(getattr(self, key)) for key in keys})


class SwitchTuple(NamedTuple):
    """1-based component indices wiring one error slot.

    i picks the x component, j the y component, l the z component and
    m the w component; m is also the slot the error lands in.
    """
    i: int
    j: int
    l: int
    m: int

    @property
    def subscript(self) -> str:
        return f"{self.i}{self.j}{self.l}{self.m}"

    def triplet(self) -> str:
        return f"({self.i},{self.j},{self.l})"


@dataclass(frozen=True)
class SwitchAssignment:
    """Per-block lists of switch tuples; slot position implies m."""
    block1: Tuple[SwitchTuple, ...]
    block2: Tuple[SwitchTuple, ...]

    @classmethod
    def from_triplets(cls, block1, block2) -> 'SwitchAssignment':
        def build(triplets):
            return tuple(SwitchTuple(int(i), int(j), int(l), m)
                         for m, (i, j, l) in enumerate(triplets, start=1))
        return cls(build(block1), build(block2))

    @property
    def dim(self) -> int:
        return len(self.block1)

    def block(self, block: int) -> Tuple[SwitchTuple, ...]:
        return self.block1 if block == 1 else self.block2

    def triplets(self, block: int) -> List[Tuple[int, int, int]]:
        return [(t.i, t.j, t.l) for t in self.block(block)]

    def indices(self, block: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Zero-based (i, j, l, m) index arrays for numpy gathers."""
        tuples = self.block(block)
        return tuple(np.array([getattr(t, name) - 1 for t in tuples], dtype=int) for name in 'ijlm')

    def __str__(self):
        b1 = ' '.join(t.triplet() for t in self.block1)
        b2 = ' '.join(t.triplet() for t in self.block2)
        return f"block1: {b1} | block2: {b2}"


@dataclass
class ErrorVector:
    """The two synchronization error blocks."""
    e1: np.ndarray
    e2: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.e1, self.e2])


@dataclass
class AggregateControl:
    """Aggregate control terms U1, U2 entering the error dynamics."""
    U1: np.ndarray
    U2: np.ndarray


@dataclass
class ControlVectors:
    """Physical controllers: u1 -> z1, u2 -> z2, u3 -> w1, u4 -> w2."""
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    u4: np.ndarray


@dataclass
class SimConfig:
    """Everything one closed-loop run needs."""
    systems: Dict[str, SystemDef]
    initial_conditions: Dict[str, np.ndarray]
    scaling: ScalingConfig
    assignment: SwitchAssignment
    dt: float = 1e-3
    t_end: float = 10.0
    record_stride: int = 10
    policy: str = 'even'
    gain: float = 1.0
    variant: str = 'full'
    allow_non_permutation: bool = False
    controls_enabled: bool = True
    divergence_limit: float = 1e6

    @property
    def dim(self) -> int:
        return self.assignment.dim


@dataclass
class ClosedLoopTrace:
    """Recorded snapshots of a closed-loop run.

    states has shape (T, 8, n) in ROLES order, errors and controls have
    shape (T, 2, n) with block 1 first.
    """
    times: np.ndarray
    states: np.ndarray
    errors: np.ndarray
    controls: np.ndarray
    lyapunov: np.ndarray
    assignment: SwitchAssignment
    scaling: ScalingConfig
    gain: float = 1.0
    dt: float = 1e-3
    record_stride: int = 1
    policy: str = 'even'
    variant: str = 'full'

    def __len__(self):
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.assignment.dim

    def state(self, role: str) -> np.ndarray:
        """(T, n) series of one system's state."""
        return self.states[:, role_index(role), :]

    def stacked_errors(self) -> np.ndarray:
        """(T, 2n) series with block 1 components first."""
        return self.errors.reshape(len(self.times), -1)


@dataclass
class ConvergenceReport:
    """Finite-horizon convergence summary of a trace."""
    threshold: float
    t_end: float
    settling_times: Dict[str, Optional[float]] = field(default_factory=dict)
    max_decay_residual: float = 0.0
    final_error_norm: float = 0.0
    lyapunov_monotone: bool = True

    @property
    def all_settled(self) -> bool:
        return all(t is not None for t in self.settling_times.values())

    def __str__(self):
        settled = sum(1 for t in self.settling_times.values() if t is not None)
        return (f"{settled}/{len(self.settling_times)} components settled below {self.threshold:g}, "
                f"final |e|={self.final_error_norm:.3e}, residual={self.max_decay_residual:.3e}")


@dataclass(frozen=True)
class OutputSpec:
    """Where a run writes its artifacts."""
    directory: Optional[str] = None
    trace: str = 'trace.csv'
    report: str = 'report.csv'


@dataclass(frozen=True)
class RunSpec:
    """A full run description as read from a config file."""
    systems: Tuple[Tuple[str, str], ...]
    initial_conditions: Tuple[Tuple[str, Tuple[float, ...]], ...]
    scaling: ScalingConfig
    assignment: SwitchAssignment
    system_params: Tuple[Tuple[str, Tuple[Tuple[str, float], ...]], ...] = ()
    dt: float = 1e-3
    t_end: float = 10.0
    record_stride: int = 10
    policy: str = 'even'
    gain: float = 1.0
    variant: str = 'full'
    allow_non_permutation: bool = False
    output: OutputSpec = OutputSpec()

    @property
    def system_names(self) -> Dict[str, str]:
        return dict(self.systems)

    @property
    def initial_state_map(self) -> Dict[str, Tuple[float, ...]]:
        return dict(self.initial_conditions)

    @property
    def param_overrides(self) -> Dict[str, Dict[str, float]]:
        return {name: dict(values) for name, values in self.system_params}
