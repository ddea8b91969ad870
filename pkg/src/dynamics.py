"""Chaotic vector fields and the system registry."""

import logging
from typing import Dict, Iterable, List, Optional

import numpy as np

from .exceptions import DimensionError, DuplicateSystemError, NonFiniteStateError, UnknownSystemError
from .models import SystemDef


logger = logging.getLogger(__name__)


GENESIO_TESI_PARAMS = {'a': 1.2, 'b': 2.92, 'c': 6.0}
LU_PARAMS = {'a': 36.0, 'b': 3.0, 'c': 20.0}


def as_state(values, dim: Optional[int] = None) -> np.ndarray:
    """
    Coerce values into a finite 1-D float state vector.

    Args:
        values: Sequence of real components
        dim: Required dimension, if any

    Returns:
        numpy array of floats
    """
    state = np.asarray(values, dtype=float)
    if state.ndim != 1:
        raise DimensionError(f"State must be a 1-D vector, got shape {state.shape}")
    if dim is not None and state.shape[0] != dim:
        raise DimensionError(f"Expected a state of dimension {dim}, got {state.shape[0]}")
    if not np.all(np.isfinite(state)):
        raise NonFiniteStateError(f"State has non-finite components: {state}")
    return state


def genesio_tesi_rhs(state: np.ndarray, params: Dict[str, float]) -> np.ndarray:
    x1, x2, x3 = state
    return np.array([
        x2,
        x3,
        -params['c'] * x1 - params['b'] * x2 - params['a'] * x3 + x1 * x1,
    ])


def genesio_tesi_jacobian(state: np.ndarray, params: Dict[str, float]) -> np.ndarray:
    x1 = state[0]
    return np.array([
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-params['c'] + 2.0 * x1, -params['b'], -params['a']],
    ])


def lu_rhs(state: np.ndarray, params: Dict[str, float]) -> np.ndarray:
    x1, x2, x3 = state
    return np.array([
        params['a'] * (x2 - x1),
        -x1 * x3 + params['c'] * x2,
        x1 * x2 - params['b'] * x3,
    ])


def lu_jacobian(state: np.ndarray, params: Dict[str, float]) -> np.ndarray:
    x1, x2, x3 = state
    return np.array([
        [-params['a'], params['a'], 0.0],
        [-x3, params['c'], -x1],
        [x2, x1, -params['b']],
    ])


GENESIO_TESI = SystemDef(
    name='genesio_tesi',
    dim=3,
    params=dict(GENESIO_TESI_PARAMS),
    rhs=genesio_tesi_rhs,
    jacobian=genesio_tesi_jacobian,
    description='Genesio-Tesi jerk system with one quadratic term',
)

LU = SystemDef(
    name='lu',
    dim=3,
    params=dict(LU_PARAMS),
    rhs=lu_rhs,
    jacobian=lu_jacobian,
    description='Lu system with two bilinear terms',
)


def eval_genesio_tesi(state, params: Optional[Dict[str, float]] = None) -> np.ndarray:
    """Evaluate the Genesio-Tesi field at a 3-D state."""
    return genesio_tesi_rhs(as_state(state, 3), params or GENESIO_TESI_PARAMS)


def eval_lu(state, params: Optional[Dict[str, float]] = None) -> np.ndarray:
    """Evaluate the Lu field at a 3-D state."""
    return lu_rhs(as_state(state, 3), params or LU_PARAMS)


def evaluate(system: SystemDef, state) -> np.ndarray:
    """Evaluate a system's field with dimension and finiteness checks."""
    derivative = system(as_state(state, system.dim))
    if derivative.shape != (system.dim,):
        raise DimensionError(f"System '{system.name}' returned shape {derivative.shape}, expected ({system.dim},)")
    return derivative


class SystemRegistry:
    """Name -> SystemDef lookup table.

    Mutated during setup only; lookups afterwards are read-only.
    """

    def __init__(self, systems: Iterable[SystemDef] = ()):
        self._systems: Dict[str, SystemDef] = {}
        for system in systems:
            self.register(system)

    def register(self, system: SystemDef) -> str:
        """
        Register a system under its name.

        Args:
            system: System definition to add

        Returns:
            The registered name (the lookup handle)
        """
        if system.name in self._systems:
            raise DuplicateSystemError(f"System '{system.name}' is already registered")
        if system.dim < 1:
            raise DimensionError(f"System '{system.name}' must have a positive dimension")
        self._systems[system.name] = system
        logger.debug(f"Registered system {system}")
        return system.name

    def lookup(self, name: str) -> SystemDef:
        try:
            return self._systems[name]
        except KeyError:
            known = ', '.join(sorted(self._systems)) or 'none'
            raise UnknownSystemError(f"Unknown system '{name}' (registered: {known})") from None

    def resolve(self, name: str, overrides: Optional[Dict[str, float]] = None) -> SystemDef:
        """Look up a system and apply parameter overrides."""
        system = self.lookup(name)
        return system.with_params(**overrides) if overrides else system

    def names(self) -> List[str]:
        return sorted(self._systems)

    def __contains__(self, name: str) -> bool:
        return name in self._systems

    def __len__(self):
        return len(self._systems)


def default_registry() -> SystemRegistry:
    """A fresh registry holding the built-in systems."""
    return SystemRegistry([GENESIO_TESI, LU])


_registry = default_registry()


def register_system(system: SystemDef) -> str:
    """Register a system in the process-wide registry."""
    return _registry.register(system)


def lookup_system(name: str) -> SystemDef:
    """Look up a system in the process-wide registry."""
    return _registry.lookup(name)


def get_registry() -> SystemRegistry:
    return _registry
