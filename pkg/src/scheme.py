"""Switching assignments, scaling checks and the synchronization error."""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import AssignmentError, DimensionError
from .models import BLOCKS, SCALING_KEYS, ErrorVector, ScalingConfig, SwitchAssignment, SwitchTuple


logger = logging.getLogger(__name__)


INDEX_NAMES = ('i', 'j', 'l', 'm')

FAMILY_ORDER = ('all equal', 'three equal', 'two pairs', 'one pair', 'all distinct')

# Coefficient vectors each reduction variant sets to zero.
VARIANT_ZEROED: Dict[str, FrozenSet[str]] = {
    'full': frozenset(),
    'baseline': frozenset(),
    'corollary-1i': frozenset({'a1', 'b1', 'c1', 'd1'}),
    'corollary-1ii': frozenset({'a2', 'b2', 'c2', 'd2'}),
    'corollary-2i': frozenset({'c1', 'c2'}),
    'corollary-2ii': frozenset({'d1', 'd2'}),
    'corollary-3i': frozenset({'a1', 'b1', 'c1', 'd1', 'c2'}),
    'corollary-3ii': frozenset({'a1', 'b1', 'c1', 'd1', 'd2'}),
    'corollary-3iii': frozenset({'a2', 'b2', 'c2', 'd2', 'c1'}),
    'corollary-3iv': frozenset({'a2', 'b2', 'c2', 'd2', 'd1'}),
}


class PatternClass(NamedTuple):
    """One equality partition of the index positions (i, j, l, m)."""
    name: str
    family: str
    groups: Tuple[Tuple[str, ...], ...]

    @property
    def switching(self) -> bool:
        return self.family != 'all equal'


def _partitions(items: Sequence[str]):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in _partitions(rest):
        yield [(first,)] + partition
        for k in range(len(partition)):
            yield partition[:k] + [(first,) + partition[k]] + partition[k + 1:]


def _family(sizes: Tuple[int, ...]) -> str:
    return {
        (4,): 'all equal',
        (3, 1): 'three equal',
        (2, 2): 'two pairs',
        (2, 1, 1): 'one pair',
        (1, 1, 1, 1): 'all distinct',
    }[sizes]


def _pattern_from_groups(groups) -> PatternClass:
    position = {name: k for k, name in enumerate(INDEX_NAMES)}
    groups = [tuple(sorted(g, key=position.__getitem__)) for g in groups]
    groups.sort(key=lambda g: (-len(g), position[g[0]]))
    sizes = tuple(len(g) for g in groups)
    if sizes == (4,):
        name = 'i=j=l=m'
    else:
        name = '≠'.join('='.join(g) for g in groups)
    return PatternClass(name=name, family=_family(sizes), groups=tuple(groups))


def _all_pattern_classes() -> List[PatternClass]:
    classes = {}
    for partition in _partitions(list(INDEX_NAMES)):
        pattern = _pattern_from_groups(partition)
        classes[pattern.name] = pattern
    return sorted(classes.values(), key=lambda p: (FAMILY_ORDER.index(p.family), p.name))


PATTERN_CLASSES: List[PatternClass] = _all_pattern_classes()
_PATTERNS_BY_GROUPS = {p.groups: p for p in PATTERN_CLASSES}


def classify_pattern(t: Sequence[int]) -> PatternClass:
    """
    Classify a switch tuple by the equality partition of its indices.

    Args:
        t: Tuple (i, j, l, m)

    Returns:
        The matching PatternClass; the 'all equal' class is not switching
    """
    values = dict(zip(INDEX_NAMES, t))
    by_value: Dict[int, List[str]] = {}
    for name in INDEX_NAMES:
        by_value.setdefault(values[name], []).append(name)
    pattern = _pattern_from_groups(list(by_value.values()))
    return _PATTERNS_BY_GROUPS[pattern.groups]


@dataclass
class PatternCatalog:
    """Tuple counts per pattern class for one dimension."""
    n: int
    counts: Dict[str, int]
    families: Dict[str, str]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def valid(self) -> int:
        return sum(count for name, count in self.counts.items() if self.families[name] != 'all equal')


def enumerate_patterns(n: int) -> PatternCatalog:
    """Count every tuple in {1..n}^4 by pattern class."""
    if n < 1:
        raise ValueError(f"Dimension must be positive, got {n}")
    counts = Counter(classify_pattern(t).name for t in itertools.product(range(1, n + 1), repeat=4))
    return PatternCatalog(
        n=n,
        counts={p.name: counts.get(p.name, 0) for p in PATTERN_CLASSES},
        families={p.name: p.family for p in PATTERN_CLASSES},
    )


@dataclass
class Violation:
    """One broken rule in an assignment or scaling config."""
    rule: str
    message: str
    block: Optional[int] = None
    slot: Optional[int] = None

    def __str__(self):
        where = []
        if self.block is not None:
            where.append(f"block{self.block}")
        if self.slot is not None:
            where.append(f"slot {self.slot}")
        prefix = f"{' '.join(where)}: " if where else ''
        return f"{prefix}{self.message} ({self.rule})"


@dataclass
class ValidationResult:
    """Violations that fail validation plus downgraded warnings."""
    violations: List[Violation] = field(default_factory=list)
    warnings: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def raise_for_violations(self):
        if self.violations:
            raise AssignmentError([str(v) for v in self.violations])


def identity_assignment(n: int) -> SwitchAssignment:
    """Non-switched wiring i = j = l = m in both blocks."""
    triplets = [(m, m, m) for m in range(1, n + 1)]
    return SwitchAssignment.from_triplets(triplets, triplets)


def effective_assignment(assignment: SwitchAssignment, variant: str) -> SwitchAssignment:
    """The wiring a run actually uses: the baseline variant ignores the configured one."""
    return identity_assignment(assignment.dim) if variant == 'baseline' else assignment


def _permutation_violations(block: int, tuples: Sequence[SwitchTuple], n: int, name: str) -> List[Violation]:
    violations = []
    seen: Dict[int, int] = {}
    for slot, t in enumerate(tuples, start=1):
        value = getattr(t, name)
        if value in seen:
            missing = sorted(set(range(1, n + 1)) - {getattr(u, name) for u in tuples})
            violations.append(Violation(
                rule=f"permutation-{name}",
                message=(f"{name}-index {value} repeats slot {seen[value]}; {name}-indices are not a permutation"
                         + (f" (missing {', '.join(map(str, missing))})" if missing else '')),
                block=block,
                slot=slot,
            ))
        else:
            seen[value] = slot
    return violations


def validate_assignment(a: SwitchAssignment, n: int, allow_non_permutation: bool = False,
                        allow_non_switching: bool = False) -> ValidationResult:
    """
    Check a switching assignment against the multi-switching rules.

    Args:
        a: Assignment to check
        n: Shared dimension of the eight systems
        allow_non_permutation: Downgrade permutation violations to warnings
        allow_non_switching: Accept i = j = l = m tuples (non-switched baseline)

    Returns:
        ValidationResult listing every violation
    """
    result = ValidationResult()
    for block in BLOCKS:
        tuples = a.block(block)
        if len(tuples) != n:
            result.violations.append(Violation(
                rule='dimension', message=f"expected {n} slots, got {len(tuples)}", block=block))
        in_range = True
        for slot, t in enumerate(tuples, start=1):
            if t.m != slot:
                result.violations.append(Violation(
                    rule='slot', message=f"fourth index {t.m} does not match slot position", block=block, slot=slot))
            bad = [f"{name}={getattr(t, name)}" for name in 'ijl' if not 1 <= getattr(t, name) <= n]
            if bad:
                in_range = False
                result.violations.append(Violation(
                    rule='range', message=f"index out of range 1..{n}: {', '.join(bad)}", block=block, slot=slot))
                continue
            if not allow_non_switching and not classify_pattern(t).switching:
                result.violations.append(Violation(
                    rule='non-switching',
                    message=f"tuple {t.triplet()} has i=j=l=m, which is the non-switched case",
                    block=block, slot=slot))
        if not in_range:
            continue
        for name in 'ijl':
            for violation in _permutation_violations(block, tuples, n, name):
                if allow_non_permutation:
                    logger.warning(f"Permutation rule downgraded to warning: {violation}")
                    result.warnings.append(violation)
                else:
                    result.violations.append(violation)
    return result


def validate_scaling(scaling: ScalingConfig, n: int, variant: str = 'full') -> List[Violation]:
    """
    Check scaling vectors for dimension, non-zero pairs and admissibility.

    Args:
        scaling: Scaling config to check
        n: Shared dimension
        variant: Reduction variant; pairs it zeroes may be all zero

    Returns:
        List of violations (empty when valid)
    """
    if variant not in VARIANT_ZEROED:
        return [Violation(rule='variant', message=f"unknown variant '{variant}'")]
    violations = []
    for key, dim in scaling.dims.items():
        if dim != n:
            violations.append(Violation(rule='dimension', message=f"scaling '{key}' has {dim} entries, expected {n}"))
    if violations:
        return violations

    zeroed = VARIANT_ZEROED[variant]
    for letter in 'abcd':
        pair = (f"{letter}1", f"{letter}2")
        if not np.any(scaling.vector(pair[0])) and not np.any(scaling.vector(pair[1])):
            if not set(pair) <= zeroed:
                violations.append(Violation(
                    rule='zero-pair', message=f"scaling pair ({pair[0]}, {pair[1]}) is entirely zero"))
    if not any(np.any(scaling.vector(key)) for key in ('c1', 'c2', 'd1', 'd2')):
        violations.append(Violation(
            rule='admissibility', message="C and D are both zero; at least one response matrix must be non-zero"))
    return violations


def _check_states(states: Sequence[np.ndarray], n: int):
    for state in states:
        if np.shape(state) != (n,):
            raise DimensionError(f"Expected states of dimension {n}, got shape {np.shape(state)}")


def block_error(x: np.ndarray, y: np.ndarray, z: np.ndarray, w: np.ndarray,
                coeffs: Tuple[np.ndarray, ...], idx: Tuple[np.ndarray, ...]) -> np.ndarray:
    """Error of one block from pre-gathered coefficient and index arrays."""
    a, b, c, d = coeffs
    i, j, l, m = idx
    return a[i] * x[i] + b[j] * y[j] - c[l] * z[l] - d[m] * w[m]


def compute_error(x1, x2, y1, y2, z1, z2, w1, w2, s: ScalingConfig, a: SwitchAssignment,
                  check: bool = True) -> ErrorVector:
    """
    Synchronization error e = Ax + By - Cz - Dw under switching.

    Args:
        x1, x2, y1, y2: Drive states
        z1, z2, w1, w2: Response states
        s: Scaling config
        a: Switching assignment
        check: Validate the assignment first (disable for the non-switched baseline)

    Returns:
        ErrorVector with both blocks
    """
    n = a.dim
    states = [np.asarray(v, dtype=float) for v in (x1, x2, y1, y2, z1, z2, w1, w2)]
    _check_states(states, n)
    if s.dim != n or set(s.dims.values()) != {n}:
        raise DimensionError(f"Scaling vectors must all have dimension {n}")
    if check:
        validate_assignment(a, n).raise_for_violations()
    x1, x2, y1, y2, z1, z2, w1, w2 = states
    return ErrorVector(
        e1=block_error(x1, y1, z1, w1, s.block(1), a.indices(1)),
        e2=block_error(x2, y2, z2, w2, s.block(2), a.indices(2)),
    )


def combined_signal(states: Sequence, coefficients: Sequence) -> np.ndarray:
    """
    Stack the componentwise products of a pair of systems with their scalings.

    Args:
        states: (first, second) state vectors
        coefficients: (first, second) diagonal coefficient vectors

    Returns:
        2n-vector [c1*s1, c2*s2]
    """
    if len(states) != len(coefficients):
        raise DimensionError("Need one coefficient vector per state")
    parts = []
    for state, coeff in zip(states, coefficients):
        state = np.asarray(state, dtype=float)
        coeff = np.asarray(coeff, dtype=float)
        if state.shape != coeff.shape:
            raise DimensionError(f"Coefficient shape {coeff.shape} does not match state shape {state.shape}")
        parts.append(coeff * state)
    return np.concatenate(parts)


def error_label(block: int, t: SwitchTuple) -> str:
    """Column label like e11_2131."""
    return f"e{block}{t.m}_{t.subscript}"
