"""Loading, saving and resolving run configuration files."""

import json
import logging
import re
from contextlib import contextmanager
from dataclasses import replace
from typing import Any, Dict, List, Optional

import numpy as np

from .dynamics import SystemRegistry, get_registry
from .exceptions import ChaosSyncError, ConfigError
from .models import (POLICIES, ROLES, SCALING_KEYS, VARIANTS, OutputSpec, RunSpec, ScalingConfig,
                     SimConfig, SwitchAssignment)
import config


logger = logging.getLogger(__name__)


_TRIPLET = re.compile(r'^\(\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\)$')

REFERENCE_SYSTEMS = {
    'x1': 'genesio_tesi', 'x2': 'lu',
    'y1': 'genesio_tesi', 'y2': 'lu',
    'z1': 'genesio_tesi', 'z2': 'lu',
    'w1': 'genesio_tesi', 'w2': 'lu',
}

REFERENCE_INITIAL_CONDITIONS = {
    'x1': (2.0, -3.0, 1.0), 'x2': (-2.5, 1.0, -3.0),
    'y1': (1.0, 0.0, -1.0), 'y2': (-1.5, 2.0, 1.5),
    'z1': (4.0, -3.5, 3.0), 'z2': (-0.5, 1.5, 0.0),
    'w1': (1.0, -1.5, -2.0), 'w2': (-1.0, 1.5, 3.0),
}

REFERENCE_ASSIGNMENT = SwitchAssignment.from_triplets(
    [(2, 1, 3), (1, 3, 2), (3, 2, 1)],
    [(3, 2, 2), (1, 3, 3), (2, 1, 1)],
)


def reference_run_spec() -> RunSpec:
    """
    The Genesio-Tesi/Lu experiment: identity scaling and the fixed switching wiring.

    The z-channel split keeps every response bounded: w evolves on its own
    attractor and z is pinned by the error relation. Errors and combined
    signals do not depend on the split.
    """
    return RunSpec(
        systems=tuple((role, REFERENCE_SYSTEMS[role]) for role in ROLES),
        initial_conditions=tuple((role, REFERENCE_INITIAL_CONDITIONS[role]) for role in ROLES),
        scaling=ScalingConfig.identity(3),
        assignment=REFERENCE_ASSIGNMENT,
        dt=config.DEFAULT_DT,
        t_end=config.DEFAULT_T_END,
        record_stride=config.DEFAULT_RECORD_STRIDE,
        policy='z-channel',
        gain=config.DEFAULT_GAIN,
        variant='full',
    )


def parse_triplet(value: Any, key: str) -> tuple:
    """Accept "(i,j,l)" strings or 3-element integer lists."""
    if isinstance(value, str):
        match = _TRIPLET.match(value.strip())
        if not match:
            raise ConfigError(f"Expected a triplet like \"(2,1,3)\", got {value!r}", key=key)
        return tuple(int(v) for v in match.groups())
    if isinstance(value, (list, tuple)) and len(value) == 3 and all(isinstance(v, int) and not isinstance(v, bool)
                                                                   for v in value):
        return tuple(value)
    raise ConfigError(f"Expected a triplet like \"(2,1,3)\", got {value!r}", key=key)


class RunSpecLoader:
    """Reads and writes RunSpec JSON files and turns them into SimConfigs."""

    def __init__(self, registry: Optional[SystemRegistry] = None):
        self.registry = registry or get_registry()

    @contextmanager
    def open_config(self, path: str, mode: str = 'r'):
        """Open a config file, turning I/O failures into ConfigError."""
        handle = None
        try:
            handle = open(path, mode, encoding='utf-8')
            yield handle
        except OSError as e:
            logger.error(f"Config I/O error: {e}")
            raise ConfigError(f"Cannot {'read' if mode == 'r' else 'write'} config file '{path}': "
                              f"{e.strerror or e}") from e
        finally:
            if handle:
                handle.close()

    def load(self, path: str) -> RunSpec:
        """
        Read and parse a config file.

        Args:
            path: JSON config path

        Returns:
            Parsed RunSpec
        """
        with self.open_config(path) as handle:
            text = handle.read()
        spec = self.parse(text)
        logger.info(f"Loaded run config from {path}")
        return spec

    def parse(self, text: str) -> RunSpec:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed JSON: {e.msg} (column {e.colno})", line=e.lineno) from e
        if not isinstance(data, dict):
            raise ConfigError("Top level of the config must be an object", line=1)
        try:
            return self._parse_sections(data)
        except ConfigError as e:
            if e.key and e.line is None:
                raise ConfigError(str(e).split(' [key:')[0], key=e.key, line=_line_of(text, e.key)) from None
            raise

    def _parse_sections(self, data: Dict[str, Any]) -> RunSpec:
        known = {'systems', 'system_params', 'initial_conditions', 'scaling', 'assignment',
                 'integrator', 'controller', 'output'}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown section '{unknown[0]}'", key=unknown[0])

        assignment = self._parse_assignment(_section(data, 'assignment'))
        n = assignment.dim

        systems_data = _section(data, 'systems')
        systems = []
        for role in ROLES:
            name = systems_data.get(role)
            if not isinstance(name, str):
                raise ConfigError(f"Missing system name for role '{role}'", key=f"systems.{role}")
            systems.append((role, name))

        params_data = data.get('system_params', {})
        if not isinstance(params_data, dict):
            raise ConfigError("Expected an object", key='system_params')
        system_params = []
        for name in sorted(params_data):
            values = params_data[name]
            if not isinstance(values, dict):
                raise ConfigError("Expected an object of parameter values", key=f"system_params.{name}")
            system_params.append((name, tuple((p, _number(values[p], f"system_params.{name}.{p}"))
                                              for p in sorted(values))))

        ic_data = _section(data, 'initial_conditions')
        initial_conditions = []
        for role in ROLES:
            initial_conditions.append((role, _vector(ic_data.get(role), n, f"initial_conditions.{role}")))

        scaling_data = data.get('scaling', 'identity')
        if scaling_data == 'identity':
            scaling = ScalingConfig.identity(n)
        elif isinstance(scaling_data, dict):
            scaling = ScalingConfig(**{key: _vector(scaling_data.get(key), n, f"scaling.{key}")
                                       for key in SCALING_KEYS})
        else:
            raise ConfigError("Expected an object of scaling vectors or \"identity\"", key='scaling')

        integrator = data.get('integrator', {})
        controller = data.get('controller', {})
        output = data.get('output', {})
        for key, value in (('integrator', integrator), ('controller', controller), ('output', output)):
            if not isinstance(value, dict):
                raise ConfigError("Expected an object", key=key)

        dt = _number(integrator.get('dt', config.DEFAULT_DT), 'integrator.dt')
        t_end = _number(integrator.get('t_end', config.DEFAULT_T_END), 'integrator.t_end')
        stride = integrator.get('record_stride', config.DEFAULT_RECORD_STRIDE)
        if dt <= 0:
            raise ConfigError(f"dt must be positive, got {dt}", key='integrator.dt')
        if t_end < dt:
            raise ConfigError(f"t_end must be at least dt, got {t_end}", key='integrator.t_end')
        if not isinstance(stride, int) or isinstance(stride, bool) or stride < 1:
            raise ConfigError(f"record_stride must be a positive integer, got {stride!r}",
                              key='integrator.record_stride')

        policy = controller.get('policy', config.DEFAULT_POLICY)
        if policy not in POLICIES:
            raise ConfigError(f"Unknown policy {policy!r} (choose from {', '.join(POLICIES)})",
                              key='controller.policy')
        gain = _number(controller.get('gain', config.DEFAULT_GAIN), 'controller.gain')
        if gain <= 0:
            raise ConfigError(f"gain must be positive, got {gain}", key='controller.gain')
        variant = controller.get('variant', config.DEFAULT_VARIANT)
        if variant not in VARIANTS:
            raise ConfigError(f"Unknown variant {variant!r}", key='controller.variant')
        allow = controller.get('allow_non_permutation', False)
        if not isinstance(allow, bool):
            raise ConfigError("Expected true or false", key='controller.allow_non_permutation')

        return RunSpec(
            systems=tuple(systems),
            initial_conditions=tuple(initial_conditions),
            scaling=scaling,
            assignment=assignment,
            system_params=tuple(system_params),
            dt=dt,
            t_end=t_end,
            record_stride=stride,
            policy=policy,
            gain=gain,
            variant=variant,
            allow_non_permutation=allow,
            output=OutputSpec(
                directory=output.get('directory'),
                trace=output.get('trace', 'trace.csv'),
                report=output.get('report', 'report.csv'),
            ),
        )

    def _parse_assignment(self, data: Dict[str, Any]) -> SwitchAssignment:
        blocks = []
        for block in ('block1', 'block2'):
            triplets = data.get(block)
            if not isinstance(triplets, list) or not triplets:
                raise ConfigError("Expected a non-empty list of triplets", key=f"assignment.{block}")
            blocks.append([parse_triplet(t, f"assignment.{block}") for t in triplets])
        if len(blocks[0]) != len(blocks[1]):
            raise ConfigError("Both blocks must have the same number of slots", key='assignment.block2')
        return SwitchAssignment.from_triplets(*blocks)

    def to_dict(self, spec: RunSpec) -> Dict[str, Any]:
        """Serializable form of a RunSpec; parse(to_dict(s)) == s."""
        output = {'trace': spec.output.trace, 'report': spec.output.report}
        if spec.output.directory is not None:
            output['directory'] = spec.output.directory
        return {
            'systems': dict(spec.systems),
            'system_params': {name: dict(values) for name, values in spec.system_params},
            'initial_conditions': {role: list(values) for role, values in spec.initial_conditions},
            'scaling': spec.scaling.to_dict(),
            'assignment': {
                f"block{b}": [t.triplet() for t in spec.assignment.block(b)] for b in (1, 2)
            },
            'integrator': {'dt': spec.dt, 't_end': spec.t_end, 'record_stride': spec.record_stride},
            'controller': {
                'policy': spec.policy,
                'gain': spec.gain,
                'variant': spec.variant,
                'allow_non_permutation': spec.allow_non_permutation,
            },
            'output': output,
        }

    def dumps(self, spec: RunSpec) -> str:
        return json.dumps(self.to_dict(spec), indent=2) + '\n'

    def save(self, spec: RunSpec, path: str) -> str:
        with self.open_config(path, 'w') as handle:
            handle.write(self.dumps(spec))
        logger.info(f"Saved run config to {path}")
        return path

    def check(self, spec: RunSpec) -> List[str]:
        """Problems resolving the spec's systems against the registry."""
        problems = []
        n = spec.assignment.dim
        overrides = spec.param_overrides
        for role, name in spec.systems:
            try:
                system = self.registry.resolve(name, overrides.get(name))
            except (ChaosSyncError, KeyError) as e:
                problems.append(f"systems.{role}: {e.args[0] if e.args else e}")
                continue
            if system.dim != n:
                problems.append(f"systems.{role}: '{name}' has dimension {system.dim}, assignment needs {n}")
        return problems

    def to_sim_config(self, spec: RunSpec) -> SimConfig:
        """
        Resolve a RunSpec into a SimConfig.

        Args:
            spec: Parsed run spec

        Returns:
            SimConfig ready for simulate.run_closed_loop
        """
        problems = self.check(spec)
        if problems:
            raise ConfigError('; '.join(problems), key='systems')
        overrides = spec.param_overrides
        systems = {role: self.registry.resolve(name, overrides.get(name)) for role, name in spec.systems}
        return SimConfig(
            systems=systems,
            initial_conditions={role: np.asarray(values, dtype=float) for role, values in spec.initial_conditions},
            scaling=spec.scaling,
            assignment=spec.assignment,
            dt=spec.dt,
            t_end=spec.t_end,
            record_stride=spec.record_stride,
            policy=spec.policy,
            gain=spec.gain,
            variant=spec.variant,
            allow_non_permutation=spec.allow_non_permutation,
            divergence_limit=config.DIVERGENCE_LIMIT,
        )


def apply_overrides(spec: RunSpec, dt: Optional[float] = None, t_end: Optional[float] = None,
                    gain: Optional[float] = None, policy: Optional[str] = None,
                    variant: Optional[str] = None, out: Optional[str] = None) -> RunSpec:
    """Command-line flags take precedence over file values."""
    changes: Dict[str, Any] = {}
    if dt is not None:
        changes['dt'] = float(dt)
    if t_end is not None:
        changes['t_end'] = float(t_end)
    if gain is not None:
        changes['gain'] = float(gain)
    if policy is not None:
        changes['policy'] = policy
    if variant is not None:
        changes['variant'] = variant
    if out is not None:
        changes['output'] = replace(spec.output, directory=out)
    updated = replace(spec, **changes)
    if updated.dt <= 0 or updated.t_end < updated.dt:
        raise ConfigError(f"Invalid integrator settings: dt={updated.dt}, t_end={updated.t_end}", key='integrator')
    if updated.gain <= 0:
        raise ConfigError(f"gain must be positive, got {updated.gain}", key='controller.gain')
    return updated


def resolve_output_dir(spec: RunSpec) -> str:
    """Flag/file directory first, then CHAOSSYNC_OUT, then the built-in default."""
    return spec.output.directory or config.default_output_dir()


def _section(data: Dict[str, Any], key: str) -> Dict[str, Any]:
    if key not in data:
        raise ConfigError(f"Missing required section '{key}'", key=key)
    value = data[key]
    if not isinstance(value, dict):
        raise ConfigError("Expected an object", key=key)
    return value


def _number(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"Expected a number, got {value!r}", key=key)
    if not np.isfinite(value):
        raise ConfigError(f"Expected a finite number, got {value!r}", key=key)
    return float(value)


def _vector(value: Any, n: int, key: str) -> tuple:
    if not isinstance(value, list):
        raise ConfigError(f"Expected a list of {n} numbers", key=key)
    if len(value) != n:
        raise ConfigError(f"Expected {n} numbers, got {len(value)}", key=key)
    return tuple(_number(v, key) for v in value)


def _line_of(text: str, key: str) -> Optional[int]:
    """1-based line where a dotted key path appears, if it can be found."""
    start = 0
    found = None
    for part in key.split('.'):
        index = text.find(f'"{part}"', start)
        if index < 0:
            break
        found = start = index
    if found is None:
        return None
    return text.count('\n', 0, found) + 1
