"""Run orchestration behind the CLI commands."""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .analysis import convergence_report, error_labels, export_csv, export_figures
from .config_loader import RunSpecLoader, apply_overrides, reference_run_spec, resolve_output_dir
from .controller import apply_variant
from .exceptions import (ChaosSyncError, ConfigError, DimensionError, DivergenceError, NonFiniteStateError,
                         UnknownSystemError, UnrealizableControlError, ValidationError)
from .models import BLOCKS, RunSpec
from .scheme import (classify_pattern, effective_assignment, enumerate_patterns, validate_assignment,
                     validate_scaling)
from .simulate import run_closed_loop
import config


logger = logging.getLogger(__name__)


def exit_code_for(error: Exception) -> int:
    """Map a library exception onto the process exit-code contract."""
    if isinstance(error, (ConfigError, ValidationError, DimensionError, UnknownSystemError)):
        return config.EXIT_CONFIG
    if isinstance(error, (DivergenceError, NonFiniteStateError, UnrealizableControlError)):
        return config.EXIT_DIVERGENCE
    return config.EXIT_FAILURE


def _failure(error: Exception, **extra) -> Dict[str, Any]:
    result = {'success': False, 'error': str(error), 'exit_code': exit_code_for(error)}
    if isinstance(error, ValidationError):
        result['violations'] = list(error.violations)
    if isinstance(error, DivergenceError):
        result['time'] = error.time
    result.update(extra)
    return result


class SyncRunner:
    """Loads configs, runs closed-loop simulations and writes their artifacts."""

    def __init__(self, loader: RunSpecLoader = None, threshold: float = config.DEFAULT_SETTLING_THRESHOLD):
        self.loader = loader or RunSpecLoader()
        self.threshold = threshold

    def load(self, config_path: Optional[str], **overrides) -> RunSpec:
        """Read a config file (or the built-in reference run) and apply flag overrides."""
        spec = self.loader.load(config_path) if config_path else reference_run_spec()
        return apply_overrides(spec, **overrides)

    def run_spec(self, spec: RunSpec, figures: bool = False) -> Dict[str, Any]:
        """
        Simulate a spec and write its trace and convergence report.

        Args:
            spec: Resolved run spec
            figures: Also write the per-slot figure CSVs

        Returns:
            Dictionary with run results and the paths written
        """
        try:
            out_dir = resolve_output_dir(spec)
            sim_config = self.loader.to_sim_config(spec)
            trace = run_closed_loop(sim_config)
            report = convergence_report(trace, self.threshold)

            paths = [
                export_csv(trace, os.path.join(out_dir, spec.output.trace)),
                export_csv(report, os.path.join(out_dir, spec.output.report)),
            ]
            if figures:
                paths += export_figures(trace, out_dir)

            final = trace.stacked_errors()[-1]
            return {
                'success': True,
                'exit_code': config.EXIT_OK,
                'output_dir': out_dir,
                'paths': paths,
                'samples': len(trace),
                'variant': trace.variant,
                'policy': trace.policy,
                'initial_error': trace.stacked_errors()[0].tolist(),
                'final_error': final.tolist(),
                'error_labels': error_labels(trace),
                'final_error_norm': report.final_error_norm,
                'max_decay_residual': report.max_decay_residual,
                'lyapunov_monotone': report.lyapunov_monotone,
                'settling_times': report.settling_times,
                'all_settled': report.all_settled,
            }
        except ChaosSyncError as e:
            logger.error(f"Run failed: {e}")
            return _failure(e)
        except OSError as e:
            logger.error(f"Could not write artifacts: {e}")
            return _failure(e)

    def simulate(self, config_path: Optional[str], **overrides) -> Dict[str, Any]:
        try:
            spec = self.load(config_path, **overrides)
        except ChaosSyncError as e:
            logger.error(f"Config rejected: {e}")
            return _failure(e)
        return self.run_spec(spec)

    def reproduce(self, out: Optional[str] = None) -> Dict[str, Any]:
        """Run the built-in Genesio-Tesi/Lu experiment and write figure CSVs."""
        logger.info("Reproducing the reference experiment")
        spec = apply_overrides(reference_run_spec(), out=out)
        return self.run_spec(spec, figures=True)

    def validate(self, config_path: Optional[str], **overrides) -> Dict[str, Any]:
        """
        Check a config without running it.

        Returns:
            Dictionary with violations, warnings and the pattern class of every slot
        """
        try:
            spec = self.load(config_path, **overrides)
        except ChaosSyncError as e:
            logger.error(f"Config rejected: {e}")
            return _failure(e)

        n = spec.assignment.dim
        assignment = effective_assignment(spec.assignment, spec.variant)
        violations = [f"{problem} (system)" for problem in self.loader.check(spec)]
        result = validate_assignment(assignment, n,
                                     allow_non_permutation=spec.allow_non_permutation,
                                     allow_non_switching=spec.variant == 'baseline')
        violations += [str(v) for v in result.violations]
        try:
            scaling = apply_variant(spec.scaling, spec.variant)
            violations += [str(v) for v in validate_scaling(scaling, n, spec.variant)]
        except ChaosSyncError as e:
            violations.append(str(e))

        slots = []
        for block in BLOCKS:
            for slot, t in enumerate(assignment.block(block), start=1):
                in_range = all(1 <= v <= n for v in (t.i, t.j, t.l))
                pattern = classify_pattern(t) if in_range else None
                slots.append({
                    'block': block,
                    'slot': slot,
                    'tuple': t.subscript,
                    'pattern': pattern.name if pattern else 'out of range',
                    'switching': bool(pattern and pattern.switching),
                })

        ok = not violations
        if ok:
            logger.info(f"Config valid: {len(slots)} slots classified")
        else:
            logger.error(f"Config invalid: {len(violations)} violation(s)")
        return {
            'success': ok,
            'exit_code': config.EXIT_OK if ok else config.EXIT_CONFIG,
            'error': None if ok else f"{len(violations)} violation(s)",
            'violations': violations,
            'warnings': [str(w) for w in result.warnings],
            'slots': slots,
        }

    def enumerate(self, n: int) -> Dict[str, Any]:
        """Pattern catalog of {1..n}^4, restricted to the supported dimension range."""
        if not config.MIN_PATTERN_DIM <= n <= config.MAX_PATTERN_DIM:
            message = (f"n must be between {config.MIN_PATTERN_DIM} and {config.MAX_PATTERN_DIM}, got {n}"
                       + (" (no switching is possible for n = 1)" if n == 1 else ''))
            return {'success': False, 'error': message, 'exit_code': config.EXIT_CONFIG}
        catalog = enumerate_patterns(n)
        return {
            'success': True,
            'exit_code': config.EXIT_OK,
            'n': n,
            'classes': [
                {'pattern': name, 'family': catalog.families[name], 'count': count}
                for name, count in catalog.counts.items()
            ],
            'total': catalog.total,
            'valid': catalog.valid,
        }

    def sweep(self, config_paths: Sequence[str], out: Optional[str] = None,
              workers: Optional[int] = None, **overrides) -> Dict[str, Any]:
        """
        Run several configs in a process pool, each into <out>/<config stem>/.

        Returns:
            Dictionary with per-config results and the worst exit code
        """
        base = out or config.default_output_dir()
        jobs = [(path, os.path.join(base, os.path.splitext(os.path.basename(path))[0]), overrides, self.threshold)
                for path in config_paths]
        stems = [job[1] for job in jobs]
        if len(set(stems)) != len(stems):
            return {'success': False, 'exit_code': config.EXIT_CONFIG, 'results': [],
                    'error': "Config files in a sweep must have distinct names"}

        logger.info(f"Sweeping {len(jobs)} config(s) into {base}")
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))

        exit_code = max((r['exit_code'] for r in results), default=config.EXIT_OK)
        return {
            'success': exit_code == config.EXIT_OK,
            'exit_code': exit_code,
            'error': None if exit_code == config.EXIT_OK else 'one or more runs failed',
            'results': results,
        }


def _sweep_job(job) -> Dict[str, Any]:
    path, out_dir, overrides, threshold = job
    result = SyncRunner(threshold=threshold).simulate(path, out=out_dir, **overrides)
    result['config'] = path
    return result


def summarize_errors(result: Dict[str, Any]) -> List[List[Any]]:
    """Rows of (label, e(0), e(t_end), settling time) for table output."""
    rows = []
    for label, e0, e1 in zip(result['error_labels'], result['initial_error'], result['final_error']):
        settled = result['settling_times'].get(label)
        rows.append([label, float(np.round(e0, 9)), f"{e1:.3e}", 'not settled' if settled is None else f"{settled:g}"])
    return rows
