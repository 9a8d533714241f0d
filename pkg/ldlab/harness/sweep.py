"""
Gamma-convergence sweep over an (eps, s) schedule.

Each point builds the recovery state of the configured smooth field, then
minimizes the Lawrence-Doniach energy starting from it, so the minimum never
exceeds the recovery energy. The limit functional is minimized once.
"""
import logging
import math
import time
from typing import List, Optional

from ..diagnostics import JacobianStack, scaled_observables, stack_distance, stack_jacobian
from ..domain import LayerGrid, build_domain
from ..energy import ld_energy, limit_energy
from ..errors import LabError
from ..minimize import minimize_ld, minimize_limit
from ..recovery import build_recovery
from .base import BaseExperiment, ExperimentResult, Table
from .config import ExperimentConfig, Mode, SchedulePoint, out_of_theory
from .experiments import recovery_stack, smooth_field
from .fieldio import FieldSet, state_fields, state_meta

logger = logging.getLogger(__name__)

SWEEP_HEADER = (
    'eps', 's', 's_log_eps', 'scaled_ld_min', 'scaled_recovery', 'limit_value', 'recovery_limit',
    'josephson_scaled', 'trace_estimate', 'jacobian_hminus1_cauchy', 'converged', 'out_of_theory',
)
LIMIT_DIR = 'limit'
RECOVERY_DIR = 'recovery'


def point_dir(k: int) -> str:
    return f"point_{k}"


class GammaSweepExperiment(BaseExperiment):
    name = 'gamma-sweep'
    description = 'Scaled LD minima and recovery energies along an (eps, s) schedule'

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        points = config.points()
        opts = config.solve_options()
        v = smooth_field(config.recovery_field)

        first = build_domain(config.domain_spec(points[0]))
        reference: LayerGrid = first.layer
        limit_stack, limit_A, limit_report = minimize_limit(config.h0, first, opts)
        limit_value = limit_report.energy
        if not limit_report.converged:
            logger.warning(f"Limit solve did not converge (gap {limit_report.residual:.3e})")

        rows: List[tuple] = []
        summaries = []
        previous: Optional[JacobianStack] = None
        limit_fields = FieldSet(state_meta(config.params(points[0]))).add_stack(limit_stack).add_potential(limit_A)
        fields = {LIMIT_DIR: limit_fields}
        all_converged = limit_report.converged
        for k, point in enumerate(points):
            start = time.time()
            row, jac, info, point_fields = self._run_point(config, point, v, limit_value, reference, previous, opts)
            fields.update({f"{point_dir(k)}{sub}": fs for sub, fs in point_fields.items()})
            rows.append(row)
            summaries.append(info)
            all_converged = all_converged and bool(row[SWEEP_HEADER.index('converged')])
            previous = jac if jac is not None else previous
            logger.info(f"Sweep point {k + 1}/{len(points)} (eps={point.eps}, N={point.N}) "
                        f"done in {time.time() - start:.1f}s")

        log_eps = [abs(math.log(p.eps)) for p in points]
        curves = {
            'x': log_eps,
            'series': {
                'LD minimum': [r[SWEEP_HEADER.index('scaled_ld_min')] for r in rows],
                'recovery': [r[SWEEP_HEADER.index('scaled_recovery')] for r in rows],
                'limit': [limit_value] * len(rows),
            },
        }
        summary = {
            'h0': config.h0,
            'field': config.recovery_field.value,
            'limit_value': limit_value,
            'limit_report': limit_report.to_dict(),
            'points': summaries,
        }
        return ExperimentResult(self.name, summary, None, all_converged,
                                tables=[Table('sweep', SWEEP_HEADER, rows)], curves=curves, fields=fields)

    def _run_point(self, config: ExperimentConfig, point: SchedulePoint, v, limit_value: float,
                   reference: LayerGrid, previous: Optional[JacobianStack], opts):
        p = config.params(point)
        le, s = p.log_eps, p.s
        theory = out_of_theory(point, p.spec.L)
        try:
            domain = build_domain(p.spec)
            state = build_recovery(v, p, domain=domain, threads=config.threads)
            scaled_recovery = ld_energy(state.u, state.A, p).total / le ** 2
            stack = recovery_stack(v, state)
            recovery_limit = limit_energy(stack, state.A0, state.h0)
            u, A, report = minimize_ld((state.u, state.A), p, opts)
            obs = scaled_observables(u, A, p, state.A0)
            jac = stack_jacobian(u)
            cauchy = stack_distance(previous, jac, reference).value if previous is not None else None
        except LabError as e:
            logger.error(f"Sweep point eps={point.eps} N={point.N} failed: {e}")
            row = (point.eps, s, s * le, None, None, limit_value, None, None, None, None, False, theory)
            return row, None, {'eps': point.eps, 'N': point.N, 'error': str(e)}, {}

        if obs.energy_scaled > scaled_recovery + 1e-9:
            logger.warning(f"LD minimum {obs.energy_scaled:.10e} above recovery {scaled_recovery:.10e}")
        row = (point.eps, s, s * le, obs.energy_scaled, scaled_recovery, limit_value, recovery_limit,
               obs.josephson_scaled, obs.trace_slab_ratio, cauchy, report.converged, theory)
        info = {
            'eps': point.eps, 'N': point.N, 'h_grid': p.spec.h_grid,
            'report': report.to_dict(), 'observables': obs.to_dict(),
            'vortices': len(state.measure),
        }
        # keys are suffixes of the point directory
        fields = {
            '': state_fields(p, u, A).add_potential(state.A0, 'A0').add_stack(stack),
            f"/{RECOVERY_DIR}": state_fields(p, state.u, state.A),
        }
        return row, jac, info, fields


def run_gamma_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Run the sweep for ``config`` whatever its mode field says."""
    if config.mode != Mode.GAMMA_SWEEP:
        config = config.with_overrides(mode=Mode.GAMMA_SWEEP)
    return GammaSweepExperiment().run(config)
