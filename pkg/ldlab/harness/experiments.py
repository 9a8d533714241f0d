"""
Single-state experiment modes: minimize-ld, minimize-limit, recover and
approx-check.
"""
import logging
from typing import Callable

import numpy as np

from ..approx import mollify_approx, reflect_extend, strip_mass, tv_measure, upper_cells
from ..diagnostics import scaled_observables
from ..domain import Shape, build_domain, slice_heights
from ..energy import el_residual, ld_energy, limit_energy, limit_energy_terms
from ..fields import MagneticPotential, VectorField2DStack, sample_stack
from ..minimize import initial_state, minimize_ld, minimize_limit
from ..recovery import RecoveryState, build_recovery
from .base import BaseExperiment, ExperimentResult, Table
from .config import ExperimentConfig, FieldKind
from .fieldio import ROOT, FieldSet, state_fields, state_meta

logger = logging.getLogger(__name__)


def _step(t, lo: float, hi: float):
    """Smooth 0 -> 1 transition on [lo, hi]."""
    x = np.clip((np.asarray(t, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


def smooth_field(kind: FieldKind) -> Callable:
    """Planar field v(x, y, z) -> (v1, v2) of the given kind."""
    if kind == FieldKind.ZERO:
        return lambda x, y, z: (np.zeros_like(x), np.zeros_like(x))
    if kind == FieldKind.ROTATING:
        return lambda x, y, z: (-0.5 * y, 0.5 * x)
    if kind == FieldKind.GRADIENT:
        # grad of g = sin(x) cos(y) / 4
        return lambda x, y, z: (0.25 * np.cos(x) * np.cos(y), -0.25 * np.sin(x) * np.sin(y))
    if kind == FieldKind.JUMP:
        def jump(x, y, z):
            bump_x = _step(x, -0.3, -0.15) * (1.0 - _step(x, 0.15, 0.3))
            v1 = bump_x * (y > 0.013) * (1.0 - _step(y, 0.2, 0.3))
            return v1, np.zeros_like(x)
        return jump
    raise ValueError(f"Unknown field kind '{kind}'")


def recovery_stack(v: Callable, state: RecoveryState) -> VectorField2DStack:
    """v sampled at the N slab midpoints, the stack the recovery state is compared against."""
    spec = state.params.spec
    return sample_stack(v, state.u.grid, slice_heights(spec, spec.N), spec.s)


class MinimizeLDExperiment(BaseExperiment):
    name = 'minimize-ld'
    description = 'Minimize the Lawrence-Doniach energy at one (eps, s)'

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        p = config.params()
        domain = build_domain(p.spec)
        u, A, report = minimize_ld(initial_state(domain, p, config.init, config.seed), p,
                                   config.solve_options())
        energy = ld_energy(u, A, p)
        summary = {
            'grid': domain.layer.describe(),
            'box': domain.box.describe(),
            'params': state_meta(p),
            'energy': energy.to_dict(),
            'observables': scaled_observables(u, A, p).to_dict(),
            'residual': el_residual(u, A, p, energy.total).to_dict(),
        }
        return ExperimentResult(self.name, summary, report, report.converged,
                                fields={ROOT: state_fields(p, u, A)})


class MinimizeLimitExperiment(BaseExperiment):
    name = 'minimize-limit'
    description = 'Minimize the limit functional for h0'

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        p = config.params()
        domain = build_domain(p.spec)
        stack, A, report = minimize_limit(config.h0, domain, config.solve_options())
        terms = limit_energy_terms(stack, A, config.h0)
        summary = {
            'grid': domain.layer.describe(),
            'h0': config.h0,
            'value': terms.value,
            'terms': terms._asdict(),
            'gap': report.residual,
            'candidate_bound': limit_energy(VectorField2DStack.zeros(stack.grid, stack.heights, stack.thickness),
                                            MagneticPotential.applied(domain.box, config.h0), config.h0),
        }
        fields = FieldSet(state_meta(p)).add_stack(stack).add_potential(A)
        return ExperimentResult(self.name, summary, report, report.converged, fields={ROOT: fields})


class RecoverExperiment(BaseExperiment):
    name = 'recover'
    description = 'Build the recovery state of a smooth field and compare with the limit value'

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        p = config.params()
        domain = build_domain(p.spec)
        v = smooth_field(config.recovery_field)
        state = build_recovery(v, p, domain=domain, threads=config.threads)
        energy = ld_energy(state.u, state.A, p)
        scaled = energy.total / p.log_eps ** 2
        stack = recovery_stack(v, state)
        limit_value = limit_energy(stack, state.A0, state.h0)
        m = state.measure
        summary = {
            'params': state_meta(p),
            'field': config.recovery_field.value,
            'energy': energy.to_dict(),
            'scaled_recovery': scaled,
            'limit_value': limit_value,
            'gap': scaled - limit_value,
            'vortices': len(m),
            'measure_mass': m.total_mass(),
            'mass_bound': m.mass_bound,
            'observables': scaled_observables(state.u, state.A, p, state.A0).to_dict(),
        }
        rows = [(int(n), float(x), float(y), int(sg)) for n, (x, y), sg in zip(m.layers, m.positions, m.signs)]
        fields = state_fields(p, state.u, state.A).add_potential(state.A0, 'A0').add_stack(stack)
        return ExperimentResult(self.name, summary, None, True,
                                tables=[Table('vortices', ('n', 'x', 'y', 'sigma'), rows)],
                                fields={ROOT: fields})


class ApproxCheckExperiment(BaseExperiment):
    name = 'approx-check'
    description = 'Mollification and reflection-extension checks'

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        spec = config.domain_spec()
        grid = build_domain(spec).layer
        heights = slice_heights(spec, config.approx.slices)
        thickness = spec.L / config.approx.slices
        v = sample_stack(smooth_field(FieldKind.JUMP), grid, heights, thickness)
        approx = mollify_approx(v, config.approx.target, max_radius=config.approx.max_radius)
        tv, tv_smooth = tv_measure(v), tv_measure(approx.v)
        summary = {
            'grid': grid.describe(),
            'mollify': approx.to_dict(),
            'target': config.approx.target,
            'tv': tv,
            'tv_mollified': tv_smooth,
            'tv_relative_change': abs(tv_smooth - tv) / tv if tv > 0 else 0.0,
        }
        if spec.shape == Shape.RECTANGLE:
            smooth = sample_stack(smooth_field(config.recovery_field), grid, heights, thickness)
            Tv = reflect_extend(smooth)
            summary['reflection'] = {
                'tv_extended': tv_measure(Tv),
                'tv_upper': tv_measure(smooth, upper_cells(grid)),
                'strip_mass': {format(d, 'g'): strip_mass(Tv, d) for d in config.approx.strip_widths},
            }
        else:
            logger.info("Reflection checks need a rectangular cross-section; skipped")
        converged = approx.error < config.approx.target
        return ExperimentResult(self.name, summary, None, converged)
