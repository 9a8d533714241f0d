"""
Joint first-order descent on (u, A) for the Lawrence-Doniach energy.

The state is the real vector [Re u, Im u, A]. Steps are taken along the
gradient preconditioned by the lumped mass (s w_v on nodes, h_box^3 on edges),
with Barzilai-Borwein lengths and Armijo backtracking so the energy never
increases between accepted iterates.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from ..domain import Domain
from ..energy import ModelParams, check_state, ld_energy, ld_gradient
from ..fields import MagneticPotential, OrderParameterStack, applied_potential, to_coulomb_gauge
from .options import SolveOptions, SolveReport, StepRule

logger = logging.getLogger(__name__)

MODULUS_SLACK = 1e-6


class InitKind:
    UNIFORM = 'uniform'
    RANDOM = 'random'
    ZERO = 'zero'


def initial_state(domain: Domain, p: ModelParams, kind: str = InitKind.RANDOM,
                  seed: int = 0) -> Tuple[OrderParameterStack, MagneticPotential]:
    """Starting state with A = h_ex a and u chosen by ``kind``."""
    layer, box = domain
    if kind == InitKind.RANDOM:
        u = OrderParameterStack.random(layer, np.random.default_rng(seed))
    elif kind == InitKind.ZERO:
        u = OrderParameterStack.uniform(layer, 0.0)
    elif kind == InitKind.UNIFORM:
        u = OrderParameterStack.uniform(layer, 1.0)
    else:
        raise ValueError(f"Unknown init kind '{kind}'")
    return u, MagneticPotential.applied(box, p.h_ex)


class _Packing:
    """Conversion between field containers and the flat real state."""

    def __init__(self, u: OrderParameterStack, A: MagneticPotential, p: ModelParams):
        self.grid, self.box, self.h_ex = u.grid, A.box, p.h_ex
        self.shape = u.u.shape
        self.n = u.u.size
        w = np.broadcast_to(p.s * u.grid.node_weights, self.shape).ravel()
        w_u = np.where(w > 0, w, 1.0)
        w_A = np.full(A.box.n_edges, A.box.volume)
        self.metric = np.concatenate([w_u, w_u, w_A])

    def pack(self, u: OrderParameterStack, A: MagneticPotential) -> np.ndarray:
        flat = u.u.ravel()
        return np.concatenate([flat.real, flat.imag, A.vector])

    def unpack(self, x: np.ndarray):
        n = self.n
        u = OrderParameterStack(self.grid, (x[:n] + 1j * x[n:2 * n]).reshape(self.shape))
        return u, MagneticPotential(self.box, x[2 * n:], self.h_ex)

    def gradient(self, u, A, p) -> np.ndarray:
        g = ld_gradient(u, A, p)
        flat = g.u.ravel()
        return np.concatenate([flat.real, flat.imag, g.A])


def _clamped(A: MagneticPotential, h_ex: float) -> MagneticPotential:
    box = A.box
    target = applied_potential(box, h_ex)
    vector = np.where(box.free_edges, A.vector, target)
    return MagneticPotential(box, vector, h_ex)


def minimize_ld(init: Tuple[OrderParameterStack, MagneticPotential], p: ModelParams,
                opts: Optional[SolveOptions] = None):
    """Minimize the Lawrence-Doniach energy from ``init``.

    Returns:
        (u*, A*, SolveReport). Hitting ``max_iters`` returns the best state with
        ``converged=False``.
    """
    opts = opts or SolveOptions()
    u, A = init
    check_state(u, A, p)
    A = _clamped(A, p.h_ex)
    pk = _Packing(u, A, p)
    inv_metric = 1.0 / pk.metric

    x = pk.pack(u, A)
    energy = ld_energy(u, A, p).total
    g = pk.gradient(u, A, p)
    d = inv_metric * g
    gnorm = math.sqrt(float(g @ d))

    h_min = min(u.grid.h, p.eps)
    step = opts.initial_step if opts.initial_step is not None else 0.1 * h_min * h_min
    report = SolveReport(solver='ld-descent')
    report.record(0, energy, gnorm, 0.0)
    logger.info(f"LD descent start: E={energy:.6e} |g|={gnorm:.3e} step={step:.2e}")

    iteration = 0
    while True:
        if gnorm <= opts.grad_tol * (1.0 + abs(energy)):
            report.converged, report.reason = True, 'gradient'
            break
        if iteration >= opts.max_iters:
            report.reason = 'max_iters'
            break
        iteration += 1

        trial_step = step
        decrease = opts.armijo_c1 * gnorm * gnorm
        for _ in range(opts.max_backtracks):
            x_new = x - trial_step * d
            u_new, A_new = pk.unpack(x_new)
            e_new = ld_energy(u_new, A_new, p).total
            if e_new <= energy - trial_step * decrease:
                break
            trial_step *= 0.5
        else:
            report.reason = 'line_search'
            logger.warning(f"Backtracking failed at iteration {iteration}; keeping best state")
            break

        g_new = pk.gradient(u_new, A_new, p)
        s_vec = x_new - x
        y_vec = g_new - g
        change = abs(energy - e_new)
        x, g, energy = x_new, g_new, e_new
        d = inv_metric * g
        gnorm = math.sqrt(float(g @ d))

        if opts.step_rule == StepRule.BARZILAI_BORWEIN:
            sy = float(s_vec @ y_vec)
            ss = float(s_vec @ (pk.metric * s_vec))
            step = ss / sy if sy > 0 else 2.0 * trial_step
            step = min(max(step, 1e-12), 1e6)
        else:
            step = opts.initial_step if opts.initial_step is not None else step

        if iteration % opts.history_every == 0:
            report.record(iteration, energy, gnorm, trial_step)
        logger.debug(f"iter {iteration}: E={energy:.10e} |g|={gnorm:.3e} step={trial_step:.2e}")

        if opts.energy_tol > 0 and change <= opts.energy_tol * (1.0 + abs(energy)):
            report.reason = 'energy_tol'
            report.converged = gnorm <= opts.grad_tol * (1.0 + abs(energy))
            break

    u, A = pk.unpack(x)
    report.iterations = iteration
    report.energy = energy
    report.residual = gnorm
    report.max_modulus = float(np.max(np.abs(u.u[:, u.grid.node_mask])))
    if report.max_modulus > 1.0 + MODULUS_SLACK:
        logger.warning(f"Returned state has max|u| = {report.max_modulus:.8f} > 1")
    if not report.converged:
        logger.warning(f"LD descent stopped ({report.reason}) after {iteration} iterations, |g|={gnorm:.3e}")
    else:
        logger.info(f"LD descent converged in {iteration} iterations: E={energy:.8e}")

    if opts.coulomb:
        u, A = to_coulomb_gauge(u, A, keep_clamp=True)
    return u, A, report
