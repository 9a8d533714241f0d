"""
Minimization of the limit functional over (v, A).

With omega = slab thickness * h^2 the discrete functional reads

    1/2 omega sum_k |v_k - T_k A|^2 + 1/2 omega sum_k |C v_k|_1 + 1/2 h_box^3 |curl A - h0 e3|^2

where T_k is the plane trace at the slab midpoint and C the plaquette curl on
active cells. A is clamped to h0 a on the box boundary; a divergence penalty at
interior box nodes removes the gauge kernel without changing the minimum value,
because the functional is invariant under joint gauge transforms of (v, A).

The v-subproblem is a slice-wise ROF problem solved by accelerated
Chambolle-Pock iterations with a dual variable on plaquettes clamped to
[-1/2, 1/2]. Any such dual variable yields a lower bound on the minimum, so
the reported gap certifies the returned value.
"""
import logging
import math
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from ..domain import Domain, DomainSpec, build_domain, slice_heights
from ..energy import limit_energy
from ..errors import ParameterError
from ..fields import MagneticPotential, VectorField2DStack, applied_potential, trace_matrices
from ..lib.solvers import cg_solve, jacobi, power_norm
from .options import SolveOptions, SolveReport

logger = logging.getLogger(__name__)


class DualBound(NamedTuple):
    value: float
    potential: MagneticPotential


class LimitProblem:
    """Assembled operators of the discrete limit functional for one (domain, h0, slices)."""

    def __init__(self, domain: Domain, h0: float, slices: int):
        if h0 < 0:
            raise ParameterError(f"h0 must be non-negative, got {h0}", h0=h0)
        self.layer, self.box = domain
        self.h0 = float(h0)
        self.slices = int(slices)
        spec = self.layer.spec
        self.heights = slice_heights(spec, self.slices)
        self.thickness = spec.L / self.slices
        self.omega = self.thickness * self.layer.cell_area
        self.edge_mask = self.layer.edge_mask
        self.free = self.box.free_edges

    @cached_property
    def traces(self) -> sparse.csr_matrix:
        """Stacked traces on domain edges, shape (slices * n_domain_edges, n_box_edges)."""
        blocks = []
        for z in self.heights:
            t1, t2 = trace_matrices(self.layer, self.box, z)
            blocks.append(sparse.vstack([t1, t2], format='csr')[self.edge_mask])
        return sparse.vstack(blocks, format='csr')

    @cached_property
    def clamp(self) -> np.ndarray:
        return np.where(self.free, 0.0, applied_potential(self.box, self.h0))

    @cached_property
    def divergence(self) -> sparse.csr_matrix:
        return (-self.box.grad.T)[self.box.interior_nodes].tocsr()

    @cached_property
    def target_faces(self) -> np.ndarray:
        return self.h0 * self.box.applied_field_faces

    @cached_property
    def system(self) -> sparse.csr_matrix:
        H3 = self.box.volume
        T, C, D = self.traces, self.box.curl, self.divergence
        full = self.omega * (T.T @ T) + H3 * (C.T @ C + D.T @ D)
        return full.tocsr()[self.free][:, self.free].tocsr()

    @cached_property
    def dual_system(self) -> sparse.csr_matrix:
        H3 = self.box.volume
        C, D = self.box.curl, self.divergence
        return (H3 * (C.T @ C + D.T @ D)).tocsr()[self.free][:, self.free].tocsr()

    @cached_property
    def curl_norm(self) -> float:
        """Upper estimate of |C|: power iteration approaches from below, so pad it."""
        C = self.layer.active_curl
        return 1.02 * power_norm(lambda x: C @ x, lambda y: C.T @ y, C.shape[1])

    def _solve(self, linear: np.ndarray, with_traces: bool, what: str) -> np.ndarray:
        """Minimize <linear, A> + 1/2 h^3 (|curl A - b|^2 + |div A|^2), plus 1/2 omega |T A|^2
        when ``with_traces``, over the free edges."""
        H3 = self.box.volume
        A_c = self.clamp
        C, D, T = self.box.curl, self.divergence, self.traces
        grad_c = H3 * (C.T @ (C @ A_c - self.target_faces) + D.T @ (D @ A_c))
        if with_traces:
            grad_c = grad_c + self.omega * (T.T @ (T @ A_c))
        matrix = self.system if with_traces else self.dual_system
        rhs = -(linear + grad_c)[self.free]
        x = cg_solve(matrix, rhs, preconditioner=jacobi(matrix), what=what)
        A = A_c.copy()
        A[self.free] = x
        return A

    def potential_step(self, v_flat: np.ndarray) -> MagneticPotential:
        """Exact minimizer in A for fixed v (v_flat: slices x domain edges)."""
        linear = -self.omega * (self.traces.T @ v_flat.ravel())
        return MagneticPotential(self.box, self._solve(linear, True, 'limit A-step'), self.h0)

    def dual_bound(self, p: np.ndarray) -> DualBound:
        """Lower bound d(p) on the minimum for a feasible dual field p (slices x active cells)."""
        C = self.layer.active_curl
        q = (C.T @ p.T).T
        linear = self.omega * (self.traces.T @ q.ravel())
        A = self._solve(linear, False, 'limit dual A-step')
        H3 = self.box.volume
        b = self.box.curl @ A - self.target_faces
        div = self.divergence @ A
        value = (-0.5 * self.omega * float(np.sum(q * q)) + float(linear @ A)
                 + 0.5 * H3 * float(b @ b + div @ div))
        return DualBound(value, MagneticPotential(self.box, A, self.h0))

    def domain_traces(self, A: MagneticPotential) -> np.ndarray:
        return (self.traces @ A.vector).reshape(self.slices, -1)

    def to_stack(self, v_flat: np.ndarray) -> VectorField2DStack:
        full = np.zeros((self.slices, self.edge_mask.size))
        full[:, self.edge_mask] = v_flat
        v1, v2 = self.layer.split_edges(full)
        return VectorField2DStack(self.layer, v1, v2, self.heights, self.thickness)

    def from_stack(self, v: VectorField2DStack) -> np.ndarray:
        return v.flat_all()[:, self.edge_mask]


def rof_steps(a: np.ndarray, v: np.ndarray, p: np.ndarray, C: sparse.csr_matrix, norm: float,
              iterations: int, sigma: Optional[float] = None, tau: Optional[float] = None):
    """Accelerated primal-dual iterations for min_v 1/2 |v - a|^2 + 1/2 |C v|_1, row-wise.

    The strong convexity modulus of the data term is 1, so step sizes follow
    tau <- theta tau, sigma <- sigma / theta with theta = 1 / sqrt(1 + 2 tau).
    """
    tau = tau if tau is not None else 1.0 / max(norm, 1e-12)
    sigma = sigma if sigma is not None else 1.0 / max(norm, 1e-12)
    v_bar = v.copy()
    for _ in range(iterations):
        p = np.clip(p + sigma * (C @ v_bar.T).T, -0.5, 0.5)
        v_new = (v - tau * (C.T @ p.T).T + tau * a) / (1.0 + tau)
        theta = 1.0 / math.sqrt(1.0 + 2.0 * tau)
        tau *= theta
        sigma /= theta
        v_bar = v_new + theta * (v_new - v)
        v = v_new
    return v, p


def minimize_limit(h0: float, spec_or_domain, opts: Optional[SolveOptions] = None):
    """Minimize the limit functional for the given h0.

    Returns:
        (v0, A0, SolveReport); ``report.residual`` is the final duality gap.
    """
    opts = opts or SolveOptions()
    domain = build_domain(spec_or_domain) if isinstance(spec_or_domain, DomainSpec) else spec_or_domain
    prob = LimitProblem(domain, h0, opts.limit_slices)
    C = prob.layer.active_curl
    norm = prob.curl_norm
    if opts.sigma is not None and opts.tau is not None and opts.sigma * opts.tau * norm ** 2 > 1.0 + 1e-12:
        raise ParameterError(f"sigma*tau*|C|^2 = {opts.sigma * opts.tau * norm ** 2:.4f} exceeds 1",
                             sigma=opts.sigma, tau=opts.tau)

    n_dom = int(prob.edge_mask.sum())
    v = np.zeros((prob.slices, n_dom))
    p = np.zeros((prob.slices, C.shape[0]))
    report = SolveReport(solver='limit-primal-dual')
    best = None
    logger.info(f"Limit solve: h0={h0} slices={prob.slices} |C|={norm:.4f}")

    iteration = 0
    while True:
        A = prob.potential_step(v)
        a = prob.domain_traces(A)
        v, p = rof_steps(a, v, p, C, norm, opts.inner_iters, opts.sigma, opts.tau)
        iteration += 1

        A = prob.potential_step(v)
        stack = prob.to_stack(v)
        primal = limit_energy(stack, A, prob.h0)
        lower = prob.dual_bound(p).value
        gap = max(primal - lower, 0.0)
        report.record(iteration, primal, gap, opts.inner_iters)
        logger.debug(f"outer {iteration}: G={primal:.10e} gap={gap:.3e}")
        if best is None or primal < best[0]:
            best = (primal, stack, A, gap)

        if gap <= opts.grad_tol * (1.0 + abs(primal)):
            report.converged, report.reason = True, 'gap'
            break
        if iteration * opts.inner_iters >= opts.max_iters:
            report.reason = 'max_iters'
            break

    primal, stack, A, gap = best
    report.iterations = iteration
    report.energy = primal
    report.residual = gap
    if report.converged:
        logger.info(f"Limit solve converged after {iteration} outer steps: G={primal:.8e} gap={gap:.2e}")
    else:
        logger.warning(f"Limit solve stopped ({report.reason}): G={primal:.8e} gap={gap:.2e}")
    return stack, A, report


def optimal_potential(v: VectorField2DStack, h0: float, domain: Optional[Domain] = None) -> MagneticPotential:
    """Exact minimizer in A of the limit functional for a fixed v."""
    domain = domain if domain is not None else build_domain(v.grid.spec)
    prob = LimitProblem(domain, h0, v.slices)
    if not np.allclose(prob.heights, v.heights):
        raise ParameterError("Stack heights are not the slab midpoints of the domain")
    return prob.potential_step(prob.from_stack(v))
