"""
Lawrence-Doniach energy, its splitting, the limit functional and exact gradients.

Layer kinetic terms use link variables: the covariant difference along an edge
from node a to node b is (u_b exp(-i theta) - u_a) / h where theta is the line
integral of the trace of A along the edge. The Josephson term uses the link
phase Phi_n, the integral of A3 from ns to (n+1)s above each node.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .domain import Domain, DomainSpec, LayerGrid, build_domain
from .errors import GridMismatchError, ParameterError
from .fields import (MagneticPotential, OrderParameterStack, VectorField2DStack, check_pair, coupling,
                     trace_at)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """Scalar model parameters; the geometry comes from ``spec``."""
    spec: DomainSpec
    eps: float
    lam: float = 1.0
    h_ex: float = 0.0
    h0: Optional[float] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError(f"eps must be positive, got {self.eps}", eps=self.eps)
        if not self.lam > 0:
            raise ParameterError(f"lambda must be positive, got {self.lam}", lam=self.lam)
        if self.h_ex < 0:
            raise ParameterError(f"h_ex must be non-negative, got {self.h_ex}", h_ex=self.h_ex)

    @property
    def s(self) -> float:
        return self.spec.s

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def log_eps(self) -> float:
        return abs(math.log(self.eps))

    @property
    def h0_mismatch(self) -> Optional[float]:
        """|h_ex / |ln eps| - h0|, or None when no h0 is attached."""
        if self.h0 is None or self.log_eps == 0:
            return None
        return abs(self.h_ex / self.log_eps - self.h0)

    def with_field(self, h_ex: float) -> 'ModelParams':
        return ModelParams(self.spec, self.eps, self.lam, h_ex, self.h0)


@dataclass
class EnergyBreakdown:
    kinetic: np.ndarray
    gl_potential: np.ndarray
    josephson: np.ndarray
    magnetic: float
    total: float
    pure_gl: np.ndarray = field(default=None)
    cross_term: float = 0.0
    quadratic_A_term: float = 0.0

    @property
    def split_total(self) -> float:
        return float(np.sum(self.pure_gl) + self.cross_term + self.quadratic_A_term
                     + np.sum(self.josephson) + self.magnetic)

    def to_dict(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            out[key] = value.tolist() if isinstance(value, np.ndarray) else float(value)
        out['split_total'] = self.split_total
        return out


class EnergySplit(NamedTuple):
    pure_gl: float
    cross_term: float
    quadratic_A_term: float
    josephson: float
    magnetic: float

    @property
    def total(self) -> float:
        return self.pure_gl + self.cross_term + self.quadratic_A_term + self.josephson + self.magnetic


@dataclass
class ResidualReport:
    """Max and weighted L2 norms of the discrete Euler-Lagrange residuals."""
    layer_max: float
    layer_l2: float
    boundary_max: float
    boundary_l2: float
    ampere_max: float
    ampere_l2: float
    far_field_max: float
    far_field_l2: float
    scaled: float

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}


def check_state(u: OrderParameterStack, A: MagneticPotential, p: ModelParams):
    check_pair(u.grid, A.box)
    if u.grid.spec != p.spec:
        raise GridMismatchError("Model parameters and fields use different domain specs")


# Edge bookkeeping

def edge_ends(grid: LayerGrid, u: np.ndarray):
    """Values at the tail and head of every layer edge, flattened as [x-edges; y-edges]."""
    ua = grid.join_edges(u[..., :-1, :], u[..., :, :-1])
    ub = grid.join_edges(u[..., 1:, :], u[..., :, 1:])
    return ua, ub


def scatter_ends(grid: LayerGrid, ga: np.ndarray, gb: np.ndarray) -> np.ndarray:
    """Adjoint of ``edge_ends``: accumulate edge quantities back onto nodes."""
    a1, a2 = grid.split_edges(ga)
    b1, b2 = grid.split_edges(gb)
    out = np.zeros(ga.shape[:-1] + grid.shape, dtype=np.result_type(ga, gb))
    out[..., :-1, :] += a1
    out[..., 1:, :] += b1
    out[..., :, :-1] += a2
    out[..., :, 1:] += b2
    return out


class Links(NamedTuple):
    theta: np.ndarray   # (N+1, n_edges) line integrals of the traces
    ua: np.ndarray
    ub: np.ndarray
    r: np.ndarray       # covariant differences times h
    phi: np.ndarray     # (N, nx*ny) link phases
    r_j: np.ndarray     # u_{n+1} - u_n exp(i phi)


def link_variables(u: OrderParameterStack, A: MagneticPotential) -> Links:
    """Trace line integrals, covariant differences and Josephson link phases."""
    grid = u.grid
    c = coupling(grid, A.box)
    layers = u.layers
    theta_x = (c.trace_x @ A.vector).reshape(layers, -1)
    theta_y = (c.trace_y @ A.vector).reshape(layers, -1)
    theta = grid.h * np.concatenate([theta_x, theta_y], axis=1)
    ua, ub = edge_ends(grid, u.u)
    r = ub * np.exp(-1j * theta) - ua
    flat = u.u.reshape(layers, -1)
    phi = (c.links @ A.vector).reshape(layers - 1, -1)
    r_j = flat[1:] - flat[:-1] * np.exp(1j * phi)
    return Links(theta, ua, ub, r, phi, r_j)


def _magnetic(A: MagneticPotential, h_ex: float) -> float:
    box = A.box
    b = box.curl @ A.vector - h_ex * box.applied_field_faces
    return 0.5 * box.volume * float(np.sum(b * b))


def ld_energy(u: OrderParameterStack, A: MagneticPotential, p: ModelParams) -> EnergyBreakdown:
    """Every term of the Lawrence-Doniach energy, with the splitting view filled in.

    Raises:
        GridMismatchError: fields and parameters built from different specs.
    """
    check_state(u, A, p)
    grid = u.grid
    s, h2 = p.s, grid.cell_area
    w_e = grid.edge_weights
    w_v = grid.node_weights.ravel()
    L = link_variables(u, A)

    kinetic = 0.5 * s * np.sum(w_e * np.abs(L.r) ** 2, axis=1) / h2
    density = u.u.reshape(u.layers, -1)
    gl_potential = s * np.sum(w_v * (1.0 - np.abs(density) ** 2) ** 2, axis=1) / (4.0 * p.eps ** 2)
    josephson = s / (2.0 * p.lam ** 2 * s ** 2) * np.sum(w_v * np.abs(L.r_j) ** 2, axis=1)
    magnetic = _magnetic(A, p.h_ex)
    total = float(np.sum(kinetic) + np.sum(gl_potential) + np.sum(josephson) + magnetic)

    z = L.ub * np.conj(L.ua)
    pure_gl = 0.5 * s * np.sum(w_e * np.abs(L.ub - L.ua) ** 2, axis=1) / h2 + gl_potential
    cross = -s * float(np.sum(w_e * z.imag * np.sin(L.theta))) / h2
    quad = s * float(np.sum(w_e * z.real * 2.0 * np.sin(0.5 * L.theta) ** 2)) / h2

    return EnergyBreakdown(kinetic=kinetic, gl_potential=gl_potential, josephson=josephson,
                           magnetic=magnetic, total=total, pure_gl=pure_gl,
                           cross_term=cross, quadratic_A_term=quad)


def ld_energy_split(u: OrderParameterStack, A: MagneticPotential, p: ModelParams) -> EnergySplit:
    """The five groups of the splitting identity.

    The trace terms are the exact lattice counterparts of -(grad u, iu).A and
    |u|^2 |A|^2 / 2: with z = u_b conj(u_a) the link difference satisfies
    |r|^2 = |u_b - u_a|^2 - 2 Im z sin(theta) + 4 Re z sin^2(theta / 2).
    """
    e = ld_energy(u, A, p)
    return EnergySplit(pure_gl=float(np.sum(e.pure_gl)), cross_term=e.cross_term,
                       quadratic_A_term=e.quadratic_A_term, josephson=float(np.sum(e.josephson)),
                       magnetic=e.magnetic)


def gl2d_energy(u_n: np.ndarray, eps: float, grid: LayerGrid) -> float:
    """E_eps(u) = 1/2 int |grad u|^2 + (1 - |u|^2)^2 / (2 eps^2) on one layer."""
    ua, ub = edge_ends(grid, np.asarray(u_n))
    grad_sq = np.sum(grid.edge_weights * np.abs(ub - ua) ** 2) / grid.cell_area
    pot = np.sum(grid.node_weights * (1.0 - np.abs(u_n) ** 2) ** 2) / (2.0 * eps ** 2)
    return float(0.5 * grad_sq + 0.5 * pot)


def trial_state_energy(p: ModelParams, domain: Optional[Domain] = None) -> EnergyBreakdown:
    """Energy of u = 1 on every layer with A = h_ex a (the trial upper bound)."""
    layer, box = domain if domain is not None else build_domain(p.spec)
    u = OrderParameterStack.uniform(layer)
    A = MagneticPotential.applied(box, p.h_ex)
    return ld_energy(u, A, p)


# Limit functional

class LimitTerms(NamedTuple):
    l2: float
    total_variation: float
    magnetic: float

    @property
    def value(self) -> float:
        return 0.5 * (self.l2 + self.total_variation + self.magnetic)


def stack_traces(v: VectorField2DStack, A: MagneticPotential) -> np.ndarray:
    """Traces of A at every slice height, flattened as (slices, n_edges)."""
    return np.stack([v.grid.join_edges(*trace_at(A, z, v.grid)) for z in v.heights])


def tv_mass(v: VectorField2DStack) -> float:
    """|curl v|(D): anisotropic discrete total variation summed over slices."""
    grid = v.grid
    curl = grid.curl @ v.flat_all().T
    active = grid.cell_mask.ravel()
    return float(v.thickness * grid.cell_area * np.sum(np.abs(curl[active])))


def limit_energy_terms(v: VectorField2DStack, A: MagneticPotential, h0: float) -> LimitTerms:
    check_pair(v.grid, A.box)
    grid = v.grid
    diff = v.flat_all() - stack_traces(v, A)
    l2 = v.thickness * float(np.sum(grid.edge_weights * diff * diff))
    return LimitTerms(l2=l2, total_variation=tv_mass(v), magnetic=2.0 * _magnetic(A, h0))


def limit_energy(v: VectorField2DStack, A: MagneticPotential, h0: float) -> float:
    """The limit functional 1/2 [ |v - A-hat|^2 + |curl v|(D) + |curl A - h0 e3|^2 ]."""
    return limit_energy_terms(v, A, h0).value


# Gradients and residuals

@dataclass
class Gradient:
    """Energy gradient: complex G = dE/dRe u + i dE/dIm u per node, real dE/dA per edge."""
    u: np.ndarray
    A: np.ndarray
    josephson_u: np.ndarray = None


def ld_gradient(u: OrderParameterStack, A: MagneticPotential, p: ModelParams) -> Gradient:
    """Exact gradient of the discrete energy; clamped boundary edges get zero."""
    check_state(u, A, p)
    grid, box = u.grid, A.box
    c = coupling(grid, box)
    s, h, h2 = p.s, grid.h, grid.cell_area
    w_e = grid.edge_weights
    w_v = grid.node_weights.ravel()
    L = link_variables(u, A)
    layers = u.layers

    ck = s * w_e / (2.0 * h2)
    rot = np.exp(1j * L.theta)
    G = scatter_ends(grid, -2.0 * ck * L.r, 2.0 * ck * L.r * rot)
    dtheta = 2.0 * ck * np.imag(np.conj(L.r) * L.ub * np.conj(rot))

    flat = u.u.reshape(layers, -1)
    G_pot = -s * w_v * (1.0 - np.abs(flat) ** 2) * flat / p.eps ** 2

    cj = s * w_v / (2.0 * p.lam ** 2 * s ** 2)
    link = np.exp(1j * L.phi)
    G_j = np.zeros_like(flat)
    G_j[1:] += 2.0 * cj * L.r_j
    G_j[:-1] -= 2.0 * cj * L.r_j * np.conj(link)
    dphi = 2.0 * cj * np.imag(np.conj(L.r_j) * flat[:-1] * link)

    G_u = G + (G_pot + G_j).reshape(u.u.shape)
    n1 = grid.n_x_edges
    G_A = h * (c.trace_x.T @ dtheta[:, :n1].ravel() + c.trace_y.T @ dtheta[:, n1:].ravel())
    G_A = G_A + c.links.T @ dphi.ravel()
    b = box.curl @ A.vector - p.h_ex * box.applied_field_faces
    G_A = G_A + box.volume * (box.curl.T @ b)
    G_A = np.where(box.free_edges, G_A, 0.0)
    return Gradient(u=G_u, A=G_A, josephson_u=G_j.reshape(u.u.shape))


def josephson_coupling(u: OrderParameterStack, A: MagneticPotential, p: ModelParams) -> np.ndarray:
    """The coupling terms P_n on every layer, with the one-sided forms at n = 0 and n = N."""
    check_state(u, A, p)
    layers = u.layers
    flat = u.u.reshape(layers, -1)
    phi = (coupling(u.grid, A.box).links @ A.vector).reshape(layers - 1, -1)
    ups = np.exp(1j * phi)
    P = np.zeros_like(flat)
    P[0] = flat[1] * np.conj(ups[0]) - flat[0]
    P[-1] = flat[-2] * ups[-1] - flat[-1]
    if layers > 2:
        P[1:-1] = flat[2:] * np.conj(ups[1:]) + flat[:-2] * ups[:-1] - 2.0 * flat[1:-1]
    return (P / (p.lam ** 2 * p.s ** 2)).reshape(u.u.shape)


def covariant_laplacian(u: OrderParameterStack, A: MagneticPotential) -> np.ndarray:
    """Weighted lattice covariant Laplacian per node; zero on inactive nodes."""
    check_pair(u.grid, A.box)
    grid = u.grid
    L = link_variables(u, A)
    w_e = grid.edge_weights
    acc = scatter_ends(grid, w_e * L.r, -w_e * L.r * np.exp(1j * L.theta)) / grid.cell_area
    w_v = grid.node_weights
    return np.where(w_v > 0, acc / np.where(w_v > 0, w_v, 1.0), 0.0)


def layer_equation(u: OrderParameterStack, A: MagneticPotential, p: ModelParams) -> np.ndarray:
    """-Lap_A u - (1 - |u|^2) u / eps^2 - P_n on every layer node."""
    check_state(u, A, p)
    lap = covariant_laplacian(u, A)
    P = josephson_coupling(u, A, p)
    R = -lap - (1.0 - np.abs(u.u) ** 2) * u.u / p.eps ** 2 - P
    return np.where(u.grid.node_weights > 0, R, 0.0)


def ampere_equation(u: OrderParameterStack, A: MagneticPotential, p: ModelParams) -> np.ndarray:
    """curl curl A - j on the free box edges, j assembled from the supercurrents."""
    from .diagnostics import supercurrent  # diagnostics builds on this module

    check_state(u, A, p)
    grid, box = u.grid, A.box
    c = coupling(grid, box)
    j = supercurrent(u, A, p)
    n1 = grid.n_x_edges
    plane = grid.edge_weights * grid.join_edges(j.j1, j.j2)
    interlayer = grid.node_weights.ravel() * j.j3.reshape(u.layers - 1, -1)
    source = (c.trace_x.T @ plane[:, :n1].ravel() + c.trace_y.T @ plane[:, n1:].ravel()
              + c.links.T @ interlayer.ravel())
    b = box.curl @ A.vector - p.h_ex * box.applied_field_faces
    return (box.curl.T @ b - source / box.volume)[box.free_edges]


def _norms(values: np.ndarray, weights: np.ndarray):
    if values.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(values))), float(np.sqrt(np.sum(weights * np.abs(values) ** 2)))


def el_residual(u: OrderParameterStack, A: MagneticPotential, p: ModelParams,
                energy: Optional[float] = None) -> ResidualReport:
    """Residuals of the layer equations, the natural boundary condition, Ampere's law
    with the supercurrent source, and the far-field condition on the box boundary.

    Each equation is assembled from its own terms, not from ``ld_gradient``.
    """
    grid, box = u.grid, A.box
    s = p.s
    w_v = grid.node_weights
    interior = grid.interior_nodes
    boundary = grid.boundary_nodes

    eq = layer_equation(u, A, p)
    weights = np.broadcast_to(s * w_v, eq.shape)
    layer_max, layer_l2 = _norms(eq[:, interior], weights[:, interior])
    bnd = grid.h * np.abs(eq[:, boundary])
    boundary_max, boundary_l2 = _norms(bnd, weights[:, boundary] / grid.h ** 2)

    ampere = ampere_equation(u, A, p)
    ampere_max, ampere_l2 = _norms(ampere, np.full(ampere.shape, box.volume))

    b = box.curl @ A.vector - p.h_ex * box.applied_field_faces
    far = np.abs(b[box.boundary_faces])
    far_max, far_l2 = _norms(far, np.full(far.shape, box.volume))

    if energy is None:
        energy = ld_energy(u, A, p).total
    scaled = math.sqrt(layer_l2 ** 2 + ampere_l2 ** 2) / (1.0 + abs(energy))
    return ResidualReport(layer_max, layer_l2, boundary_max, boundary_l2, ampere_max, ampere_l2,
                          far_max, far_l2, scaled)
