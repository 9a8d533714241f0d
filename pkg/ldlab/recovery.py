"""
Recovery states for the upper bound: vortex placement, core profile, phase
assembly, the pure-gradient factor and the recovery potential.

A smooth field v on D is sliced at the layer heights and split into a stream
part and a gradient part. The stream part is carried by point vortices of
weight pi / |ln eps| placed from w = curl v / 2; the gradient part becomes the
unimodular factor exp(i |ln eps| g).
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .diagnostics import VortexMeasure, plaquette_winding
from .domain import Domain, DomainSpec, LayerGrid, build_domain, slice_heights
from .energy import ModelParams
from .errors import (NewtonianTargetError, ParameterError, PhaseAssemblyError,
                     PlacementError, QuadratureError)
from .fields import (MagneticPotential, OrderParameterStack, VectorField2DStack, applied_potential,
                     hodge_decompose, sample_stack)
from .lib.parallel import map_layers
from .lib.solvers import cg_solve
from .minimize.limit import optimal_potential

logger = logging.getLogger(__name__)

# Mean of 1/r over the unit cube seen from its center: 3 ln(2 + sqrt 3) - pi / 2.
# Rederived by scripts/derive_cube_constant.py.
CUBE_MEAN_INV_R = 3.0 * math.log(2.0 + math.sqrt(3.0)) - math.pi / 2.0

GAUSS_POINTS = 6
QUAD_TOL = 1e-12
_MAX_SPLITS = 12


def bump(rho):
    """Unnormalized mollifier exp(-1 / (1 - rho^2)) on the unit disk."""
    rho = np.asarray(rho, dtype=float)
    gap = np.maximum(1.0 - rho * rho, 1e-300)
    return np.where(rho < 1.0, np.exp(-1.0 / gap), 0.0)


def _radial_integrand(rho: float) -> float:
    return float(bump(rho)) * rho


def _interval_mass(a: float, b: float, depth: int = 0) -> float:
    value, err = integrate.quad(_radial_integrand, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    if err <= QUAD_TOL * max(1.0, abs(value)):
        return value
    if depth >= _MAX_SPLITS:
        raise QuadratureError(f"Core quadrature on [{a}, {b}] stuck at error {err:.2e}", interval=(a, b))
    mid = 0.5 * (a + b)
    return _interval_mass(a, mid, depth + 1) + _interval_mass(mid, b, depth + 1)


class UnitProfile(NamedTuple):
    t: np.ndarray
    q: np.ndarray
    normalization: float
    interp: PchipInterpolator


@lru_cache(maxsize=8)
def unit_profile(resolution: int = 400) -> UnitProfile:
    """Cumulative normalized bump mass q1(t) on [0, 1], plus the bump integral over the unit disk."""
    t = np.linspace(0.0, 1.0, resolution + 1)
    pieces = [_interval_mass(a, b) for a, b in zip(t[:-1], t[1:])]
    mass = np.concatenate([[0.0], np.cumsum(pieces)])
    q = mass / mass[-1]
    q[-1] = 1.0
    return UnitProfile(t, q, 2.0 * math.pi * mass[-1], PchipInterpolator(t, q))


def _evaluate(t, resolution: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    inside = t < 1.0
    out[inside] = np.clip(unit_profile(resolution).interp(t[inside]), 0.0, 1.0)
    return out


@dataclass(frozen=True)
class CoreProfile:
    """Radial core profile q(r) = (eta_eps * xi)(x) |x| of a unit vortex.

    By the shell theorem the convolution of the radial mollifier with the
    rotated log-gradient xi is the fraction of mollifier mass inside |x|
    times xi, so q is the cumulative normalized mass of eta at r / eps.
    """
    eps: float
    r: np.ndarray
    q: np.ndarray
    resolution: int = 400

    def __call__(self, r) -> np.ndarray:
        return _evaluate(np.asarray(r, dtype=float) / self.eps, self.resolution)

    def core_energy(self) -> float:
        """Integral of |q xi|^2 over the eps-disk; independent of eps."""
        interp = unit_profile(self.resolution).interp
        value, _ = integrate.quad(lambda x: float(interp(x)) ** 2 / x if x > 0 else 0.0, 0.0, 1.0, limit=400)
        return 2.0 * math.pi * value


def q_profile(eps: float, resolution: int = 400, samples: int = 301) -> CoreProfile:
    """Core profile of width eps sampled on [0, 3 eps]."""
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}", eps=eps)
    r = np.linspace(0.0, 3.0 * eps, samples)
    return CoreProfile(eps, r, _evaluate(r / eps, resolution), resolution)


def convolve_xi(point, eps: float) -> np.ndarray:
    """(eta_eps * xi)(point) by direct quadrature in polar coordinates around the point.

    The kernel xi(x) = (x2, -x1) / |x|^2 is singular at the point itself; the
    polar Jacobian cancels the singularity.
    """
    x = np.asarray(point, dtype=float)
    norm = unit_profile().normalization * eps * eps
    dist = float(np.hypot(*x))
    r_lo, r_hi = max(0.0, dist - eps), dist + eps

    def integrand(r, theta, comp):
        y = x + r * np.array([math.cos(theta), math.sin(theta)])
        weight = float(bump(math.hypot(*y) / eps)) / norm
        return weight * (-math.sin(theta) if comp == 0 else math.cos(theta))

    out = np.zeros(2)
    for comp in (0, 1):
        out[comp], _ = integrate.dblquad(lambda r, th: integrand(r, th, comp), 0.0, 2.0 * math.pi,
                                         r_lo, r_hi, epsabs=1e-10, epsrel=1e-10)
    return out


# Placement

def separation_constant(w_max: float) -> float:
    return min(1.0, 1.0 / (4.0 * math.sqrt(w_max + 1.0)))


def _squares(spec: DomainSpec, delta: float) -> np.ndarray:
    """Lower-left corners of the delta-squares with all four corners strictly inside Omega."""
    ax, ay = spec.half_extent
    kx = np.arange(math.floor(-ax / delta), math.ceil(ax / delta))
    ky = np.arange(math.floor(-ay / delta), math.ceil(ay / delta))
    cx, cy = np.meshgrid(kx * delta, ky * delta, indexing='ij')
    cx, cy = cx.ravel(), cy.ravel()
    inside = np.ones(cx.shape, dtype=bool)
    for dx in (0.0, delta):
        for dy in (0.0, delta):
            inside &= spec.signed_distance(cx + dx, cy + dy) > 0
    return np.stack([cx[inside], cy[inside]], axis=1)


def _square_integrals(w: Callable, corners: np.ndarray, delta: float, z: float):
    """Gauss-Legendre integrals of w over each square, plus the sampled sup |w|."""
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    offs = 0.5 * delta * (nodes + 1.0)
    ox, oy = np.meshgrid(offs, offs, indexing='ij')
    wts = np.outer(weights, weights) * (0.5 * delta) ** 2
    xx = corners[:, 0, None, None] + ox[None]
    yy = corners[:, 1, None, None] + oy[None]
    values = np.broadcast_to(np.asarray(w(xx, yy, np.full_like(xx, z)), dtype=float), xx.shape)
    integrals = np.sum(values * wts[None], axis=(1, 2))
    return integrals, float(np.max(np.abs(values), initial=0.0))


def place_vortices(w: Callable, eps: float, spec: DomainSpec) -> VortexMeasure:
    """Point vortices of weight pi / |ln eps| approximating w on layers n < N.

    Each layer is tiled by squares of side |ln eps|^(-1/4). A square inside
    Omega with integral I receives floor(|ln eps| |I| / pi) points of sign
    sgn(I), placed row-major on an even sub-lattice. Points keep a distance
    c0 |ln eps|^(-1/2) from each other and from the boundary.
    """
    if not 0 < eps < 1:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}", eps=eps)
    le = abs(math.log(eps))
    delta = le ** -0.25
    if delta >= spec.cross_section_diameter:
        raise ParameterError(f"Square side {delta:.4f} exceeds the cross-section diameter", eps=eps)
    corners = _squares(spec, delta)
    s = spec.s

    per_layer = []
    w_max = 0.0
    for n in range(spec.N):
        integrals, sup = _square_integrals(w, corners, delta, n * s) if len(corners) else (np.zeros(0), 0.0)
        per_layer.append(integrals)
        w_max = max(w_max, sup)
    c0 = separation_constant(w_max)
    separation = c0 / math.sqrt(le)

    layers, positions, signs = [], [], []
    mass_bound = 0.0
    for n, integrals in enumerate(per_layer):
        mass_bound += s * float(np.sum(np.abs(integrals)))
        counts = np.floor(le / math.pi * np.abs(integrals) + 1e-9).astype(int)
        for corner, count, total in zip(corners, counts, integrals):
            if count == 0:
                continue
            m = math.ceil(math.sqrt(count))
            if delta / (2.0 * m) < separation:
                raise PlacementError(
                    f"{count} vortices do not fit a square of side {delta:.4f} at separation {separation:.4f}",
                    count=int(count), layer=n, separation=separation)
            k = np.arange(count)
            sites = corner + (np.stack([k % m, k // m], axis=1) + 0.5) * (delta / m)
            positions.append(sites)
            layers.append(np.full(count, n))
            signs.append(np.full(count, 1 if total > 0 else -1))

    if positions:
        measure = VortexMeasure(eps, s, np.concatenate(layers), np.concatenate(positions),
                                np.concatenate(signs), mass_bound=mass_bound)
    else:
        measure = VortexMeasure(eps, s, mass_bound=mass_bound)
    check_separation(measure, spec, separation)
    logger.info(f"Placed {len(measure)} vortices on {spec.N} layers (delta={delta:.4f}, c0={c0:.4f})")
    return measure


def check_separation(measure: VortexMeasure, spec: DomainSpec, separation: float):
    """Raise PlacementError unless points keep ``separation`` from each other and from the boundary."""
    if not len(measure):
        return
    edge = spec.signed_distance(measure.positions[:, 0], measure.positions[:, 1])
    if np.min(edge) < separation:
        raise PlacementError(f"Vortex at distance {np.min(edge):.4g} from the boundary", separation=separation)
    for n in np.unique(measure.layers):
        pts = measure.positions[measure.layers == n]
        if len(pts) < 2:
            continue
        d, _ = cKDTree(pts).query(pts, k=2)
        if np.min(d[:, 1]) < separation:
            raise PlacementError(f"Vortices {np.min(d[:, 1]):.4g} apart on layer {n}",
                                 layer=int(n), separation=separation)


# Phase assembly

class VortexFactor(NamedTuple):
    u: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    stream: np.ndarray
    hosts: np.ndarray


def host_cells(positions: np.ndarray, grid: LayerGrid) -> np.ndarray:
    """(i, j) indices of the cells containing each point."""
    i = np.floor((positions[:, 0] - grid.x[0]) / grid.h).astype(int)
    j = np.floor((positions[:, 1] - grid.y[0]) / grid.h).astype(int)
    return np.stack([i, j], axis=1)


def _edge_nodes(grid: LayerGrid):
    """Flat tail and head node indices of every edge in [x-edges; y-edges] order."""
    nx, ny = grid.shape
    node = np.arange(nx * ny).reshape(nx, ny)
    tail = np.concatenate([node[:-1, :].ravel(), node[:, :-1].ravel()])
    head = np.concatenate([node[1:, :].ravel(), node[:, 1:].ravel()])
    return tail, head


def integrate_phase(increments: np.ndarray, grid: LayerGrid) -> np.ndarray:
    """Integrate edge phase increments along a breadth-first spanning tree of active nodes."""
    mask = grid.edge_mask
    tail, head = _edge_nodes(grid)
    tail, head = tail[mask], head[mask]
    ids = np.arange(1, len(tail) + 1)
    n_nodes = grid.node_mask.size
    codes = coo_matrix((np.concatenate([ids, -ids]), (np.concatenate([tail, head]), np.concatenate([head, tail]))),
                       shape=(n_nodes, n_nodes)).tocsr()
    root = int(np.flatnonzero(grid.node_mask.ravel())[0])
    order, pred = breadth_first_order(abs(codes), root, directed=False, return_predecessors=True)

    children = order[1:]
    code = np.asarray(codes[pred[children], children]).ravel().astype(int)
    steps = np.sign(code) * increments[np.abs(code) - 1]
    phase = np.zeros(n_nodes)
    for node, parent, step in zip(children, pred[children], steps):
        phase[node] = phase[parent] + step
    return phase.reshape(grid.shape)


def core_modulus(centers: np.ndarray, eps: float, grid: LayerGrid, profile: CoreProfile) -> np.ndarray:
    """rho = prod_i q(|x - c_i|) at the nodes; 1 away from every eps-disk."""
    xx, yy = grid.node_coordinates
    rho = np.ones(grid.shape)
    if not len(centers):
        return rho
    points = np.stack([xx.ravel(), yy.ravel()], axis=1)
    tree = cKDTree(points)
    flat = rho.ravel()
    for c, idx in zip(centers, tree.query_ball_point(centers, eps)):
        idx = np.asarray(idx, dtype=int)
        if len(idx):
            flat[idx] *= profile(np.hypot(points[idx, 0] - c[0], points[idx, 1] - c[1]))
    return flat.reshape(grid.shape)


def build_vortex_factor(measure: VortexMeasure, eps: float, grid: LayerGrid,
                        profile: Optional[CoreProfile] = None) -> VortexFactor:
    """Order parameter rho exp(i phi) carrying the vortices of one layer slice.

    The stream function solves -Delta f = 2 pi sum sigma_i delta_i with each
    point mass spread over its host cell; |ln eps| v = rot f is the phase
    gradient, integrated along a spanning tree. The only plaquette defects are
    the host cells, where the winding equals sigma_i.
    """
    le = abs(math.log(eps))
    profile = profile or q_profile(eps)
    nx, ny = grid.shape
    if not len(measure):
        zero1, zero2 = np.zeros((nx - 1, ny)), np.zeros((nx, ny - 1))
        return VortexFactor(np.ones(grid.shape, dtype=complex), zero1, zero2,
                            np.zeros(grid.cell_mask.shape), np.zeros((0, 2), dtype=int))

    hosts = host_cells(measure.positions, grid)
    ci, cj = hosts[:, 0], hosts[:, 1]
    in_range = (ci >= 0) & (ci < nx - 1) & (cj >= 0) & (cj < ny - 1)
    if not np.all(in_range) or not np.all(grid.cell_mask[ci, cj]):
        raise PlacementError("Vortex outside the active cells of the layer grid")
    if len(np.unique(hosts, axis=0)) < len(hosts):
        raise PlacementError(f"Two vortices share a cell; refine h_grid={grid.h}", h=grid.h)

    density = np.zeros(grid.cell_mask.shape)
    np.add.at(density, (ci, cj), 2.0 * math.pi * measure.signs / grid.cell_area)
    C = grid.active_curl
    f_active = cg_solve(grid.cell_laplacian, density[grid.cell_mask], what='vortex stream function')
    rot = C.T @ f_active
    phase = integrate_phase(grid.h * rot, grid)

    stream = np.zeros(grid.cell_mask.shape)
    stream[grid.cell_mask] = f_active
    rot_full = np.zeros(grid.edge_mask.size)
    rot_full[grid.edge_mask] = rot / le
    v1, v2 = grid.split_edges(rot_full)

    cx, cy = grid.cell_centers
    centers = np.stack([cx[ci, cj], cy[ci, cj]], axis=1)
    rho = core_modulus(centers, eps, grid, profile)
    u = np.where(grid.node_mask, rho * np.exp(1j * phase), 1.0 + 0.0j)

    expected = np.zeros(grid.cell_mask.shape, dtype=int)
    np.add.at(expected, (ci, cj), measure.signs.astype(int))
    winding = plaquette_winding(u, grid) * grid.cell_mask
    bad = np.argwhere(winding != expected)
    if len(bad):
        raise PhaseAssemblyError(f"Phase winding off the vortex cores at {len(bad)} plaquettes",
                                 cells=bad[:10].tolist())
    return VortexFactor(u, v1, v2, stream, hosts)


def build_gradient_factor(g_n: np.ndarray, eps: float) -> np.ndarray:
    """exp(i |ln eps| g_n); unimodular."""
    return np.exp(1j * abs(math.log(eps)) * np.asarray(g_n, dtype=float))


# Assembly

@dataclass(frozen=True, eq=False)
class RecoveryState:
    params: ModelParams
    u: OrderParameterStack
    A: MagneticPotential
    A0: MagneticPotential
    h0: float
    v_stack: VectorField2DStack
    v_vortex: VectorField2DStack
    measure: VortexMeasure
    stream: np.ndarray
    potential: np.ndarray
    hosts: Sequence[np.ndarray]

    def core_centers(self, n: int) -> np.ndarray:
        grid = self.u.grid
        cx, cy = grid.cell_centers
        h = np.asarray(self.hosts[n]).reshape(-1, 2)
        return np.stack([cx[h[:, 0], h[:, 1]], cy[h[:, 0], h[:, 1]]], axis=1)


def _layer_factor(args):
    n, split, slice_measure, eps, grid, profile = args
    vortex = build_vortex_factor(slice_measure, eps, grid, profile)
    u = vortex.u * build_gradient_factor(split.potential, eps)
    return vortex, u


def _curl_density(v: Callable, step: float) -> Callable:
    """w = curl v / 2 by central differences."""
    def w(x, y, z):
        dv2 = (np.asarray(v(x + step, y, z)[1]) - np.asarray(v(x - step, y, z)[1])) / (2.0 * step)
        dv1 = (np.asarray(v(x, y + step, z)[0]) - np.asarray(v(x, y - step, z)[0])) / (2.0 * step)
        return 0.5 * (dv2 - dv1)
    return w


def build_recovery(v: Callable, p: ModelParams, A0: Optional[MagneticPotential] = None,
                   domain: Optional[Domain] = None, profile: Optional[CoreProfile] = None,
                   threads: Optional[int] = None) -> RecoveryState:
    """Recovery state (u_eps, A_eps) for a smooth planar field v(x, y, z) -> (v1, v2).

    u_n = u_vortex * exp(i |ln eps| g_n) on layers n < N and u_N = 1;
    A_eps = |ln eps| A0 + (h_ex - h0 |ln eps|) a. A0 defaults to the optimal
    potential of v sampled at the N slab midpoints.
    """
    spec = p.spec
    domain = domain or build_domain(spec)
    grid = domain.layer
    eps, le, s = p.eps, p.log_eps, p.s
    h0 = p.h0 if p.h0 is not None else p.h_ex / le
    profile = profile or q_profile(eps)

    heights = grid.heights[:-1]
    v_stack = sample_stack(v, grid, heights, s)
    splits = [hodge_decompose(v_stack.v1[n], v_stack.v2[n], grid) for n in range(spec.N)]
    measure = place_vortices(_curl_density(v, 1e-5 * max(spec.cross_section_diameter, 1.0)), eps, spec)

    jobs = [(n, splits[n], measure.slice(n), eps, grid, profile) for n in range(spec.N)]
    results = map_layers(_layer_factor, jobs, threads=threads)
    u = np.ones((spec.N + 1,) + grid.shape, dtype=complex)
    for n, (_, u_n) in enumerate(results):
        u[n] = u_n

    if A0 is None:
        midpoints = sample_stack(v, grid, slice_heights(spec, spec.N), s)
        A0 = optimal_potential(midpoints, h0, domain)
    A = MagneticPotential(domain.box, le * A0.vector + (p.h_ex - h0 * le) * applied_potential(domain.box, 1.0),
                          p.h_ex)

    v_vortex = v_stack.with_values(np.stack([r[0].v1 for r in results]), np.stack([r[0].v2 for r in results]))
    logger.info(f"Recovery state for eps={eps} N={spec.N}: {len(measure)} vortices, h0={h0:.4g}")
    return RecoveryState(
        params=p,
        u=OrderParameterStack(grid, u),
        A=A,
        A0=A0,
        h0=h0,
        v_stack=v_stack,
        v_vortex=v_vortex,
        measure=measure,
        stream=np.stack([r[0].stream for r in results]),
        potential=np.stack([sp.potential for sp in splits]),
        hosts=[r[0].hosts for r in results],
    )


# Newtonian representation

@dataclass(frozen=True)
class NewtonianSource:
    """Values of a (vector) source on cubic cells of side h covering D."""
    centers: np.ndarray
    values: np.ndarray
    h: float
    shape: tuple

    @property
    def components(self) -> int:
        return self.values.shape[1]


def newtonian_source(g: Callable, spec: DomainSpec, h: float) -> NewtonianSource:
    """Sample ``g(x, y, z) -> sequence of components`` at the centers of cubic cells inside D."""
    nz = int(round(spec.L / h))
    if nz < 1 or abs(nz * h - spec.L) > 1e-9 * spec.L:
        raise ParameterError(f"L={spec.L} is not a multiple of the cell size {h}", h=h)
    ax, ay = spec.half_extent
    kx = np.arange(math.floor(-ax / h), math.ceil(ax / h))
    ky = np.arange(math.floor(-ay / h), math.ceil(ay / h))
    cx, cy = np.meshgrid((kx + 0.5) * h, (ky + 0.5) * h, indexing='ij')
    inside = spec.contains(cx, cy)
    px, py = cx[inside], cy[inside]
    zc = (np.arange(nz) + 0.5) * h
    xx = np.repeat(px, nz)
    yy = np.repeat(py, nz)
    zz = np.tile(zc, len(px))
    values = np.stack([np.broadcast_to(np.asarray(c, dtype=float), xx.shape) for c in g(xx, yy, zz)], axis=1)
    return NewtonianSource(np.stack([xx, yy, zz], axis=1), values, h, (len(px), nz))


def newtonian_trace(source: NewtonianSource, targets: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    """(1 / 4 pi) sum_cells g h^3 / |x - y| at each target.

    A target at a cell center gets the self-cell term g h^2 CUBE_MEAN_INV_R;
    any other target inside a cell is rejected.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    h = source.h
    m = len(source.centers)
    out = np.zeros((len(targets), source.components))
    rows = max(1, chunk // max(m, 1))
    for start in range(0, len(targets), rows):
        block = targets[start:start + rows]
        d = cdist(block, source.centers)
        cheb = cdist(block, source.centers, 'chebyshev')
        inside = cheb < 0.5 * h * (1.0 - 1e-12)
        centered = d < 1e-9 * h
        stray = inside & ~centered
        if np.any(stray):
            k = int(np.argwhere(stray)[0, 0]) + start
            raise NewtonianTargetError(f"Target {targets[k].tolist()} lies inside a source cell off its center",
                                       target=targets[k].tolist())
        kernel = np.where(inside, 0.0, 1.0 / np.where(inside, 1.0, d))
        out[start:start + rows] = h ** 3 * (kernel @ source.values)
        out[start:start + rows] += h ** 2 * CUBE_MEAN_INV_R * (centered.astype(float) @ source.values)
    return out / (4.0 * math.pi)


class TraceDecay(NamedTuple):
    s_values: np.ndarray
    errors: np.ndarray
    slope: float


def layer_values(A: np.ndarray, h: float, z: float) -> np.ndarray:
    """Linear interpolation in z of cell-centered columns A (columns, nz, k) at height z."""
    nz = A.shape[1]
    k0 = int(np.clip(math.floor(z / h - 0.5), 0, nz - 2))
    t = (z - (k0 + 0.5) * h) / h
    return (1.0 - t) * A[:, k0] + t * A[:, k0 + 1]


def trace_decay(g: Callable, spec: DomainSpec, s_values: Sequence[float], h: Optional[float] = None) -> TraceDecay:
    """sum_n |A_n - A|^2 over the slabs of thickness s, for each s, and its log-log slope.

    A is the Newtonian potential of g on D evaluated at the cell centers and
    A_n its value on the plane z = n s.
    """
    s_values = np.asarray(sorted(s_values, reverse=True), dtype=float)
    h = h if h is not None else float(np.min(s_values))
    source = newtonian_source(g, spec, h)
    ncol, nz = source.shape
    if nz < 2:
        raise ParameterError("trace_decay needs at least two cells across L", h=h)
    A = newtonian_trace(source, source.centers).reshape(ncol, nz, -1)

    errors = []
    for s in s_values:
        per = int(round(s / h))
        if per < 1 or abs(per * h - s) > 1e-9 * s:
            raise ParameterError(f"s={s} is not a multiple of the cell size {h}", s=s, h=h)
        total = 0.0
        for n in range(nz // per):
            An = layer_values(A, h, n * s)
            diff = A[:, n * per:(n + 1) * per] - An[:, None]
            total += h ** 3 * float(np.sum(diff * diff))
        errors.append(total)
    errors = np.asarray(errors)
    slope = float(np.polyfit(np.log(s_values), np.log(np.maximum(errors, 1e-300)), 1)[0])
    logger.info(f"Trace decay over s={s_values.tolist()}: slope {slope:.3f}")
    return TraceDecay(s_values, errors, slope)
