"""
Currents, Jacobians, vortex measures and the distances used to monitor convergence.

The negative Sobolev norms that measure vortex convergence are replaced by a
discrete H^-1 proxy: one Dirichlet Poisson solve on the active cells.
"""
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .domain import LayerGrid, layer_positions
from .energy import ModelParams, check_state, edge_ends, ld_energy, link_variables
from .errors import GridMismatchError
from .fields import MagneticPotential, OrderParameterStack, applied_potential, trace_at
from .lib.operators import linear_weights
from .lib.parallel import map_layers
from .lib.solvers import cg_solve

logger = logging.getLogger(__name__)

INDETERMINATE_MODULUS = 1e-8
GAUSS_Z = 3


# Currents and Jacobians

def current(u_n: np.ndarray, grid: LayerGrid) -> Tuple[np.ndarray, np.ndarray]:
    """j(u) = (iu, grad u) on edges, zero off the domain."""
    ua, ub = edge_ends(grid, np.asarray(u_n))
    j = np.imag(np.conj(ua) * ub) / grid.h * grid.edge_mask
    return grid.split_edges(j)


def jacobian(u_n: np.ndarray, grid: LayerGrid) -> np.ndarray:
    """J(u) = curl j(u) / 2 on active cells, as a density per cell."""
    j = grid.join_edges(*current(u_n, grid))
    J = 0.5 * (grid.curl @ j)
    return (J * grid.cell_mask.ravel()).reshape(grid.cell_mask.shape)


class CurrentStack(NamedTuple):
    j1: np.ndarray          # (N, nx-1, ny)
    j2: np.ndarray          # (N, nx, ny-1)
    thickness: float


class JacobianStack(NamedTuple):
    """Slab-extended Jacobian: J[n] is constant on [ns, (n+1)s) for n < N."""
    grid: LayerGrid
    J: np.ndarray           # (N, nx-1, ny-1)
    thickness: float

    def at_height(self, z: float) -> np.ndarray:
        n = min(max(int(math.floor(z / self.thickness)), 0), len(self.J) - 1)
        return self.J[n]

    def total(self) -> float:
        return float(self.thickness * self.grid.cell_area * np.sum(self.J))

    def mass(self) -> float:
        return float(self.thickness * self.grid.cell_area * np.sum(np.abs(self.J)))


def stack_current(u: OrderParameterStack) -> CurrentStack:
    """Current of every layer below the top one, each extended over its slab."""
    parts = map_layers(lambda n: current(u.u[n], u.grid), range(u.layers - 1))
    return CurrentStack(np.stack([p[0] for p in parts]), np.stack([p[1] for p in parts]), u.grid.spec.s)


def stack_jacobian(u: OrderParameterStack) -> JacobianStack:
    parts = map_layers(lambda n: jacobian(u.u[n], u.grid), range(u.layers - 1))
    return JacobianStack(u.grid, np.stack(parts), u.grid.spec.s)


# Vortex detection

@dataclass
class VortexMeasure:
    """Signed point masses on layers; each entry carries weight pi / |ln eps|."""
    eps: float
    s: float
    layers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    signs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    indeterminate: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    mass_bound: Optional[float] = None

    @property
    def weight(self) -> float:
        return math.pi / abs(math.log(self.eps))

    def __len__(self) -> int:
        return len(self.signs)

    def count(self, n: Optional[int] = None) -> int:
        return int(len(self.signs) if n is None else np.sum(self.layers == n))

    def net_charge(self, n: Optional[int] = None) -> int:
        signs = self.signs if n is None else self.signs[self.layers == n]
        return int(np.sum(signs))

    def total_mass(self, N: Optional[int] = None) -> float:
        """weight * s * number of entries on layers n < N."""
        keep = np.ones(len(self.signs), dtype=bool) if N is None else self.layers < N
        return self.weight * self.s * float(np.sum(keep))

    def slice(self, n: int) -> 'VortexMeasure':
        keep = self.layers == n
        ind = self.indeterminate[self.indeterminate[:, 0] == n] if len(self.indeterminate) else self.indeterminate
        return VortexMeasure(self.eps, self.s, self.layers[keep], self.positions[keep], self.signs[keep], ind)

    @classmethod
    def concat(cls, eps: float, s: float, parts: Sequence['VortexMeasure']) -> 'VortexMeasure':
        if not parts:
            return cls(eps, s)
        return cls(eps, s,
                   np.concatenate([p.layers for p in parts]).astype(int),
                   np.concatenate([p.positions for p in parts]).reshape(-1, 2),
                   np.concatenate([p.signs for p in parts]).astype(int),
                   np.concatenate([p.indeterminate for p in parts]).reshape(-1, 3))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(['n', 'x', 'y', 'sigma'])
        for n, (x, y), sigma in zip(self.layers, self.positions, self.signs):
            writer.writerow([int(n), format(float(x), '.17g'), format(float(y), '.17g'), int(sigma)])
        return buf.getvalue()

    def cell_masses(self, grid: LayerGrid, n: int, scheme: str = 'cell') -> np.ndarray:
        """Mass per cell of the layer-n slice, weight pi / |ln eps| per entry."""
        sl = self.slice(n)
        return deposit(sl.positions, sl.signs * self.weight, grid, scheme)


def plaquette_winding(u_n: np.ndarray, grid: LayerGrid) -> np.ndarray:
    """Integer winding of the phase around every cell (counter-clockwise)."""
    u = np.asarray(u_n)
    d = lambda a, b: np.angle(b * np.conj(a))
    total = (d(u[:-1, :-1], u[1:, :-1]) + d(u[1:, :-1], u[1:, 1:])
             + d(u[1:, 1:], u[:-1, 1:]) + d(u[:-1, 1:], u[:-1, :-1]))
    return np.rint(total / (2.0 * np.pi)).astype(int)


def _merge(points: np.ndarray, signs: np.ndarray, radius: float):
    if len(points) < 2:
        return points, signs
    tree = cKDTree(points)
    pairs = np.array(sorted(tree.query_pairs(radius * (1.0 + 1e-9))), dtype=int).reshape(-1, 2)
    if len(pairs):
        pairs = pairs[signs[pairs[:, 0]] == signs[pairs[:, 1]]]
    graph = sparse.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(points),) * 2)
    n_comp, labels = connected_components(graph, directed=False)
    merged = np.array([points[labels == c].mean(axis=0) for c in range(n_comp)])
    merged_signs = np.array([signs[labels == c][0] for c in range(n_comp)], dtype=int)
    return merged, merged_signs


def detect_vortices(u_n: np.ndarray, grid: LayerGrid, eps: float, s: float = 1.0, n: int = 0) -> VortexMeasure:
    """Plaquette winding detection on one layer.

    Cells whose four corners all have |u| below ``INDETERMINATE_MODULUS`` are
    reported as indeterminate and excluded. Same-sign detections within two
    grid spacings merge into one entry at their mean position.
    """
    u = np.asarray(u_n)
    winding = plaquette_winding(u, grid) * grid.cell_mask
    small = np.abs(u) < INDETERMINATE_MODULUS
    deep = small[:-1, :-1] & small[1:, :-1] & small[:-1, 1:] & small[1:, 1:] & grid.cell_mask
    winding[deep] = 0
    xc, yc = grid.cell_centers

    points, signs = [], []
    for i, j in zip(*np.nonzero(winding)):
        w = int(winding[i, j])
        for _ in range(abs(w)):
            points.append((xc[i, j], yc[i, j]))
            signs.append(int(np.sign(w)))
    points = np.array(points, dtype=float).reshape(-1, 2)
    signs = np.array(signs, dtype=int)
    points, signs = _merge(points, signs, 2.0 * grid.h)
    indeterminate = np.column_stack([np.full(int(deep.sum()), n), xc[deep], yc[deep]]) if deep.any() \
        else np.zeros((0, 3))
    return VortexMeasure(eps, s, np.full(len(signs), n, dtype=int), points, signs, indeterminate)


def detect_stack(u: OrderParameterStack, eps: float) -> VortexMeasure:
    """Detections on the layers n < N."""
    s = u.grid.spec.s
    parts = map_layers(lambda n: detect_vortices(u.u[n], u.grid, eps, s, n), range(u.layers - 1))
    return VortexMeasure.concat(eps, s, parts)


# H^-1 proxy

def deposit(points: np.ndarray, weights: np.ndarray, grid: LayerGrid, scheme: str = 'cell') -> np.ndarray:
    """Spread point masses onto cells: into the host cell or cloud-in-cell on cell centers."""
    masses = np.zeros(grid.cell_mask.shape)
    if len(points) == 0:
        return masses
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(points),))
    ncx, ncy = masses.shape
    if scheme == 'cell':
        ix, _ = linear_weights(points[:, 0], grid.x[0], grid.h, ncx)
        iy, _ = linear_weights(points[:, 1], grid.y[0], grid.h, ncy)
        np.add.at(masses, (ix, iy), weights)
    elif scheme == 'cic':
        ix, tx = linear_weights(points[:, 0], grid.x[0] + 0.5 * grid.h, grid.h, ncx - 1)
        iy, ty = linear_weights(points[:, 1], grid.y[0] + 0.5 * grid.h, grid.h, ncy - 1)
        np.add.at(masses, (ix, iy), weights * (1 - tx) * (1 - ty))
        np.add.at(masses, (ix + 1, iy), weights * tx * (1 - ty))
        np.add.at(masses, (ix, iy + 1), weights * (1 - tx) * ty)
        np.add.at(masses, (ix + 1, iy + 1), weights * tx * ty)
    else:
        raise ValueError(f"Unknown deposit scheme '{scheme}'")
    return masses * grid.cell_mask


def density_masses(density: np.ndarray, grid: LayerGrid) -> np.ndarray:
    return np.asarray(density) * grid.cell_area * grid.cell_mask


@dataclass
class MeasureDistanceReport:
    value: float
    total_variation: float
    per_slice: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {'value': self.value, 'total_variation': self.total_variation, 'per_slice': self.per_slice}


def hminus1_norm(masses: np.ndarray, grid: LayerGrid) -> float:
    """|grad phi| in L2 where -Delta phi = masses / h^2 on active cells, phi = 0 outside."""
    rho = masses[grid.cell_mask] / grid.cell_area
    if not np.any(rho):
        return 0.0
    phi = cg_solve(grid.cell_laplacian, rho, what='H^-1 potential')
    rot = grid.active_curl.T @ phi
    return float(math.sqrt(grid.cell_area * float(rot @ rot)))


def hminus1_distance(m1: np.ndarray, m2: np.ndarray, grid: LayerGrid) -> MeasureDistanceReport:
    """H^-1 proxy distance between two slice measures given as cell masses."""
    if m1.shape != m2.shape or m1.shape != grid.cell_mask.shape:
        raise GridMismatchError(f"Cell mass arrays {m1.shape}/{m2.shape} do not match the grid")
    diff = (m1 - m2) * grid.cell_mask
    value = hminus1_norm(diff, grid)
    return MeasureDistanceReport(value, float(np.sum(np.abs(diff))), [value])


def _resample(stack: JacobianStack, reference: LayerGrid, z: float) -> np.ndarray:
    xc, yc = stack.grid.cell_centers
    masses = density_masses(stack.at_height(z), stack.grid)
    keep = stack.grid.cell_mask
    points = np.column_stack([xc[keep], yc[keep]])
    return deposit(points, masses[keep], reference, 'cic')


def stack_distance(a: JacobianStack, b: JacobianStack, reference: LayerGrid,
                   samples: int = 8) -> MeasureDistanceReport:
    """H^-1 proxy between two Jacobian stacks, compared on a common reference grid.

    Both stacks are sampled at ``samples`` slab midpoints of (0, L) and their
    cell masses are redeposited onto the reference cells.
    """
    L = reference.spec.L
    heights = (np.arange(samples) + 0.5) * L / samples
    per_slice, tv = [], 0.0
    for z in heights:
        report = hminus1_distance(_resample(a, reference, z), _resample(b, reference, z), reference)
        per_slice.append(report.value)
        tv += report.total_variation * L / samples
    value = math.sqrt(L / samples * sum(d * d for d in per_slice))
    return MeasureDistanceReport(value, tv, per_slice)


# Pairings

class Pairing(NamedTuple):
    measure: float
    density: float

    @property
    def difference(self) -> float:
        return abs(self.measure - self.density)


def measure_pairing(measure: VortexMeasure, phi: Callable, w: Optional[Callable] = None,
                    grid: Optional[LayerGrid] = None, N: Optional[int] = None) -> Pairing:
    """Integral of phi against the slab-extended measure, and against w dx when given.

    ``phi`` and ``w`` are callables of (x, y, z). Slab integrals in x3 use
    Gauss-Legendre points.
    """
    s = measure.s
    gz, gw = np.polynomial.legendre.leggauss(GAUSS_Z)
    total = 0.0
    keep = np.ones(len(measure), dtype=bool) if N is None else measure.layers < N
    for n, (x, y), sigma in zip(measure.layers[keep], measure.positions[keep], measure.signs[keep]):
        z = n * s + 0.5 * s * (gz + 1.0)
        total += measure.weight * sigma * 0.5 * s * float(np.sum(gw * phi(np.full_like(z, x), np.full_like(z, y), z)))
    dense = float('nan')
    if w is not None:
        if grid is None:
            raise ValueError("A grid is required to integrate the density")
        xc, yc = grid.cell_centers
        keep_c = grid.cell_mask
        dense = 0.0
        for n in range(grid.spec.N if N is None else N):
            for zk, wk in zip(n * s + 0.5 * s * (gz + 1.0), gw):
                zz = np.full(int(keep_c.sum()), zk)
                vals = phi(xc[keep_c], yc[keep_c], zz) * w(xc[keep_c], yc[keep_c], zz)
                dense += 0.5 * s * wk * grid.cell_area * float(np.sum(vals))
    return Pairing(total, dense)


# Supercurrents

class Supercurrent(NamedTuple):
    j1: np.ndarray          # (N+1, nx-1, ny), layer surface densities
    j2: np.ndarray          # (N+1, nx, ny-1)
    j3: np.ndarray          # (N, nx, ny), slab densities
    layer_weight: float


def supercurrent(u: OrderParameterStack, A: MagneticPotential, p: ModelParams) -> Supercurrent:
    """Source terms of Ampere's law: in-plane layer currents and interlayer currents."""
    check_state(u, A, p)
    grid = u.grid
    L = link_variables(u, A)
    s = p.s
    j_plane = -s * np.imag(np.conj(L.r) * L.ub * np.exp(-1j * L.theta)) / grid.h * grid.edge_mask
    j1, j2 = grid.split_edges(j_plane)
    flat = u.u.reshape(u.layers, -1)
    j3 = -(s / (p.lam ** 2 * s ** 2)) * np.imag(np.conj(L.r_j) * flat[:-1] * np.exp(1j * L.phi))
    j3 = j3 * grid.node_mask.ravel()
    return Supercurrent(j1, j2, j3.reshape((u.layers - 1,) + grid.shape), s)


# Scaled observables

@dataclass
class ScaledObservables:
    log_eps: float
    energy_scaled: float
    current_l2: float
    jacobian_total: float
    jacobian_mass: float
    potential_deviation: float
    josephson_scaled: float
    j3_scaled_sq: float
    j3_bound: float
    trace_slab: float
    trace_slab_ratio: float
    trace_stack_error: Optional[float] = None
    vortex_count: int = 0

    def to_dict(self) -> dict:
        return {k: (None if v is None else float(v) if not isinstance(v, int) else v)
                for k, v in self.__dict__.items()}


def trace_slab_quantity(A: MagneticPotential, grid: LayerGrid, samples: Optional[int] = None) -> float:
    """Sum over n = 0..N of the slab integral of |A-hat(z) - A-hat_n|^2 over [ns, (n+1)s]."""
    spec = grid.spec
    s = spec.s
    m = samples if samples is not None else max(2, int(math.ceil(s / A.box.h)))
    total = 0.0
    w = grid.edge_weights
    for n, zn in enumerate(layer_positions(spec)):
        base = grid.join_edges(*trace_at(A, zn, grid))
        for k in range(m):
            z = zn + (k + 0.5) * s / m
            diff = grid.join_edges(*trace_at(A, z, grid)) - base
            total += (s / m) * float(np.sum(w * diff * diff))
    return total


def trace_stack_error(A: MagneticPotential, A0: MagneticPotential, grid: LayerGrid, log_eps: float,
                      samples: int = 8) -> float:
    """L2(D) distance between the slab-constant scaled traces and the trace of A0."""
    spec = grid.spec
    s, L = spec.s, spec.L
    w = grid.edge_weights
    total = 0.0
    for z in (np.arange(samples) + 0.5) * L / samples:
        n = min(int(z // s), spec.N - 1)
        a_n = grid.join_edges(*trace_at(A, n * s, grid)) / log_eps
        a_0 = grid.join_edges(*trace_at(A0, z, grid))
        total += (L / samples) * float(np.sum(w * (a_n - a_0) ** 2))
    return math.sqrt(total)


def scaled_observables(u: OrderParameterStack, A: MagneticPotential, p: ModelParams,
                       A0: Optional[MagneticPotential] = None, samples: Optional[int] = None) -> ScaledObservables:
    """Quantities scaled by |ln eps| whose limits are governed by the compactness results."""
    check_state(u, A, p)
    grid, box = u.grid, A.box
    le = p.log_eps
    s = p.s
    energy = ld_energy(u, A, p)

    cs = stack_current(u)
    j_sq = np.sum(grid.x_edge_mask * cs.j1 ** 2) + np.sum(grid.y_edge_mask * cs.j2 ** 2)
    current_l2 = math.sqrt(s * grid.cell_area * float(j_sq)) / le

    J = stack_jacobian(u)
    dev = A.vector - applied_potential(box, p.h_ex)
    potential_dev = math.sqrt(box.volume * float(dev @ dev)) / le

    sc = supercurrent(u, A, p)
    w_v = grid.node_weights
    j3_sq = s * float(np.sum(w_v * sc.j3 ** 2)) / le ** 2
    j3_bound = 2.0 * p.spec.L * grid.area / (p.lam ** 4 * s ** 2 * le ** 2)

    slab = trace_slab_quantity(A, grid, samples)
    stack_err = trace_stack_error(A, A0, grid, le) if A0 is not None else None
    measure = detect_stack(u, p.eps)

    return ScaledObservables(
        log_eps=le,
        energy_scaled=energy.total / le ** 2,
        current_l2=current_l2,
        jacobian_total=J.total() / le,
        jacobian_mass=J.mass() / le,
        potential_deviation=potential_dev,
        josephson_scaled=float(np.sum(energy.josephson)) / le ** 2,
        j3_scaled_sq=j3_sq,
        j3_bound=j3_bound,
        trace_slab=slab,
        trace_slab_ratio=slab / energy.total if energy.total > 0 else 0.0,
        trace_stack_error=stack_err,
        vortex_count=len(measure),
    )