"""
Field containers and the operators that move data between the box and the layers.

Layer traces and the Josephson link integrals use the lowest-order edge-element
interpolant of A: the tangential component is constant along an edge and
varies linearly across the box cell. Its line integrals commute with the
trilinear interpolation of a gauge function, so a box gauge transformation
acts on every layer term exactly.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from scipy import sparse

from .domain import BoxGrid, LayerGrid
from .errors import GridMismatchError
from .lib.operators import linear_weights
from .lib.solvers import cg_solve, jacobi

logger = logging.getLogger(__name__)


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def check_pair(layer: LayerGrid, box: BoxGrid):
    if layer.spec != box.spec:
        raise GridMismatchError("Layer grid and box were built from different domain specs")


@dataclass(frozen=True, eq=False)
class OrderParameterStack:
    """Complex order parameters u_0..u_N on the layer grid, shape (N+1, nx, ny)."""
    grid: LayerGrid
    u: np.ndarray

    def __post_init__(self):
        expected = (self.grid.spec.N + 1,) + self.grid.shape
        if self.u.shape != expected:
            raise GridMismatchError(f"Order parameter shape {self.u.shape} != {expected}")
        object.__setattr__(self, 'u', _frozen(self.u, complex))
        if not np.all(np.isfinite(self.u)):
            raise ValueError("Order parameter contains non-finite values")

    @property
    def layers(self) -> int:
        return self.u.shape[0]

    def layer(self, n: int) -> np.ndarray:
        self.grid.check_layer(n)
        return self.u[n]

    def conj(self) -> 'OrderParameterStack':
        return OrderParameterStack(self.grid, np.conj(self.u))

    def with_values(self, u: np.ndarray) -> 'OrderParameterStack':
        return OrderParameterStack(self.grid, u)

    @classmethod
    def uniform(cls, grid: LayerGrid, value: complex = 1.0) -> 'OrderParameterStack':
        return cls(grid, np.full((grid.spec.N + 1,) + grid.shape, value, dtype=complex))

    @classmethod
    def random(cls, grid: LayerGrid, rng: np.random.Generator) -> 'OrderParameterStack':
        """I.i.d. values of modulus at most 1 with uniform phase."""
        shape = (grid.spec.N + 1,) + grid.shape
        modulus = np.sqrt(rng.uniform(0.0, 1.0, size=shape))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=shape)
        return cls(grid, modulus * np.exp(1j * phase))


@dataclass(frozen=True, eq=False)
class MagneticPotential:
    """Edge-staggered vector potential on the box, flattened as [A1; A2; A3]."""
    box: BoxGrid
    vector: np.ndarray
    h_ex: float = 0.0

    def __post_init__(self):
        if self.vector.shape != (self.box.n_edges,):
            raise GridMismatchError(f"Potential length {self.vector.shape} != ({self.box.n_edges},)")
        object.__setattr__(self, 'vector', _frozen(self.vector, float))

    def _component(self, axis: int) -> np.ndarray:
        sizes = [int(np.prod(s)) for s in self.box.edge_shapes]
        start = sum(sizes[:axis])
        return self.vector[start:start + sizes[axis]].reshape(self.box.edge_shapes[axis])

    @property
    def A1(self) -> np.ndarray:
        return self._component(0)

    @property
    def A2(self) -> np.ndarray:
        return self._component(1)

    @property
    def A3(self) -> np.ndarray:
        return self._component(2)

    @classmethod
    def from_components(cls, box: BoxGrid, A1, A2, A3, h_ex: float = 0.0) -> 'MagneticPotential':
        return cls(box, np.concatenate([np.ravel(A1), np.ravel(A2), np.ravel(A3)]), h_ex)

    @classmethod
    def zero(cls, box: BoxGrid, h_ex: float = 0.0) -> 'MagneticPotential':
        return cls(box, np.zeros(box.n_edges), h_ex)

    @classmethod
    def applied(cls, box: BoxGrid, h_ex: float) -> 'MagneticPotential':
        return cls(box, applied_potential(box, h_ex), h_ex)

    def _check(self, other: 'MagneticPotential'):
        if other.box is not self.box and other.box.spec != self.box.spec:
            raise GridMismatchError("Potentials live on different boxes")

    def __add__(self, other: 'MagneticPotential') -> 'MagneticPotential':
        self._check(other)
        return MagneticPotential(self.box, self.vector + other.vector, self.h_ex)

    def __sub__(self, other: 'MagneticPotential') -> 'MagneticPotential':
        self._check(other)
        return MagneticPotential(self.box, self.vector - other.vector, self.h_ex)

    def scaled(self, factor: float) -> 'MagneticPotential':
        return MagneticPotential(self.box, factor * self.vector, self.h_ex)

    def with_field(self, h_ex: float) -> 'MagneticPotential':
        return MagneticPotential(self.box, self.vector, h_ex)

    def clamp_error(self) -> float:
        """Max deviation from h_ex * a on boundary edges."""
        boundary = ~self.box.free_edges
        target = applied_potential(self.box, self.h_ex)
        return float(np.max(np.abs(self.vector[boundary] - target[boundary]), initial=0.0))


@dataclass(frozen=True, eq=False)
class VectorField2DStack:
    """Slices v[k] of a planar field on D: v1 on x-edges, v2 on y-edges.

    Slice k represents the slab of given thickness around ``heights[k]``.
    """
    grid: LayerGrid
    v1: np.ndarray
    v2: np.ndarray
    heights: np.ndarray
    thickness: float

    def __post_init__(self):
        nx, ny = self.grid.shape
        k = len(self.heights)
        if self.v1.shape != (k, nx - 1, ny) or self.v2.shape != (k, nx, ny - 1):
            raise GridMismatchError(f"Stack shapes {self.v1.shape}/{self.v2.shape} do not match the grid")
        object.__setattr__(self, 'v1', _frozen(self.v1 * self.grid.x_edge_mask, float))
        object.__setattr__(self, 'v2', _frozen(self.v2 * self.grid.y_edge_mask, float))
        object.__setattr__(self, 'heights', _frozen(self.heights, float))

    @property
    def slices(self) -> int:
        return len(self.heights)

    def flat(self, k: int) -> np.ndarray:
        return self.grid.join_edges(self.v1[k], self.v2[k])

    def flat_all(self) -> np.ndarray:
        return self.grid.join_edges(self.v1, self.v2)

    def with_values(self, v1: np.ndarray, v2: np.ndarray) -> 'VectorField2DStack':
        return VectorField2DStack(self.grid, v1, v2, self.heights, self.thickness)

    def scaled(self, factor: float) -> 'VectorField2DStack':
        return self.with_values(factor * self.v1, factor * self.v2)

    def __neg__(self) -> 'VectorField2DStack':
        return self.scaled(-1.0)

    def __add__(self, other: 'VectorField2DStack') -> 'VectorField2DStack':
        return self.with_values(self.v1 + other.v1, self.v2 + other.v2)

    def __sub__(self, other: 'VectorField2DStack') -> 'VectorField2DStack':
        return self.with_values(self.v1 - other.v1, self.v2 - other.v2)

    def l2_norm(self) -> float:
        sq = np.sum(self.v1 ** 2) + np.sum(self.v2 ** 2)
        return float(np.sqrt(sq * self.grid.cell_area * self.thickness))

    @classmethod
    def zeros(cls, grid: LayerGrid, heights, thickness: float) -> 'VectorField2DStack':
        nx, ny = grid.shape
        k = len(heights)
        return cls(grid, np.zeros((k, nx - 1, ny)), np.zeros((k, nx, ny - 1)), np.asarray(heights), thickness)


def sample_stack(v: Callable, grid: LayerGrid, heights, thickness: float) -> VectorField2DStack:
    """Sample a planar field ``v(x, y, z) -> (v1, v2)`` at edge midpoints of each slice."""
    heights = np.asarray(heights, dtype=float)
    xx1, yy1 = grid.x_edge_midpoints
    xx2, yy2 = grid.y_edge_midpoints
    v1 = np.stack([np.broadcast_to(v(xx1, yy1, np.full_like(xx1, z))[0], xx1.shape) for z in heights])
    v2 = np.stack([np.broadcast_to(v(xx2, yy2, np.full_like(xx2, z))[1], xx2.shape) for z in heights])
    return VectorField2DStack(grid, v1, v2, heights, thickness)


def applied_potential(box: BoxGrid, h: float) -> np.ndarray:
    """Edge values of h * a with a(x) = (-x2, x1, 0) / 2."""
    _, y1, _ = box.edge_coordinates(0)
    x2, _, _ = box.edge_coordinates(1)
    a3 = np.zeros(box.edge_shapes[2])
    return h * np.concatenate([(-0.5 * y1).ravel(), (0.5 * x2).ravel(), a3.ravel()])


# Layer/box transfer operators

def _offsets(box: BoxGrid) -> Tuple[int, int]:
    sizes = [int(np.prod(s)) for s in box.edge_shapes]
    return sizes[0], sizes[0] + sizes[1]


def _bilinear(idx_a, t_a, idx_b, t_b, stride_a, stride_b):
    """Four (flat offset, weight) pairs of a bilinear stencil."""
    return [
        (idx_a * stride_a + idx_b * stride_b, (1 - t_a) * (1 - t_b)),
        ((idx_a + 1) * stride_a + idx_b * stride_b, t_a * (1 - t_b)),
        (idx_a * stride_a + (idx_b + 1) * stride_b, (1 - t_a) * t_b),
        ((idx_a + 1) * stride_a + (idx_b + 1) * stride_b, t_a * t_b),
    ]


def _assemble(rows_cols_vals, shape) -> sparse.csr_matrix:
    rows = np.concatenate([r for r, _, _ in rows_cols_vals])
    cols = np.concatenate([c for _, c, _ in rows_cols_vals])
    vals = np.concatenate([v for _, _, v in rows_cols_vals])
    return sparse.csr_matrix((vals, (rows, cols)), shape=shape)


def trace_matrices(layer: LayerGrid, box: BoxGrid, z: float) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Matrices mapping the full potential vector to the plane traces at height z.

    Rows follow the layer x-edges and y-edges; entries are mean values of the
    tangential component along each layer edge.
    """
    check_pair(layer, box)
    (X0, Y0, Z0), H = box.origin, box.h
    Nx, Ny, Nz = box.cells
    kz, tz = linear_weights(np.array([z]), Z0, H, Nz)
    kz, tz = int(kz[0]), float(tz[0])
    off2, _ = _offsets(box)

    xm, ye = layer.x_edge_midpoints
    ix, _ = linear_weights(xm.ravel(), X0, H, Nx)
    jy, ty = linear_weights(ye.ravel(), Y0, H, Ny)
    rows = np.arange(xm.size)
    base = ix * (Ny + 1) * (Nz + 1)
    parts = [(rows, base + off + kz, w) for off, w in _bilinear(jy, ty, 0, tz, Nz + 1, 1)]
    t1 = _assemble(parts, (xm.size, box.n_edges))

    xe, ym = layer.y_edge_midpoints
    ix, tx = linear_weights(xe.ravel(), X0, H, Nx)
    jy, _ = linear_weights(ym.ravel(), Y0, H, Ny)
    rows = np.arange(xe.size)
    base = off2 + jy * (Nz + 1) + kz
    parts = [(rows, base + off, w) for off, w in _bilinear(ix, tx, 0, tz, Ny * (Nz + 1), 1)]
    t2 = _assemble(parts, (xe.size, box.n_edges))
    return t1, t2


def link_matrix(layer: LayerGrid, box: BoxGrid, z_a: float, z_b: float) -> sparse.csr_matrix:
    """Matrix of the line integrals of A3 from z_a to z_b above each layer node."""
    check_pair(layer, box)
    (X0, Y0, Z0), H = box.origin, box.h
    Nx, Ny, Nz = box.cells
    _, off3 = _offsets(box)
    xx, yy = layer.node_coordinates
    ix, tx = linear_weights(xx.ravel(), X0, H, Nx)
    jy, ty = linear_weights(yy.ravel(), Y0, H, Ny)
    rows = np.arange(xx.size)
    parts = []
    k_lo = max(int(np.floor((z_a - Z0) / H)), 0)
    k_hi = min(int(np.ceil((z_b - Z0) / H)), Nz)
    for kz in range(k_lo, k_hi):
        overlap = min(z_b, Z0 + (kz + 1) * H) - max(z_a, Z0 + kz * H)
        if overlap <= 0:
            continue
        for off, w in _bilinear(ix, tx, jy, ty, (Ny + 1) * Nz, Nz):
            parts.append((rows, off3 + off + kz, overlap * w))
    if not parts:
        return sparse.csr_matrix((xx.size, box.n_edges))
    return _assemble(parts, (xx.size, box.n_edges))


def interpolation_matrix(layer: LayerGrid, box: BoxGrid, z: float) -> sparse.csr_matrix:
    """Trilinear interpolation of box node values onto the layer nodes at height z."""
    check_pair(layer, box)
    (X0, Y0, Z0), H = box.origin, box.h
    Nx, Ny, Nz = box.cells
    xx, yy = layer.node_coordinates
    ix, tx = linear_weights(xx.ravel(), X0, H, Nx)
    jy, ty = linear_weights(yy.ravel(), Y0, H, Ny)
    kz, tz = linear_weights(np.array([z]), Z0, H, Nz)
    kz, tz = int(kz[0]), float(tz[0])
    rows = np.arange(xx.size)
    parts = []
    for dz, wz in ((0, 1.0 - tz), (1, tz)):
        for off, w in _bilinear(ix, tx, jy, ty, (Ny + 1) * (Nz + 1), Nz + 1):
            parts.append((rows, off + kz + dz, wz * w))
    return _assemble(parts, (xx.size, int(np.prod(box.node_shape))))


@dataclass(frozen=True, eq=False)
class LayerCoupling:
    """Stacked transfer operators for the layers z_n = n s."""
    layer: LayerGrid
    box: BoxGrid
    trace_x: sparse.csr_matrix
    trace_y: sparse.csr_matrix
    links: sparse.csr_matrix
    interp: sparse.csr_matrix


@lru_cache(maxsize=16)
def coupling(layer: LayerGrid, box: BoxGrid) -> LayerCoupling:
    heights = layer.heights
    traces = [trace_matrices(layer, box, z) for z in heights]
    links = [link_matrix(layer, box, heights[n], heights[n + 1]) for n in range(len(heights) - 1)]
    interp = [interpolation_matrix(layer, box, z) for z in heights]
    logger.debug(f"Layer coupling assembled for {len(heights)} layers")
    return LayerCoupling(
        layer=layer, box=box,
        trace_x=sparse.vstack([t[0] for t in traces], format='csr'),
        trace_y=sparse.vstack([t[1] for t in traces], format='csr'),
        links=sparse.vstack(links, format='csr') if links else sparse.csr_matrix((0, box.n_edges)),
        interp=sparse.vstack(interp, format='csr'),
    )


@lru_cache(maxsize=64)
def _plane_traces(layer: LayerGrid, box: BoxGrid, z: float):
    return trace_matrices(layer, box, z)


# Operations

def trace_at(A: MagneticPotential, z: float, grid: LayerGrid) -> Tuple[np.ndarray, np.ndarray]:
    """In-plane trace of A at an arbitrary height, zero off the domain edges."""
    t1, t2 = _plane_traces(grid, A.box, float(z))
    nx, ny = grid.shape
    a1 = (t1 @ A.vector).reshape(nx - 1, ny) * grid.x_edge_mask
    a2 = (t2 @ A.vector).reshape(nx, ny - 1) * grid.y_edge_mask
    return a1, a2


def trace(A: MagneticPotential, n: int, grid: LayerGrid) -> Tuple[np.ndarray, np.ndarray]:
    """Trace A-hat_n of the potential on layer n.

    Raises:
        LayerIndexError: n outside 0..N.
    """
    grid.check_layer(n)
    return trace_at(A, grid.heights[n], grid)


def divergence(A: MagneticPotential) -> np.ndarray:
    """Discrete divergence on box nodes (negative transpose of the gradient)."""
    return -(A.box.grad.T @ A.vector)


def curl(A: MagneticPotential) -> np.ndarray:
    """Flux densities on faces, flattened as [B1; B2; B3]."""
    return A.box.curl @ A.vector


def apply_gauge(u: OrderParameterStack, A: MagneticPotential, g: np.ndarray):
    """Gauge transform u_n -> u_n exp(i g(., ns)), A -> A + grad g.

    Args:
        g: Box node values, shape ``box.node_shape`` or flat.
    """
    check_pair(u.grid, A.box)
    g = np.asarray(g, dtype=float).ravel()
    c = coupling(u.grid, A.box)
    phase = (c.interp @ g).reshape(u.u.shape)
    u_new = OrderParameterStack(u.grid, u.u * np.exp(1j * phase))
    A_new = MagneticPotential(A.box, A.vector + A.box.grad @ g, A.h_ex)
    return u_new, A_new


def project_coulomb(A: MagneticPotential, rtol: Optional[float] = None, keep_clamp: bool = False):
    """Return (A + grad g, g) with zero discrete divergence.

    By default g carries homogeneous Neumann data on the box. With
    ``keep_clamp`` g vanishes on the box boundary, so boundary tangential
    values stay at the clamp and the divergence vanishes at interior nodes.

    Raises:
        SolverConvergenceError: Poisson solve failed.
    """
    G = A.box.grad
    if keep_clamp:
        interior = A.box.interior_nodes
        G_int = G[:, interior]
        laplacian = (G_int.T @ G_int).tocsr()
        rhs = -(G_int.T @ A.vector)
        g_int = cg_solve(laplacian, rhs, rtol=rtol, preconditioner=jacobi(laplacian),
                         what='Coulomb projection')
        g = np.zeros(G.shape[1])
        g[interior] = g_int
    else:
        laplacian = (G.T @ G).tocsr()
        rhs = -(G.T @ A.vector)
        rhs -= rhs.mean()
        g = cg_solve(laplacian, rhs, rtol=rtol, preconditioner=jacobi(laplacian), what='Coulomb projection')
        g -= g.mean()
    A_new = MagneticPotential(A.box, A.vector + G @ g, A.h_ex)
    logger.debug(f"Coulomb projection: max|div| {np.max(np.abs(divergence(A_new))):.3e}")
    return A_new, g.reshape(A.box.node_shape)


def to_coulomb_gauge(u: OrderParameterStack, A: MagneticPotential, keep_clamp: bool = False):
    """Apply the Coulomb projection to a full state, keeping it gauge-equivalent."""
    _, g = project_coulomb(A, keep_clamp=keep_clamp)
    return apply_gauge(u, A, g)


class HodgeSplit(NamedTuple):
    v_curl: Tuple[np.ndarray, np.ndarray]
    v_grad: Tuple[np.ndarray, np.ndarray]
    stream: np.ndarray
    potential: np.ndarray


def hodge_decompose(v1: np.ndarray, v2: np.ndarray, grid: LayerGrid, rtol: Optional[float] = None) -> HodgeSplit:
    """Split a planar edge field into a stream part rot f and a gradient part grad g.

    f lives on cells with zero values outside Omega and solves -Delta f = curl v;
    the remainder is curl-free and is integrated to a node potential g.
    """
    mask = grid.edge_mask
    flat = grid.join_edges(v1, v2)[mask]
    C = grid.active_curl
    f_active = cg_solve(grid.cell_laplacian, C @ flat, rtol=rtol, what='stream function')
    rot = C.T @ f_active
    rest = flat - rot

    G = grid.domain_grad
    rhs = G.T @ rest
    rhs -= rhs.mean()
    laplacian = grid.node_laplacian
    g_active = cg_solve(laplacian, rhs, rtol=rtol, preconditioner=jacobi(laplacian), what='gradient potential')
    g_active -= g_active.mean()

    n_edges = mask.size
    rot_full = np.zeros(n_edges)
    rot_full[mask] = rot
    rest_full = np.zeros(n_edges)
    rest_full[mask] = rest
    f = np.zeros(grid.cell_mask.size)
    f[grid.cell_mask.ravel()] = f_active
    g = np.zeros(grid.node_mask.size)
    g[grid.node_mask.ravel()] = g_active
    return HodgeSplit(
        v_curl=grid.split_edges(rot_full),
        v_grad=grid.split_edges(rest_full),
        stream=f.reshape(grid.cell_mask.shape),
        potential=g.reshape(grid.shape),
    )


def edge_inner(grid: LayerGrid, a: Tuple[np.ndarray, np.ndarray], b: Tuple[np.ndarray, np.ndarray]) -> float:
    """Discrete L2(Omega) inner product of two edge fields."""
    fa = grid.join_edges(*a)
    fb = grid.join_edges(*b)
    return float(np.sum(grid.edge_weights * fa * fb))
