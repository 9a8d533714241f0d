"""
Cross-section, cylinder, layer planes and the truncated magnetic box.

The cross-section is a mask on a uniform Cartesian grid centered at the
origin. Cells are active when their center lies inside the shape; nodes are
active when they touch an active cell. The box lattice is an integer
coarsening of the layer lattice so every layer grid line is a box grid line.
"""
import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import ndimage, sparse

from .errors import DomainSpecError, LayerIndexError
from .lib import operators

logger = logging.getLogger(__name__)

# Snapping slack for grid-count roundings
_SNAP = 1e-9


class Shape(str, enum.Enum):
    DISK = 'disk'
    RECTANGLE = 'rectangle'


@dataclass(frozen=True)
class DomainSpec:
    """Geometry and resolution of the cylinder D = Omega x (0, L) and its box."""
    shape: Shape = Shape.DISK
    radius: float = 1.0
    width: float = 1.0
    height: float = 1.0
    h_grid: float = 0.05
    L: float = 1.0
    N: int = 4
    R_box: Optional[float] = None
    h_box: Optional[float] = None

    @property
    def s(self) -> float:
        return self.L / self.N

    @property
    def half_extent(self) -> Tuple[float, float]:
        if self.shape == Shape.DISK:
            return self.radius, self.radius
        return self.width / 2.0, self.height / 2.0

    @property
    def cross_section_diameter(self) -> float:
        if self.shape == Shape.DISK:
            return 2.0 * self.radius
        return math.hypot(self.width, self.height)

    @property
    def diameter(self) -> float:
        return math.hypot(self.cross_section_diameter, self.L)

    @property
    def box_half_width(self) -> float:
        return self.R_box if self.R_box is not None else 2.0 * self.diameter

    @property
    def box_spacing(self) -> float:
        return self.h_box if self.h_box is not None else self.h_grid

    def contains(self, x, y) -> np.ndarray:
        """Strict interior test, vectorized."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == Shape.DISK:
            return x * x + y * y < self.radius * self.radius
        ax, ay = self.half_extent
        return (np.abs(x) < ax) & (np.abs(y) < ay)

    def signed_distance(self, x, y) -> np.ndarray:
        """Distance to the boundary of Omega, positive inside."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.shape == Shape.DISK:
            return self.radius - np.hypot(x, y)
        ax, ay = self.half_extent
        return np.minimum(ax - np.abs(x), ay - np.abs(y))

    def cylinder_distance(self, x, y, z) -> np.ndarray:
        """Distance to the boundary of D for points inside D."""
        z = np.asarray(z, dtype=float)
        return np.minimum(self.signed_distance(x, y), np.minimum(z, self.L - z))


def layer_positions(spec: DomainSpec) -> np.ndarray:
    """Heights of the N+1 layers: 0, s, ..., L."""
    return np.arange(spec.N + 1, dtype=float) * spec.s


def slice_heights(spec: DomainSpec, count: int) -> np.ndarray:
    """Midpoints of ``count`` equal slabs of (0, L)."""
    return (np.arange(count, dtype=float) + 0.5) * (spec.L / count)


@dataclass(frozen=True, eq=False)
class LayerGrid:
    """Masked 2D lattice shared by every layer.

    Node (i, j) sits at (x[i], y[j]); x-edges have shape (nx-1, ny), y-edges
    (nx, ny-1) and cells (nx-1, ny-1).
    """
    spec: DomainSpec
    h: float
    x: np.ndarray
    y: np.ndarray
    cell_mask: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.x), len(self.y)

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def heights(self) -> np.ndarray:
        return layer_positions(self.spec)

    @property
    def n_x_edges(self) -> int:
        nx, ny = self.shape
        return (nx - 1) * ny

    @cached_property
    def node_coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing='ij')

    @cached_property
    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        xc = 0.5 * (self.x[1:] + self.x[:-1])
        yc = 0.5 * (self.y[1:] + self.y[:-1])
        return np.meshgrid(xc, yc, indexing='ij')

    @cached_property
    def x_edge_midpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(0.5 * (self.x[1:] + self.x[:-1]), self.y, indexing='ij')

    @cached_property
    def y_edge_midpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, 0.5 * (self.y[1:] + self.y[:-1]), indexing='ij')

    @cached_property
    def _incidence(self) -> np.ndarray:
        """Number of active cells around each node."""
        c = self.cell_mask.astype(int)
        count = np.zeros(self.shape, dtype=int)
        count[:-1, :-1] += c
        count[1:, :-1] += c
        count[:-1, 1:] += c
        count[1:, 1:] += c
        return count

    @cached_property
    def node_mask(self) -> np.ndarray:
        return self._incidence > 0

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Active nodes that also touch an inactive cell."""
        return self.node_mask & (self._incidence < 4)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return self._incidence == 4

    @cached_property
    def node_weights(self) -> np.ndarray:
        return self.cell_area * self._incidence / 4.0

    @cached_property
    def x_edge_mask(self) -> np.ndarray:
        c = self.cell_mask
        mask = np.zeros((self.shape[0] - 1, self.shape[1]), dtype=bool)
        mask[:, :-1] |= c
        mask[:, 1:] |= c
        return mask

    @cached_property
    def y_edge_mask(self) -> np.ndarray:
        c = self.cell_mask
        mask = np.zeros((self.shape[0], self.shape[1] - 1), dtype=bool)
        mask[:-1, :] |= c
        mask[1:, :] |= c
        return mask

    @cached_property
    def edge_mask(self) -> np.ndarray:
        """Flat mask over [x-edges; y-edges] of edges touching an active cell."""
        return np.concatenate([self.x_edge_mask.ravel(), self.y_edge_mask.ravel()])

    @cached_property
    def edge_weights(self) -> np.ndarray:
        return self.cell_area * self.edge_mask.astype(float)

    @property
    def area(self) -> float:
        """Discrete |Omega|: active cell count times h^2."""
        return float(self.cell_mask.sum()) * self.cell_area

    # Operators

    @cached_property
    def grad(self) -> sparse.csr_matrix:
        return operators.grad_2d(*self.shape, self.h)

    @cached_property
    def curl(self) -> sparse.csr_matrix:
        return operators.curl_2d(*self.shape, self.h)

    @cached_property
    def active_curl(self) -> sparse.csr_matrix:
        """Curl restricted to active cells (rows) and domain edges (columns)."""
        return self.curl[self.cell_mask.ravel()][:, self.edge_mask].tocsr()

    @cached_property
    def cell_laplacian(self) -> sparse.csr_matrix:
        """-Delta on active cells with zero values on inactive cells."""
        c = self.active_curl
        return (c @ c.T).tocsr()

    @cached_property
    def domain_grad(self) -> sparse.csr_matrix:
        """Gradient from active nodes to domain edges."""
        return self.grad[self.edge_mask][:, self.node_mask.ravel()].tocsr()

    @cached_property
    def node_laplacian(self) -> sparse.csr_matrix:
        """Neumann -Delta on active nodes (singular, constants in the kernel)."""
        g = self.domain_grad
        return (g.T @ g).tocsr()

    def split_edges(self, flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        n1 = self.n_x_edges
        return flat[..., :n1].reshape(flat.shape[:-1] + (nx - 1, ny)), \
            flat[..., n1:].reshape(flat.shape[:-1] + (nx, ny - 1))

    def join_edges(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        lead = v1.shape[:-2]
        return np.concatenate([v1.reshape(lead + (-1,)), v2.reshape(lead + (-1,))], axis=-1)

    def check_layer(self, n: int):
        if not 0 <= n <= self.spec.N:
            raise LayerIndexError(f"Layer {n} outside 0..{self.spec.N}", layer=n, N=self.spec.N)

    def describe(self) -> dict:
        return {
            'shape': self.spec.shape.value,
            'h_grid': self.h,
            'nodes': list(self.shape),
            'x0': float(self.x[0]),
            'y0': float(self.y[0]),
            'L': self.spec.L,
            'N': self.spec.N,
        }


@dataclass(frozen=True, eq=False)
class BoxGrid:
    """Staggered lattice of the truncation box B.

    Edge fields A1, A2, A3 have shapes ``edge_shapes``; faces carry the curl.
    """
    spec: DomainSpec
    h: float
    origin: Tuple[float, float, float]
    cells: Tuple[int, int, int]

    @property
    def node_shape(self) -> Tuple[int, int, int]:
        return tuple(n + 1 for n in self.cells)

    @property
    def edge_shapes(self):
        return operators.edge_shapes_3d(self.cells)

    @property
    def face_shapes(self):
        return operators.face_shapes_3d(self.cells)

    @property
    def volume(self) -> float:
        return self.h ** 3

    @cached_property
    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(o + self.h * np.arange(n + 1) for o, n in zip(self.origin, self.cells))

    @cached_property
    def n_edges(self) -> int:
        return sum(int(np.prod(s)) for s in self.edge_shapes)

    @cached_property
    def grad(self) -> sparse.csr_matrix:
        return operators.grad_3d(self.cells, self.h)

    @cached_property
    def curl(self) -> sparse.csr_matrix:
        return operators.curl_3d(self.cells, self.h)

    @cached_property
    def free_edges(self) -> np.ndarray:
        """Flat mask of edges not lying on the box boundary."""
        nx, ny, nz = self.cells
        masks = []
        for axis, shape in enumerate(self.edge_shapes):
            m = np.ones(shape, dtype=bool)
            limits = (nx, ny, nz)
            for other in range(3):
                if other == axis:
                    continue
                index = [slice(None)] * 3
                index[other] = 0
                m[tuple(index)] = False
                index[other] = limits[other]
                m[tuple(index)] = False
            masks.append(m.ravel())
        return np.concatenate(masks)

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        m = np.zeros(self.node_shape, dtype=bool)
        m[1:-1, 1:-1, 1:-1] = True
        return m.ravel()

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        """Faces with at least one vertex on the box boundary."""
        nx, ny, nz = self.cells
        out = []
        for axis, shape in enumerate(self.face_shapes):
            m = np.zeros(shape, dtype=bool)
            limits = (nx, ny, nz)
            for other in range(3):
                index = [slice(None)] * 3
                index[other] = 0
                m[tuple(index)] = True
                index[other] = shape[other] - 1
                m[tuple(index)] = True
            out.append(m.ravel())
        return np.concatenate(out)

    @cached_property
    def applied_field_faces(self) -> np.ndarray:
        """Unit e3 flux density on faces (1 on z-faces, 0 elsewhere)."""
        sizes = [int(np.prod(s)) for s in self.face_shapes]
        return np.concatenate([np.zeros(sizes[0]), np.zeros(sizes[1]), np.ones(sizes[2])])

    def edge_coordinates(self, axis: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Midpoint coordinates of the edges parallel to ``axis``."""
        coords = []
        for k, ax in enumerate(self.axes):
            coords.append(0.5 * (ax[1:] + ax[:-1]) if k == axis else ax)
        return np.meshgrid(*coords, indexing='ij')

    def describe(self) -> dict:
        return {'h_box': self.h, 'origin': list(self.origin), 'cells': list(self.cells)}


class Domain(NamedTuple):
    layer: LayerGrid
    box: BoxGrid


def _count(extent: float, h: float) -> int:
    return int(math.ceil(extent / h - _SNAP))


def _check_topology(cell_mask: np.ndarray):
    if not cell_mask.any():
        raise DomainSpecError("Cross-section mask is empty")
    _, interior = ndimage.label(cell_mask)
    padded = np.pad(~cell_mask, 1, constant_values=True)
    _, exterior = ndimage.label(padded)
    if interior != 1 or exterior != 1:
        raise DomainSpecError(
            f"Cross-section mask must be simply connected: {interior} interior and "
            f"{exterior} exterior components", interior=interior, exterior=exterior)


def build_domain(spec: DomainSpec) -> Domain:
    """Construct the masked layer grid and the truncation box.

    Raises:
        DomainSpecError: bad resolution, disconnected mask or too small a box.
    """
    if spec.h_grid <= 0 or spec.N < 1 or spec.L <= 0:
        raise DomainSpecError(f"Need h_grid > 0, N >= 1, L > 0 (got {spec.h_grid}, {spec.N}, {spec.L})")
    if spec.shape == Shape.DISK and spec.radius <= 0:
        raise DomainSpecError(f"Disk radius must be positive, got {spec.radius}")
    if spec.shape == Shape.RECTANGLE and (spec.width <= 0 or spec.height <= 0):
        raise DomainSpecError(f"Rectangle sides must be positive, got {spec.width}x{spec.height}")

    h = spec.h_grid
    ex, ey = spec.half_extent
    mx, my = _count(ex, h), _count(ey, h)
    x = h * np.arange(-mx, mx + 1, dtype=float)
    y = h * np.arange(-my, my + 1, dtype=float)
    xc = 0.5 * (x[1:] + x[:-1])
    yc = 0.5 * (y[1:] + y[:-1])
    cell_mask = spec.contains(*np.meshgrid(xc, yc, indexing='ij'))
    _check_topology(cell_mask)
    layer = LayerGrid(spec=spec, h=h, x=x, y=y, cell_mask=cell_mask)

    H = spec.box_spacing
    ratio = H / h
    if H <= 0 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
        raise DomainSpecError(f"h_box={H} must be a positive integer multiple of h_grid={h}",
                              h_box=H, h_grid=h)

    R = spec.box_half_width
    bx = _count(max(R, x[-1]), H)
    by = _count(max(R, y[-1]), H)
    z_lo = math.floor((0.5 * spec.L - R) / H + _SNAP)
    z_hi = math.ceil((0.5 * spec.L + R) / H - _SNAP)
    margin = min(bx * H - x[-1], by * H - y[-1], -z_lo * H, z_hi * H - spec.L)
    if margin < 0.5 * R - 1e-12:
        raise DomainSpecError(
            f"Box half-width {R} leaves margin {margin:.4g} < R_box/2 around D",
            margin=margin, R_box=R)

    box = BoxGrid(spec=spec, h=H, origin=(-bx * H, -by * H, z_lo * H),
                  cells=(2 * bx, 2 * by, z_hi - z_lo))
    logger.debug(f"Domain built: layer nodes {layer.shape}, {int(cell_mask.sum())} cells, "
                 f"box cells {box.cells}")
    return Domain(layer, box)
