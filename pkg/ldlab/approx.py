"""
Smooth approximation of planar field stacks and the reflection extension.

mollify_approx follows the shell construction: a partition of unity zeta_k
subordinate to boundary shells, each piece v zeta_k mollified at a radius
that keeps it inside its shell and within an L2 budget eps / 2^k. The shell
family is cut where shells get thinner than two grid cells; the remaining
boundary layer is kept as is.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .domain import LayerGrid, Shape
from .energy import tv_mass
from .errors import ApproximationError, ParameterError
from .fields import VectorField2DStack
from .recovery import bump

logger = logging.getLogger(__name__)

MAX_SHELLS = 200


def tv_measure(v: VectorField2DStack, cells: Optional[np.ndarray] = None) -> float:
    """|curl v|(D), optionally restricted to a boolean mask of cells."""
    if cells is None:
        return tv_mass(v)
    grid = v.grid
    curl = (grid.curl @ v.flat_all().T).T.reshape((v.slices,) + grid.cell_mask.shape)
    keep = grid.cell_mask & cells
    return float(v.thickness * grid.cell_area * np.sum(np.abs(curl[:, keep])))


def kernel(radius: int, slice_ratio: Optional[float] = None) -> np.ndarray:
    """Normalized discrete bump supported on |(i, j)| <= radius cells.

    With ``slice_ratio`` (slice spacing over h) the bump is three-dimensional,
    indexed (slice, i, j), and reaches over the slices within the same radius.
    """
    k = np.arange(-radius, radius + 1)
    if slice_ratio is None:
        ii, jj = np.meshgrid(k, k, indexing='ij')
        weights = bump(np.hypot(ii, jj) / (radius + 1.0))
    else:
        rz = max(0, math.ceil((radius + 1.0) / slice_ratio) - 1)
        ll, ii, jj = np.meshgrid(np.arange(-rz, rz + 1), k, k, indexing='ij')
        weights = bump(np.sqrt(ii ** 2 + jj ** 2 + (ll * slice_ratio) ** 2) / (radius + 1.0))
    return weights / weights.sum()


def slice_ratio(v: VectorField2DStack) -> float:
    """Slice spacing in units of the grid spacing."""
    spacing = float(v.heights[1] - v.heights[0]) if v.slices > 1 else v.thickness
    return spacing / v.grid.h


def mollify(v: VectorField2DStack, radius: int) -> VectorField2DStack:
    """Mollification of the stack at a width of ``radius`` cells (0 is the identity).

    The kernel spans the slice axis as well; slices beyond the stack count as zero.
    """
    if radius < 0:
        raise ParameterError(f"Mollifier radius must be non-negative, got {radius}", radius=radius)
    if radius == 0:
        return v
    k = kernel(radius, slice_ratio(v))
    v1 = ndimage.convolve(v.v1, k, mode='constant', cval=0.0)
    v2 = ndimage.convolve(v.v2, k, mode='constant', cval=0.0)
    return v.with_values(v1, v2)


def smoothstep(r: np.ndarray) -> np.ndarray:
    """Quintic smoothstep on the middle half of [0, 1], clamped outside."""
    x = np.clip((np.asarray(r, dtype=float) - 0.25) / 0.5, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


@dataclass(frozen=True, eq=False)
class ShellPartition:
    """Partition of unity zeta_1..zeta_K plus the unmollified boundary remainder.

    thresholds[k] = 1 / (m + k); D_k is where the distance to the boundary of
    the cylinder exceeds thresholds[k]. Weights are sampled per slice at x-edge
    and y-edge midpoints, shaped (K + 1, slices, ...); the last entry is the
    remainder.
    """
    grid: LayerGrid
    heights: np.ndarray
    thresholds: np.ndarray
    zeta1: np.ndarray
    zeta2: np.ndarray

    @property
    def shells(self) -> int:
        return len(self.thresholds) - 2

    def width(self, k: int) -> float:
        """Width of the transition band of shell k (1-based)."""
        return float(self.thresholds[k] - self.thresholds[k + 1])

    def margin(self, k: int) -> float:
        return 0.25 * self.width(k)

    def total(self):
        return self.zeta1.sum(axis=0), self.zeta2.sum(axis=0)

    def overlap(self) -> int:
        """Largest number of nonzero weights at any sample point."""
        return int(max(np.max(np.sum(self.zeta1 > 0, axis=0)), np.max(np.sum(self.zeta2 > 0, axis=0))))

    def piece(self, v: VectorField2DStack, k: int) -> VectorField2DStack:
        """v * zeta_k; k = shells + 1 is the remainder."""
        if v.slices != len(self.heights):
            raise ParameterError(f"Partition has {len(self.heights)} slices, field has {v.slices}")
        return v.with_values(v.v1 * self.zeta1[k - 1], v.v2 * self.zeta2[k - 1])


def inradius(grid: LayerGrid) -> float:
    """Radius of the largest ball inside the cylinder."""
    spec = grid.spec
    planar = spec.radius if spec.shape == Shape.DISK else min(spec.half_extent)
    return min(planar, 0.5 * spec.L)


def shell_partition(grid: LayerGrid, heights: np.ndarray, max_shells: int = MAX_SHELLS) -> ShellPartition:
    """Shells from the distance to the boundary of the cylinder, cut at widths below two cells."""
    spec = grid.spec
    heights = np.asarray(heights, dtype=float)
    m = math.ceil(1.0 / inradius(grid))
    thresholds = [1.0 / m, 1.0 / (m + 1)]
    while len(thresholds) - 1 < max_shells:
        nxt = 1.0 / (m + len(thresholds))
        if thresholds[-1] - nxt < 2.0 * grid.h:
            break
        thresholds.append(nxt)
    thresholds = np.asarray(thresholds)
    if len(thresholds) < 3:
        raise ApproximationError(f"Grid h={grid.h} too coarse for a single boundary shell", achievable=None)

    def weights(xx, yy):
        d = np.stack([spec.cylinder_distance(xx, yy, z) for z in heights])
        phis = [smoothstep((d - thresholds[k + 1]) / (thresholds[k] - thresholds[k + 1]))
                for k in range(1, len(thresholds) - 1)]
        zetas = [phis[0]] + [b - a for a, b in zip(phis[:-1], phis[1:])] + [1.0 - phis[-1]]
        return np.stack(zetas)

    partition = ShellPartition(grid, heights, thresholds,
                               weights(*grid.x_edge_midpoints), weights(*grid.y_edge_midpoints))
    logger.debug(f"Shell partition: {partition.shells} shells over {len(heights)} slices, "
                 f"thresholds {thresholds[0]:.4f}..{thresholds[-1]:.4f}")
    return partition


@dataclass
class ApproxResult:
    v: VectorField2DStack
    error: float
    radii: List[int] = field(default_factory=list)
    shell_errors: List[float] = field(default_factory=list)
    partition: Optional[ShellPartition] = None

    def to_dict(self) -> dict:
        return {'error': self.error, 'radii': list(self.radii), 'shell_errors': list(self.shell_errors),
                'shells': self.partition.shells if self.partition else 0}


def mollify_approx(v: VectorField2DStack, eps: float, partition: Optional[ShellPartition] = None,
                   max_radius: Optional[int] = None) -> ApproxResult:
    """Smooth v_eps with |v - v_eps|_L2 < eps.

    Shell k is mollified at the largest radius up to its margin (and
    ``max_radius``) whose error stays below eps / 2^k; at least one cell.

    Raises:
        ApproximationError: a shell misses its budget even at one cell.
    """
    if not eps > 0:
        raise ParameterError(f"Target accuracy must be positive, got {eps}", eps=eps)
    partition = partition or shell_partition(v.grid, v.heights)
    h = v.grid.h
    total = partition.piece(v, partition.shells + 1)
    radii, errors, floor_errors = [], [], []
    for k in range(1, partition.shells + 1):
        piece = partition.piece(v, k)
        cap = max(1, int(math.floor(partition.margin(k) / h)))
        if max_radius is not None:
            cap = max(1, min(cap, max_radius))
        budget = eps / 2.0 ** k
        chosen = None
        for r in range(cap, 0, -1):
            smooth = mollify(piece, r)
            err = (smooth - piece).l2_norm()
            if err < budget:
                chosen = (r, smooth, err)
                break
        if chosen is None:
            floor_errors.append(err)
            continue
        r, smooth, err = chosen
        radii.append(r)
        errors.append(err)
        total = total + smooth
    if floor_errors:
        achievable = float(sum(errors) + sum(floor_errors))
        raise ApproximationError(f"{len(floor_errors)} shells miss their budget at one cell; "
                                 f"achievable accuracy about {achievable:.3e}", achievable=achievable)
    error = (total - v).l2_norm()
    logger.info(f"Mollified {partition.shells} shells, radii {radii}, L2 error {error:.3e} (target {eps:.3e})")
    return ApproxResult(total, error, radii, errors, partition)


# Reflection across the plane x2 = 0

def mirror_row(grid: LayerGrid) -> int:
    """Node row index of the plane x2 = 0 on a rectangle grid."""
    if grid.spec.shape != Shape.RECTANGLE:
        raise ParameterError("The reflection extension needs a rectangular cross-section")
    j0 = int(np.argmin(np.abs(grid.y)))
    if abs(grid.y[j0]) > 1e-9 * grid.h or 2 * j0 != len(grid.y) - 1:
        raise ParameterError("Grid is not symmetric about x2 = 0")
    return j0


def reflect_extend(v: VectorField2DStack) -> VectorField2DStack:
    """Extend v from x2 > 0: v1 evenly, v2 oddly across x2 = 0."""
    j0 = mirror_row(v.grid)
    v1 = np.array(v.v1)
    v2 = np.array(v.v2)
    j = np.arange(j0)
    v1[:, :, j] = v.v1[:, :, 2 * j0 - j]
    v2[:, :, j] = -v.v2[:, :, 2 * j0 - j - 1]
    return v.with_values(v1, v2)


def upper_cells(grid: LayerGrid) -> np.ndarray:
    j0 = mirror_row(grid)
    cells = np.zeros(grid.cell_mask.shape, dtype=bool)
    cells[:, j0:] = True
    return cells


def strip_mass(Tv: VectorField2DStack, delta: float) -> float:
    """|curl Tv| on the cells whose centers lie within delta of x2 = 0."""
    mirror_row(Tv.grid)
    _, yc = Tv.grid.cell_centers
    return tv_measure(Tv, np.abs(yc) < delta)
