"""
Sparse difference operators on staggered grids.

Arrays are flattened in C order. Node fields of shape ``(n0, n1, ...)`` map to
edge fields by forward differences along one axis; the resulting matrices
satisfy ``curl @ grad == 0`` exactly in floating point.
"""
from typing import Sequence, Tuple

import numpy as np
from scipy import sparse


def difference(n: int, h: float) -> sparse.csr_matrix:
    """Forward difference (n x n+1) with spacing h."""
    data = np.concatenate([-np.ones(n), np.ones(n)]) / h
    rows = np.concatenate([np.arange(n), np.arange(n)])
    cols = np.concatenate([np.arange(n), np.arange(n) + 1])
    return sparse.csr_matrix((data, (rows, cols)), shape=(n, n + 1))


def _kron_chain(factors: Sequence[sparse.spmatrix]) -> sparse.csr_matrix:
    out = factors[0]
    for factor in factors[1:]:
        out = sparse.kron(out, factor, format='csr')
    return sparse.csr_matrix(out)


def _axis_difference(node_shape: Tuple[int, ...], axis: int, h: float) -> sparse.csr_matrix:
    """Difference along ``axis`` of a field whose other axes keep ``node_shape``."""
    factors = []
    for k, n in enumerate(node_shape):
        factors.append(difference(n - 1, h) if k == axis else sparse.identity(n, format='csr'))
    return _kron_chain(factors)


def grad_2d(nx: int, ny: int, h: float) -> sparse.csr_matrix:
    """Nodes (nx, ny) -> [x-edges (nx-1, ny); y-edges (nx, ny-1)]."""
    return sparse.vstack([
        _axis_difference((nx, ny), 0, h),
        _axis_difference((nx, ny), 1, h),
    ], format='csr')


def curl_2d(nx: int, ny: int, h: float) -> sparse.csr_matrix:
    """[x-edges; y-edges] -> cells (nx-1, ny-1): d_x v2 - d_y v1."""
    d_y_v1 = _axis_difference((nx - 1, ny), 1, h)
    d_x_v2 = _axis_difference((nx, ny - 1), 0, h)
    return sparse.hstack([-d_y_v1, d_x_v2], format='csr')


def edge_shapes_3d(cells: Tuple[int, int, int]):
    nx, ny, nz = cells
    return (nx, ny + 1, nz + 1), (nx + 1, ny, nz + 1), (nx + 1, ny + 1, nz)


def face_shapes_3d(cells: Tuple[int, int, int]):
    nx, ny, nz = cells
    return (nx + 1, ny, nz), (nx, ny + 1, nz), (nx, ny, nz + 1)


def grad_3d(cells: Tuple[int, int, int], h: float) -> sparse.csr_matrix:
    """Box nodes -> [A1; A2; A3] edges."""
    nodes = tuple(n + 1 for n in cells)
    return sparse.vstack([_axis_difference(nodes, axis, h) for axis in range(3)], format='csr')


def curl_3d(cells: Tuple[int, int, int], h: float) -> sparse.csr_matrix:
    """[A1; A2; A3] edges -> [B1; B2; B3] faces (Yee curl)."""
    e1, e2, e3 = edge_shapes_3d(cells)
    d = _axis_difference
    return sparse.bmat([
        [None, -d(e2, 2, h), d(e3, 1, h)],
        [d(e1, 2, h), None, -d(e3, 0, h)],
        [-d(e1, 1, h), d(e2, 0, h), None],
    ], format='csr')


def linear_weights(coord: np.ndarray, origin: float, h: float, cells: int):
    """Cell index and fractional offset of ``coord`` in a uniform 1D lattice.

    Points on the last node are assigned to the last cell with offset 1.
    """
    t = (np.asarray(coord, dtype=float) - origin) / h
    index = np.clip(np.floor(t + 1e-12).astype(int), 0, cells - 1)
    frac = t - index
    return index, np.clip(frac, 0.0, 1.0)
