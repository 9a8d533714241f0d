"""Conjugate-gradient and power-iteration helpers shared by every module."""
import logging
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ..errors import SolverConvergenceError

logger = logging.getLogger(__name__)

_defaults = {
    'rtol': 1e-10,
    'maxiter': 20000,
    'power_iterations': 50,
}


def configure_solvers(rtol: Optional[float] = None, maxiter: Optional[int] = None,
                      power_iterations: Optional[int] = None):
    """Override process-wide solver defaults (called by ``create_lab``)."""
    if rtol is not None:
        _defaults['rtol'] = float(rtol)
    if maxiter is not None:
        _defaults['maxiter'] = int(maxiter)
    if power_iterations is not None:
        _defaults['power_iterations'] = int(power_iterations)


def solver_defaults() -> dict:
    return dict(_defaults)


def jacobi(matrix) -> LinearOperator:
    """Diagonal preconditioner for a sparse SPD matrix."""
    diag = np.asarray(matrix.diagonal(), dtype=float)
    inv = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
    return LinearOperator(matrix.shape, matvec=lambda x: inv * x, dtype=float)


def cg_solve(matrix, rhs: np.ndarray, x0: Optional[np.ndarray] = None, rtol: Optional[float] = None,
             maxiter: Optional[int] = None, preconditioner=None, what: str = 'system') -> np.ndarray:
    """Solve a symmetric positive (semi)definite system by conjugate gradients.

    Semidefinite systems must be consistent; callers project the right-hand
    side onto the range first.

    Raises:
        SolverConvergenceError: relative residual stays above tolerance.
    """
    rtol = _defaults['rtol'] if rtol is None else rtol
    maxiter = _defaults['maxiter'] if maxiter is None else maxiter
    rhs = np.asarray(rhs, dtype=float)
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs)

    x, info = cg(matrix, rhs, x0=x0, rtol=rtol, atol=0.0, maxiter=maxiter, M=preconditioner)
    residual = float(np.linalg.norm(rhs - matrix @ x)) / bnorm
    if info != 0:
        # Semidefinite systems stall slightly above rtol in floating point
        if residual > 1e3 * rtol:
            raise SolverConvergenceError(
                f"CG did not converge for {what}: relative residual {residual:.3e}",
                residual=residual, iterations=info, system=what)
        logger.debug(f"CG for {what} stopped at residual {residual:.3e} (info={info})")
    return x


def power_norm(apply: Callable[[np.ndarray], np.ndarray], apply_adjoint: Callable[[np.ndarray], np.ndarray],
               size: int, iterations: Optional[int] = None, seed: int = 12345) -> float:
    """Estimate the operator norm of ``apply`` by power iteration on its normal operator."""
    iterations = _defaults['power_iterations'] if iterations is None else iterations
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(size)
    x /= np.linalg.norm(x)
    norm = 0.0
    for _ in range(iterations):
        y = apply_adjoint(apply(x))
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0:
            return 0.0
        x = y / norm_y
        norm = np.sqrt(norm_y)
    return float(norm)
