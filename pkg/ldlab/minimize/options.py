"""
Solver options and solve reports shared by both minimizers.
"""
import enum
from dataclasses import dataclass, field
from typing import List, Optional


class StepRule(str, enum.Enum):
    FIXED = 'fixed'
    BARZILAI_BORWEIN = 'barzilai-borwein'


@dataclass(frozen=True)
class SolveOptions:
    """Knobs for the descent and the primal-dual limit solver"""
    max_iters: int = 5000
    grad_tol: float = 1e-6
    energy_tol: float = 0.0
    step_rule: StepRule = StepRule.BARZILAI_BORWEIN
    initial_step: Optional[float] = None
    armijo_c1: float = 1e-4
    max_backtracks: int = 60
    seed: int = 0
    coulomb: bool = True
    # Primal-dual limit solver
    sigma: Optional[float] = None
    tau: Optional[float] = None
    inner_iters: int = 50
    limit_slices: int = 4
    history_every: int = 1


@dataclass
class HistoryRow:
    iteration: int
    energy: float
    residual: float
    step: float


@dataclass
class SolveReport:
    """Outcome of one minimization; ``residual`` is a gradient norm or a duality gap"""
    solver: str
    iterations: int = 0
    energy: float = float('nan')
    residual: float = float('nan')
    converged: bool = False
    reason: str = ''
    max_modulus: Optional[float] = None
    history: List[HistoryRow] = field(default_factory=list)

    def record(self, iteration: int, energy: float, residual: float, step: float):
        self.history.append(HistoryRow(iteration, float(energy), float(residual), float(step)))

    def energies(self) -> List[float]:
        return [row.energy for row in self.history]

    def to_dict(self, with_history: bool = False) -> dict:
        out = {
            'solver': self.solver,
            'iterations': self.iterations,
            'energy': self.energy,
            'residual': self.residual,
            'converged': self.converged,
            'reason': self.reason,
            'max_modulus': self.max_modulus,
        }
        if with_history:
            out['history'] = [vars(row) for row in self.history]
        return out
