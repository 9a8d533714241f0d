"""
Base class for experiments and the common result layout on disk.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ..lib import dumps
from ..minimize.options import SolveReport
from .config import ExperimentConfig
from .fieldio import FieldSet

logger = logging.getLogger(__name__)

HISTORY_HEADER = ('iteration', 'energy', 'residual', 'step')


@dataclass
class Table:
    """A CSV table written next to the summary"""
    name: str
    header: Sequence[str]
    rows: List[Sequence[Any]] = field(default_factory=list)


@dataclass
class ExperimentResult:
    """Standardized outcome of any experiment"""
    mode: str
    summary: Dict[str, Any] = field(default_factory=dict)
    report: Optional[SolveReport] = None
    converged: bool = True
    tables: List[Table] = field(default_factory=list)
    fields: Dict[str, FieldSet] = field(default_factory=dict)
    curves: Optional[Dict[str, Any]] = None


class BaseExperiment(ABC):
    """Base class for experiment modes"""

    name: str = None
    description: str = None

    def __init__(self):
        if not self.name or not self.description:
            raise ValueError("Experiment must define 'name' and 'description'")

    @abstractmethod
    def run(self, config: ExperimentConfig) -> ExperimentResult:
        """Run the experiment for a validated config"""
        pass

    def write(self, result: ExperimentResult, out_dir, dump_fields: bool = False) -> Path:
        """Write summary.json, history.csv, extra tables and optional field dumps under ``out_dir/<mode>``."""
        target = Path(out_dir) / self.name
        summary = dict(result.summary)
        summary['mode'] = self.name
        summary['converged'] = result.converged
        if result.report is not None:
            summary['report'] = result.report.to_dict()
            rows = [(r.iteration, r.energy, r.residual, r.step) for r in result.report.history]
            dumps.write_csv(target / 'history.csv', HISTORY_HEADER, rows)
        dumps.write_json(target / 'summary.json', summary)
        for table in result.tables:
            dumps.write_csv(target / f"{table.name}.csv", table.header, table.rows)
        if result.curves is not None:
            from ..lib.plotting import energy_curves
            energy_curves(target / 'energy_curves.svg', result.curves['x'], result.curves['series'])
        if dump_fields:
            for subdir, fieldset in result.fields.items():
                fieldset.write(target / 'fields' / subdir)
        logger.info(f"Wrote {self.name} results to {target}")
        return target

    def __repr__(self):
        return f"<{self.__class__.__name__} name='{self.name}'>"
