"""
Round trip from dumped fields back to the recorded numbers.

A state directory (minimize-ld, recover, minimize-limit) is checked against
its summary.json; with ``point`` set, the sweep dump ``fields/point_<k>`` is
checked against row k of sweep.csv, every numeric column recomputed.
"""
import logging
from pathlib import Path
from typing import Dict, Optional

from ..diagnostics import scaled_observables, stack_distance, stack_jacobian
from ..energy import ld_energy, limit_energy
from ..errors import ConfigError
from ..lib import dumps
from .base import BaseExperiment, ExperimentResult
from .config import ExperimentConfig
from .fieldio import ROOT, DumpedState, load_state
from .sweep import LIMIT_DIR, RECOVERY_DIR, SWEEP_HEADER, point_dir

logger = logging.getLogger(__name__)


def compare(recorded: Dict, recomputed: Dict) -> Dict[str, float]:
    """Relative differences of the scalar entries present in both."""
    out = {}
    for key, value in recomputed.items():
        old = recorded.get(key)
        if isinstance(value, (int, float)) and isinstance(old, (int, float)):
            out[key] = abs(value - old) / max(1.0, abs(old))
    return out


def _cell(text: str):
    if text == '' or text in ('true', 'false'):
        return None
    return float(text)


def _require(state: DumpedState, directory: Path, *names: str):
    missing = [n for n in names if getattr(state, n) is None]
    if missing:
        raise ConfigError(f"{directory} lacks the {', '.join(missing)} dumps", field='input_dir')


def state_scalars(directory: Path) -> Dict:
    """Energies and observables of the state dumped in ``directory``."""
    state = load_state(directory)
    if state.u is None:
        _require(state, directory, 'v', 'A')
        return {'value': limit_energy(state.v, state.A, state.h0)}
    _require(state, directory, 'A')
    p = state.params
    energy = ld_energy(state.u, state.A, p)
    out = {'energy': energy.to_dict(), 'observables': scaled_observables(state.u, state.A, p, state.A0).to_dict()}
    if state.v is not None and state.A0 is not None:
        out['limit_value'] = limit_energy(state.v, state.A0, state.h0)
    return out


def sweep_row(fields_dir: Path, k: int) -> Dict[str, Optional[float]]:
    """Recompute row k of sweep.csv from ``fields/point_<k>`` and its neighbours."""
    directory = fields_dir / point_dir(k)
    state = load_state(directory)
    _require(state, directory, 'u', 'A', 'A0', 'v')
    p = state.params
    le = p.log_eps
    obs = scaled_observables(state.u, state.A, p, state.A0)
    recovery = load_state(directory / RECOVERY_DIR)
    _require(recovery, directory / RECOVERY_DIR, 'u', 'A')
    limit = load_state(fields_dir / LIMIT_DIR)
    _require(limit, fields_dir / LIMIT_DIR, 'v', 'A')

    cauchy = None
    earlier = [j for j in range(k) if (fields_dir / point_dir(j) / 'u_re.f64').exists()]
    if earlier:
        previous = load_state(fields_dir / point_dir(earlier[-1]))
        cauchy = stack_distance(stack_jacobian(previous.u), stack_jacobian(state.u), limit.domain.layer).value
    return {
        'eps': p.eps,
        's': p.s,
        's_log_eps': p.s * le,
        'scaled_ld_min': obs.energy_scaled,
        'scaled_recovery': ld_energy(recovery.u, recovery.A, p).total / le ** 2,
        'limit_value': limit_energy(limit.v, limit.A, limit.h0),
        'recovery_limit': limit_energy(state.v, state.A0, state.h0),
        'josephson_scaled': obs.josephson_scaled,
        'trace_estimate': obs.trace_slab_ratio,
        'jacobian_hminus1_cauchy': cauchy,
    }


class DiagnoseExperiment(BaseExperiment):
    name = 'diagnose'
    description = 'Recompute energies, observables and sweep rows from dumped fields'

    TOLERANCE = 1e-9

    def run(self, config: ExperimentConfig) -> ExperimentResult:
        source = Path(config.input_dir)
        fields_dir = source / 'fields'
        if config.point is not None:
            mismatch, summary = self._sweep_point(source, fields_dir, config.point)
        else:
            mismatch, summary = self._state(source, fields_dir / ROOT)
        worst = max(mismatch.values(), default=0.0)
        summary.update({'input_dir': str(source), 'mismatch': mismatch, 'max_mismatch': worst})
        if worst > self.TOLERANCE:
            logger.warning(f"Round-trip mismatch {worst:.3e} against {source}")
        return ExperimentResult(self.name, summary, None, worst <= self.TOLERANCE)

    def _state(self, source: Path, directory: Path):
        scalars = state_scalars(directory)
        recorded = dumps.read_json(source / 'summary.json') if (source / 'summary.json').exists() else {}
        if 'value' in scalars:
            return compare(recorded, scalars), dict(scalars)
        mismatch = compare(recorded.get('energy', {}), scalars['energy'])
        mismatch.update(compare(recorded.get('observables', {}), scalars['observables']))
        if 'limit_value' in scalars:
            mismatch.update(compare(recorded, {'limit_value': scalars['limit_value']}))
        return mismatch, dict(scalars)

    def _sweep_point(self, source: Path, fields_dir: Path, k: int):
        table = source / 'sweep.csv'
        if not table.exists():
            raise ConfigError(f"No sweep table at {table}", field='input_dir')
        header, rows = dumps.read_csv(table)
        if list(header) != list(SWEEP_HEADER):
            raise ConfigError(f"{table} does not carry the sweep columns", field='input_dir')
        if not 0 <= k < len(rows):
            raise ConfigError(f"Point {k} outside the {len(rows)} sweep rows", field='point')
        recorded = {name: _cell(text) for name, text in zip(header, rows[k])}
        row = sweep_row(fields_dir, k)
        return compare(recorded, row), {'point': k, 'row': row}
