import json
import math

import numpy as np
import pytest

from ldlab.domain import build_domain
from ldlab.errors import ConfigError
from ldlab.harness import (BaseExperiment, ExperimentRegistry, Mode, SchedulePoint, config_from_dict, load_config,
                           out_of_theory)
from ldlab.harness.config import default_schedule
from ldlab.harness.experiments import ApproxCheckExperiment
from ldlab.harness.sweep import SWEEP_HEADER, run_gamma_sweep
from ldlab.lib import dumps

SMALL_DISK = {'shape': 'disk', 'radius': 0.5, 'L': 0.4, 'N': 2, 'h_grid': 0.1, 'h_box': 0.2, 'R_box': 1.0}


@pytest.fixture
def registry():
    ExperimentRegistry.clear()
    ExperimentRegistry.initialize_experiments()
    yield ExperimentRegistry
    ExperimentRegistry.clear()


def _run(registry, data, out_dir, dump_fields=False):
    config = config_from_dict(data)
    experiment = registry.get(config.mode.value)
    result = experiment.run(config)
    return result, experiment.write(result, out_dir, dump_fields)


# Configuration

def test_config_defaults():
    config = config_from_dict({'mode': 'minimize-ld'})
    assert config.mode == Mode.MINIMIZE_LD
    assert config.points() == [SchedulePoint(0.1, 2)]
    assert config.domain_spec().h_grid == pytest.approx(1.0 / 32)
    p = config.params()
    assert p.h_ex == 0.0
    assert p.s == pytest.approx(0.5)


def test_integer_literals_for_float_fields():
    config = config_from_dict({'mode': 'recover', 'h0': 1, 'domain': {'radius': 2, 'L': 1}})
    assert isinstance(config.h0, float)
    assert config.domain.radius == 2.0


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError) as info:
        config_from_dict({'mode': 'recover', 'epsilon': 0.1})
    assert info.value.field == 'epsilon'


def test_wrong_type_reports_field_path():
    with pytest.raises(ConfigError) as info:
        config_from_dict({'mode': 'recover', 'domain': {'N': 2.5}})
    assert info.value.field == 'domain.N'
    assert 'domain.N' in info.value.describe()


def test_missing_mode():
    with pytest.raises(ConfigError) as info:
        config_from_dict({'eps': 0.1})
    assert info.value.field == 'mode'


@pytest.mark.parametrize('data, field', [
    ({'mode': 'recover', 'eps': 1.5}, 'eps'),
    ({'mode': 'recover', 'domain': {'L': -1.0}}, 'domain.L'),
    ({'mode': 'recover', 'init': 'vortex'}, 'init'),
    ({'mode': 'recover', 'resolution_scale': 0.0}, 'resolution_scale'),
    ({'mode': 'diagnose'}, 'input_dir'),
    ({'mode': 'gamma-sweep', 'schedule': [{'eps': 0.1, 'N': 2}, {'eps': 0.1, 'N': 4}]}, 'schedule[1]'),
])
def test_validation_errors(data, field):
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    assert info.value.field == field


def test_load_config_reports_json_position(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{\n  "mode": "recover",\n  "eps": \n}\n')
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.line == 4
    assert 'line 4' in info.value.describe()


def test_load_config_overrides(tmp_path):
    path = tmp_path / 'c.json'
    path.write_text(json.dumps({'mode': 'recover', 'seed': 3}))
    config = load_config(path, mode=Mode.MINIMIZE_LIMIT, seed=None, resolution_scale=2.0)
    assert config.mode == Mode.MINIMIZE_LIMIT
    assert config.seed == 3
    assert config.domain_spec().h_grid == pytest.approx(0.25 / 15)


def test_schedule_and_theory_flags():
    config = config_from_dict({'mode': 'gamma-sweep', 'h0': 1.0,
                               'schedule': [{'eps': 0.1, 'N': 2}, {'eps': 0.05, 'N': 2}]})
    points = config.points()
    assert [p.eps for p in points] == [0.1, 0.05]
    assert config.params(points[1]).h_ex == pytest.approx(math.log(20.0))
    assert out_of_theory(SchedulePoint(0.1, 20), 1.0)
    assert not out_of_theory(SchedulePoint(0.1, 2), 1.0)


def test_default_schedule_targets_the_coupling_ladder():
    long = config_from_dict({'mode': 'gamma-sweep', 'domain': {'L': 4.0, 'R_box': 4.0}})
    assert long.points() == [SchedulePoint(0.1, 6), SchedulePoint(0.07, 5), SchedulePoint(0.05, 4),
                             SchedulePoint(0.035, 3)]
    coupling = [4.0 / p.N * abs(math.log(p.eps)) for p in long.points()]
    for value, target in zip(coupling, (1.5, 2.2, 3.2, 4.7)):
        assert value == pytest.approx(target, rel=0.1)
    # a unit cylinder cannot reach the targets; N stays monotone and the ladder still climbs
    short = config_from_dict({'mode': 'gamma-sweep'})
    assert [p.N for p in short.points()] == [2, 1, 1, 1]
    assert short.points() == default_schedule(1.0)


# Registry

def test_registry_registers_every_mode(registry):
    names = {e.name for e in registry.get_all()}
    assert names == {m.value for m in Mode}
    assert registry.is_initialized()
    with pytest.raises(ValueError):
        registry.register(ApproxCheckExperiment)
    with pytest.raises(TypeError):
        registry.register(dict)
    assert registry.get('no-such-mode') is None


def test_experiment_needs_name_and_description():
    class Nameless(BaseExperiment):
        def run(self, config):
            return None

    with pytest.raises(ValueError):
        Nameless()


# Output formats

def test_csv_format(tmp_path):
    path = dumps.write_csv(tmp_path / 't.csv', ('a', 'b', 'c', 'd'), [(0.1, 2, True, None)])
    raw = path.read_bytes()
    assert raw == b'a,b,c,d\r\n0.10000000000000001,2,true,\r\n'
    header, rows = dumps.read_csv(path)
    assert header == ['a', 'b', 'c', 'd']
    assert float(rows[0][0]) == 0.1


def test_field_dump(tmp_path):
    array = np.arange(12, dtype=float).reshape(3, 4) / 7.0
    raw = dumps.write_field(tmp_path, 'x', array, 'v1', {'lattice': 'layer', 'h_grid': 0.1})
    assert raw.stat().st_size == 12 * 8
    assert raw.read_bytes()[:8] == np.array([0.0], dtype='<f8').tobytes()
    back, sidecar = dumps.read_field(tmp_path, 'x')
    np.testing.assert_array_equal(back, array)
    assert sidecar == {'shape': [3, 4], 'layout': 'row-major', 'field': 'v1',
                       'grid': {'lattice': 'layer', 'h_grid': 0.1}}
    with pytest.raises(ValueError):
        dumps.write_field(tmp_path, 'y', array, 'u_real', {})


def test_json_is_plain(tmp_path):
    path = dumps.write_json(tmp_path / 's.json', {'a': np.float64(0.5), 'b': np.arange(2), 'c': float('nan'),
                                                  'd': Mode.RECOVER})
    assert dumps.read_json(path) == {'a': 0.5, 'b': [0, 1], 'c': None, 'd': 'recover'}


# Experiment runs

def test_minimize_ld_run(registry, tmp_path):
    result, target = _run(registry, {'mode': 'minimize-ld', 'eps': 0.2, 'domain': SMALL_DISK}, tmp_path)
    assert result.converged
    assert result.report.iterations == 0
    summary = dumps.read_json(target / 'summary.json')
    assert summary['mode'] == 'minimize-ld'
    assert summary['energy']['total'] == 0.0
    header, rows = dumps.read_csv(target / 'history.csv')
    assert header == ['iteration', 'energy', 'residual', 'step']
    assert len(rows) == 1


def test_minimize_limit_run(registry, tmp_path):
    data = {'mode': 'minimize-limit', 'h0': 0.1, 'domain': SMALL_DISK,
            'solver': {'max_iters': 40, 'inner_iters': 10, 'limit_slices': 2}}
    result, target = _run(registry, data, tmp_path)
    summary = dumps.read_json(target / 'summary.json')
    assert summary['gap'] >= 0.0
    assert summary['value'] > 0.0
    assert summary['report']['solver'] == 'limit-primal-dual'


def test_recover_then_diagnose_round_trip(registry, tmp_path):
    data = {'mode': 'recover', 'eps': 0.2, 'h0': 0.5, 'recovery_field': 'rotating', 'domain': SMALL_DISK}
    result, target = _run(registry, data, tmp_path / 'a', dump_fields=True)
    fields = target / 'fields'
    for name in ('u_re', 'u_im', 'A1', 'A2', 'A3', 'A0_1', 'A0_2', 'A0_3', 'v1', 'v2'):
        assert (fields / f"{name}.f64").exists()
    assert (fields / 'params.json').exists()
    assert (target / 'vortices.csv').exists()

    box = build_domain(config_from_dict(data).domain_spec()).box
    for k, kind in enumerate(('A1', 'A2', 'A3')):
        _, sidecar = dumps.read_field(fields, kind)
        assert sidecar['field'] == kind
        assert sidecar['layout'] == 'row-major'
        assert tuple(sidecar['shape']) == tuple(box.edge_shapes[k])
        assert sidecar['grid']['lattice'] == 'box'
    _, sidecar = dumps.read_field(fields, 'A0_3')
    assert sidecar['field'] == 'A3'
    _, sidecar = dumps.read_field(fields, 'u_im')
    assert sidecar['field'] == 'u_im'
    assert sidecar['grid']['staggering'] == 'nodes'
    recorded = dumps.read_json(target / 'summary.json')
    assert recorded['params']['h_ex'] == pytest.approx(0.5 * math.log(5.0))

    result, _ = _run(registry, {'mode': 'diagnose', 'input_dir': str(target)}, tmp_path / 'b')
    assert result.converged
    assert result.summary['max_mismatch'] <= 1e-9
    assert 'limit_value' in result.summary['mismatch']
    assert result.summary['energy']['total'] == pytest.approx(recorded['energy']['total'], rel=1e-12)


def test_minimize_limit_then_diagnose(registry, tmp_path):
    data = {'mode': 'minimize-limit', 'h0': 0.1, 'domain': SMALL_DISK,
            'solver': {'max_iters': 20, 'inner_iters': 10, 'limit_slices': 2}}
    _, target = _run(registry, data, tmp_path / 'a', dump_fields=True)
    assert not (target / 'fields' / 'u_re.f64').exists()
    result, _ = _run(registry, {'mode': 'diagnose', 'input_dir': str(target)}, tmp_path / 'b')
    assert result.converged
    assert set(result.summary['mismatch']) == {'value'}


def test_dump_with_wrong_field_kind_is_rejected(registry, tmp_path):
    data = {'mode': 'minimize-ld', 'eps': 0.2, 'domain': SMALL_DISK}
    _, target = _run(registry, data, tmp_path / 'a', dump_fields=True)
    sidecar = dumps.read_json(target / 'fields' / 'u_im.json')
    sidecar['field'] = 'u_re'
    dumps.write_json(target / 'fields' / 'u_im.json', sidecar)
    with pytest.raises(ConfigError):
        registry.get('diagnose').run(config_from_dict({'mode': 'diagnose', 'input_dir': str(target)}))


def test_diagnose_without_dumps(registry, tmp_path):
    config = config_from_dict({'mode': 'diagnose', 'input_dir': str(tmp_path)})
    with pytest.raises(ConfigError):
        registry.get('diagnose').run(config)


def test_approx_check_run(registry, tmp_path):
    result, target = _run(registry, {'mode': 'approx-check'}, tmp_path)
    assert result.converged
    summary = dumps.read_json(target / 'summary.json')
    assert summary['mollify']['error'] < 0.5
    assert summary['tv_relative_change'] <= 0.05
    assert 'reflection' not in summary


SWEEP = {
    'mode': 'gamma-sweep',
    'h0': 0.5,
    'recovery_field': 'rotating',
    'domain': SMALL_DISK,
    'schedule': [{'eps': 0.3, 'N': 2}, {'eps': 0.2, 'N': 1}],
    'solver': {'max_iters': 30, 'inner_iters': 10, 'limit_slices': 2},
}


def test_gamma_sweep_sandwich_and_outputs(registry, tmp_path):
    result, target = _run(registry, SWEEP, tmp_path)
    header, rows = dumps.read_csv(target / 'sweep.csv')
    assert len(rows) == 2
    col = {name: k for k, name in enumerate(header)}
    # s = 0.2 < eps = 0.3 on the first point
    assert [row[col['out_of_theory']] for row in rows] == ['true', 'false']
    for row in rows:
        assert float(row[col['scaled_ld_min']]) <= float(row[col['scaled_recovery']]) + 1e-9
    assert rows[0][col['jacobian_hminus1_cauchy']] == ''
    assert rows[1][col['jacobian_hminus1_cauchy']] != ''
    assert (target / 'energy_curves.svg').exists()


def test_gamma_sweep_is_deterministic(registry, tmp_path):
    _, first = _run(registry, SWEEP, tmp_path / 'one')
    _, second = _run(registry, SWEEP, tmp_path / 'two')
    for name in ('sweep.csv', 'summary.json', 'energy_curves.svg'):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_gamma_sweep_then_diagnose_every_point(registry, tmp_path):
    result, target = _run(registry, SWEEP, tmp_path / 'sweep', dump_fields=True)
    fields = target / 'fields'
    for k in (0, 1):
        for name in ('u_re', 'u_im', 'A1', 'A2', 'A3', 'A0_1', 'A0_2', 'A0_3', 'v1', 'v2'):
            assert (fields / f"point_{k}" / f"{name}.f64").exists()
        assert (fields / f"point_{k}" / 'recovery' / 'u_re.f64').exists()
    for name in ('v1', 'v2', 'A1', 'A2', 'A3'):
        assert (fields / 'limit' / f"{name}.f64").exists()

    header, rows = dumps.read_csv(target / 'sweep.csv')
    for k in (0, 1):
        diagnosed, _ = _run(registry, {'mode': 'diagnose', 'input_dir': str(target), 'point': k},
                            tmp_path / f"diagnose_{k}")
        assert diagnosed.converged
        assert diagnosed.summary['max_mismatch'] <= 1e-9
        recomputed = diagnosed.summary['row']
        assert recomputed['scaled_ld_min'] == pytest.approx(float(rows[k][header.index('scaled_ld_min')]),
                                                            rel=1e-12)
    checked = set(diagnosed.summary['mismatch'])
    assert {'scaled_recovery', 'recovery_limit', 'josephson_scaled', 'trace_estimate', 'limit_value',
            'jacobian_hminus1_cauchy'} <= checked

    with pytest.raises(ConfigError):
        registry.get('diagnose').run(config_from_dict({'mode': 'diagnose', 'input_dir': str(target), 'point': 2}))


def test_single_point_sweep_without_field():
    config = config_from_dict({'mode': 'recover', 'h0': 0.0, 'recovery_field': 'zero', 'domain': SMALL_DISK,
                               'schedule': [{'eps': 0.2, 'N': 2}],
                               'solver': {'max_iters': 20, 'inner_iters': 10, 'limit_slices': 2}})
    result = run_gamma_sweep(config)
    assert result.mode == 'gamma-sweep'
    (row,) = result.tables[0].rows
    col = {name: k for k, name in enumerate(SWEEP_HEADER)}
    assert row[col['scaled_ld_min']] == pytest.approx(0.0, abs=1e-12)
    assert row[col['scaled_recovery']] == pytest.approx(0.0, abs=1e-12)
    assert row[col['limit_value']] <= 1e-8


@pytest.mark.slow
def test_josephson_term_fades_along_the_schedule():
    # Fixed applied field and lattice: only the layer count and |ln eps| move
    config = config_from_dict({
        'mode': 'gamma-sweep', 'h0': 0.0, 'h_ex': 1.0, 'recovery_field': 'zero',
        'domain': {'shape': 'disk', 'radius': 0.5, 'L': 1.0, 'h_grid': 0.03125, 'h_box': 0.25, 'R_box': 1.0},
        'schedule': [{'eps': 0.1, 'N': 8}, {'eps': 0.05, 'N': 6}, {'eps': 0.02, 'N': 4}, {'eps': 0.01, 'N': 3}],
        'solver': {'max_iters': 5000, 'grad_tol': 1e-7, 'inner_iters': 10, 'limit_slices': 2},
    })
    result = run_gamma_sweep(config)
    col = {name: k for k, name in enumerate(SWEEP_HEADER)}
    rows = result.tables[0].rows
    josephson = [row[col['josephson_scaled']] for row in rows]
    assert josephson[0] > 0.0
    assert all(later < earlier for earlier, later in zip(josephson, josephson[1:]))
    # |u| <= 1 caps the scaled term at 2 L |Omega| / (lam s |ln eps|)^2
    for row, value in zip(rows, josephson):
        assert value <= 2.0 * math.pi * 0.25 / row[col['s_log_eps']] ** 2 * 1.01
    s = np.array([row[col['s']] for row in rows])
    trace = np.array([row[col['trace_estimate']] for row in rows])
    assert np.all(trace > 0.0)
    exponent = np.polyfit(np.log(s), np.log(trace), 1)[0]
    assert exponent >= 0.5
