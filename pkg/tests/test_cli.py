import json

import pytest
from click.testing import CliRunner

from ldlab.cli import EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, cli
from ldlab.lib import dumps
from ldlab.lib.parallel import configure_threads

SMALL_DISK = {'shape': 'disk', 'radius': 0.5, 'L': 0.4, 'N': 2, 'h_grid': 0.1, 'h_box': 0.2, 'R_box': 1.0}
SWEEP_CONFIG = dict(mode='gamma-sweep', h0=0.5, recovery_field='rotating', domain=SMALL_DISK,
                    schedule=[{'eps': 0.3, 'N': 2}, {'eps': 0.2, 'N': 1}],
                    solver={'max_iters': 30, 'inner_iters': 10, 'limit_slices': 2})


@pytest.fixture
def runner():
    return CliRunner()


def _config(tmp_path, **data):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(data))
    return str(path)


def test_minimize_ld_exits_cleanly(runner, tmp_path):
    path = _config(tmp_path, mode='minimize-ld', eps=0.2, domain=SMALL_DISK)
    result = runner.invoke(cli, ['--env', 'testing', 'minimize-ld', '--config', path, '--out', str(tmp_path / 'out')])
    assert result.exit_code == EXIT_OK, result.output
    assert (tmp_path / 'out' / 'minimize-ld' / 'summary.json').exists()


def test_subcommand_sets_the_mode(runner, tmp_path):
    # The file says recover; the subcommand wins
    path = _config(tmp_path, mode='recover', eps=0.2, domain=SMALL_DISK)
    result = runner.invoke(cli, ['--env', 'testing', 'minimize-ld', '--config', path, '--out', str(tmp_path)])
    assert result.exit_code == EXIT_OK, result.output
    assert (tmp_path / 'minimize-ld' / 'history.csv').exists()


def test_bad_config_exits_with_config_code(runner, tmp_path):
    path = _config(tmp_path, mode='minimize-ld', epsilon=0.2)
    result = runner.invoke(cli, ['--env', 'testing', 'minimize-ld', '--config', path, '--out', str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG
    assert 'Config error' in result.output
    assert 'epsilon' in result.output


def test_invalid_json_reports_line(runner, tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{\n  "eps": 0.1,\n}\n')
    result = runner.invoke(cli, ['--env', 'testing', 'recover', '--config', str(path), '--out', str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG
    assert 'line 3' in result.output


def test_non_converged_run_exits_with_code_three(runner, tmp_path):
    path = _config(tmp_path, mode='minimize-ld', eps=0.2, h0=0.5, init='random', domain=SMALL_DISK,
                   solver={'max_iters': 2, 'grad_tol': 1e-12})
    result = runner.invoke(cli, ['--env', 'testing', 'minimize-ld', '--config', path, '--out', str(tmp_path),
                                 '--seed', '5'])
    assert result.exit_code == EXIT_NOT_CONVERGED
    assert 'not converged' in result.output
    assert (tmp_path / 'minimize-ld' / 'summary.json').exists()


def test_missing_config_file(runner, tmp_path):
    result = runner.invoke(cli, ['--env', 'testing', 'recover', '--config', str(tmp_path / 'nope.json')])
    assert result.exit_code == 2


@pytest.fixture
def single_thread():
    yield
    configure_threads(1)


def _sweep(runner, path, out, threads):
    result = runner.invoke(cli, ['--env', 'testing', 'gamma-sweep', '--config', path, '--out', str(out),
                                 '--threads', str(threads)])
    assert result.exit_code in (EXIT_OK, EXIT_NOT_CONVERGED), result.output
    return out / 'gamma-sweep' / 'sweep.csv'


def test_single_thread_sweeps_are_byte_identical(runner, tmp_path, single_thread):
    path = _config(tmp_path, **SWEEP_CONFIG)
    first = _sweep(runner, path, tmp_path / 'one', 1)
    second = _sweep(runner, path, tmp_path / 'two', 1)
    assert first.read_bytes() == second.read_bytes()


def test_threaded_sweep_matches_single_thread(runner, tmp_path, single_thread):
    path = _config(tmp_path, **SWEEP_CONFIG)
    header, serial = dumps.read_csv(_sweep(runner, path, tmp_path / 'serial', 1))
    _, threaded = dumps.read_csv(_sweep(runner, path, tmp_path / 'threaded', 3))
    assert len(threaded) == len(serial)
    for row_a, row_b in zip(serial, threaded):
        for name, a, b in zip(header, row_a, row_b):
            if a in ('', 'true', 'false'):
                assert a == b, name
            else:
                assert float(b) == pytest.approx(float(a), rel=1e-13, abs=1e-13), name
