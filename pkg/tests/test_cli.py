import asyncio
import json

import pytest

from backinajiffy.decay.__main__ import amain
from backinajiffy.decay.cli import EXIT_CODE_OK, EXIT_CODE_FATAL, EXIT_CODE_INPUT
from backinajiffy.decay.file_utils import read_json


def run(*args) -> int:
    return asyncio.run(amain(['decay', '-q'] + [str(a) for a in args]))


@pytest.fixture
def simulated(fresh_rc, scenario_yaml, tmp_path):
    out = tmp_path / 'sim'
    assert run('simulate', '--scenario', scenario_yaml, '--out', out) == EXIT_CODE_OK
    return out


def test_workflow(simulated, tmp_path, capsys):
    out = tmp_path / 'analysis'
    obs, plants = simulated / 'observations.csv', simulated / 'plants.csv'
    assert (simulated / 'truth.json').exists()
    capsys.readouterr()

    assert run('-F', 'json', 'estimate', '--input', obs, '--sources', plants, '--out', out) == EXIT_CODE_OK
    rows = json.loads(capsys.readouterr().out)
    assert [r['spec'] for r in rows] == ['linear', 'quadratic', 'both', 'log_linear', 'geometric']
    assert sorted(r['rank'] for r in rows) == [1, 2, 3, 4, 5]
    fits = read_json(out / 'fits.json')
    assert fits['n_sources'] == 3
    assert fits['audit']['retained'] <= 400

    assert run('-F', 'json', 'bound', '--input', out / 'fits.json', '--epsilon', 0.05, '--out', out) == EXIT_CODE_OK
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]['stratum'] == 'pooled'
    assert read_json(out / 'boundary.json')['epsilon'] == 0.05

    assert run('diagnose', '--input', obs, '--sources', plants, '--spec', 'linear', '--n-seeds', 20, '--seed', 2,
               '--out', out) == EXIT_CODE_OK
    assert 'Observations in strata where the framework applies' in capsys.readouterr().out
    diag = read_json(out / 'diagnosis.json')
    assert diag['placebo']['n_seeds'] == 20
    assert [r['mode'] for r in diag['robustness']['rows']] == ['nearest', 'capacity', 'emissions']

    assert run('report', '--input', out, '--out', out) == EXIT_CODE_OK
    for fn in ('report.json', 'tables.txt', 'decay_by_stratum.csv', 'placebo_kappas.csv'):
        assert (out / 'report' / fn).exists()


def test_simulate_is_reproducible(simulated, scenario_yaml, tmp_path):
    again = tmp_path / 'again'
    assert run('simulate', '--scenario', scenario_yaml, '--out', again) == EXIT_CODE_OK
    for fn in ('observations.csv', 'plants.csv', 'truth.json'):
        assert (simulated / fn).read_bytes() == (again / fn).read_bytes()


def test_estimate_and_diagnose_are_reproducible(simulated, tmp_path):
    obs, plants = simulated / 'observations.csv', simulated / 'plants.csv'
    first, second = tmp_path / 'first', tmp_path / 'second'
    for out, processes in ((first, 1), (second, 2)):
        assert run('estimate', '--input', obs, '--sources', plants, '--out', out) == EXIT_CODE_OK
        assert run('diagnose', '--input', obs, '--sources', plants, '--spec', 'linear', '--n-seeds', 10,
                   '--seed', 5, '--processes', processes, '--out', out) == EXIT_CODE_OK
    for fn in ('fits.json', 'diagnosis.json'):
        assert (first / fn).read_bytes() == (second / fn).read_bytes()


def test_missing_input(fresh_rc, plants_csv, tmp_path):
    assert run('estimate', '--input', tmp_path / 'nope.csv', '--sources', plants_csv,
               '--out', tmp_path) == EXIT_CODE_INPUT
    assert run('estimate', '--sources', plants_csv) == EXIT_CODE_INPUT


def test_bad_epsilon(fresh_rc, tmp_path):
    fn = tmp_path / 'k.json'
    fn.write_text('{"kappa_s": 0.002, "se": 0.0002}', encoding='utf-8')
    assert run('bound', '--input', fn, '--epsilon', 1.5, '--out', tmp_path) == EXIT_CODE_INPUT
    assert run('bound', '--input', fn, '--out', tmp_path) == EXIT_CODE_OK
    assert read_json(tmp_path / 'boundary.json')['boundaries'][0]['verdict'] == 'applies'


def test_nothing_left_to_estimate(fresh_rc, cell_csv, plants_csv, tmp_path):
    assert run('estimate', '--input', cell_csv, '--sources', plants_csv, '--min-qa', 0.99,
               '--out', tmp_path) == EXIT_CODE_FATAL


def test_conf_file_overrides_flags(fresh_rc, tmp_path):
    fn = tmp_path / 'k.json'
    fn.write_text('{"kappa_s": 0.002, "se": 0.0002}', encoding='utf-8')
    conf = tmp_path / 'run.yaml'
    conf.write_text('epsilon: 0.01\n', encoding='utf-8')
    assert run('--conf', conf, 'bound', '--input', fn, '--epsilon', 0.1, '--out', tmp_path) == EXIT_CODE_OK
    b = read_json(tmp_path / 'boundary.json')
    assert b['epsilon'] == 0.01
    assert b['boundaries'][0]['d_star'] == pytest.approx(2302.585, rel=1e-6)
    assert run('--conf', tmp_path / 'missing.yaml', 'bound', '--input', fn) == EXIT_CODE_INPUT


def test_no_subcommand(fresh_rc):
    assert run() == EXIT_CODE_FATAL
