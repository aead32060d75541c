import json
import os
import numpy as np
import pytest

import fendi.fptas as fp
import fendi.simulator as sim
import fendi.utility as ut
import fendi.main_functions as mf


def test_meta_header_is_stable():
    meta = ut.meta_header({'b': 1, 'a': np.int64(2)}, command='ored')
    assert meta['tool'] == 'fendi'
    assert meta['version'] == ut.VERSION
    assert meta['config_hash'] == ut.config_hash({'a': 2, 'b': 1})
    assert len(meta['config_hash']) == 64


def test_json_round_trip(tmp_path):
    file_name = str(tmp_path / 'sub' / 'out.json')
    ut.write_json_atomic(file_name, {'meta': {'tool': 'fendi'}, 'value': np.float64(1.5)})
    data, meta = ut.read_json(file_name)
    assert data == {'value': 1.5}
    assert meta == {'tool': 'fendi'}
    assert [f for f in os.listdir(tmp_path / 'sub')] == ['out.json']


def test_failed_write_leaves_no_file(tmp_path):
    file_name = str(tmp_path / 'bad.json')
    with pytest.raises((TypeError, ValueError)):
        ut.write_json_atomic(file_name, {'value': object()})
    assert os.listdir(tmp_path) == []


def test_write_csv(tmp_path):
    file_name = str(tmp_path / 'table.csv')
    ut.write_csv_atomic(file_name, ['a', 'b'], [[1, 0.5], [2, 0.25]])
    assert open(file_name).read().splitlines() == ['a,b', '1,0.5', '2,0.25']


def test_hdf5_archive(staircase_net, tmp_path):
    solution = fp.fendi(staircase_net, 'A', 'B', 2)
    file_name = str(tmp_path / 'plan.json')
    ut.save_solution_hdf5(file_name, solution, staircase_net, description='test', data_id=7)
    results = ut.read_solution_hdf5(str(tmp_path / 'plan.hdf5'))
    assert results['identifier'] == 'plan'
    assert results['source'] == 'A'
    assert results['eta'] == pytest.approx(solution.eta)
    assert results['diagnostics']['z_final'] == solution.diagnostics['z_final']
    assert results['layered']['x'] == pytest.approx(solution.layered.x)
    assert results['pflows'][0]['walk'][0] == 'A'


def test_plan_from_file(tmp_path):
    topology = str(tmp_path / 'chain.json')
    with open(os.path.join(os.path.dirname(mf.__file__), 'data', 'chain.json')) as file:
        open(topology, 'w').write(file.read())
    solution, report = mf.plan_from_file(topology, 'A', 'C', 0.5, simulate=True)
    assert solution.eta == pytest.approx(0.5, rel=1e-6)
    assert report.ledger_balanced()
    for suffix in ['_fendi.json', '_fendi.hdf5', '_sim.json', '.log']:
        assert os.path.isfile(str(tmp_path / f'chain_A_C{suffix}'))
    # existing results are loaded, not recomputed
    again, _ = mf.plan_from_file(topology, 'A', 'C', 0.5)
    assert again.worst_fidelity == solution.worst_fidelity
    with open(str(tmp_path / 'chain_A_C_fendi.json')) as file:
        assert json.load(file)['meta']['config']['source'] == 'A'


def test_analyse_set_requires_delta():
    with pytest.raises(ValueError):
        mf.analyse_set([], n_threads=1)


def test_write_table(tmp_path):
    file_name = str(tmp_path / 'records.csv')
    ut.write_table_atomic(file_name, ['name', 'value'], [{'name': 'A', 'value': np.float64(0.5)}, {'name': 'B'}])
    assert open(file_name).read().splitlines() == ['name,value', 'A,0.5', 'B,']


@pytest.fixture
def staircase_copy(tmp_path):
    topology = str(tmp_path / 'staircase.json')
    with open(os.path.join(os.path.dirname(mf.__file__), 'data', 'staircase.json')) as file:
        open(topology, 'w').write(file.read())
    return topology


def test_analyse_set_with_baseline(staircase_copy, tmp_path):
    """Half the maximum rate is met by the two best relays, the maximum-rate plan also uses the worst one"""
    jobs = [(staircase_copy, 'A', 'B'), (staircase_copy, 'A', 'B', {'eps': 1.0, 'save_dir': str(tmp_path / 'eps1')})]
    summary_file = str(tmp_path / 'summary.csv')
    records = mf.analyse_set(jobs, n_threads=1, summary_file=summary_file, delta_fraction=0.5, simulate=True,
                             baseline=True, sim_config=sim.SimConfig(slots=200, seed=1))
    assert [record['status'] for record in records] == ['ok', 'ok']
    assert [record['eps'] for record in records] == [0.5, 1.0]
    for record in records:
        assert record['n_nodes'] == 5
        assert record['eta_star'] == pytest.approx(3.0, rel=1e-6)
        assert record['delta'] == pytest.approx(1.5, rel=1e-6)
        assert record['min_fidelity'] >= record['worst_fidelity'] - 1e-9
        assert record['ored_min_fidelity'] == pytest.approx(0.75)
        assert record['ored_avg_fidelity'] == pytest.approx(0.85, abs=0.01)
    assert records[0]['worst_fidelity'] == pytest.approx(0.85, rel=1e-9)
    lines = open(summary_file).read().splitlines()
    assert lines[0] == ','.join(mf.SUMMARY_FIELDS)
    assert len(lines) == 3
    summary = mf.summarise_set(records, by='eps')
    assert [entry['eps'] for entry in summary] == [0.5, 1.0]
    assert summary[0]['runs'] == 1
    assert summary[0]['ored_min_fidelity'] < summary[0]['min_fidelity']
    assert summary[0]['ored_edr_satisfaction'] == 1.0


def test_analyse_set_unachievable(staircase_copy):
    records = mf.analyse_set([(staircase_copy, 'A', 'B')], n_threads=1, delta=4.0)
    assert records[0]['status'] == 'unachievable'
    assert records[0]['eta_star'] == pytest.approx(3.0, rel=1e-6)
    assert mf.summarise_set(records) == []
