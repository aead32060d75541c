import numpy as np
import pytest

import fendi.network as nw
import fendi.eflow as ef
import fendi.fptas as fp
import fendi.simulator as sim

from .conftest import chain


def lossy_chain(q_link=0.5):
    nodes = {'A': nw.NodeParams(q=1.0), 'B': nw.NodeParams(q=1.0), 'C': nw.NodeParams(q=1.0)}
    links = [nw.LinkParams('A', 'B', 1, q_link, 0.9), nw.LinkParams('B', 'C', 1, q_link, 0.9)]
    return nw.Network(nodes, links)


def plan_of(net, s='A', t='C'):
    _, flow = ef.solve_ored(net, s, t)
    return sim.derive_plan(flow, net)


def test_stream_is_reproducible():
    a = sim.stream(7, 'gen|A|B').random(5)
    assert a == pytest.approx(sim.stream(7, 'gen|A|B').random(5))
    assert not np.allclose(a, sim.stream(7, 'gen|B|C').random(5))
    assert not np.allclose(a, sim.stream(8, 'gen|A|B').random(5))


def test_chain_plan(chain_net):
    plan = plan_of(chain_net)
    assert plan.buffers == [(0, 1, 0), (1, 2, 0), (0, 2, 0)]
    assert plan.terminal.tolist() == [False, False, True]
    assert plan.link_rate == pytest.approx([1.0, 1.0])
    assert plan.routing_probabilities((0, 1, 0)) == {(0, 0): 1.0}
    assert plan.routing_probabilities((1, 2, 0)) == {(0, 1): 1.0}
    assert plan.match_table() == {1: [(0, 0, 0)]}
    assert not plan.empty


def test_plan_rejects_unconsumed_buffer(chain_net):
    flow = ef.Eflow(0, 2, np.array([1.0, 1.0]), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                    np.zeros(0, dtype=np.int64), np.zeros(0), 0.0)
    with pytest.raises(sim.PlanError):
        sim.derive_plan(flow, chain_net)


def test_perfect_chain_delivers_every_slot():
    net = chain(q_b=1.0)
    report = sim.run(net, plan_of(net), sim.SimConfig(slots=200, seed=3), delta=1.0)
    assert report.delivered == 200
    assert report.achieved_edr == pytest.approx(1.0)
    assert report.edr_satisfied is not None
    assert report.min_fidelity == pytest.approx(0.73)
    assert report.swaps_failed == 0
    assert report.ledger_balanced()


def test_chain_rate_matches_plan(chain_net):
    achieved = [sim.run(chain_net, plan_of(chain_net), sim.SimConfig(slots=1000, seed=seed)).achieved_edr
                for seed in range(10)]
    assert np.mean(achieved) == pytest.approx(0.5, abs=0.025)


def test_same_seed_same_report(chain_net):
    plan = plan_of(chain_net)
    first = sim.run(chain_net, plan, sim.SimConfig(slots=300, seed=11))
    second = sim.run(chain_net, plan, sim.SimConfig(slots=300, seed=11))
    assert first.to_dict() == second.to_dict()
    assert first.to_dict()['ledger_balanced']
    assert 'trace' not in first.to_dict()


@pytest.mark.parametrize('seed', range(5))
def test_ledger_balances(seed):
    net = lossy_chain()
    plan = plan_of(net)
    for cfg in [sim.SimConfig(slots=300, seed=seed), sim.SimConfig(slots=300, seed=seed, buffer_lifetime=3),
                sim.SimConfig(slots=300, seed=seed, buffer_capacity=0),
                sim.SimConfig(slots=300, seed=seed, swap_passes='single')]:
        assert sim.run(net, plan, cfg).ledger_balanced()


def test_bufferless_never_beats_buffered():
    net = lossy_chain()
    plan = plan_of(net)
    buffered = sim.run(net, plan, sim.SimConfig(slots=2000, seed=5))
    bufferless = sim.run(net, plan, sim.SimConfig(slots=2000, seed=5, buffer_lifetime=1))
    assert bufferless.delivered <= buffered.delivered
    assert bufferless.achieved_edr == pytest.approx(0.25, abs=0.04)
    assert buffered.achieved_edr == pytest.approx(0.5, abs=0.05)
    assert bufferless.evicted_lifetime > 0


def test_capacity_eviction():
    net = lossy_chain()
    report = sim.run(net, plan_of(net), sim.SimConfig(slots=500, seed=2, buffer_capacity=0))
    assert report.evicted_capacity > 0
    assert report.in_buffers == 0
    assert report.ledger_balanced()


def test_trace(chain_net, tmp_path):
    report = sim.run(chain_net, plan_of(chain_net), sim.SimConfig(slots=20, seed=1, trace=True))
    assert len(report.trace) == 20
    assert sum(row[1] for row in report.trace) == report.delivered
    file_name = tmp_path / 'trace.csv'
    sim.write_trace_csv(report, str(file_name))
    lines = file_name.read_text().splitlines()
    assert lines[0] == 'slot,delivered,buffer_occupancy'
    assert len(lines) == 21
    with pytest.raises(ValueError):
        sim.write_trace_csv(sim.run(chain_net, plan_of(chain_net), sim.SimConfig(slots=5)), str(file_name))


def test_layered_plan_respects_fidelity(staircase_net):
    solution = fp.fendi(staircase_net, 'A', 'B', 3)
    plan = sim.derive_plan(solution.layered, staircase_net)
    report = sim.run(staircase_net, plan, sim.SimConfig(slots=50, seed=0), delta=3)
    assert report.delivered >= 147
    assert report.min_fidelity >= solution.worst_fidelity - 1e-12
    assert report.achieved_edr == pytest.approx(3.0, abs=0.06)


@pytest.mark.parametrize('kwargs', [{'slots': 0}, {'buffer_lifetime': 0}, {'buffer_capacity': -1},
                                    {'swap_passes': 'twice'}])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        sim.SimConfig(**kwargs)


def test_ebit_record():
    assert sim.EbitRecord(pair=(0, 1), level=0, w=0.8, birth_slot=0).fidelity == pytest.approx(0.85)
