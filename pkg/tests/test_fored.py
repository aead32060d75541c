import numpy as np
import networkx as nx
import pytest

import fendi.network as nw
import fendi.eflow as ef
import fendi.pflow as pf
import fendi.fored as fo

from .conftest import small_random


def link_with_length(a, b, zeta):
    return nw.LinkParams(a, b, 1, 1.0, float(0.25 * (1 + 3 * np.exp(-zeta))))


def test_nudged_floor():
    assert fo.nudged_floor(2.6) == 2
    assert fo.nudged_floor(3 - 1e-14) == 3
    assert fo.nudged_floor(np.array([0.0, 1.5])).tolist() == [0, 1]


def test_quantize():
    nodes = {'A': nw.NodeParams(q=1.0), 'B': nw.NodeParams(q=1.0, w=float(np.exp(-0.5)))}
    net = nw.Network(nodes, [link_with_length('A', 'B', 1.3)])
    quant = fo.quantize(net, 2.0)
    assert quant.link_lengths.tolist() == [3]
    assert quant.node_lengths.tolist() == [1, 2]
    # exact integer products are not floored down
    net = nw.Network(nodes, [link_with_length('A', 'B', 1.0)])
    assert fo.quantize(net, 2.0).link_lengths.tolist() == [3]
    with pytest.raises(ValueError):
        fo.quantize(net, 0.0)


@pytest.mark.parametrize('theta', [0.5, 3.0, 17.0])
@pytest.mark.parametrize('seed', range(5))
def test_quantized_path_lengths_are_sandwiched(seed, theta):
    net = small_random(seed, n=7)
    quant = fo.quantize(net, theta)
    assert np.all(quant.node_lengths >= 1) & np.all(quant.link_lengths >= 1)
    for path in nx.all_simple_paths(net.to_networkx(), 0, net.n_nodes - 1):
        link_ids = [net.link_of(u, v) for u, v in zip(path[:-1], path[1:])]
        z = nw.path_length([net.link_params[k] for k in link_ids], [net.node_params[v] for v in path[1:-1]])
        zq = np.sum(quant.link_lengths[link_ids]) + np.sum(quant.node_lengths[path[1:-1]])
        assert theta * z <= zq + 1e-9
        assert zq <= np.floor(theta * z + 1e-9) + 2 * net.n_nodes - 3


@pytest.mark.parametrize('z_max, eta', [(3, 0.0), (4, 1.0), (6, 1.0), (8, 2.0)])
def test_toy_levels(toy_net, toy_quant, z_max, eta):
    eta_z, lef = fo.solve_fored(toy_net, 'A', 'C', toy_quant, z_max)
    assert eta_z == pytest.approx(eta, abs=1e-7)
    assert fo.validate_layered(lef, toy_net)


def test_toy_swap_level(toy_net, toy_quant):
    _, lef = fo.solve_fored(toy_net, 'A', 'C', toy_quant, 6)
    assert lef.x.tolist() == pytest.approx([1.0])
    assert (lef.m[0], lef.n[0], lef.z[0], lef.k[0], lef.z1[0]) == (0, 2, 4, 1, 2)
    assert lef.z2.tolist() == [1]
    inflow, outflow = fo.layered_balance(lef, toy_net)
    assert inflow[0, 2, 4] == pytest.approx(1.0)
    assert outflow[0, 1, 2] == pytest.approx(1.0)
    pflows = fo.decompose_layered(lef, toy_net)
    assert len(pflows) == 1
    assert pflows[0].quantized_length == 4
    assert pflows[0].tree.z == 4
    assert fo.support_max_length(lef, toy_net) == pytest.approx(pflows[0].length)


def test_solve_fored_rejects(toy_net, toy_quant):
    with pytest.raises(ValueError):
        fo.solve_fored(toy_net, 'A', 'A', toy_quant, 6)
    with pytest.raises(ValueError):
        fo.solve_fored(toy_net, 'A', 'C', toy_quant, 0)
    zero = fo.Quantization(theta=1.0, node_lengths=[0, 0, 0], link_lengths=[1, 1, 1])
    with pytest.raises(ValueError):
        fo.solve_fored(toy_net, 'A', 'C', zero, 6)


def test_validate_layered_reports(toy_net, toy_quant):
    _, lef = fo.solve_fored(toy_net, 'A', 'C', toy_quant, 6)
    lef.x[0] = 0.5
    report = fo.validate_layered(lef, toy_net)
    assert not report
    assert ('A|B|2', 'conservation') in {(label, kind) for label, kind, _ in report.violations}
    lef.z1[0] = 5
    assert any(kind == 'malformed term' for _, kind, _ in fo.validate_layered(lef, toy_net).violations)


@pytest.mark.parametrize('seed', range(6))
def test_unit_lengths_match_ored(seed):
    net = small_random(seed)
    s, t = 0, net.n_nodes - 1
    unit = fo.Quantization(theta=1.0, node_lengths=np.ones(net.n_nodes), link_lengths=np.ones(net.n_links))
    eta_ored, _ = ef.solve_ored(net, s, t)
    eta_z, lef = fo.solve_fored(net, s, t, unit, 2 * net.n_nodes - 3)
    assert eta_z == pytest.approx(eta_ored, rel=1e-5, abs=1e-9)
    assert fo.validate_layered(lef, net)


@pytest.mark.parametrize('seed', range(6))
def test_layered_properties(seed):
    net = small_random(seed)
    s, t = 0, net.n_nodes - 1
    quant = fo.quantize(net, 10.0)
    eta_ored, _ = ef.solve_ored(net, s, t)
    previous = 0.0
    for z_max in range(1, int(quant.link_lengths.sum() + quant.node_lengths.sum()) + 1, 3):
        eta_z, lef = fo.solve_fored(net, s, t, quant, z_max)
        # nondecreasing in the bound and never above the unconstrained optimum
        assert eta_z >= previous * (1 - 1e-6) - 1e-9
        assert eta_z <= eta_ored * (1 + 1e-6) + 1e-9
        previous = eta_z
        if (eta_z > 0):
            pflows = fo.decompose_layered(lef, net)
            assert sum(p.value for p in pflows) == pytest.approx(eta_z, rel=1e-6, abs=1e-9)
            for p in pflows:
                assert p.quantized_length == pf.tree_quantized_length(p.tree, net, quant)
                assert p.quantized_length <= z_max
            assert fo.support_max_length(lef, net) >= max(p.length for p in pflows) - 1e-9


def test_aggregate_and_single_level(chain_net):
    _, flow = ef.solve_ored(chain_net, 'A', 'C')
    lef = fo.layered_from_eflow(flow, chain_net)
    assert lef.z_max == 0
    back = lef.aggregate()
    assert ef.validate_eflow(chain_net, back)
    assert back.x == pytest.approx(flow.x)
    pflows = fo.decompose_layered(lef, chain_net)
    assert sum(p.value for p in pflows) == pytest.approx(0.5, rel=1e-6)


def test_layered_dict(toy_net, toy_quant):
    _, lef = fo.solve_fored(toy_net, 'A', 'C', toy_quant, 8)
    data = fo.layered_to_dict(lef, toy_net)
    assert data['x'] == {'A|C|4|B|2': pytest.approx(1.0)}
    assert data['link_lengths'] == {'A|B': 2, 'B|C': 1, 'A|C': 8}
    back = fo.layered_from_dict(data, toy_net)
    assert fo.validate_layered(back, toy_net)
    assert back.eta == pytest.approx(lef.eta)
    with pytest.raises(ef.EflowError):
        fo.layered_from_dict({**data, 'g': {'A|C|3': 1.0}}, toy_net)
    with pytest.raises(ef.EflowError):
        fo.layered_from_dict({k: v for k, v in data.items() if (k != 'theta')}, toy_net)


@pytest.mark.parametrize('delta', [1, 2, 3])
def test_approximate_test_staircase(staircase_net, delta):
    fidelity = {1: 0.95, 2: 0.85, 3: 0.75}[delta]
    z_opt = nw.length_bound(fidelity)
    assert fo.approximate_test(staircase_net, 'A', 'B', delta, z_opt, 0.5)
    # True would put the optimum at or below 1.5 * z_opt / 3
    assert not fo.approximate_test(staircase_net, 'A', 'B', delta, z_opt / 3, 0.5)
    outcome, lef = fo.approximate_test(staircase_net, 'A', 'B', delta, z_opt, 0.5, return_solution=True)
    assert outcome
    assert lef.eta >= delta * (1 - 1e-6)
    assert fo.test is fo.approximate_test


def test_approximate_test_rejects(staircase_net):
    with pytest.raises(ValueError):
        fo.approximate_test(staircase_net, 'A', 'B', 1, 0.0, 0.5)
    with pytest.raises(ValueError):
        fo.approximate_test(staircase_net, 'A', 'B', 1, 1.0, -1)
