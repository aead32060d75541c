import numpy as np
import networkx as nx
import pytest

import fendi.network as nw
import fendi.eflow as ef
import fendi.pflow as pf

from .conftest import chain, small_random


def test_tree_helpers():
    tree = pf.left_deep_tree([0, 1, 2, 3])
    assert pf.tree_walk(tree) == [0, 1, 2, 3]
    assert pf.tree_swap_nodes(tree) == [1, 2]
    assert [(leaf.a, leaf.b) for leaf in pf.tree_leaves(tree)] == [(0, 1), (1, 2), (2, 3)]
    assert pf.term_key(tree) == (0, 3, 2)
    shapes = pf.all_tree_shapes([0, 1, 2, 3, 4])
    assert len(shapes) == 5
    assert all(pf.tree_walk(tree) == [0, 1, 2, 3, 4] for tree in shapes)
    with pytest.raises(ValueError):
        pf.all_tree_shapes([0])


def test_chain_ratios(chain_net):
    tree = pf.left_deep_tree([0, 1, 2])
    g_ratio, f_ratio = pf.ratios(tree, chain_net)
    assert g_ratio == {0: pytest.approx(2.0), 1: pytest.approx(2.0)}
    assert f_ratio == {(0, 2, 1): pytest.approx(2.0)}
    assert pf.pflow_fidelity(tree, chain_net) == pytest.approx(0.73)
    assert pf.tree_length(tree, chain_net) == pytest.approx(-2 * np.log(0.8))
    with pytest.raises(pf.UnreachableRateError):
        pf.ratios(tree, chain(q_b=0.0))


def test_repeated_link_accumulates():
    """The walk A-B-C-B-D crosses link B-C twice"""
    nodes = {v: nw.NodeParams(q=1.0) for v in 'ABCD'}
    links = [nw.LinkParams('A', 'B', 1, 1.0, 0.9), nw.LinkParams('B', 'C', 1, 1.0, 0.9),
             nw.LinkParams('B', 'D', 1, 1.0, 0.9)]
    net = nw.Network(nodes, links)
    tree = pf.left_deep_tree([0, 1, 2, 1, 3])
    g_ratio, f_ratio = pf.ratios(tree, net)
    assert g_ratio == {0: pytest.approx(1.0), 1: pytest.approx(2.0), 2: pytest.approx(1.0)}
    assert set(f_ratio) == {(0, 2, 1), (0, 1, 2), (0, 3, 1)}
    assert pf.pflow_fidelity(tree, net) == pytest.approx(0.25 * (1 + 3 * (2.6 / 3)**4))


def test_decompose_chain(chain_net):
    _, flow = ef.solve_ored(chain_net, 'A', 'C')
    pflows = pf.decompose(flow, chain_net)
    assert len(pflows) == 1
    assert pflows[0].value == pytest.approx(0.5, rel=1e-6)
    assert pflows[0].walk == [0, 1, 2]
    assert pflows[0].fidelity == pytest.approx(0.73)
    record = pf.pflows_to_list(pflows, chain_net)[0]
    assert record['walk'] == ['A', 'B', 'C']
    assert 'quantized_length' not in record


def test_decompose_rejects_invalid(chain_net):
    flow = ef.Eflow(0, 2, np.array([1.0, 1.0]), np.array([0]), np.array([2]), np.array([1]), np.array([0.5]), 0.25)
    with pytest.raises(ef.EflowError):
        pf.decompose(flow, chain_net)


@pytest.mark.parametrize('seed', range(8))
def test_decompose_random(seed):
    net = small_random(seed)
    eta, flow = ef.solve_ored(net, 0, net.n_nodes - 1)
    pflows = pf.decompose(flow, net)
    assert sum(p.value for p in pflows) == pytest.approx(eta, rel=1e-6, abs=1e-9)
    assert len(pflows) <= flow.n_nonzero()
    # the pflows never use more than the eflow generates
    used = np.zeros(net.n_links)
    swapped = {}
    for p in pflows:
        assert p.value > 0
        assert p.walk[0] == flow.s and p.walk[-1] == flow.t
        assert p.fidelity == pytest.approx(nw.fidelity_from_length(p.length), rel=1e-9)
        for l, r in p.g_ratio.items():
            used[l] += p.value * r
        for key, r in p.f_ratio.items():
            swapped[key] = swapped.get(key, 0.0) + p.value * r
    assert np.all(used <= flow.g + 1e-6)
    available = {(int(m), int(n), int(k)): x for m, n, k, x in zip(flow.m, flow.n, flow.k, flow.x)}
    for key, rate in swapped.items():
        assert rate <= available.get(key, 0.0) + 1e-6


def fold_fidelity(tree, net):
    """Swap fidelities folded bottom-up in the order of the tree"""
    if tree.is_gen:
        return net.link_params[net.link_of(tree.a, tree.b)].fidelity
    return nw.swap_fidelity(fold_fidelity(tree.left, net), fold_fidelity(tree.right, net), net.w_node[tree.k])


@pytest.mark.parametrize('seed', range(5))
def test_fidelity_is_independent_of_tree_shape(seed):
    rng = np.random.default_rng(seed)
    n_nodes = int(rng.integers(3, 7))
    nodes = {i: nw.NodeParams(q=1.0, w=float(rng.uniform(0.6, 1))) for i in range(n_nodes)}
    links = [nw.LinkParams(i, i + 1, 1, 1.0, float(rng.uniform(0.6, 1))) for i in range(n_nodes - 1)]
    net = nw.Network(nodes, links)
    walk = list(range(n_nodes))
    expected = pf.pflow_fidelity(pf.left_deep_tree(walk), net)
    for tree in pf.all_tree_shapes(walk):
        assert pf.pflow_fidelity(tree, net) == pytest.approx(expected, rel=1e-12)
        assert fold_fidelity(tree, net) == pytest.approx(expected, rel=1e-12)
        assert pf.tree_length(tree, net) == pytest.approx(nw.length_of(nw.werner_param(expected)), abs=1e-9)


def test_path_lp_staircase(staircase_net):
    paths = [['A', 'R1', 'B'], ['A', 'R2', 'B'], ['A', 'R3', 'B']]
    eta, values = pf.solve_path_lp(staircase_net, 'A', 'B', paths)
    assert eta == pytest.approx(3.0, rel=1e-6)
    assert values == pytest.approx([1, 1, 1], rel=1e-6)
    eta, _ = pf.solve_path_lp(staircase_net, 'A', 'B', paths[:1], trees='left-deep')
    assert eta == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(ValueError):
        pf.solve_path_lp(staircase_net, 'A', 'B', [['A', 'B']])
    with pytest.raises(ValueError):
        pf.solve_path_lp(staircase_net, 'A', 'B', [['R1', 'B']])


@pytest.mark.parametrize('seed', range(6))
def test_ored_dominates_path_lp(seed):
    net = small_random(seed, n=5)
    s, t = 0, net.n_nodes - 1
    eta_ored, _ = ef.solve_ored(net, s, t)
    paths = [list(p) for p in nx.all_simple_paths(net.to_networkx(), s, t)]
    eta_path, _ = pf.solve_path_lp(net, s, t, paths)
    assert eta_path <= eta_ored * (1 + 1e-6) + 1e-9


@pytest.mark.parametrize('delta, fidelity', [(1, 0.95), (2, 0.85), (3, 0.75)])
def test_brute_force_staircase(staircase_net, delta, fidelity):
    z_star, certificate = pf.brute_force_ofred(staircase_net, 'A', 'B', delta)
    assert z_star == pytest.approx(nw.length_bound(fidelity), rel=1e-9)
    assert sum(certificate.values()) >= delta * (1 - 1e-6)
    assert ('A', 'R1', 'B') in certificate


def test_brute_force_limits(staircase_net):
    with pytest.raises(ef.UnachievableEdrError) as info:
        pf.brute_force_ofred(staircase_net, 'A', 'B', 4)
    assert info.value.eta_star == pytest.approx(3.0, rel=1e-6)
    with pytest.raises(ValueError):
        pf.brute_force_ofred(nw.waxman_generate(9, seed=0), 0, 8, 1.0)
