"""Shared networks for the test modules"""
import os
import numpy as np
import pytest

import fendi.network as nw
import fendi.fored as fo


DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'fendi', 'data')


def chain(q_b=0.5, capacity=1, fidelity=0.85, w_b=1.0):
    """A-B-C with unit link probability"""
    nodes = {'A': nw.NodeParams(q=1.0), 'B': nw.NodeParams(q=q_b, w=w_b), 'C': nw.NodeParams(q=1.0)}
    links = [nw.LinkParams('A', 'B', capacity, 1.0, fidelity), nw.LinkParams('B', 'C', capacity, 1.0, fidelity)]
    return nw.Network(nodes, links)


def small_random(seed, n=6):
    """Small connected Waxman network with modest capacities, for exact comparisons"""
    return nw.waxman_generate(n, alpha=0.8, beta=0.8, seed=seed, q_node=(0.5, 1.0), w_node=(0.95, 1.0),
                              q_link=(0.6, 1.0), fidelity=(0.7, 0.95), capacity=(1, 3))


@pytest.fixture
def chain_net():
    return chain()


@pytest.fixture
def staircase_net():
    """A and B joined over three relays; only the A-side links are noisy (0.95, 0.85, 0.75)"""
    return nw.load_topology(os.path.join(DATA_DIR, 'staircase.json'))


@pytest.fixture
def toy_net():
    """Triangle A, B, C with the direct link A-C"""
    nodes = {'A': nw.NodeParams(q=1.0), 'B': nw.NodeParams(q=1.0), 'C': nw.NodeParams(q=1.0)}
    links = [nw.LinkParams('A', 'B', 1, 1.0, 0.9), nw.LinkParams('B', 'C', 1, 1.0, 0.9),
             nw.LinkParams('A', 'C', 1, 1.0, 0.8)]
    return nw.Network(nodes, links)


@pytest.fixture
def toy_quant():
    """Integer lengths A-B 2, B-C 1, B 1, A-C 8 (A and C never swap)"""
    return fo.Quantization(theta=1.0, node_lengths=np.array([1, 1, 1]), link_lengths=np.array([2, 1, 8]))
