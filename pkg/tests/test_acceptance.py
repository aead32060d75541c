"""End-to-end checks against exact oracles on seeded random networks"""
import time
import numpy as np
import networkx as nx
import pytest

import fendi.network as nw
import fendi.eflow as ef
import fendi.pflow as pf
import fendi.fored as fo
import fendi.fptas as fp
import fendi.simulator as sim


pytestmark = pytest.mark.slow

N_GRAPHS = 50


def oracle_case(seed):
    """Random connected network of at most 7 nodes with a feasible bound"""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 8))
    net = nw.waxman_generate(n, alpha=0.8, beta=0.8, seed=seed, q_node=(0.5, 1.0), w_node=(0.9, 1.0),
                             q_link=(0.6, 1.0), fidelity=(0.7, 0.99), capacity=(1, 4))
    s, t = 0, n - 1
    eta_star, flow = ef.solve_ored(net, s, t)
    delta = float(rng.uniform(0.2, 0.9)) * eta_star
    return net, s, t, delta, eta_star, flow


def check_decomposition(pflows, eta, n_nonzero):
    assert len(pflows) <= n_nonzero
    assert sum(p.value for p in pflows) == pytest.approx(eta, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize('seed', range(N_GRAPHS))
def test_fendi_against_brute_force(seed):
    net, s, t, delta, eta_star, flow = oracle_case(seed)
    # ORED equals the path program over all simple paths
    paths = [list(p) for p in nx.all_simple_paths(net.to_networkx(), s, t)]
    eta_path, _ = pf.solve_path_lp(net, s, t, paths)
    assert eta_path == pytest.approx(eta_star, rel=1e-6, abs=1e-9)
    check_decomposition(pf.decompose(flow, net), eta_star, flow.n_nonzero())
    z_opt, _ = pf.brute_force_ofred(net, s, t, delta)
    for eps in [0.25, 0.5, 1.0]:
        solution = fp.fendi(net, s, t, delta, eps=eps)
        assert solution.eta >= delta * (1 - 1e-6)
        assert solution.z_plus <= (1 + eps) * z_opt * (1 + 1e-9) + 1e-12
        check_decomposition(solution.pflows, solution.eta, solution.layered.n_nonzero())
        # iteration envelope of both bisection stages
        diagnostics = solution.diagnostics
        if not diagnostics['lossless']:
            assert diagnostics['stage1_iterations'] <= int(np.ceil(np.log2(np.log2(2 * net.n_nodes - 3)))) + 5
            z_gap = diagnostics['z_ub_initial'] - diagnostics['z_lb_initial']
            assert diagnostics['stage2_iterations'] <= int(np.ceil(np.log2(z_gap))) + 1


@pytest.mark.parametrize('seed', range(20))
def test_approximate_test_never_contradicts(seed):
    net, s, t, delta, _, _ = oracle_case(seed)
    z_opt, _ = pf.brute_force_ofred(net, s, t, delta)
    if (z_opt == 0):
        pytest.skip('bound met without any lossy element')
    eps = 0.5
    for z_bound in z_opt * np.geomspace(0.3, 3.0, 10):
        if fo.approximate_test(net, s, t, delta, z_bound, eps):
            assert z_opt <= (1 + eps) * z_bound * (1 + 1e-9)
        else:
            assert z_opt > z_bound * (1 - 1e-9)


def waxman_solutions(n_solutions=10):
    solutions = []
    for seed in range(n_solutions):
        net = nw.waxman_generate(15, alpha=0.8, beta=0.8, seed=seed)
        s, t = 0, 14
        eta_star, _ = ef.solve_ored(net, s, t)
        solutions.append((net, fp.fendi(net, s, t, 0.5 * eta_star, eps=0.5)))
    return solutions


def test_simulated_fidelity_floor_and_storage_gain():
    for net, solution in waxman_solutions():
        plan = sim.derive_plan(solution.layered, net)
        achieved = []
        for seed in range(10):
            buffered = sim.run(net, plan, sim.SimConfig(slots=1000, seed=seed))
            bufferless = sim.run(net, plan, sim.SimConfig(slots=1000, seed=seed, buffer_lifetime=1))
            assert buffered.ledger_balanced()
            assert min(buffered.per_ebit_fidelities) >= solution.worst_fidelity - 1e-12
            assert bufferless.achieved_edr <= buffered.achieved_edr
            achieved.append(buffered.achieved_edr)
        assert np.mean(achieved) == pytest.approx(solution.eta, rel=0.05)


def test_coarse_accuracy_is_faster():
    timings = {0.25: [], 1.0: []}
    for seed in range(10):
        net = nw.waxman_generate(15, alpha=0.8, beta=0.8, seed=seed)
        eta_star, _ = ef.solve_ored(net, 0, 14)
        for eps in timings:
            t_a = time.time()
            fp.fendi(net, 0, 14, 0.5 * eta_star, eps=eps)
            timings[eps].append(time.time() - t_a)
    assert np.median(timings[1.0]) < np.median(timings[0.25])
