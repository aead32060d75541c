"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains the approximation scheme for the maximum worst-case
fidelity under an expected EDR bound: the search for initial length
bounds, the two-stage bisection over the approximate test and the
quantized program, and the EDR-fidelity trade-off sweep.
"""

import time
import logging
import dataclasses
import functools as fct
import multiprocessing as mp
import numpy as np

from . import network as nw
from . import eflow as ef_mod
from . import pflow as pf
from . import fored as fo
from . import utility as ut


# initialize logger
logger = logging.getLogger(__name__)


@dataclasses.dataclass
class Bounds:
    """Lower and upper bound on the optimal maximum walk length"""
    lb: float
    ub: float

    @property
    def lossless(self):
        return (self.ub == 0)


@dataclasses.dataclass
class FendiSolution:
    """Outcome of the approximation scheme

    Parameters
    ----------
    layered: LayeredEflow
        Last feasible solution of the quantized program
    pflows: list[Pflow]
        Its decomposition
    z_plus: float
        Maximum true walk length over the support of the layered eflow
    worst_fidelity: float
        fidelity_from_length(z_plus). A floor for every ebit the protocol
        can deliver, including walks recombined across pflows, so it may
        lie below min_pflow_fidelity but never above it.
    min_pflow_fidelity: float
        Lowest fidelity among the decomposed pflows
    eta: float
        Achieved expected EDR
    eps: float
        Accuracy used
    delta: float
        Expected EDR bound used
    bounds: Bounds
        Initial bounds from the bound search
    diagnostics: dict
        Iteration counts, quantized bounds and timings of the stages
    """
    layered: fo.LayeredEflow
    pflows: list
    z_plus: float
    worst_fidelity: float
    min_pflow_fidelity: float
    eta: float
    eps: float
    delta: float
    bounds: Bounds
    diagnostics: dict


@dataclasses.dataclass
class ParetoPoint:
    """One point of the EDR-fidelity trade-off"""
    delta: float
    eta: float
    worst_fidelity: float
    z_plus: float
    solve_millis: float


def scan_lengths(net, s, t):
    """Distinct element lengths in descending order, the SD nodes' own lengths excluded"""
    si, ti = net.index(s), net.index(t)
    interior = np.ones(net.n_nodes, dtype=bool)
    interior[[si, ti]] = False
    lengths = np.concatenate([net.zeta_node[interior], net.zeta_link])
    return np.unique(lengths)[::-1]


def find_bounds(net, s, t, delta, tol=None, backend='highs'):
    """Initial bounds on the optimal maximum walk length

    Parameters
    ----------
    net: Network
        The network
    s: str, int
        Source node identifier
    t: str, int
        Destination node identifier
    delta: float
        Expected EDR bound, positive
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    bounds: Bounds
        lb <= Z* <= ub with ub = (2N - 3) lb; both 0 if the bound can be
        met with zero-length elements only

    Raises
    ------
    UnachievableEdrError:
        If delta exceeds the maximum expected EDR of the whole network

    Notes
    -----
    Scans the distinct lengths from long to short, each time pruning
    every element longer than the current value, until the pruned
    network no longer meets delta. The last value that still met it is
    a critical length: every feasible plan uses an element at least
    that long, and the pruned network holds a plan of walks with at
    most 2N - 3 elements no longer than it.
    """
    if not (delta > 0):
        raise ValueError(f'delta must be positive, got {delta}')
    values = scan_lengths(net, s, t)
    eta_star, _ = ef_mod.solve_ored(net, s, t, tol=tol, backend=backend)
    if not ef_mod.edr_satisfied(eta_star, delta):
        raise ef_mod.UnachievableEdrError(f'EDR bound {delta:.6g} is unachievable, the maximum expected EDR is '
                                          f'{eta_star:.6g}', eta_star=eta_star)
    n_elements = 2 * net.n_nodes - 3
    lb = values[-1]
    for i in range(1, len(values)):
        sub = net.subnetwork(values[i], keep=(s, t))
        eta, _ = ef_mod.solve_ored(sub, s, t, tol=tol, backend=backend)
        logger.info(f'Bound search: lengths <= {values[i]:.6g} give eta={eta:.6g}')
        if not ef_mod.edr_satisfied(eta, delta):
            lb = values[i - 1]
            break
    bounds = Bounds(lb=float(lb), ub=float(n_elements * lb))
    logger.info(f'Bounds on the optimal length: [{bounds.lb:.6g}, {bounds.ub:.6g}]')
    return bounds


def lossless_quantization(net, z_max):
    """Unit lengths for zero-length elements, z_max + 1 (never usable) for the rest"""
    node_lengths = np.where(net.zeta_node == 0, 1, z_max + 1)
    link_lengths = np.where(net.zeta_link == 0, 1, z_max + 1)
    return fo.Quantization(theta=1.0, node_lengths=node_lengths, link_lengths=link_lengths)


def _solve_lossless(net, s, t, delta, tol, backend):
    z_max = 2 * net.n_nodes - 3
    for _ in range(2):
        eta, lef = fo.solve_fored(net, s, t, lossless_quantization(net, z_max), z_max, tol=tol, backend=backend)
        if (eta > 0) and ef_mod.edr_satisfied(eta, delta):
            return lef
        z_max *= 2
    raise ef_mod.UnachievableEdrError(f'the zero-length subnetwork was expected to meet the EDR bound {delta:.6g} '
                                      f'but reaches only {eta:.6g}', eta_star=eta)


def fendi(net, s, t, delta, eps=0.5, tol=None, backend='highs'):
    """Approximately maximise the worst-case fidelity under an expected EDR bound

    Parameters
    ----------
    net: Network
        The network
    s: str, int
        Source node identifier
    t: str, int
        Destination node identifier
    delta: float
        Expected EDR bound, positive
    eps: float
        Accuracy, positive: the maximum walk length is within a factor
        (1 + eps) of the optimum
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    solution: FendiSolution
        The last feasible layered eflow of the bisection with its
        decomposition and fidelity guarantee

    Raises
    ------
    UnachievableEdrError:
        If delta exceeds the maximum expected EDR

    Notes
    -----
    Stage 1 narrows the bounds with the coarse test (accuracy 1) at the
    geometric point sqrt(ub lb / 2) until ub <= 4 lb. Stage 2 fixes the
    quantization at theta = (2N - 3) / (eps lb) and bisects the integer
    bound of the quantized program between floor(theta lb), which is
    infeasible, and floor(theta ub) + 2N - 3, which is feasible.
    """
    if not (eps > 0):
        raise ValueError(f'eps must be positive, got {eps}')
    t_a = time.time()
    bounds = find_bounds(net, s, t, delta, tol=tol, backend=backend)
    t_b = time.time()
    n_elements = 2 * net.n_nodes - 3
    diagnostics = {'lossless': False, 'lb_initial': bounds.lb, 'ub_initial': bounds.ub,
                   'find_bounds_ms': 1000 * (t_b - t_a)}
    if bounds.lossless:
        logger.info('The EDR bound is met by zero-length elements only')
        best = _solve_lossless(net, s, t, delta, tol, backend)
        t_c = time.time()
        diagnostics.update({'lossless': True, 'stage1_iterations': 0, 'stage2_iterations': 0,
                            'lb_final': 0.0, 'ub_final': 0.0, 'theta': 1.0, 'z_lb_initial': 0,
                            'z_ub_initial': best.z_max, 'z_final': best.z_max, 'stage1_ms': 0.0,
                            'stage2_ms': 1000 * (t_c - t_b)})
    else:
        # stage 1: coarse multiplicative bisection
        lb, ub = bounds.lb, bounds.ub
        stage1 = 0
        while (ub > 4 * lb):
            z_test = np.sqrt(ub * lb / 2)
            if fo.approximate_test(net, s, t, delta, z_test, 1.0, tol=tol, backend=backend):
                ub = 2 * z_test
            else:
                lb = z_test
            stage1 += 1
            logger.info(f'Stage 1 iteration {stage1}: bounds [{lb:.6g}, {ub:.6g}]')
        t_c = time.time()
        # stage 2: integer bisection on the quantized program
        theta = n_elements / (eps * lb)
        quant = fo.quantize(net, theta)
        z_lb = fo.nudged_floor(theta * lb)
        z_ub = fo.nudged_floor(theta * ub) + n_elements
        z_lb_initial, z_ub_initial = z_lb, z_ub
        best = None
        stage2 = 0
        while (z_ub > z_lb + 1):
            z_mid = (z_lb + z_ub) // 2
            eta, lef = fo.solve_fored(net, s, t, quant, z_mid, tol=tol, backend=backend)
            if (eta > 0) and ef_mod.edr_satisfied(eta, delta):
                z_ub = z_mid
                best = lef
            else:
                z_lb = z_mid
            stage2 += 1
            logger.info(f'Stage 2 iteration {stage2}: Z={z_mid}, eta={eta:.6g}, bounds [{z_lb}, {z_ub}]')
        if best is None:
            eta, best = fo.solve_fored(net, s, t, quant, z_ub, tol=tol, backend=backend)
            if not ((eta > 0) and ef_mod.edr_satisfied(eta, delta)):
                raise ef_mod.UnachievableEdrError(f'the quantized program at its upper bound {z_ub} reaches only '
                                                  f'{eta:.6g} < {delta:.6g}', eta_star=eta)
        t_d = time.time()
        diagnostics.update({'stage1_iterations': stage1, 'stage2_iterations': stage2, 'lb_final': float(lb),
                            'ub_final': float(ub), 'theta': float(theta), 'z_lb_initial': int(z_lb_initial),
                            'z_ub_initial': int(z_ub_initial), 'z_final': int(z_ub),
                            'stage1_ms': 1000 * (t_c - t_b), 'stage2_ms': 1000 * (t_d - t_c)})
    t_e = time.time()
    pflows = fo.decompose_layered(best, net)
    z_plus = 0.0 if diagnostics['lossless'] else fo.support_max_length(best, net)
    t_f = time.time()
    diagnostics['decompose_ms'] = 1000 * (t_f - t_e)
    diagnostics['total_ms'] = 1000 * (t_f - t_a)
    worst_fidelity = float(nw.fidelity_from_length(z_plus))
    min_pflow_fidelity = min([p.fidelity for p in pflows], default=worst_fidelity)
    solution = FendiSolution(layered=best, pflows=pflows, z_plus=float(z_plus), worst_fidelity=worst_fidelity,
                             min_pflow_fidelity=float(min_pflow_fidelity), eta=float(best.eta), eps=float(eps),
                             delta=float(delta), bounds=bounds, diagnostics=diagnostics)
    logger.info(f'FENDI: eta={solution.eta:.6g}, z_plus={solution.z_plus:.6g}, '
                f'worst fidelity={solution.worst_fidelity:.6g} ({len(pflows)} pflows)')
    return solution


def solution_to_dict(solution, net):
    """JSON form of a FendiSolution"""
    return {'delta': solution.delta, 'eps': solution.eps, 'eta': solution.eta, 'z_plus': solution.z_plus,
            'worst_fidelity': solution.worst_fidelity, 'min_pflow_fidelity': solution.min_pflow_fidelity,
            'bounds': {'lb': solution.bounds.lb, 'ub': solution.bounds.ub},
            'diagnostics': {key: ut.plain(value) for key, value in solution.diagnostics.items()},
            'layered': fo.layered_to_dict(solution.layered, net),
            'pflows': pf.pflows_to_list(solution.pflows, net)}


_SOLUTION_FIELDS = {'delta', 'eps', 'eta', 'z_plus', 'worst_fidelity', 'min_pflow_fidelity', 'bounds',
                    'diagnostics', 'layered', 'pflows'}


def solution_from_dict(data, net):
    """FendiSolution from its JSON form; the pflows are recomputed from the layered eflow"""
    unknown = set(data.keys()) - _SOLUTION_FIELDS - {'meta'}
    if unknown:
        raise ef_mod.EflowError(f'unknown field(s) {sorted(unknown)} in FENDI solution')
    missing = _SOLUTION_FIELDS - set(data.keys())
    if missing:
        raise ef_mod.EflowError(f'missing field(s) {sorted(missing)} in FENDI solution')
    lef = fo.layered_from_dict(data['layered'], net)
    return FendiSolution(layered=lef, pflows=fo.decompose_layered(lef, net), z_plus=float(data['z_plus']),
                         worst_fidelity=float(data['worst_fidelity']),
                         min_pflow_fidelity=float(data['min_pflow_fidelity']), eta=float(data['eta']),
                         eps=float(data['eps']), delta=float(data['delta']),
                         bounds=Bounds(lb=float(data['bounds']['lb']), ub=float(data['bounds']['ub'])),
                         diagnostics=dict(data['diagnostics']))


def pareto_point(delta, net=None, s=None, t=None, eps=0.5, tol=None, backend='highs'):
    """Solve one trade-off point, retrying just below delta if it is numerically out of reach"""
    t_a = time.time()
    try:
        solution = fendi(net, s, t, delta, eps=eps, tol=tol, backend=backend)
    except ef_mod.UnachievableEdrError:
        logger.info(f'Retrying the point at delta={delta:.6g} slightly below the bound')
        solution = fendi(net, s, t, delta * (1 - 1e-6), eps=eps, tol=tol, backend=backend)
    t_b = time.time()
    return ParetoPoint(delta=float(delta), eta=solution.eta, worst_fidelity=solution.worst_fidelity,
                       z_plus=solution.z_plus, solve_millis=1000 * (t_b - t_a))


def pareto_sweep(net, s, t, eps=0.5, steps=10, jobs=1, tol=None, backend='highs'):
    """Trade-off between expected EDR bound and worst-case fidelity

    Parameters
    ----------
    net: Network
        The network
    s: str, int
        Source node identifier
    t: str, int
        Destination node identifier
    eps: float
        Accuracy of each point
    steps: int
        Number of points, at least 2; the bounds are evenly spaced
        over [eta* / steps, eta*]
    jobs: int
        Number of worker processes
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    points: list[ParetoPoint]
        Points in increasing order of delta; the worst-case fidelity is
        non-increasing along the list. Empty if s and t cannot be connected.
    """
    if (steps < 2):
        raise ValueError(f'steps must be at least 2, got {steps}')
    eta_star, _ = ef_mod.solve_ored(net, s, t, tol=tol, backend=backend)
    if not (eta_star > 0):
        logger.warning(f'{s} and {t} cannot be connected, the trade-off front is empty')
        return []
    deltas = eta_star * np.arange(1, steps + 1) / steps
    worker = fct.partial(pareto_point, net=net, s=s, t=t, eps=eps, tol=tol, backend=backend)
    t_a = time.time()
    if (jobs > 1):
        with mp.Pool(processes=jobs) as pool:
            points = pool.map(worker, deltas, chunksize=1)
    else:
        points = [worker(delta) for delta in deltas]
    points = sorted(points, key=lambda p: p.delta)
    # a solution for a larger bound is also feasible for a smaller one
    for i in range(len(points) - 2, -1, -1):
        if (points[i + 1].worst_fidelity > points[i].worst_fidelity):
            better = points[i + 1]
            points[i] = ParetoPoint(delta=points[i].delta, eta=better.eta, worst_fidelity=better.worst_fidelity,
                                    z_plus=better.z_plus, solve_millis=points[i].solve_millis)
    t_b = time.time()
    logger.info(f'Trade-off sweep of {steps} points in {t_b - t_a:1.2f} s using {jobs} process(es)')
    return points


def pareto_to_csv(points, file_name):
    """Write the trade-off points as CSV (delta,eta,worst_fidelity,z_plus,solve_ms)"""
    rows = [[p.delta, p.eta, p.worst_fidelity, p.z_plus, p.solve_millis] for p in points]
    ut.write_csv_atomic(file_name, ['delta', 'eta', 'worst_fidelity', 'z_plus', 'solve_ms'], rows)
    return None
