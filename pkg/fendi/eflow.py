"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains the fidelity-agnostic maximum expected EDR program
(ORED): the eflow representation, the enode balance (generated and
consumed ebit rates per node pair), the LP that maximises the SD rate,
validation of conservation, pruning of non-contributing flow and the
induced graph.
"""

import logging
import dataclasses
import numpy as np
import networkx as nx

from . import lp


# initialize logger
logger = logging.getLogger(__name__)

# relative tolerance for every "eta >= delta" comparison
EDR_RTOL = 1e-6

# source marker of the induced graph
BOTTOM = '⊥'


class EflowError(ValueError):
    """Malformed eflow, or an eflow failing validation where validity is required"""


class UnachievableEdrError(ValueError):
    """The EDR bound exceeds what the network can deliver

    Parameters
    ----------
    message: str
        Description of the failure
    eta_star: float, None
        The maximum expected EDR of the SD pair, if known
    """

    def __init__(self, message, eta_star=None):
        super().__init__(message)
        self.eta_star = eta_star


def edr_satisfied(eta, delta):
    """Whether eta meets the bound delta within the relative EDR tolerance"""
    return eta >= delta * (1 - EDR_RTOL)


@dataclasses.dataclass
class Eflow:
    """Generation ratios and swap rates of an entanglement flow

    Parameters
    ----------
    s: int
        Index of the source node
    t: int
        Index of the destination node
    g: numpy.ndarray[float]
        Generation ratio per link, in [0, 1]
    m: numpy.ndarray[int]
        Smaller endpoint of the target enode of each swap term
    n: numpy.ndarray[int]
        Larger endpoint of the target enode of each swap term
    k: numpy.ndarray[int]
        Swap node of each term
    x: numpy.ndarray[float]
        Rate of each term: the number of {m,k} ebits (and equally of
        {k,n} ebits) consumed per time unit by swapping at k towards {m,n}
    eta: float
        Expected EDR of the SD pair, I(st)
    """
    s: int
    t: int
    g: np.ndarray
    m: np.ndarray
    n: np.ndarray
    k: np.ndarray
    x: np.ndarray
    eta: float = 0.0

    @property
    def n_terms(self):
        return len(self.x)

    def n_nonzero(self):
        """Number of strictly positive variables"""
        return int(np.sum(self.g > 0) + np.sum(self.x > 0))

    def copy(self):
        return Eflow(self.s, self.t, self.g.copy(), self.m.copy(), self.n.copy(), self.k.copy(), self.x.copy(),
                     self.eta)


def zero_eflow(net, s, t):
    """Eflow with no generation and no swapping"""
    empty = np.zeros(0, dtype=np.int64)
    return Eflow(net.index(s), net.index(t), np.zeros(net.n_links), empty, empty.copy(), empty.copy(),
                 np.zeros(0), 0.0)


def enode_balance(ef, net):
    """Generated (I) and consumed (Omega) ebit rates of every enode

    Parameters
    ----------
    ef: Eflow
        The eflow
    net: Network
        The network

    Returns
    -------
    inflow: numpy.ndarray[float]
        I[a, b] for a < b: q c g over the link ab plus q_k x over swap terms towards ab
    outflow: numpy.ndarray[float]
        Omega[a, b] for a < b: swap rates consuming ab
    """
    n_nodes = net.n_nodes
    inflow = np.zeros((n_nodes, n_nodes))
    outflow = np.zeros((n_nodes, n_nodes))
    np.add.at(inflow, (net.link_a, net.link_b), net.q_link * net.capacity * ef.g)
    np.add.at(inflow, (ef.m, ef.n), net.q_node[ef.k] * ef.x)
    np.add.at(outflow, (np.minimum(ef.m, ef.k), np.maximum(ef.m, ef.k)), ef.x)
    np.add.at(outflow, (np.minimum(ef.k, ef.n), np.maximum(ef.k, ef.n)), ef.x)
    return inflow, outflow


def compute_I(ef, net, a, b):
    """Rate at which ebits of the node pair {a, b} are generated (identifiers)"""
    i, j = sorted((net.index(a), net.index(b)))
    inflow, _ = enode_balance(ef, net)
    return float(inflow[i, j])


def compute_Omega(ef, net, a, b):
    """Rate at which ebits of the node pair {a, b} are consumed by swapping (identifiers)"""
    i, j = sorted((net.index(a), net.index(b)))
    _, outflow = enode_balance(ef, net)
    return float(outflow[i, j])


def _is_sd(a, b, s, t):
    return ((a == s) & (b == t)) | ((a == t) & (b == s))


def swap_terms(nodes, swap_nodes, s, t):
    """All swap terms (m, n, k) over a node set that never consume the SD enode

    Parameters
    ----------
    nodes: numpy.ndarray[int]
        Candidate enode endpoints
    swap_nodes: numpy.ndarray[int]
        Candidate swap nodes
    s: int
        Source index
    t: int
        Destination index

    Returns
    -------
    m: numpy.ndarray[int]
    n: numpy.ndarray[int]
    k: numpy.ndarray[int]
        Term arrays with m < n and k not in {m, n}
    """
    mm, nn, kk = np.meshgrid(nodes, nodes, swap_nodes, indexing='ij')
    mm, nn, kk = mm.ravel(), nn.ravel(), kk.ravel()
    mask = (mm < nn) & (kk != mm) & (kk != nn)
    mask &= ~_is_sd(mm, kk, s, t) & ~_is_sd(kk, nn, s, t)
    return mm[mask].astype(np.int64), nn[mask].astype(np.int64), kk[mask].astype(np.int64)


def _balance_program(net, s, t, link_ids, m, n, k, g_upper=None, x_upper=None, name='ored'):
    """LP with conservation I = Omega on every enode but st; objective I(st)

    Returns the problem, the g handles, the x handles and the objective coefficients.
    """
    n_nodes = net.n_nodes
    problem = lp.LpProblem(name=name)
    # enodes touched by any variable get a row, except st
    enode_a = np.concatenate([net.link_a[link_ids], m, np.minimum(m, k), np.minimum(k, n)])
    enode_b = np.concatenate([net.link_b[link_ids], n, np.maximum(m, k), np.maximum(k, n)])
    keys = np.unique(enode_a * n_nodes + enode_b)
    keys = keys[keys != (min(s, t) * n_nodes + max(s, t))]
    row_of = {int(key): r for r, key in enumerate(keys)}
    g_upper = np.ones(len(link_ids)) if (g_upper is None) else g_upper
    x_upper = np.full(len(m), np.inf) if (x_upper is None) else x_upper
    g_gain = net.q_link[link_ids] * net.capacity[link_ids]
    x_gain = net.q_node[k]
    g_sd = _is_sd(net.link_a[link_ids], net.link_b[link_ids], s, t)
    x_sd = _is_sd(m, n, s, t)
    g_obj = np.where(g_sd, g_gain, 0.0)
    x_obj = np.where(x_sd, x_gain, 0.0)
    g_vars = problem.add_variables(len(link_ids), upper=g_upper, objective=g_obj)
    x_vars = problem.add_variables(len(m), upper=x_upper, objective=x_obj)
    # coefficients in coordinate form
    rows, cols, vals = [], [], []
    key_g = net.link_a[link_ids] * n_nodes + net.link_b[link_ids]
    rows.append([row_of[int(key)] for key in key_g[~g_sd]])
    cols.append(g_vars[~g_sd])
    vals.append(g_gain[~g_sd])
    key_x = m * n_nodes + n
    rows.append([row_of[int(key)] for key in key_x[~x_sd]])
    cols.append(x_vars[~x_sd])
    vals.append(x_gain[~x_sd])
    for lo, hi in [(np.minimum(m, k), np.maximum(m, k)), (np.minimum(k, n), np.maximum(k, n))]:
        rows.append([row_of[int(key)] for key in lo * n_nodes + hi])
        cols.append(x_vars)
        vals.append(-np.ones(len(m)))
    problem.add_constraints(np.concatenate([np.asarray(r, dtype=np.int64) for r in rows]), np.concatenate(cols),
                            np.concatenate(vals), '==', np.zeros(len(keys)))
    return problem, g_vars, x_vars, np.concatenate([g_obj, x_obj])


def solve_ored(net, s, t, tol=None, backend='highs'):
    """Maximum expected EDR over all eflows between s and t

    Parameters
    ----------
    net: Network
        The network
    s: str, int
        Source node identifier
    t: str, int
        Destination node identifier
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    eta_star: float
        The maximum expected EDR
    ef: Eflow
        An optimal eflow (only strictly positive swap terms kept)

    Notes
    -----
    Only node pairs inside the connected component of s are
    instantiated, and nodes with zero swap probability are never swap
    nodes. Swap terms consuming the SD pair are never created, which
    enforces Omega(st) = 0. If s and t are disconnected the zero eflow
    is returned with eta_star = 0.
    """
    si, ti = net.index(s), net.index(t)
    if (si == ti):
        raise ValueError(f'source and destination must differ, got {s!r} twice')
    graph = net.to_networkx()
    comp = nx.node_connected_component(graph, si)
    if ti not in comp:
        logger.info(f'{s} and {t} are disconnected, maximum EDR is 0')
        return 0.0, zero_eflow(net, s, t)
    nodes = np.array(sorted(comp), dtype=np.int64)
    swap_nodes = nodes[net.q_node[nodes] > 0]
    m, n, k = swap_terms(nodes, swap_nodes, si, ti)
    in_comp = np.isin(net.link_a, nodes) & (net.q_link > 0)
    link_ids = np.nonzero(in_comp)[0]
    problem, g_vars, x_vars, _ = _balance_program(net, si, ti, link_ids, m, n, k)
    logger.info(f'ORED program: {problem.n_variables} variables, {problem.n_constraints} constraints')
    sol = lp.solve(problem, tol=tol, backend=backend)
    if not sol.optimal:
        raise lp.LpSolverError(f'ORED program reported {sol.status}, which cannot happen for a bounded '
                               f'feasible program')
    g = np.zeros(net.n_links)
    g[link_ids] = sol.values[g_vars]
    x = sol.values[x_vars]
    keep = (x > 0)
    ef = Eflow(si, ti, g, m[keep], n[keep], k[keep], x[keep], float(sol.objective))
    return ef.eta, ef


@dataclasses.dataclass
class ValidationReport:
    """Outcome of a conservation check; violations as (label, kind, magnitude)"""
    passed: bool
    violations: list

    def __bool__(self):
        return self.passed

    def summary(self, limit=5):
        shown = '; '.join(f'{label} {kind} {mag:.3e}' for label, kind, mag in self.violations[:limit])
        more = len(self.violations) - limit
        return shown + (f' (+{more} more)' if (more > 0) else '')


def validate_eflow(net, ef, tol=lp.FEASIBILITY_TOL):
    """Check bounds and conservation of an eflow

    Parameters
    ----------
    net: Network
        The network
    ef: Eflow
        The eflow to check
    tol: float
        Relative tolerance (scaled by max(1, magnitude))

    Returns
    -------
    report: ValidationReport
        Lists every violated constraint by its enode label 'm|n'
    """
    violations = []
    for l in np.nonzero((ef.g < -tol) | (ef.g > 1 + tol))[0]:
        violations.append((net.label(net.link_a[l], net.link_b[l]), 'generation ratio', float(ef.g[l])))
    for j in np.nonzero(ef.x < -tol * np.maximum(1, np.abs(ef.x)))[0]:
        violations.append((net.label(ef.m[j], ef.n[j], net.node_ids[ef.k[j]]), 'negative rate', float(ef.x[j])))
    if np.any((ef.m >= ef.n) | (ef.k == ef.m) | (ef.k == ef.n)):
        violations.append(('terms', 'non-canonical term', float(np.sum(ef.m >= ef.n))))
    inflow, outflow = enode_balance(ef, net)
    s, t = min(ef.s, ef.t), max(ef.s, ef.t)
    if (outflow[s, t] > tol * max(1, inflow[s, t])):
        violations.append((net.label(s, t), 'SD pair consumed', float(outflow[s, t])))
    diff = inflow - outflow
    scale = np.maximum(1, np.maximum(inflow, outflow))
    bad = np.abs(diff) > tol * scale
    bad[s, t] = False
    for a, b in zip(*np.nonzero(bad)):
        violations.append((net.label(a, b), 'conservation', float(diff[a, b])))
    if (abs(ef.eta - inflow[s, t]) > tol * max(1, abs(ef.eta))):
        violations.append((net.label(s, t), 'eta mismatch', float(ef.eta - inflow[s, t])))
    report = ValidationReport(passed=(len(violations) == 0), violations=violations)
    return report


def induced_graph(ef, net):
    """Directed induced graph of an eflow

    Parameters
    ----------
    ef: Eflow
        The eflow
    net: Network
        The network

    Returns
    -------
    graph: networkx.DiGraph
        Vertices are enodes (a, b) with a < b plus BOTTOM; edges
        BOTTOM -> ab for each positive generation ratio and the matched
        pair mk -> mn, kn -> mn for each positive swap term
    """
    inflow, _ = enode_balance(ef, net)
    graph = nx.DiGraph()
    graph.add_node(BOTTOM)
    for a, b in zip(*np.nonzero(np.triu(inflow, 1) > 0)):
        graph.add_node((int(a), int(b)), label=net.label(a, b))
    for l in np.nonzero(ef.g > 0)[0]:
        graph.add_edge(BOTTOM, (int(net.link_a[l]), int(net.link_b[l])), kind='gen', rate=float(ef.g[l]))
    for j in np.nonzero(ef.x > 0)[0]:
        m, n, k = int(ef.m[j]), int(ef.n[j]), int(ef.k[j])
        for child in [(min(m, k), max(m, k)), (min(k, n), max(k, n))]:
            graph.add_edge(child, (m, n), kind='swap', k=k, rate=float(ef.x[j]))
    return graph


def contributing_enodes(ef):
    """Enodes (a, b), a < b, backward-reachable from the SD pair over positive swap terms"""
    by_target = {}
    for j in np.nonzero(ef.x > 0)[0]:
        by_target.setdefault((int(ef.m[j]), int(ef.n[j])), []).append(j)
    sd = (min(ef.s, ef.t), max(ef.s, ef.t))
    keep = {sd}
    stack = [sd]
    while stack:
        target = stack.pop()
        for j in by_target.get(target, []):
            m, n, k = int(ef.m[j]), int(ef.n[j]), int(ef.k[j])
            for child in [(min(m, k), max(m, k)), (min(k, n), max(k, n))]:
                if child not in keep:
                    keep.add(child)
                    stack.append(child)
    return keep


def prune_noncontributing(ef, net, tol=None, backend='highs'):
    """Remove flow that never reaches the SD pair

    Parameters
    ----------
    ef: Eflow
        A valid eflow
    net: Network
        The network
    tol: lp.Tolerances, None
        LP tolerances for the trimming step
    backend: str
        LP backend name

    Returns
    -------
    pruned: Eflow
        The eflow restricted to enodes backward-reachable from st,
        still passing validate_eflow

    Notes
    -----
    Zeroing a component can leave a surplus at enodes that fed it. Such
    a surplus is trimmed by an LP over the remaining support with the
    current values as upper bounds: the SD rate is maximised first, then
    the total rate is minimised at that SD rate.
    """
    keep = contributing_enodes(ef)
    link_keep = np.array([(int(a), int(b)) in keep for a, b in zip(net.link_a, net.link_b)], dtype=bool)
    link_keep &= (ef.g > 0)
    term_keep = np.array([(int(m), int(n)) in keep for m, n in zip(ef.m, ef.n)], dtype=bool)
    term_keep &= (ef.x > 0)
    pruned = Eflow(ef.s, ef.t, np.where(link_keep, ef.g, 0.0), ef.m[term_keep], ef.n[term_keep], ef.k[term_keep],
                   ef.x[term_keep], ef.eta)
    if validate_eflow(net, pruned):
        return pruned
    logger.info('Pruning left a surplus, trimming the remaining support')
    link_ids = np.nonzero(link_keep)[0]
    m, n, k, x = pruned.m, pruned.n, pruned.k, pruned.x
    problem, g_vars, x_vars, c = _balance_program(net, ef.s, ef.t, link_ids, m, n, k, g_upper=pruned.g[link_ids],
                                                  x_upper=x, name='prune')
    sol = lp.solve(problem, tol=tol, backend=backend)
    if not sol.optimal:
        raise EflowError(f'trimming a pruned eflow reported {sol.status}')
    eta = sol.objective
    if not edr_satisfied(eta, ef.eta):
        logger.warning(f'Pruning reduced the SD rate from {ef.eta} to {eta}')
    # second pass: least total rate at the same SD rate
    problem.add_constraints(np.zeros(np.count_nonzero(c), dtype=np.int64), np.nonzero(c)[0], c[c != 0], '>=',
                            [eta * (1 - 1e-9)])
    problem.set_objective({h: -1.0 for h in range(problem.n_variables)})
    sol = lp.solve(problem, tol=tol, backend=backend)
    if not sol.optimal:
        raise EflowError(f'trimming a pruned eflow reported {sol.status}')
    g = np.zeros(net.n_links)
    g[link_ids] = sol.values[g_vars]
    x_new = sol.values[x_vars]
    nz = (x_new > 0)
    trimmed = Eflow(ef.s, ef.t, g, m[nz], n[nz], k[nz], x_new[nz], 0.0)
    trimmed.eta = float(enode_balance(trimmed, net)[0][min(ef.s, ef.t), max(ef.s, ef.t)])
    return trimmed


_EFLOW_FIELDS = {'source', 'destination', 'eta', 'g', 'x'}


def _parse_label(label, net, parts):
    items = str(label).split('|')
    if (len(items) != parts):
        raise EflowError(f'malformed key {label!r}: expected {parts} parts separated by "|"')
    return items


def eflow_to_dict(ef, net):
    """JSON form of an eflow keyed by canonical 'm|n' and 'm|n|k' labels"""
    g = {net.label(net.link_a[l], net.link_b[l]): float(ef.g[l]) for l in np.nonzero(ef.g > 0)[0]}
    x = {net.label(ef.m[j], ef.n[j], net.node_ids[ef.k[j]]): float(ef.x[j]) for j in np.nonzero(ef.x > 0)[0]}
    return {'source': net.node_ids[ef.s], 'destination': net.node_ids[ef.t], 'eta': float(ef.eta), 'g': g, 'x': x}


def eflow_from_dict(data, net):
    """Eflow from its JSON form (inverse of eflow_to_dict)"""
    if not isinstance(data, dict):
        raise EflowError('an eflow must be a JSON object')
    unknown = set(data.keys()) - _EFLOW_FIELDS - {'meta'}
    if unknown:
        raise EflowError(f'unknown field(s) {sorted(unknown)} in eflow')
    missing = _EFLOW_FIELDS - set(data.keys())
    if missing:
        raise EflowError(f'missing field(s) {sorted(missing)} in eflow')
    ef = zero_eflow(net, data['source'], data['destination'])
    for label, value in data['g'].items():
        a, b = _parse_label(label, net, 2)
        l = net.link_of(net.index(a), net.index(b))
        if (l < 0):
            raise EflowError(f'generation ratio on {label!r}, which is not a link')
        ef.g[l] = value
    terms = []
    for label, value in data['x'].items():
        a, b, c = _parse_label(label, net, 3)
        i, j = sorted((net.index(a), net.index(b)))
        terms.append((i, j, net.index(c), float(value)))
    if terms:
        m, n, k, x = zip(*terms)
        ef.m, ef.n, ef.k = np.array(m, dtype=np.int64), np.array(n, dtype=np.int64), np.array(k, dtype=np.int64)
        ef.x = np.array(x, dtype=float)
    ef.eta = float(data['eta'])
    return ef
