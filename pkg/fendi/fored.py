"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains the length-bounded maximum EDR program (FORED):
quantization of element lengths, level reachability kernels, the layered
LP over extended enodes (enode plus quantized length level), its solution
type, layered decomposition and the approximate testing procedure used by
the bisection search.
"""

import logging
import dataclasses
import numpy as np
import numba as nb

from . import lp
from . import eflow as ef_mod
from . import pflow as pf


# initialize logger
logger = logging.getLogger(__name__)

# upward nudge (relative) applied before flooring scaled lengths
FLOOR_NUDGE = 1e-12


def nudged_floor(v):
    """Floor of v after a tiny upward nudge, so exact integers are not misclassified"""
    v = np.asarray(v, dtype=float)
    out = np.floor(v + FLOOR_NUDGE * np.maximum(1, np.abs(v))).astype(np.int64)
    if (out.ndim == 0):
        return int(out)
    return out


@dataclasses.dataclass
class Quantization:
    """Scale theta and positive integer lengths of every node and link"""
    theta: float
    node_lengths: np.ndarray
    link_lengths: np.ndarray

    def __post_init__(self):
        self.node_lengths = np.asarray(self.node_lengths, dtype=np.int64)
        self.link_lengths = np.asarray(self.link_lengths, dtype=np.int64)


def quantize(net, theta):
    """Quantized lengths floor(theta * zeta) + 1 of every element

    Parameters
    ----------
    net: Network
        The network
    theta: float
        Scale per unit length, positive

    Returns
    -------
    quant: Quantization
        Integer lengths, all at least 1
    """
    if not (theta > 0):
        raise ValueError(f'theta must be positive, got {theta}')
    node_lengths = nudged_floor(theta * net.zeta_node).reshape(-1) + 1
    link_lengths = nudged_floor(theta * net.zeta_link).reshape(-1) + 1
    return Quantization(theta=float(theta), node_lengths=node_lengths, link_lengths=link_lengths)


@nb.njit(cache=True)
def _is_sd_pair(a, b, s, t):
    return ((a == s) and (b == t)) or ((a == t) and (b == s))


@nb.njit(cache=True)
def level_reachability(zq_node, q_node, zq_link, z_max, s, t):
    """Which extended enodes can hold ebits at all

    Parameters
    ----------
    zq_node: numpy.ndarray[int]
        Quantized node lengths (at least 1)
    q_node: numpy.ndarray[float]
        Node swap success probabilities
    zq_link: numpy.ndarray[int]
        Symmetric matrix of quantized link lengths, 0 where no usable link
    z_max: int
        Length bound
    s: int
        Source index
    t: int
        Destination index

    Returns
    -------
    reach: numpy.ndarray[bool]
        reach[a, b, z] is True (symmetric in a, b) if some swap tree that
        never consumes the SD pair produces ab ebits at level z
    """
    n_nodes = len(zq_node)
    reach = np.zeros((n_nodes, n_nodes, z_max + 1), dtype=np.bool_)
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            z_l = zq_link[a, b]
            if (z_l > 0) and (z_l <= z_max):
                reach[a, b, z_l] = True
                reach[b, a, z_l] = True
    for z in range(1, z_max + 1):
        for m in range(n_nodes):
            for n in range(m + 1, n_nodes):
                if reach[m, n, z]:
                    continue
                for k in range(n_nodes):
                    if (k == m) or (k == n) or (q_node[k] == 0):
                        continue
                    if _is_sd_pair(m, k, s, t) or _is_sd_pair(k, n, s, t):
                        continue
                    z_rest = z - zq_node[k]
                    found = False
                    for z1 in range(1, z_rest):
                        if reach[m, k, z1] and reach[k, n, z_rest - z1]:
                            found = True
                            break
                    if found:
                        reach[m, n, z] = True
                        reach[n, m, z] = True
                        break
    return reach


@nb.njit(cache=True)
def level_usefulness(reach, zq_node, q_node, s, t):
    """Reachable extended enodes that can contribute to an SD ebit at some level"""
    n_nodes = reach.shape[0]
    z_max = reach.shape[2] - 1
    useful = np.zeros_like(reach)
    for z in range(z_max + 1):
        useful[s, t, z] = reach[s, t, z]
        useful[t, s, z] = reach[t, s, z]
    for z in range(z_max, 0, -1):
        for m in range(n_nodes):
            for n in range(m + 1, n_nodes):
                if not useful[m, n, z]:
                    continue
                for k in range(n_nodes):
                    if (k == m) or (k == n) or (q_node[k] == 0):
                        continue
                    if _is_sd_pair(m, k, s, t) or _is_sd_pair(k, n, s, t):
                        continue
                    z_rest = z - zq_node[k]
                    for z1 in range(1, z_rest):
                        z2 = z_rest - z1
                        if reach[m, k, z1] and reach[k, n, z2]:
                            useful[m, k, z1] = True
                            useful[k, m, z1] = True
                            useful[k, n, z2] = True
                            useful[n, k, z2] = True
    return useful


@nb.njit(cache=True)
def count_swap_terms(reach, useful, zq_node, q_node, s, t):
    """Number of swap terms between useful extended enodes"""
    n_nodes = reach.shape[0]
    z_max = reach.shape[2] - 1
    count = 0
    for z in range(1, z_max + 1):
        for m in range(n_nodes):
            for n in range(m + 1, n_nodes):
                if not useful[m, n, z]:
                    continue
                for k in range(n_nodes):
                    if (k == m) or (k == n) or (q_node[k] == 0):
                        continue
                    if _is_sd_pair(m, k, s, t) or _is_sd_pair(k, n, s, t):
                        continue
                    z_rest = z - zq_node[k]
                    for z1 in range(1, z_rest):
                        if reach[m, k, z1] and reach[k, n, z_rest - z1]:
                            count += 1
    return count


@nb.njit(cache=True)
def list_swap_terms(reach, useful, zq_node, q_node, s, t, n_terms):
    """Swap terms (m, n, z, k, z1) between useful extended enodes, m < n

    z1 is the level of the {m, k} child, the {k, n} child sits at
    z - z1 - zq_node[k].
    """
    n_nodes = reach.shape[0]
    z_max = reach.shape[2] - 1
    t_m = np.zeros(n_terms, dtype=np.int64)
    t_n = np.zeros(n_terms, dtype=np.int64)
    t_z = np.zeros(n_terms, dtype=np.int64)
    t_k = np.zeros(n_terms, dtype=np.int64)
    t_z1 = np.zeros(n_terms, dtype=np.int64)
    j = 0
    for z in range(1, z_max + 1):
        for m in range(n_nodes):
            for n in range(m + 1, n_nodes):
                if not useful[m, n, z]:
                    continue
                for k in range(n_nodes):
                    if (k == m) or (k == n) or (q_node[k] == 0):
                        continue
                    if _is_sd_pair(m, k, s, t) or _is_sd_pair(k, n, s, t):
                        continue
                    z_rest = z - zq_node[k]
                    for z1 in range(1, z_rest):
                        if reach[m, k, z1] and reach[k, n, z_rest - z1]:
                            t_m[j] = m
                            t_n[j] = n
                            t_z[j] = z
                            t_k[j] = k
                            t_z1[j] = z1
                            j += 1
    return t_m, t_n, t_z, t_k, t_z1


@dataclasses.dataclass
class LayeredEflow:
    """Solution of the layered program: flow over extended enodes

    Parameters
    ----------
    s: int
        Source index
    t: int
        Destination index
    g: numpy.ndarray[float]
        Generation ratio per link (ebits enter at the link's quantized level)
    m, n, z, k, z1: numpy.ndarray[int]
        Swap terms: target {m, n} (m < n) at level z, swap node k, level
        z1 of the {m, k} child
    x: numpy.ndarray[float]
        Rate per swap term
    eta: float
        SD rate summed over all levels
    z_max: int
        The length bound
    quant: Quantization
        Quantized element lengths
    """
    s: int
    t: int
    g: np.ndarray
    m: np.ndarray
    n: np.ndarray
    z: np.ndarray
    k: np.ndarray
    z1: np.ndarray
    x: np.ndarray
    eta: float
    z_max: int
    quant: Quantization

    @property
    def z2(self):
        """Level of the {k, n} child of each term"""
        return self.z - self.z1 - self.quant.node_lengths[self.k]

    def n_nonzero(self):
        return int(np.sum(self.g > 0) + np.sum(self.x > 0))

    def aggregate(self):
        """Plain eflow obtained by summing over levels"""
        if (len(self.x) == 0):
            empty = np.zeros(0, dtype=np.int64)
            return ef_mod.Eflow(self.s, self.t, self.g.copy(), empty, empty.copy(), empty.copy(), np.zeros(0),
                                self.eta)
        keys, inverse = np.unique(np.stack([self.m, self.n, self.k], axis=1), axis=0, return_inverse=True)
        x = np.bincount(inverse.reshape(-1), weights=self.x, minlength=len(keys))
        return ef_mod.Eflow(self.s, self.t, self.g.copy(), keys[:, 0].copy(), keys[:, 1].copy(), keys[:, 2].copy(),
                            x, self.eta)


def zero_layered(net, s, t, quant, z_max):
    """Layered eflow without any flow"""
    empty = np.zeros(0, dtype=np.int64)
    return LayeredEflow(net.index(s), net.index(t), np.zeros(net.n_links), empty, empty.copy(), empty.copy(),
                        empty.copy(), empty.copy(), np.zeros(0), 0.0, int(z_max), quant)


def layered_from_eflow(ef, net):
    """Plain eflow as a single-level layered eflow (every level 0)"""
    quant = Quantization(theta=0.0, node_lengths=np.zeros(net.n_nodes, dtype=np.int64),
                         link_lengths=np.zeros(net.n_links, dtype=np.int64))
    zeros = np.zeros(len(ef.x), dtype=np.int64)
    return LayeredEflow(ef.s, ef.t, ef.g.copy(), ef.m.copy(), ef.n.copy(), zeros, ef.k.copy(), zeros.copy(),
                        ef.x.copy(), ef.eta, 0, quant)


def _link_level_matrix(net, quant):
    zq_link = np.zeros((net.n_nodes, net.n_nodes), dtype=np.int64)
    usable = (net.q_link > 0)
    zq_link[net.link_a[usable], net.link_b[usable]] = quant.link_lengths[usable]
    zq_link[net.link_b[usable], net.link_a[usable]] = quant.link_lengths[usable]
    return zq_link


def solve_fored(net, s, t, quant, z_max, tol=None, backend='highs'):
    """Maximum expected EDR over walks of quantized length at most z_max

    Parameters
    ----------
    net: Network
        The network
    s: str, int
        Source node identifier
    t: str, int
        Destination node identifier
    quant: Quantization
        Integer lengths of all elements (all at least 1)
    z_max: int
        Length bound, at least 1
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    eta_z: float
        Maximum SD rate summed over levels (0 if no SD level is reachable)
    lef: LayeredEflow
        An optimal layered eflow (only positive swap terms kept)

    Notes
    -----
    Extended enodes and swap terms are only instantiated where a level
    reachability pass finds a swap tree, and where a backward pass from
    the SD levels finds them useful. Terms never consume the SD pair at
    any level, which is the layered counterpart of Omega(st) = 0.
    """
    si, ti = net.index(s), net.index(t)
    if (si == ti):
        raise ValueError(f'source and destination must differ, got {s!r} twice')
    z_max = int(z_max)
    if (z_max < 1):
        raise ValueError(f'the length bound must be at least 1, got {z_max}')
    if np.any(quant.node_lengths < 1) | np.any(quant.link_lengths < 1):
        raise ValueError('quantized lengths must be positive integers')
    n_nodes = net.n_nodes
    zq_node = quant.node_lengths
    zq_link = _link_level_matrix(net, quant)
    reach = level_reachability(zq_node, net.q_node, zq_link, z_max, si, ti)
    if not np.any(reach[si, ti]):
        return 0.0, zero_layered(net, s, t, quant, z_max)
    useful = level_usefulness(reach, zq_node, net.q_node, si, ti)
    n_terms = count_swap_terms(reach, useful, zq_node, net.q_node, si, ti)
    m, n, z, k, z1 = list_swap_terms(reach, useful, zq_node, net.q_node, si, ti, n_terms)
    z2 = z - z1 - zq_node[k]
    # usable generation variables
    link_ids = np.nonzero((net.q_link > 0) & (quant.link_lengths <= z_max))[0]
    link_ids = link_ids[useful[net.link_a[link_ids], net.link_b[link_ids], quant.link_lengths[link_ids]]]
    # one conservation row per useful extended enode except the SD pair
    upper = np.triu(np.ones((n_nodes, n_nodes), dtype=bool), 1)[:, :, np.newaxis] & useful
    upper[min(si, ti), max(si, ti), :] = False
    coords = np.nonzero(upper)
    row_idx = -np.ones(useful.shape, dtype=np.int64)
    row_idx[coords] = np.arange(len(coords[0]))
    problem = lp.LpProblem(name=f'fored_z{z_max}')
    g_gain = net.q_link[link_ids] * net.capacity[link_ids]
    g_rows = row_idx[net.link_a[link_ids], net.link_b[link_ids], quant.link_lengths[link_ids]]
    x_gain = net.q_node[k]
    x_rows = row_idx[m, n, z]
    g_vars = problem.add_variables(len(link_ids), upper=1.0, objective=np.where(g_rows < 0, g_gain, 0.0))
    x_vars = problem.add_variables(len(m), objective=np.where(x_rows < 0, x_gain, 0.0))
    left_rows = row_idx[np.minimum(m, k), np.maximum(m, k), z1]
    right_rows = row_idx[np.minimum(k, n), np.maximum(k, n), z2]
    if np.any(left_rows < 0) | np.any(right_rows < 0):
        raise ef_mod.EflowError('swap term consumes an extended enode without a conservation row')
    rows = np.concatenate([g_rows[g_rows >= 0], x_rows[x_rows >= 0], left_rows, right_rows])
    cols = np.concatenate([g_vars[g_rows >= 0], x_vars[x_rows >= 0], x_vars, x_vars])
    vals = np.concatenate([g_gain[g_rows >= 0], x_gain[x_rows >= 0], -np.ones(len(m)), -np.ones(len(m))])
    problem.add_constraints(rows, cols, vals, '==', np.zeros(len(coords[0])))
    logger.info(f'FORED program (Z={z_max}): {problem.n_variables} variables, {problem.n_constraints} constraints')
    sol = lp.solve(problem, tol=tol, backend=backend)
    if not sol.optimal:
        raise lp.LpSolverError(f'FORED program reported {sol.status}, which cannot happen for a bounded '
                               f'feasible program')
    g = np.zeros(net.n_links)
    g[link_ids] = sol.values[g_vars]
    x = sol.values[x_vars]
    keep = (x > 0)
    lef = LayeredEflow(si, ti, g, m[keep], n[keep], z[keep], k[keep], z1[keep], x[keep], float(sol.objective),
                       z_max, quant)
    return lef.eta, lef


def layered_balance(lef, net):
    """Generated and consumed rates per extended enode, arrays [a, b, z] with a < b"""
    n_nodes = net.n_nodes
    inflow = np.zeros((n_nodes, n_nodes, lef.z_max + 1))
    outflow = np.zeros((n_nodes, n_nodes, lef.z_max + 1))
    z_link = lef.quant.link_lengths
    on = (lef.g != 0) & (z_link <= lef.z_max)
    np.add.at(inflow, (net.link_a[on], net.link_b[on], z_link[on]), (net.q_link * net.capacity * lef.g)[on])
    np.add.at(inflow, (lef.m, lef.n, lef.z), net.q_node[lef.k] * lef.x)
    np.add.at(outflow, (np.minimum(lef.m, lef.k), np.maximum(lef.m, lef.k), lef.z1), lef.x)
    np.add.at(outflow, (np.minimum(lef.k, lef.n), np.maximum(lef.k, lef.n), lef.z2), lef.x)
    return inflow, outflow


def validate_layered(lef, net, tol=lp.FEASIBILITY_TOL):
    """Check levels, bounds and per extended enode conservation

    Parameters
    ----------
    lef: LayeredEflow
        The layered eflow
    net: Network
        The network
    tol: float
        Relative tolerance (scaled by max(1, magnitude))

    Returns
    -------
    report: eflow.ValidationReport
        Violations labelled 'm|n|z'
    """
    violations = []
    for l in np.nonzero((lef.g < -tol) | (lef.g > 1 + tol))[0]:
        violations.append((net.label(net.link_a[l], net.link_b[l]), 'generation ratio', float(lef.g[l])))
    for l in np.nonzero((lef.g > tol) & (lef.quant.link_lengths > lef.z_max))[0]:
        violations.append((net.label(net.link_a[l], net.link_b[l]), 'generation above the bound', float(lef.g[l])))
    z2 = lef.z2
    bad_level = (lef.z1 < 0) | (z2 < 0) | (lef.z > lef.z_max) | (lef.m >= lef.n) | (lef.k == lef.m) | (lef.k == lef.n)
    for j in np.nonzero(bad_level)[0]:
        violations.append((net.label(lef.m[j], lef.n[j], lef.z[j], net.node_ids[lef.k[j]], lef.z1[j]),
                           'malformed term', float(lef.x[j])))
    if np.any(bad_level):
        return ef_mod.ValidationReport(passed=False, violations=violations)
    for j in np.nonzero(lef.x < -tol * np.maximum(1, np.abs(lef.x)))[0]:
        violations.append((net.label(lef.m[j], lef.n[j], lef.z[j], net.node_ids[lef.k[j]], lef.z1[j]),
                           'negative rate', float(lef.x[j])))
    inflow, outflow = layered_balance(lef, net)
    s, t = min(lef.s, lef.t), max(lef.s, lef.t)
    for z in np.nonzero(outflow[s, t] > tol)[0]:
        violations.append((net.label(s, t, z), 'SD pair consumed', float(outflow[s, t, z])))
    diff = inflow - outflow
    bad = np.abs(diff) > tol * np.maximum(1, np.maximum(inflow, outflow))
    bad[s, t, :] = False
    for a, b, z in zip(*np.nonzero(bad)):
        violations.append((net.label(a, b, z), 'conservation', float(diff[a, b, z])))
    eta = float(np.sum(inflow[s, t]))
    if (abs(lef.eta - eta) > tol * max(1, abs(lef.eta))):
        violations.append((net.label(s, t), 'eta mismatch', lef.eta - eta))
    return ef_mod.ValidationReport(passed=(len(violations) == 0), violations=violations)


def decompose_layered(lef, net):
    """Decompose a layered eflow into pflows with quantized lengths

    Parameters
    ----------
    lef: LayeredEflow
        A valid layered eflow
    net: Network
        The network

    Returns
    -------
    pflows: list[Pflow]
        Pflows whose values sum to the SD rate; each tree carries the
        levels of its nodes and its quantized length equals its root level

    Notes
    -----
    Levels strictly decrease from a tree node to its children, so
    extraction needs no cycle guard. A single-level layered eflow (as made
    by layered_from_eflow) is decomposed as a plain eflow instead.
    """
    if (lef.z_max == 0):
        return pf.decompose(lef.aggregate(), net)
    report = validate_layered(lef, net)
    if not report:
        raise ef_mod.EflowError(f'cannot decompose an invalid layered eflow: {report.summary()}')
    g = lef.g.copy()
    x = lef.x.copy()
    s, t = lef.s, lef.t
    sd = (min(s, t), max(s, t))
    zq_node = lef.quant.node_lengths
    zq_link = lef.quant.link_lengths
    term_index = {}
    by_target = {}
    for j in np.lexsort((lef.z1, lef.k, lef.z, lef.n, lef.m)):
        key = (int(lef.m[j]), int(lef.n[j]), int(lef.z[j]), int(lef.k[j]), int(lef.z1[j]))
        term_index[key] = int(j)
        by_target.setdefault(key[:3], []).append(int(j))
    sd_link = net.link_of(*sd)
    sd_terms = np.array([j for key, js in by_target.items() if (key[:2] == sd) for j in js], dtype=np.int64)
    sd_levels = sorted({key[2] for key in by_target if (key[:2] == sd)}
                       | ({int(zq_link[sd_link])} if ((sd_link >= 0) and (zq_link[sd_link] <= lef.z_max)) else set()))

    def sd_rate():
        rate = np.sum(net.q_node[lef.k[sd_terms]] * x[sd_terms])
        if (sd_link >= 0) and (zq_link[sd_link] <= lef.z_max):
            rate += net.q_link[sd_link] * net.capacity[sd_link] * g[sd_link]
        return float(rate)

    def extract(zero_tol):
        failed = set()

        def grow(a, b, z):
            m, n = (a, b) if (a < b) else (b, a)
            if (m, n, z) in failed:
                return None
            l = net.link_of(a, b)
            if (l >= 0) and (zq_link[l] == z) and (g[l] > zero_tol):
                return pf.TreeNode(a, b, z=z)
            for j in by_target.get((m, n, z), []):
                if (x[j] <= zero_tol):
                    continue
                k, z1 = int(lef.k[j]), int(lef.z1[j])
                z2 = z - z1 - int(zq_node[k])
                z_left, z_right = (z1, z2) if (a == m) else (z2, z1)
                left = grow(a, k, z_left)
                right = grow(k, b, z_right) if (left is not None) else None
                if right is not None:
                    return pf.TreeNode(a, b, k=k, left=left, right=right, z=z)
            failed.add((m, n, z))
            return None

        for z in sd_levels:
            tree = grow(s, t, z)
            if tree is not None:
                return tree
        return None

    pflows = pf.peel(net, g, x, term_index, sd_rate, extract, quant=lef.quant)
    logger.info(f'Decomposed layered eflow with SD rate {lef.eta:.6g} into {len(pflows)} pflows')
    return pflows


def support_max_length(lef, net):
    """Largest true walk length over all swap trees the layered support admits

    Parameters
    ----------
    lef: LayeredEflow
        A layered eflow with positive quantized node lengths
    net: Network
        The network

    Returns
    -------
    z_plus: float
        Maximum over SD levels of the longest tree producing that level
        from positive variables (0 without SD flow)
    """
    if np.any(lef.quant.node_lengths[lef.k] < 1):
        raise ValueError('support lengths need positive quantized node lengths')
    best = {}
    for l in np.nonzero(lef.g > 0)[0]:
        if (lef.quant.link_lengths[l] <= lef.z_max):
            key = (int(net.link_a[l]), int(net.link_b[l]), int(lef.quant.link_lengths[l]))
            best[key] = max(best.get(key, 0.0), float(net.zeta_link[l]))
    z2 = lef.z2
    # children sit at strictly lower levels than their target
    for j in np.argsort(lef.z, kind='stable'):
        if (lef.x[j] <= 0):
            continue
        m, n, k = int(lef.m[j]), int(lef.n[j]), int(lef.k[j])
        left = (min(m, k), max(m, k), int(lef.z1[j]))
        right = (min(k, n), max(k, n), int(z2[j]))
        if (left in best) and (right in best):
            key = (m, n, int(lef.z[j]))
            best[key] = max(best.get(key, 0.0), best[left] + float(net.zeta_node[k]) + best[right])
    sd = (min(lef.s, lef.t), max(lef.s, lef.t))
    lengths = [value for key, value in best.items() if (key[:2] == sd)]
    return max(lengths, default=0.0)


def approximate_test(net, s, t, delta, z_bound, eps, return_solution=False, tol=None, backend='highs'):
    """Approximate test of whether the EDR bound is met within length z_bound

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
    z_bound: float
        Length bound to test, positive
    eps: float
        Accuracy, positive
    return_solution: bool
        Also return the layered solution that was solved
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    outcome: bool
        True means the optimal length is at most (1 + eps) z_bound,
        False means it is larger than z_bound
    lef: LayeredEflow
        Only if return_solution is set

    Notes
    -----
    Quantizes with theta = (2N - 3) / (eps z_bound) and solves the layered
    program at Z = floor(theta z_bound) + 2N - 3.
    """
    n_nodes = net.n_nodes
    if (n_nodes < 2):
        raise ValueError(f'the network needs at least 2 nodes, got {n_nodes}')
    if not ((z_bound > 0) & (eps > 0) & (delta > 0)):
        raise ValueError(f'z_bound, eps and delta must be positive, got {z_bound}, {eps}, {delta}')
    n_elements = 2 * n_nodes - 3
    theta = n_elements / (eps * z_bound)
    quant = quantize(net, theta)
    z_max = nudged_floor(theta * z_bound) + n_elements
    eta, lef = solve_fored(net, s, t, quant, z_max, tol=tol, backend=backend)
    outcome = bool((eta > 0) and ef_mod.edr_satisfied(eta, delta))
    logger.info(f'TEST(Z={z_bound:.6g}, eps={eps}): eta={eta:.6g} at quantized bound {z_max} -> {outcome}')
    if return_solution:
        return outcome, lef
    return outcome


# the name used by the bisection literature
test = approximate_test


def layered_to_dict(lef, net):
    """JSON form of a layered eflow keyed by 'm|n|z' and 'm|n|z|k|z1' labels"""
    zq_link = lef.quant.link_lengths
    g = {net.label(net.link_a[l], net.link_b[l], int(zq_link[l])): float(lef.g[l]) for l in np.nonzero(lef.g > 0)[0]}
    x = {net.label(lef.m[j], lef.n[j], int(lef.z[j]), net.node_ids[lef.k[j]], int(lef.z1[j])): float(lef.x[j])
         for j in np.nonzero(lef.x > 0)[0]}
    return {'source': net.node_ids[lef.s], 'destination': net.node_ids[lef.t], 'eta': float(lef.eta),
            'z_max': int(lef.z_max), 'theta': float(lef.quant.theta),
            'node_lengths': {str(i): int(v) for i, v in zip(net.node_ids, lef.quant.node_lengths)},
            'link_lengths': {net.label(a, b): int(v) for a, b, v in zip(net.link_a, net.link_b, zq_link)},
            'g': g, 'x': x}


_LAYERED_FIELDS = {'source', 'destination', 'eta', 'z_max', 'theta', 'node_lengths', 'link_lengths', 'g', 'x'}


def layered_from_dict(data, net):
    """Layered eflow from its JSON form (inverse of layered_to_dict)"""
    if not isinstance(data, dict):
        raise ef_mod.EflowError('a layered eflow must be a JSON object')
    unknown = set(data.keys()) - _LAYERED_FIELDS - {'meta'}
    if unknown:
        raise ef_mod.EflowError(f'unknown field(s) {sorted(unknown)} in layered eflow')
    missing = _LAYERED_FIELDS - set(data.keys())
    if missing:
        raise ef_mod.EflowError(f'missing field(s) {sorted(missing)} in layered eflow')
    node_lengths = np.zeros(net.n_nodes, dtype=np.int64)
    for label, value in data['node_lengths'].items():
        node_lengths[net.index(label)] = value
    link_lengths = np.zeros(net.n_links, dtype=np.int64)
    for label, value in data['link_lengths'].items():
        a, b = ef_mod._parse_label(label, net, 2)
        link_lengths[net.link_of(net.index(a), net.index(b))] = value
    quant = Quantization(theta=float(data['theta']), node_lengths=node_lengths, link_lengths=link_lengths)
    lef = zero_layered(net, data['source'], data['destination'], quant, int(data['z_max']))
    for label, value in data['g'].items():
        a, b, z = ef_mod._parse_label(label, net, 3)
        l = net.link_of(net.index(a), net.index(b))
        if (l < 0) or (int(z) != link_lengths[l]):
            raise ef_mod.EflowError(f'generation ratio on {label!r} does not match a link and its level')
        lef.g[l] = value
    terms = []
    for label, value in data['x'].items():
        a, b, z, c, z1 = ef_mod._parse_label(label, net, 5)
        i, j = sorted((net.index(a), net.index(b)))
        terms.append((i, j, int(z), net.index(c), int(z1), float(value)))
    if terms:
        m, n, z, k, z1, x = zip(*terms)
        lef.m, lef.n, lef.z = np.array(m, dtype=np.int64), np.array(n, dtype=np.int64), np.array(z, dtype=np.int64)
        lef.k, lef.z1 = np.array(k, dtype=np.int64), np.array(z1, dtype=np.int64)
        lef.x = np.array(x, dtype=float)
    lef.eta = float(data['eta'])
    return lef
