"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains primitive flows (pflows): binary swap trees over a
walk, their ebit generation ratios, the decomposition of an eflow into
pflows, pflow fidelity, the path-based LP and a brute-force oracle for the
optimal fidelity problem on small networks.
"""

import logging
import functools
import dataclasses
import numpy as np
import networkx as nx

from . import lp
from . import eflow as ef_mod
from . import network as nw


# initialize logger
logger = logging.getLogger(__name__)

# residual SD rate (relative) at which decomposition stops
RESIDUAL_RTOL = 1e-9
# residual SD rate (relative) tolerated when extraction gets stuck
STUCK_RTOL = 1e-6


class UnreachableRateError(ValueError):
    """A swap tree contains an element with zero success probability"""


class DecompositionError(ef_mod.EflowError):
    """No pflow can be extracted although SD rate remains"""


@dataclasses.dataclass
class TreeNode:
    """Node of a swap tree, oriented along the walk from a to b

    Parameters
    ----------
    a: int
        Index of the first endpoint along the walk
    b: int
        Index of the second endpoint along the walk
    k: int
        Swap node index, or -1 for generation over the link a-b
    left: TreeNode, None
        Subtree over (a, k)
    right: TreeNode, None
        Subtree over (k, b)
    z: int
        Level in a layered eflow, or -1
    """
    a: int
    b: int
    k: int = -1
    left: 'TreeNode' = None
    right: 'TreeNode' = None
    z: int = -1

    @property
    def is_gen(self):
        return (self.k < 0)

    def enode(self):
        return (min(self.a, self.b), max(self.a, self.b))


def tree_leaves(tree):
    """Generation leaves from left to right"""
    stack = [tree]
    leaves = []
    while stack:
        node = stack.pop()
        if node.is_gen:
            leaves.append(node)
        else:
            stack.append(node.right)
            stack.append(node.left)
    return leaves


def tree_swap_nodes(tree):
    """Swap node indices in walk order (in-order traversal)"""
    if tree.is_gen:
        return []
    return tree_swap_nodes(tree.left) + [tree.k] + tree_swap_nodes(tree.right)


def tree_walk(tree):
    """Node indices of the walk represented by a tree"""
    return [tree.a] + [leaf.b for leaf in tree_leaves(tree)]


def tree_links(tree, net):
    """Link indices of the leaves from left to right"""
    links = []
    for leaf in tree_leaves(tree):
        l = net.link_of(leaf.a, leaf.b)
        if (l < 0):
            raise ValueError(f'tree leaf {net.label(leaf.a, leaf.b)} is not a link')
        links.append(l)
    return links


def tree_length(tree, net):
    """True walk length: sum of link and swap node lengths, with multiplicity"""
    return float(np.sum(net.zeta_link[tree_links(tree, net)]) + np.sum(net.zeta_node[tree_swap_nodes(tree)]))


def tree_quantized_length(tree, net, quant):
    """Quantized walk length under a Quantization"""
    return int(np.sum(quant.link_lengths[tree_links(tree, net)]) + np.sum(quant.node_lengths[tree_swap_nodes(tree)]))


def left_deep_tree(walk):
    """Swap tree that merges the links of a walk from left to right"""
    tree = TreeNode(walk[0], walk[1])
    for i in range(2, len(walk)):
        tree = TreeNode(walk[0], walk[i], k=walk[i - 1], left=tree, right=TreeNode(walk[i - 1], walk[i]))
    return tree


def all_tree_shapes(walk):
    """Every binary swap tree over a walk (Catalan many)

    Parameters
    ----------
    walk: list[int]
        Node indices, at least two

    Returns
    -------
    trees: list[TreeNode]
        All trees; subtrees are shared between trees
    """
    walk = tuple(walk)

    @functools.lru_cache(maxsize=None)
    def shapes(i, j):
        if (j == i + 1):
            return (TreeNode(walk[i], walk[j]),)
        out = []
        for p in range(i + 1, j):
            for left in shapes(i, p):
                for right in shapes(p, j):
                    out.append(TreeNode(walk[i], walk[j], k=walk[p], left=left, right=right))
        return tuple(out)

    if (len(walk) < 2):
        raise ValueError('a walk needs at least two nodes')
    return list(shapes(0, len(walk) - 1))


def term_key(node):
    """Key of the swap variable used by a swap tree node

    (m, n, k) for plain trees, (m, n, z, k, z1) for layered trees, with
    m < n and z1 the level of the child over {m, k}.
    """
    m, n = node.enode()
    if (node.z < 0):
        return (m, n, node.k)
    z1 = node.left.z if (node.a == m) else node.right.z
    return (m, n, node.z, node.k, z1)


def ratios(tree, net):
    """Ebit generation ratios of a pflow per delivered SD ebit

    Parameters
    ----------
    tree: TreeNode
        The swap tree
    net: Network
        The network

    Returns
    -------
    g_ratio: dict[int, float]
        Generation ratio per link index (q c g per unit of SD rate is psi)
    f_ratio: dict[tuple, float]
        Swap rate per unit SD rate, keyed by term_key

    Raises
    ------
    UnreachableRateError:
        If any link or swap node of the tree has zero success probability

    Notes
    -----
    The root is seeded with demand 1. A swap at k passes demand psi / q_k
    to both children and needs psi / q_k swaps; a generation leaf needs a
    ratio of psi / (q c) of its link. Repeated elements accumulate.
    """
    g_ratio = {}
    f_ratio = {}
    stack = [(tree, 1.0)]
    while stack:
        node, psi = stack.pop()
        if node.is_gen:
            l = net.link_of(node.a, node.b)
            if (l < 0):
                raise ValueError(f'tree leaf {net.label(node.a, node.b)} is not a link')
            if (net.q_link[l] == 0):
                raise UnreachableRateError(f'link {net.label(node.a, node.b)} has zero success probability')
            g_ratio[l] = g_ratio.get(l, 0.0) + psi / (net.q_link[l] * net.capacity[l])
        else:
            q_k = net.q_node[node.k]
            if (q_k == 0):
                raise UnreachableRateError(f'node {net.node_ids[node.k]} has zero swap success probability')
            f = psi / q_k
            key = term_key(node)
            f_ratio[key] = f_ratio.get(key, 0.0) + f
            stack.append((node.left, f))
            stack.append((node.right, f))
    return g_ratio, f_ratio


@dataclasses.dataclass
class Pflow:
    """A primitive flow: one swap tree with its ratios, rate and fidelity"""
    tree: TreeNode
    g_ratio: dict
    f_ratio: dict
    value: float
    fidelity: float
    length: float
    walk: list
    quantized_length: int = -1


def pflow_fidelity(p, net):
    """End-to-end fidelity of the ebits of a pflow

    Parameters
    ----------
    p: Pflow, TreeNode
        The pflow (or its tree)
    net: Network
        The network

    Returns
    -------
    fidelity: float
        Path fidelity over the leaf links and swap nodes, with multiplicity
    """
    tree = p.tree if isinstance(p, Pflow) else p
    links = [net.link_params[l] for l in tree_links(tree, net)]
    nodes = [net.node_params[k] for k in tree_swap_nodes(tree)]
    return nw.path_fidelity(links, nodes)


def make_pflow(tree, net, value, quant=None):
    """Pflow record of a tree carrying rate value"""
    g_ratio, f_ratio = ratios(tree, net)
    q_len = -1 if (quant is None) else tree_quantized_length(tree, net, quant)
    return Pflow(tree=tree, g_ratio=g_ratio, f_ratio=f_ratio, value=float(value), fidelity=pflow_fidelity(tree, net),
                 length=tree_length(tree, net), walk=tree_walk(tree), quantized_length=q_len)


def peel(net, g, x, term_index, sd_rate, extract, quant=None):
    """Repeatedly extract a tree, give it the largest rate the variables allow and subtract it

    Parameters
    ----------
    net: Network
        The network
    g: numpy.ndarray[float]
        Generation ratios, modified in place
    x: numpy.ndarray[float]
        Swap rates, modified in place
    term_index: dict[tuple, int]
        Position in x of every term key
    sd_rate: callable
        sd_rate() -> remaining SD rate of the working variables
    extract: callable
        extract(zero_tol) -> TreeNode over positive variables, or None
    quant: Quantization, None
        Quantization for the quantized lengths of layered trees

    Returns
    -------
    pflows: list[Pflow]
        The extracted pflows in extraction order

    Notes
    -----
    Every iteration sets at least one variable to exactly zero, so the
    number of pflows is at most the number of initially positive variables.
    """
    pflows = []
    scale = max(1.0, sd_rate())
    while True:
        remaining = sd_rate()
        if (remaining <= RESIDUAL_RTOL * scale):
            break
        zero_tol = 1e-12 * max(1.0, np.max(g, initial=0.0), np.max(x, initial=0.0))
        tree = extract(zero_tol)
        if tree is None:
            if (remaining <= STUCK_RTOL * scale):
                logger.info(f'Decomposition stopped with residual SD rate {remaining:.3e}')
                break
            raise DecompositionError(f'no pflow can be extracted with SD rate {remaining:.6g} remaining: '
                                     f'generation ways are blocked by cyclic dependencies')
        g_ratio, f_ratio = ratios(tree, net)
        # rate limited by the tightest variable of the tree
        candidates = [(g[l] / r, 'g', l) for l, r in g_ratio.items()]
        candidates += [(x[term_index[key]] / r, 'x', term_index[key]) for key, r in f_ratio.items()]
        value, kind, arg = min(candidates)
        for l, r in g_ratio.items():
            g[l] -= value * r
        for key, r in f_ratio.items():
            x[term_index[key]] -= value * r
        if (kind == 'g'):
            g[arg] = 0.0
        else:
            x[arg] = 0.0
        g[g <= zero_tol] = 0.0
        x[x <= zero_tol] = 0.0
        pflows.append(make_pflow(tree, net, value, quant=quant))
    return pflows


def decompose(ef, net, tol=None, backend='highs'):
    """Decompose a valid eflow into pflows

    Parameters
    ----------
    ef: Eflow
        A valid eflow
    net: Network
        The network
    tol: lp.Tolerances, None
        LP tolerances used when pruning
    backend: str
        LP backend name

    Returns
    -------
    pflows: list[Pflow]
        Pflows whose values sum to the SD rate of the eflow

    Raises
    ------
    EflowError:
        If the eflow fails validation
    DecompositionError:
        If extraction is blocked before the SD rate is exhausted

    Notes
    -----
    Non-contributing flow is pruned first. Each tree is extracted depth
    first from the SD pair, preferring generation over swapping and then
    the swap node of lowest index. An enode is used at most once per tree;
    a candidate whose subtree would reuse an enode is skipped and the next
    candidate is tried (backtracking).
    """
    report = ef_mod.validate_eflow(net, ef)
    if not report:
        raise ef_mod.EflowError(f'cannot decompose an invalid eflow: {report.summary()}')
    work = ef_mod.prune_noncontributing(ef, net, tol=tol, backend=backend)
    g = work.g.copy()
    x = work.x.copy()
    s, t = work.s, work.t
    sd = (min(s, t), max(s, t))
    term_index = {}
    by_target = {}
    order = np.lexsort((work.k, work.n, work.m))
    for j in order:
        key = (int(work.m[j]), int(work.n[j]), int(work.k[j]))
        term_index[key] = int(j)
        by_target.setdefault(key[:2], []).append(int(j))
    sd_link = net.link_of(*sd)
    sd_terms = np.array(by_target.get(sd, []), dtype=np.int64)

    def sd_rate():
        rate = np.sum(net.q_node[work.k[sd_terms]] * x[sd_terms])
        if (sd_link >= 0):
            rate += net.q_link[sd_link] * net.capacity[sd_link] * g[sd_link]
        return float(rate)

    def extract(zero_tol):
        used = set()

        def grow(a, b):
            key = (min(a, b), max(a, b))
            if key in used:
                return None
            used.add(key)
            l = net.link_of(a, b)
            if (l >= 0) and (g[l] > zero_tol):
                return TreeNode(a, b)
            for j in by_target.get(key, []):
                if (x[j] <= zero_tol):
                    continue
                k = int(work.k[j])
                snapshot = set(used)
                left = grow(a, k)
                right = grow(k, b) if (left is not None) else None
                if right is not None:
                    return TreeNode(a, b, k=k, left=left, right=right)
                used.clear()
                used.update(snapshot)
            used.discard(key)
            return None

        return grow(s, t)

    pflows = peel(net, g, x, term_index, sd_rate, extract)
    logger.info(f'Decomposed eflow with SD rate {work.eta:.6g} into {len(pflows)} pflows')
    return pflows


def _path_columns(net, walks, trees):
    columns = []
    for p_idx, walk in enumerate(walks):
        shapes = all_tree_shapes(walk) if (trees == 'all') else [left_deep_tree(walk)]
        for tree in shapes:
            try:
                g_ratio, _ = ratios(tree, net)
            except UnreachableRateError:
                continue
            columns.append((p_idx, g_ratio))
    return columns


def _path_lp(net, walks, trees='all', tol=None, backend='highs'):
    """Path LP over index walks; returns eta and the value per walk"""
    if trees not in ('all', 'left-deep'):
        raise ValueError(f'trees must be "all" or "left-deep", got {trees!r}')
    values = np.zeros(len(walks))
    columns = _path_columns(net, walks, trees)
    if (len(columns) == 0):
        return 0.0, values
    problem = lp.LpProblem(name='path')
    handles = problem.add_variables(len(columns), objective=1.0)
    rows, cols, vals = [], [], []
    for h, (_, g_ratio) in zip(handles, columns):
        for l, r in g_ratio.items():
            rows.append(l)
            cols.append(h)
            vals.append(r)
    problem.add_constraints(rows, cols, vals, '<=', np.ones(net.n_links))
    sol = lp.solve(problem, tol=tol, backend=backend)
    if not sol.optimal:
        raise lp.LpSolverError(f'path program reported {sol.status}')
    for h, (p_idx, _) in zip(handles, columns):
        values[p_idx] += sol.values[h]
    return float(sol.objective), values


def solve_path_lp(net, s, t, paths, trees='all', tol=None, backend='highs'):
    """Maximum expected EDR over pflows on an explicit set of walks

    Parameters
    ----------
    net: Network
        The network
    s: str, int
        Source node identifier
    t: str, int
        Destination node identifier
    paths: list[list[str | int]]
        Walks from s to t as node identifiers
    trees: str
        'all' to offer every swap tree of each walk, 'left-deep' for one
        left-deep tree per walk
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    eta: float
        Maximum total rate with no link used at a ratio above 1
    values: numpy.ndarray[float]
        Rate per walk (summed over its trees)
    """
    si, ti = net.index(s), net.index(t)
    walks = []
    for walk in paths:
        idx = [net.index(v) for v in walk]
        if (len(idx) < 2) or (idx[0] != si) or (idx[-1] != ti):
            raise ValueError(f'walk {walk} does not run from {s} to {t}')
        for a, b in zip(idx[:-1], idx[1:]):
            if (net.link_of(a, b) < 0):
                raise ValueError(f'walk {walk} uses the missing link {net.label(a, b)}')
        walks.append(idx)
    return _path_lp(net, walks, trees=trees, tol=tol, backend=backend)


def brute_force_ofred(net, s, t, delta, max_nodes_guard=8, trees='all', tol=None, backend='highs'):
    """Exact optimal length bound by enumerating simple paths (small networks only)

    Parameters
    ----------
    net: Network
        The network
    s: str, int
        Source node identifier
    t: str, int
        Destination node identifier
    delta: float
        Expected EDR bound
    max_nodes_guard: int
        Refuse networks with more nodes than this
    trees: str
        Tree shapes offered per path, see solve_path_lp
    tol: lp.Tolerances, None
        LP tolerances
    backend: str
        LP backend name

    Returns
    -------
    z_star: float
        Smallest path length threshold at which the paths no longer than
        it support delta
    certificate: dict[tuple, float]
        Rate per path (tuple of node identifiers) at z_star

    Raises
    ------
    UnachievableEdrError:
        If all simple paths together cannot support delta
    """
    if (net.n_nodes > max_nodes_guard):
        raise ValueError(f'brute force refused for {net.n_nodes} nodes (guard {max_nodes_guard})')
    si, ti = net.index(s), net.index(t)
    walks = []
    lengths = []
    for walk in nx.all_simple_paths(net.to_networkx(), si, ti):
        tree = left_deep_tree(walk)
        links = tree_links(tree, net)
        if np.any(net.q_link[links] == 0) | np.any(net.q_node[walk[1:-1]] == 0):
            continue
        walks.append(walk)
        lengths.append(tree_length(tree, net))
    lengths = np.array(lengths)
    thresholds = np.unique(lengths)

    def eta_at(i):
        chosen = [w for w, length in zip(walks, lengths) if (length <= thresholds[i])]
        eta, values = _path_lp(net, chosen, trees=trees, tol=tol, backend=backend)
        return eta, chosen, values

    if (len(thresholds) == 0):
        raise ef_mod.UnachievableEdrError(f'EDR bound {delta} unachievable: no usable path', eta_star=0.0)
    eta_all, _, _ = eta_at(len(thresholds) - 1)
    if not ef_mod.edr_satisfied(eta_all, delta):
        raise ef_mod.UnachievableEdrError(f'EDR bound {delta} unachievable over simple paths '
                                          f'(maximum {eta_all:.6g})', eta_star=eta_all)
    low, high = -1, len(thresholds) - 1
    while (high > low + 1):
        mid = (low + high) // 2
        if ef_mod.edr_satisfied(eta_at(mid)[0], delta):
            high = mid
        else:
            low = mid
    _, chosen, values = eta_at(high)
    certificate = {tuple(net.node_ids[v] for v in w): float(val) for w, val in zip(chosen, values) if (val > 0)}
    return float(thresholds[high]), certificate


def pflows_to_list(pflows, net):
    """JSON records {walk, value, fidelity, length} of pflows, in order"""
    records = []
    for p in pflows:
        record = {'walk': [net.node_ids[v] for v in p.walk], 'value': float(p.value), 'fidelity': float(p.fidelity),
                  'length': float(p.length)}
        if (p.quantized_length >= 0):
            record['quantized_length'] = int(p.quantized_length)
        records.append(record)
    return records
