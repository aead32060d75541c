"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains the network data model (node and link parameters of a
quantum repeater graph), the fidelity algebra of Werner states, random
topology generation and topology file input/output.
"""

import json
import logging
import dataclasses
import numpy as np
import networkx as nx

from . import utility as ut


# initialize logger
logger = logging.getLogger(__name__)


class DegenerateFidelityError(ValueError):
    """Fidelity at or below the Werner noise floor of 1/4 (or W <= 0)"""


class TopologyError(ValueError):
    """Violation of the topology schema or of a network invariant"""


def werner_param(fidelity):
    """Fidelity parameter W of a Werner state

    Parameters
    ----------
    fidelity: float
        Fidelity of the state, in (1/4, 1]

    Returns
    -------
    w: float
        Fidelity parameter (4F - 1) / 3, in (0, 1]

    Raises
    ------
    DegenerateFidelityError:
        If the fidelity is at or below 1/4 or above 1
    """
    if not (0.25 < fidelity <= 1 + 1e-12):
        raise DegenerateFidelityError(f'degenerate fidelity {fidelity}: must lie in (1/4, 1]')
    w = (4 * fidelity - 1) / 3
    return min(w, 1.0)


def swap_fidelity(f_1, f_2, w_n):
    """Fidelity of the ebit produced by swapping two Werner ebits

    Parameters
    ----------
    f_1: float
        Fidelity of the first ebit, in [1/4, 1]
    f_2: float
        Fidelity of the second ebit, in [1/4, 1]
    w_n: float
        Fidelity parameter of the swapping node, in (0, 1]

    Returns
    -------
    f_swap: float
        Fidelity 1/4 (1 + 3 W_1 W_2 W_n) of the swapped ebit
    """
    if not ((0.25 <= f_1 <= 1) & (0.25 <= f_2 <= 1)):
        raise ValueError(f'ebit fidelities must lie in [1/4, 1], got {f_1} and {f_2}')
    if not (0 < w_n <= 1):
        raise DegenerateFidelityError(f'degenerate node fidelity parameter {w_n}: must lie in (0, 1]')
    w_1 = (4 * f_1 - 1) / 3
    w_2 = (4 * f_2 - 1) / 3
    f_swap = 0.25 * (1 + 3 * w_1 * w_2 * w_n)
    return f_swap


def _check_path(links, swap_nodes):
    if (len(links) == 0):
        raise ValueError('a path needs at least one link')
    if (len(links) != len(swap_nodes) + 1):
        raise ValueError(f'a path of {len(links)} links has {len(links) - 1} swap nodes, got {len(swap_nodes)}')
    return None


def path_fidelity(links, swap_nodes):
    """End-to-end fidelity of an ebit distributed along a path

    Parameters
    ----------
    links: list[LinkParams]
        Links of the path in order (may repeat for walks)
    swap_nodes: list[NodeParams]
        Interior nodes of the path where swapping happens

    Returns
    -------
    fidelity: float
        1/4 (1 + 3 prod(W_l) prod(W_n))

    Notes
    -----
    The product form equals folding swap_fidelity over the path
    from left to right, in any order.
    """
    _check_path(links, swap_nodes)
    w_prod = np.prod([link.w for link in links]) * np.prod([node.w for node in swap_nodes])
    fidelity = 0.25 * (1 + 3 * w_prod)
    return fidelity


def path_success_probability(links, swap_nodes):
    """Probability that one attempt on every element of a path succeeds

    Parameters
    ----------
    links: list[LinkParams]
        Links of the path in order
    swap_nodes: list[NodeParams]
        Interior nodes of the path

    Returns
    -------
    p: float
        Product of all link and node success probabilities
    """
    _check_path(links, swap_nodes)
    p = np.prod([link.q for link in links]) * np.prod([node.q for node in swap_nodes])
    return float(p)


def path_length(links, swap_nodes):
    """Additive length of a path, the sum of its link and node lengths

    Parameters
    ----------
    links: list[LinkParams]
        Links of the path in order (may repeat for walks)
    swap_nodes: list[NodeParams]
        Interior nodes of the path where swapping happens

    Returns
    -------
    z: float
        Total length, with path_fidelity = fidelity_from_length(z)
    """
    _check_path(links, swap_nodes)
    z = sum(link.zeta for link in links) + sum(node.zeta for node in swap_nodes)
    return float(z)


def length_of(w):
    """Additive length -ln(W) of a fidelity parameter

    Parameters
    ----------
    w: float, numpy.ndarray[float]
        Fidelity parameter(s) in (0, 1]

    Returns
    -------
    zeta: float, numpy.ndarray[float]
        Nonnegative length(s)
    """
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr <= 0) | np.any(w_arr > 1 + 1e-12):
        raise DegenerateFidelityError(f'degenerate fidelity parameter {w}: must lie in (0, 1]')
    zeta = np.abs(np.log(np.minimum(w_arr, 1.0)))  # abs turns -0.0 into 0.0
    if (zeta.ndim == 0):
        return float(zeta)
    return zeta


def fidelity_from_length(z):
    """Fidelity of a path with total length z

    Parameters
    ----------
    z: float, numpy.ndarray[float]
        Nonnegative path length(s)

    Returns
    -------
    fidelity: float, numpy.ndarray[float]
        1/4 (1 + 3 exp(-z))
    """
    fidelity = 0.25 * (1 + 3 * np.exp(-np.asarray(z, dtype=float)))
    if (np.ndim(fidelity) == 0):
        return float(fidelity)
    return fidelity


def length_bound(upsilon):
    """Path length bound equivalent to a fidelity bound

    Parameters
    ----------
    upsilon: float
        Fidelity bound in (1/4, 1]

    Returns
    -------
    z_bound: float
        The length bound -ln((4 upsilon - 1) / 3)
    """
    return length_of(werner_param(upsilon))


def _is_number(x):
    return isinstance(x, (int, float, np.integer, np.floating)) & (not isinstance(x, bool))


@dataclasses.dataclass(frozen=True)
class NodeParams:
    """Swap success probability q and fidelity parameter w of a repeater node"""
    q: float
    w: float = 1.0

    def __post_init__(self):
        if not (_is_number(self.q) and (0 <= self.q <= 1)):
            raise TopologyError(f'node success probability {self.q} must lie in [0, 1]')
        if not (_is_number(self.w) and (0 < self.w <= 1)):
            raise DegenerateFidelityError(f'degenerate node fidelity parameter {self.w}: must lie in (0, 1]')

    @classmethod
    def from_operations(cls, q, alpha, o_1, o_2):
        """Node from the BSM accuracy alpha and the 1- and 2-qubit operation qualities"""
        w = o_1 * o_2 * (4 * alpha**2 - 1) / 3
        return cls(q=q, w=w)

    @property
    def zeta(self):
        return length_of(self.w)


@dataclasses.dataclass(frozen=True)
class LinkParams:
    """Undirected link a-b with integer capacity, success probability and fidelity"""
    a: object
    b: object
    capacity: int
    q: float
    fidelity: float

    def __post_init__(self):
        if (self.a == self.b):
            raise TopologyError(f'link endpoints must be distinct, got {self.a!r} twice')
        if not (isinstance(self.capacity, (int, np.integer)) and (not isinstance(self.capacity, bool))
                and (self.capacity > 0)):
            raise TopologyError(f'link {self.a}-{self.b} capacity {self.capacity!r} must be a positive integer')
        if not (_is_number(self.q) and (0 <= self.q <= 1)):
            raise TopologyError(f'link {self.a}-{self.b} success probability {self.q} must lie in [0, 1]')
        if not (_is_number(self.fidelity) and (0.25 < self.fidelity <= 1)):
            raise DegenerateFidelityError(f'degenerate fidelity {self.fidelity} on link {self.a}-{self.b}: '
                                          f'must lie in (1/4, 1]')

    @property
    def w(self):
        return werner_param(self.fidelity)

    @property
    def zeta(self):
        return length_of(self.w)


class Network:
    """Undirected simple repeater graph with dense integer indices

    Parameters
    ----------
    nodes: dict[str | int, NodeParams]
        Node identifiers and their parameters, in index order
    links: list[LinkParams]
        The links, referring to node identifiers

    Notes
    -----
    Node i has identifier node_ids[i]. Link l connects link_a[l] < link_b[l].
    All parameters are also available as numpy arrays for the solvers.
    Instances are not meant to be modified after construction.
    """

    def __init__(self, nodes, links):
        self.node_ids = list(nodes.keys())
        self.id_to_index = {}
        for i, node_id in enumerate(self.node_ids):
            if isinstance(node_id, bool) or not isinstance(node_id, (str, int, np.integer)):
                raise TopologyError(f'node identifier {node_id!r} must be a string or an integer')
            if isinstance(node_id, str) and ('|' in node_id):
                raise TopologyError(f'node identifier {node_id!r} may not contain "|"')
            self.id_to_index[node_id] = i
        self._str_to_index = {str(node_id): i for i, node_id in enumerate(self.node_ids)}
        if (len(self._str_to_index) != len(self.node_ids)):
            raise TopologyError('node identifiers must stay unique when written as strings')
        self.node_params = [nodes[node_id] for node_id in self.node_ids]
        self.link_params = list(links)
        n_nodes = len(self.node_ids)
        n_links = len(self.link_params)
        # node arrays
        self.q_node = np.array([p.q for p in self.node_params], dtype=float).reshape(n_nodes)
        self.w_node = np.array([p.w for p in self.node_params], dtype=float).reshape(n_nodes)
        self.zeta_node = length_of(self.w_node) if (n_nodes > 0) else np.zeros(0)
        # link arrays, canonical a < b
        self.link_a = np.zeros(n_links, dtype=np.int64)
        self.link_b = np.zeros(n_links, dtype=np.int64)
        self.link_index = {}
        for l, link in enumerate(self.link_params):
            if (link.a not in self.id_to_index) | (link.b not in self.id_to_index):
                raise TopologyError(f'link {link.a}-{link.b} refers to an unknown node')
            i, j = sorted((self.id_to_index[link.a], self.id_to_index[link.b]))
            if (i, j) in self.link_index:
                raise TopologyError(f'more than one link between {link.a} and {link.b}')
            self.link_a[l], self.link_b[l] = i, j
            self.link_index[(i, j)] = l
        self.capacity = np.array([p.capacity for p in self.link_params], dtype=np.int64).reshape(n_links)
        self.q_link = np.array([p.q for p in self.link_params], dtype=float).reshape(n_links)
        self.fidelity = np.array([p.fidelity for p in self.link_params], dtype=float).reshape(n_links)
        self.w_link = np.minimum((4 * self.fidelity - 1) / 3, 1.0)
        self.zeta_link = length_of(self.w_link) if (n_links > 0) else np.zeros(0)
        # neighbours per node
        self.adjacency = [[] for _ in range(n_nodes)]
        for i, j in zip(self.link_a, self.link_b):
            self.adjacency[i].append(int(j))
            self.adjacency[j].append(int(i))
        self.adjacency = [sorted(adj) for adj in self.adjacency]

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def n_links(self):
        return len(self.link_params)

    def index(self, node_id):
        """Dense index of a node identifier (string form of integer ids accepted)"""
        if not isinstance(node_id, bool):
            try:
                return self.id_to_index[node_id]
            except (KeyError, TypeError):
                pass
        if str(node_id) in self._str_to_index:
            return self._str_to_index[str(node_id)]
        raise TopologyError(f'unknown node {node_id!r}')

    def link_of(self, i, j):
        """Link index between node indices i and j, or -1"""
        return self.link_index.get((min(i, j), max(i, j)), -1)

    def label(self, i, j, *rest):
        """Canonical 'm|n[|...]' label of an (extended) enode or swap term"""
        m, n = (i, j) if (i < j) else (j, i)
        parts = [self.node_ids[m], self.node_ids[n]]
        parts += list(rest)
        return '|'.join(str(p) for p in parts)

    def subnetwork(self, max_length, keep=()):
        """Network with every element longer than max_length pruned

        Parameters
        ----------
        max_length: float
            Elements with length strictly greater than this are removed
        keep: iterable[str | int]
            Node identifiers that are never removed (for example s and t)

        Returns
        -------
        sub: Network
            The pruned network, node identifiers preserved
        """
        keep_idx = {self.index(node_id) for node_id in keep}
        kept = [i for i in range(self.n_nodes) if (self.zeta_node[i] <= max_length) | (i in keep_idx)]
        kept_set = set(kept)
        nodes = {self.node_ids[i]: self.node_params[i] for i in kept}
        links = [self.link_params[l] for l in range(self.n_links)
                 if (self.zeta_link[l] <= max_length) & (self.link_a[l] in kept_set) & (self.link_b[l] in kept_set)]
        return Network(nodes, links)

    def to_networkx(self):
        """Undirected networkx graph over node indices with the link parameters as attributes"""
        graph = nx.Graph()
        for i, node_id in enumerate(self.node_ids):
            graph.add_node(i, id=node_id, q=self.q_node[i], w=self.w_node[i], zeta=self.zeta_node[i])
        for l in range(self.n_links):
            graph.add_edge(int(self.link_a[l]), int(self.link_b[l]), link=l, capacity=int(self.capacity[l]),
                           q=self.q_link[l], fidelity=self.fidelity[l], zeta=self.zeta_link[l])
        return graph

    def connected(self, s, t):
        """Whether node identifiers s and t lie in one component"""
        return nx.has_path(self.to_networkx(), self.index(s), self.index(t))

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return topology_to_dict(self) == topology_to_dict(other)

    def __repr__(self):
        return f'Network(n_nodes={self.n_nodes}, n_links={self.n_links})'


def waxman_generate(n, alpha=0.8, beta=0.8, seed=None, q_node=(0.5, 0.5), w_node=(1.0, 1.0), q_link=(0.9, 0.9),
                    fidelity=(0.7, 0.95), capacity=(26, 35), max_attempts=50):
    """Random connected Waxman network

    Parameters
    ----------
    n: int
        Number of nodes, at least 2
    alpha: float
        Waxman distance scale parameter, in (0, 1]
    beta: float
        Waxman edge density parameter, in (0, 1]
    seed: int, None
        Seed for all random draws
    q_node: tuple[float]
        Range of node swap success probabilities
    w_node: tuple[float]
        Range of node fidelity parameters
    q_link: tuple[float]
        Range of link success probabilities
    fidelity: tuple[float]
        Range of link fidelities
    capacity: tuple[int]
        Inclusive range of link capacities
    max_attempts: int
        Number of graph draws before the components are joined

    Returns
    -------
    net: Network
        Connected network with integer node identifiers 0..n-1

    Notes
    -----
    If no connected graph is drawn within max_attempts, the last draw is
    made connected by repeatedly adding the shortest Euclidean edge from
    the component of node 0 to any other node.
    """
    if (n < 2):
        raise ValueError(f'a network needs at least 2 nodes, got {n}')
    if not ((0 < alpha <= 1) & (0 < beta <= 1)):
        raise ValueError(f'alpha and beta must lie in (0, 1], got {alpha} and {beta}')
    for name, (low, high) in [('q_node', q_node), ('w_node', w_node), ('q_link', q_link),
                              ('fidelity', fidelity), ('capacity', capacity)]:
        if (low > high):
            raise ValueError(f'empty range for {name}: [{low}, {high}]')
    if (fidelity[0] <= 0.25):
        raise DegenerateFidelityError(f'degenerate fidelity range {fidelity}: must lie in (1/4, 1]')
    if (capacity[0] < 1):
        raise ValueError(f'capacities must be positive integers, got range {capacity}')
    rng = np.random.default_rng(seed)
    graph = None
    for attempt in range(max_attempts):
        graph = nx.waxman_graph(n, beta=beta, alpha=alpha, seed=int(rng.integers(2**31 - 1)))
        if nx.is_connected(graph):
            break
    else:
        logger.info(f'No connected Waxman graph in {max_attempts} attempts, joining components')
        pos = nx.get_node_attributes(graph, 'pos')
        while not nx.is_connected(graph):
            comp = nx.node_connected_component(graph, 0)
            pairs = [(np.hypot(pos[u][0] - pos[v][0], pos[u][1] - pos[v][1]), u, v)
                     for u in sorted(comp) for v in sorted(set(graph.nodes) - comp)]
            _, u, v = min(pairs)
            graph.add_edge(u, v)
    nodes = {i: NodeParams(q=float(rng.uniform(*q_node)), w=float(rng.uniform(*w_node))) for i in range(n)}
    links = []
    for u, v in sorted((min(e), max(e)) for e in graph.edges):
        links.append(LinkParams(a=u, b=v, capacity=int(rng.integers(capacity[0], capacity[1] + 1)),
                                q=float(rng.uniform(*q_link)), fidelity=float(rng.uniform(*fidelity))))
    return Network(nodes, links)


_TOP_FIELDS = {'nodes', 'links', 'meta'}
_NODE_FIELDS = {'id', 'q', 'w', 'alpha', 'o1', 'o2'}
_LINK_FIELDS = {'a', 'b', 'capacity', 'q', 'fidelity'}


def _check_fields(record, allowed, required, what):
    if not isinstance(record, dict):
        raise TopologyError(f'{what} must be a JSON object, got {type(record).__name__}')
    unknown = set(record.keys()) - allowed
    if unknown:
        raise TopologyError(f'unknown field(s) {sorted(unknown)} in {what}')
    missing = required - set(record.keys())
    if missing:
        raise TopologyError(f'missing field(s) {sorted(missing)} in {what}')
    return None


def topology_from_dict(data):
    """Network from the parsed topology JSON schema

    Parameters
    ----------
    data: dict
        {"nodes": [{"id", "q", "w"}...], "links": [{"a", "b", "capacity", "q", "fidelity"}...]}
        A node may give "alpha", "o1", "o2" instead of "w". A top-level
        "meta" object is ignored.

    Returns
    -------
    net: Network
        The network described by data
    """
    _check_fields(data, _TOP_FIELDS, {'nodes', 'links'}, 'topology')
    if not (isinstance(data['nodes'], list) & isinstance(data['links'], list)):
        raise TopologyError('"nodes" and "links" must be lists')
    nodes = {}
    for k, record in enumerate(data['nodes']):
        _check_fields(record, _NODE_FIELDS, {'id', 'q'}, f'node #{k}')
        node_id = record['id']
        if isinstance(node_id, bool) or not isinstance(node_id, (str, int)):
            raise TopologyError(f'node #{k} identifier {node_id!r} must be a string or an integer')
        if node_id in nodes:
            raise TopologyError(f'duplicate node identifier {node_id!r}')
        op_fields = {'alpha', 'o1', 'o2'} & set(record.keys())
        if ('w' in record) & (len(op_fields) == 0):
            nodes[node_id] = NodeParams(q=record['q'], w=record['w'])
        elif ('w' not in record) & (len(op_fields) == 3):
            nodes[node_id] = NodeParams.from_operations(record['q'], record['alpha'], record['o1'], record['o2'])
        else:
            raise TopologyError(f'node {node_id!r} needs either "w" or all of "alpha", "o1", "o2"')
    links = []
    for k, record in enumerate(data['links']):
        _check_fields(record, _LINK_FIELDS, _LINK_FIELDS, f'link #{k}')
        links.append(LinkParams(a=record['a'], b=record['b'], capacity=record['capacity'], q=record['q'],
                                fidelity=record['fidelity']))
    return Network(nodes, links)


def topology_to_dict(net):
    """Topology JSON schema of a network (node fidelity stored as w)"""
    nodes = [{'id': ut.plain(node_id), 'q': float(p.q), 'w': float(p.w)}
             for node_id, p in zip(net.node_ids, net.node_params)]
    links = [{'a': ut.plain(p.a), 'b': ut.plain(p.b), 'capacity': int(p.capacity), 'q': float(p.q),
              'fidelity': float(p.fidelity)} for p in net.link_params]
    return {'nodes': nodes, 'links': links}


def load_topology(file_name):
    """Read a topology JSON file

    Parameters
    ----------
    file_name: str
        Path to the file

    Returns
    -------
    net: Network
        The network, validated against the schema and its invariants
    """
    with open(file_name, 'r') as file:
        try:
            data = json.load(file)
        except json.JSONDecodeError as e:
            raise TopologyError(f'{file_name} is not valid JSON: {e}') from e
    net = topology_from_dict(data)
    logger.info(f'Loaded {file_name}: {net.n_nodes} nodes, {net.n_links} links')
    return net


def save_topology(net, file_name, meta=None):
    """Write a topology JSON file atomically

    Parameters
    ----------
    net: Network
        The network to save
    file_name: str
        Path to the file
    meta: dict, None
        Optional metadata header stored under "meta"

    Returns
    -------
    None
    """
    data = topology_to_dict(net)
    if meta is not None:
        data = {'meta': meta, **data}
    ut.write_json_atomic(file_name, data)
    return None
