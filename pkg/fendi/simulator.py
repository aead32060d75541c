"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains the discrete-time simulator of the data-plane
protocol with post-selection and storage: a plan derived from a
(layered) eflow, slotted generation, coin-toss routing of ebits into
output buffers, level-matched swapping with analytic fidelity tracking,
optional finite buffers, and the ebit ledger.
"""

import zlib
import logging
import dataclasses
import collections
import numpy as np

from . import lp
from . import eflow as ef_mod
from . import fored as fo
from . import utility as ut


# initialize logger
logger = logging.getLogger(__name__)


class PlanError(ValueError):
    """A buffer of the plan receives ebits but can pass none on"""


def stream(seed, name):
    """Independent named random generator derived from the master seed"""
    seq = np.random.SeedSequence(seed, spawn_key=(zlib.crc32(name.encode('utf-8')),))
    return np.random.default_rng(seq)


@dataclasses.dataclass
class Plan:
    """Executable form of a layered eflow

    Parameters
    ----------
    s: int
        Source index
    t: int
        Destination index
    buffers: list[tuple[int, int, int]]
        Input buffer keys (m, n, z), m < n
    terminal: numpy.ndarray[bool]
        Per input buffer: whether it holds SD ebits (delivered on arrival)
    link_rate: numpy.ndarray[float]
        Channel attempts per slot per link, c g
    link_buffer: numpy.ndarray[int]
        Input buffer receiving each link's elementary ebits, or -1
    route_terms: list[numpy.ndarray[int]]
        Per input buffer: the swap terms its ebits may be routed to
    route_sides: list[numpy.ndarray[int]]
        Per input buffer: the side of each term (0 for the {m, k} child,
        1 for the {k, n} child)
    route_cum: list[numpy.ndarray[float]]
        Per input buffer: cumulative routing probabilities
    term_node: numpy.ndarray[int]
        Swap node of each term
    term_target: numpy.ndarray[int]
        Input buffer receiving the swapped ebits of each term
    term_levels: numpy.ndarray[int]
        Per term the levels (z1, z2, z) of the children and the target
    """
    s: int
    t: int
    buffers: list
    terminal: np.ndarray
    link_rate: np.ndarray
    link_buffer: np.ndarray
    route_terms: list
    route_sides: list
    route_cum: list
    term_node: np.ndarray
    term_target: np.ndarray
    term_levels: np.ndarray

    @property
    def n_terms(self):
        return len(self.term_node)

    @property
    def empty(self):
        return not np.any(self.link_rate > 0)

    def routing_probabilities(self, buffer):
        """Routing probabilities of an input buffer (m, n, z) as {(term, side): probability}"""
        b = self.buffers.index(tuple(buffer))
        probs = np.diff(self.route_cum[b], prepend=0.0)
        return {(int(j), int(side)): float(p) for j, side, p in zip(self.route_terms[b], self.route_sides[b], probs)}

    def match_table(self):
        """Level triples (z1, z2, z) with positive flow per swap node"""
        table = {}
        for k, levels in zip(self.term_node, self.term_levels):
            table.setdefault(int(k), set()).add(tuple(int(v) for v in levels))
        return {k: sorted(triples) for k, triples in table.items()}


def derive_plan(lef, net):
    """Plan of generation rates, routing probabilities and swap matches

    Parameters
    ----------
    lef: LayeredEflow, Eflow
        A valid layered eflow; a plain eflow is executed as a single
        level layered eflow
    net: Network
        The network

    Returns
    -------
    plan: Plan
        Links attempt c g channels per slot; an input buffer routes each
        ebit to a consuming term with probability proportional to the
        term's rate

    Raises
    ------
    PlanError:
        If a non-SD input buffer receives a non-negligible rate but no
        term consumes it
    """
    if isinstance(lef, ef_mod.Eflow):
        lef = fo.layered_from_eflow(lef, net)
    s, t = lef.s, lef.t
    sd = (min(s, t), max(s, t))
    inflow, _ = fo.layered_balance(lef, net)
    on_link = (lef.g > 0) & (lef.quant.link_lengths <= lef.z_max)
    on_term = (lef.x > 0)
    m, n, z, k, z1, x = lef.m[on_term], lef.n[on_term], lef.z[on_term], lef.k[on_term], lef.z1[on_term], lef.x[on_term]
    z2 = z - z1 - lef.quant.node_lengths[k]
    buffer_index = {}

    def buffer_of(a, b, level):
        key = (int(min(a, b)), int(max(a, b)), int(level))
        if key not in buffer_index:
            buffer_index[key] = len(buffer_index)
        return buffer_index[key]

    link_buffer = -np.ones(net.n_links, dtype=np.int64)
    for l in np.nonzero(on_link)[0]:
        link_buffer[l] = buffer_of(net.link_a[l], net.link_b[l], lef.quant.link_lengths[l])
    term_target = np.array([buffer_of(m[j], n[j], z[j]) for j in range(len(x))], dtype=np.int64)
    consumers = collections.defaultdict(list)
    for j in range(len(x)):
        consumers[buffer_of(m[j], k[j], z1[j])].append((j, 0))
        consumers[buffer_of(k[j], n[j], z2[j])].append((j, 1))
    buffers = sorted(buffer_index, key=buffer_index.get)
    terminal = np.array([(key[:2] == sd) for key in buffers], dtype=bool)
    scale = lp.FEASIBILITY_TOL * max(1.0, lef.eta)
    route_terms, route_sides, route_cum = [], [], []
    for b, key in enumerate(buffers):
        pairs = consumers.get(b, [])
        if terminal[b] or (len(pairs) == 0):
            if not terminal[b]:
                received = inflow[key]
                if (received > scale):
                    raise PlanError(f'buffer {net.label(key[0], key[1], key[2])} receives {received:.6g} ebits per '
                                    f'slot but no swap consumes them')
                logger.info(f'Buffer {net.label(*key)} is a dead branch (inflow {received:.3e})')
            route_terms.append(np.zeros(0, dtype=np.int64))
            route_sides.append(np.zeros(0, dtype=np.int64))
            route_cum.append(np.zeros(0))
            continue
        js = np.array([p[0] for p in pairs], dtype=np.int64)
        sides = np.array([p[1] for p in pairs], dtype=np.int64)
        cum = np.cumsum(x[js]) / np.sum(x[js])
        cum[-1] = 1.0
        route_terms.append(js)
        route_sides.append(sides)
        route_cum.append(cum)
    link_rate = np.where(on_link, net.capacity * lef.g, 0.0)
    plan = Plan(s=s, t=t, buffers=buffers, terminal=terminal, link_rate=link_rate, link_buffer=link_buffer,
                route_terms=route_terms, route_sides=route_sides, route_cum=route_cum, term_node=k.copy(),
                term_target=term_target, term_levels=np.stack([z1, z2, z], axis=1).reshape(-1, 3))
    logger.info(f'Plan with {len(buffers)} input buffers and {len(x)} swap terms')
    return plan


@dataclasses.dataclass
class SimConfig:
    """Simulation settings

    buffer_lifetime=1 discards every stored ebit at the end of its slot
    (bufferless operation).
    """
    slots: int = 1000
    seed: int = 0
    buffer_lifetime: float = np.inf
    buffer_capacity: float = np.inf
    swap_passes: str = 'fixpoint'
    trace: bool = False

    def __post_init__(self):
        if (self.slots < 1):
            raise ValueError(f'slots must be at least 1, got {self.slots}')
        if (self.buffer_lifetime < 1) | (self.buffer_capacity < 0):
            raise ValueError('buffer lifetime must be at least 1 slot and capacity non-negative')
        if self.swap_passes not in ('fixpoint', 'single'):
            raise ValueError(f'swap_passes must be fixpoint or single, got {self.swap_passes!r}')


@dataclasses.dataclass(slots=True)
class EbitRecord:
    """An ebit in flight: its enode, level, fidelity parameter and birth slot"""
    pair: tuple
    level: int
    w: float
    birth_slot: int

    @property
    def fidelity(self):
        return (1 + 3 * self.w) / 4


@dataclasses.dataclass
class SimReport:
    """Ledger and metrics of one simulation run"""
    slots: int
    seed: int
    delivered: int
    per_ebit_fidelities: list
    min_fidelity: float
    avg_fidelity: float
    achieved_edr: float
    delta: float
    edr_satisfied: bool
    generated: int = 0
    link_attempts: int = 0
    swaps_succeeded: int = 0
    swaps_failed: int = 0
    evicted_lifetime: int = 0
    evicted_capacity: int = 0
    dead_branch: int = 0
    in_buffers: int = 0
    trace: list = None

    def ledger_balanced(self):
        """Integer conservation of elementary ebits"""
        lhs = self.generated - self.swaps_succeeded
        rhs = (self.delivered + self.in_buffers + 2 * self.swaps_failed + self.evicted_lifetime
               + self.evicted_capacity + self.dead_branch)
        return (lhs == rhs)

    def to_dict(self):
        data = dataclasses.asdict(self)
        data.pop('trace')
        data['ledger_balanced'] = self.ledger_balanced()
        return {key: ut.plain(value) for key, value in data.items()}


def _route(plan, arrivals, out_buffers, route_rng, counts, delivered_fidelities):
    """Deliver SD ebits and toss every other arrival into an output buffer"""
    for b, ebit in arrivals:
        if plan.terminal[b]:
            delivered_fidelities.append(ebit.fidelity)
            counts['delivered'] += 1
            counts['slot_delivered'] += 1
        elif (len(plan.route_terms[b]) == 0):
            counts['dead_branch'] += 1
        else:
            i = int(np.searchsorted(plan.route_cum[b], route_rng[b].random(), side='right'))
            i = min(i, len(plan.route_terms[b]) - 1)
            out_buffers[plan.route_terms[b][i]][plan.route_sides[b][i]].append(ebit)
    return None


def _swap(plan, net, out_buffers, swap_rng, counts):
    """Match ebits of every term FIFO and swap them; returns the new arrivals"""
    arrivals = []
    for k in sorted(swap_rng.keys()):
        rng = swap_rng[k]
        q_k = net.q_node[k]
        w_k = net.w_node[k]
        for j in np.nonzero(plan.term_node == k)[0]:
            left, right = out_buffers[j]
            target = plan.term_target[j]
            while left and right:
                e_1 = left.popleft()
                e_2 = right.popleft()
                if (rng.random() < q_k):
                    counts['swaps_succeeded'] += 1
                    ebit = EbitRecord(pair=plan.buffers[target][:2], level=plan.buffers[target][2],
                                      w=e_1.w * e_2.w * w_k, birth_slot=min(e_1.birth_slot, e_2.birth_slot))
                    arrivals.append((target, ebit))
                else:
                    counts['swaps_failed'] += 1
    return arrivals


def run(net, plan, cfg=None, delta=None):
    """Simulate the protocol for a number of slots

    Parameters
    ----------
    net: Network
        The network
    plan: Plan
        Plan from derive_plan
    cfg: SimConfig, None
        Settings, defaults if None
    delta: float, None
        Expected EDR bound to compare the achieved EDR against

    Returns
    -------
    report: SimReport
        Delivered ebits with their fidelities, achieved EDR and the ledger

    Notes
    -----
    Every slot: (1) each link makes floor(r) channel attempts plus one
    with probability frac(r), each succeeding with the link probability;
    (2) new ebits are routed by coin toss (SD ebits are delivered);
    (3) every swap node matches ebits FIFO per term, succeeding with its
    probability, and the swapped ebits are routed again, repeated until
    no match remains (or once with swap_passes='single'); (4) ebits that
    reached the buffer lifetime are evicted, then over-full buffers drop
    their oldest ebits. Fidelity is tracked exactly through the Werner
    parameters of every swap.
    """
    if cfg is None:
        cfg = SimConfig()
    link_rng = {l: stream(cfg.seed, f'gen|{net.label(net.link_a[l], net.link_b[l])}')
                for l in np.nonzero(plan.link_rate > 0)[0]}
    route_rng = [stream(cfg.seed, f'route|{net.label(*key)}') for key in plan.buffers]
    swap_rng = {int(k): stream(cfg.seed, f'swap|{net.node_ids[k]}') for k in np.unique(plan.term_node)}
    out_buffers = [(collections.deque(), collections.deque()) for _ in range(plan.n_terms)]
    counts = collections.Counter()
    fidelities = []
    trace = [] if cfg.trace else None
    for slot in range(cfg.slots):
        counts['slot_delivered'] = 0
        # generation
        arrivals = []
        for l, rng in link_rng.items():
            rate = plan.link_rate[l]
            attempts = int(np.floor(rate)) + int(rng.random() < (rate - np.floor(rate)))
            successes = int(rng.binomial(attempts, net.q_link[l]))
            counts['link_attempts'] += attempts
            counts['generated'] += successes
            b = plan.link_buffer[l]
            pair, level = plan.buffers[b][:2], plan.buffers[b][2]
            arrivals += [(b, EbitRecord(pair=pair, level=level, w=net.w_link[l], birth_slot=slot))
                         for _ in range(successes)]
        # routing and swapping
        _route(plan, arrivals, out_buffers, route_rng, counts, fidelities)
        while True:
            arrivals = _swap(plan, net, out_buffers, swap_rng, counts)
            _route(plan, arrivals, out_buffers, route_rng, counts, fidelities)
            if (len(arrivals) == 0) | (cfg.swap_passes == 'single'):
                break
        # eviction
        occupancy = 0
        for pair in out_buffers:
            for buffer in pair:
                if (len(buffer) > 0) and (cfg.buffer_lifetime < np.inf):
                    kept = [e for e in buffer if (slot - e.birth_slot + 1 < cfg.buffer_lifetime)]
                    counts['evicted_lifetime'] += len(buffer) - len(kept)
                    buffer.clear()
                    buffer.extend(kept)
                while (len(buffer) > cfg.buffer_capacity):
                    buffer.popleft()
                    counts['evicted_capacity'] += 1
                occupancy += len(buffer)
        if cfg.trace:
            trace.append((slot, counts['slot_delivered'], occupancy))
    delivered = counts['delivered']
    achieved = delivered / cfg.slots
    report = SimReport(slots=cfg.slots, seed=cfg.seed, delivered=delivered, per_ebit_fidelities=fidelities,
                       min_fidelity=(min(fidelities) if fidelities else None),
                       avg_fidelity=(float(np.mean(fidelities)) if fidelities else None), achieved_edr=achieved,
                       delta=delta, edr_satisfied=(None if delta is None else ef_mod.edr_satisfied(achieved, delta)),
                       generated=counts['generated'], link_attempts=counts['link_attempts'],
                       swaps_succeeded=counts['swaps_succeeded'], swaps_failed=counts['swaps_failed'],
                       evicted_lifetime=counts['evicted_lifetime'], evicted_capacity=counts['evicted_capacity'],
                       dead_branch=counts['dead_branch'], in_buffers=occupancy, trace=trace)
    if not report.ledger_balanced():
        logger.warning('Simulation ledger does not balance')
    logger.info(f'Simulated {cfg.slots} slots: {delivered} ebits delivered (EDR {achieved:.4g})')
    return report


def write_trace_csv(report, file_name):
    """Per-slot trace as CSV (slot,delivered,buffer_occupancy)"""
    if report.trace is None:
        raise ValueError('the report holds no trace, run with SimConfig(trace=True)')
    ut.write_csv_atomic(file_name, ['slot', 'delivered', 'buffer_occupancy'], report.trace, fmt='%d')
    return None
