"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains the command-line interface: topology generation,
maximum EDR, FENDI planning, the trade-off sweep, decomposition and
simulation, each writing reproducible JSON or CSV files.

Exit codes: 0 on success, 2 if the EDR bound is unachievable (or on a
usage error), 1 on any other error.
"""

import os
import sys
import argparse
import logging
import dataclasses
import numpy as np

from . import network as nw
from . import eflow as ef
from . import pflow as pf
from . import fored as fo
from . import fptas as fp
from . import simulator as sim
from . import utility as ut
from . import main_functions as mf


# initialize logger
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNACHIEVABLE = 2
# destinations only, they do not change any result
OUTPUT_FIELDS = ('output', 'trace', 'hdf5')


def default_seed():
    """Seed from the FENDI_SEED environment variable, 0 if unset"""
    return int(os.environ.get('FENDI_SEED', 0))


@dataclasses.dataclass
class RunConfig:
    """All options of one command, validated before any solve

    A buffer lifetime or capacity of None means unlimited.
    """
    command: str
    topology: str = None
    source: str = None
    destination: str = None
    delta: float = None
    eps: float = 0.5
    steps: int = 10
    jobs: int = 1
    seed: int = 0
    output: str = None
    # generator
    nodes: int = 15
    alpha: float = 0.8
    beta: float = 0.8
    q_node: tuple = (0.5, 0.5)
    w_node: tuple = (1.0, 1.0)
    q_link: tuple = (0.9, 0.9)
    fidelity: tuple = (0.7, 0.95)
    capacity: tuple = (26, 35)
    # decomposition and simulation input
    flow: str = None
    slots: int = 1000
    buffer_lifetime: int = None
    buffer_capacity: int = None
    swap_passes: str = 'fixpoint'
    trace: str = None
    hdf5: str = None

    def validate(self):
        """Raise ValueError on an inconsistent configuration"""
        if (self.command == 'gen'):
            if (self.nodes < 2):
                raise ValueError(f'--nodes must be at least 2, got {self.nodes}')
            if not ((0 < self.alpha <= 1) & (0 < self.beta <= 1)):
                raise ValueError('--alpha and --beta must lie in (0, 1]')
            for name in ['q_node', 'w_node', 'q_link', 'fidelity', 'capacity']:
                low, high = getattr(self, name)
                if (low > high):
                    raise ValueError(f'--{name.replace("_", "-")} range is empty: {low} > {high}')
            if not ((0 <= self.q_node[0]) & (self.q_node[1] <= 1) & (0 <= self.q_link[0]) & (self.q_link[1] <= 1)):
                raise ValueError('success probabilities must lie in [0, 1]')
            if not ((0.25 < self.fidelity[0]) & (self.fidelity[1] <= 1)):
                raise ValueError('link fidelities must lie in (1/4, 1]')
            if not ((0 < self.w_node[0]) & (self.w_node[1] <= 1)):
                raise ValueError('node fidelity parameters must lie in (0, 1]')
            if (self.capacity[0] < 1):
                raise ValueError('capacities must be positive integers')
            return None
        if self.topology is None:
            raise ValueError('a topology file is required (-t)')
        if (self.command in ('ored', 'fendi', 'pareto')) & ((self.source is None) | (self.destination is None)):
            raise ValueError('a source (-s) and destination (-d) are required')
        if (self.command == 'fendi') & ((self.delta is None) or not (self.delta > 0)):
            raise ValueError('--delta must be positive')
        if not (self.eps > 0):
            raise ValueError(f'--eps must be positive, got {self.eps}')
        if (self.steps < 2):
            raise ValueError(f'--steps must be at least 2, got {self.steps}')
        if (self.jobs < 1):
            raise ValueError(f'--jobs must be at least 1, got {self.jobs}')
        if (self.command in ('decompose', 'simulate')) & (self.flow is None):
            raise ValueError('a flow file is required (-f)')
        if (self.slots < 1):
            raise ValueError(f'--slots must be at least 1, got {self.slots}')
        if (self.buffer_lifetime is not None) and (self.buffer_lifetime < 1):
            raise ValueError('--buffer-lifetime must be at least 1')
        if (self.buffer_capacity is not None) and (self.buffer_capacity < 0):
            raise ValueError('--buffer-capacity must be non-negative')
        return None

    def output_or(self, suffix):
        """The output path, or one derived from the topology file name"""
        if self.output is not None:
            return self.output
        return os.path.splitext(self.topology)[0] + suffix

    def as_meta(self):
        """Settings that decide the result, for the metadata header and its hash"""
        config = dataclasses.asdict(self)
        return {key: (list(value) if isinstance(value, tuple) else value) for key, value in config.items()
                if key not in OUTPUT_FIELDS}


def load_flow(data, net):
    """Eflow or LayeredEflow from a flow JSON file: a plain or layered eflow or a FENDI solution"""
    if 'layered' in data:
        return fo.layered_from_dict(data['layered'], net)
    if 'z_max' in data:
        return fo.layered_from_dict(data, net)
    return ef.eflow_from_dict(data, net)


def cmd_gen(cfg):
    net = nw.waxman_generate(cfg.nodes, alpha=cfg.alpha, beta=cfg.beta, seed=cfg.seed, q_node=cfg.q_node,
                             w_node=cfg.w_node, q_link=cfg.q_link, fidelity=cfg.fidelity, capacity=cfg.capacity)
    nw.save_topology(net, cfg.output, meta=ut.meta_header(cfg.as_meta(), command='gen'))
    print(f'{net.n_nodes} nodes, {net.n_links} links, connected: {_all_connected(net)} -> {cfg.output}')
    return None


def _all_connected(net):
    return all(net.connected(net.node_ids[0], node_id) for node_id in net.node_ids[1:])


def cmd_ored(cfg):
    net = nw.load_topology(cfg.topology)
    eta, eflow = ef.solve_ored(net, cfg.source, cfg.destination)
    file_name = cfg.output_or('_ored.json')
    ut.write_json_atomic(file_name, {'meta': ut.meta_header(cfg.as_meta(), command='ored'),
                                     **ef.eflow_to_dict(eflow, net)})
    print(f'maximum expected EDR between {cfg.source} and {cfg.destination}: {eta:.6g} -> {file_name}')
    return None


def cmd_fendi(cfg):
    net = nw.load_topology(cfg.topology)
    solution = fp.fendi(net, cfg.source, cfg.destination, cfg.delta, eps=cfg.eps)
    file_name = cfg.output_or('_fendi.json')
    ut.write_json_atomic(file_name, {'meta': ut.meta_header(cfg.as_meta(), command='fendi'),
                                     **fp.solution_to_dict(solution, net)})
    if cfg.hdf5 is not None:
        ut.save_solution_hdf5(cfg.hdf5, solution, net, description='FENDI plan')
    print(f'eta: {solution.eta:.6g}, worst_fidelity: {solution.worst_fidelity:.6f}, z_plus: {solution.z_plus:.6g}, '
          f'{len(solution.pflows)} pflows -> {file_name}')
    return None


def cmd_pareto(cfg):
    net = nw.load_topology(cfg.topology)
    points = fp.pareto_sweep(net, cfg.source, cfg.destination, eps=cfg.eps, steps=cfg.steps, jobs=cfg.jobs)
    file_name = cfg.output_or('_pareto.csv')
    fp.pareto_to_csv(points, file_name)
    for p in points:
        print(f'delta {p.delta:.6g}: eta {p.eta:.6g}, worst_fidelity {p.worst_fidelity:.6f}')
    print(f'{len(points)} points -> {file_name}')
    return None


def cmd_decompose(cfg):
    net = nw.load_topology(cfg.topology)
    data, _ = ut.read_json(cfg.flow)
    flow = load_flow(data, net)
    if isinstance(flow, fo.LayeredEflow):
        pflows = fo.decompose_layered(flow, net)
    else:
        pflows = pf.decompose(flow, net)
    file_name = cfg.output_or('_pflows.json')
    ut.write_json_atomic(file_name, {'meta': ut.meta_header(cfg.as_meta(), command='decompose'),
                                     'eta': float(flow.eta), 'pflows': pf.pflows_to_list(pflows, net)})
    print(f'{len(pflows)} pflows with total rate {sum(p.value for p in pflows):.6g} -> {file_name}')
    return None


def cmd_simulate(cfg):
    net = nw.load_topology(cfg.topology)
    data, _ = ut.read_json(cfg.flow)
    plan = sim.derive_plan(load_flow(data, net), net)
    sim_cfg = sim.SimConfig(slots=cfg.slots, seed=cfg.seed,
                            buffer_lifetime=(np.inf if (cfg.buffer_lifetime is None) else cfg.buffer_lifetime),
                            buffer_capacity=(np.inf if (cfg.buffer_capacity is None) else cfg.buffer_capacity),
                            swap_passes=cfg.swap_passes, trace=(cfg.trace is not None))
    report = sim.run(net, plan, sim_cfg, delta=cfg.delta)
    file_name = cfg.output_or('_sim.json')
    ut.write_json_atomic(file_name, {'meta': ut.meta_header(cfg.as_meta(), command='simulate'), **report.to_dict()})
    if cfg.trace is not None:
        sim.write_trace_csv(report, cfg.trace)
    print(f'delivered {report.delivered} ebits in {report.slots} slots (EDR {report.achieved_edr:.4g}), '
          f'lowest fidelity {report.min_fidelity} -> {file_name}')
    return None


def _add_sd(parser):
    parser.add_argument('-t', '--topology', required=True, help='topology JSON file')
    parser.add_argument('-s', '--source', required=True, help='source node identifier')
    parser.add_argument('-d', '--destination', required=True, help='destination node identifier')


def build_parser():
    p = argparse.ArgumentParser(prog='fendi', description='Fidelity-aware entanglement distribution planning')
    p.add_argument('-v', '--verbose', action='store_true', help='log progress to stderr')
    sub = p.add_subparsers(dest='command', required=True)

    pg = sub.add_parser('gen', help='generate a random Waxman topology')
    pg.add_argument('--nodes', type=int, default=15)
    pg.add_argument('--alpha', type=float, default=0.8)
    pg.add_argument('--beta', type=float, default=0.8)
    pg.add_argument('--seed', type=int, default=None, help='random seed (default: $FENDI_SEED or 0)')
    pg.add_argument('--q-node', type=float, nargs=2, default=(0.5, 0.5), metavar=('LOW', 'HIGH'))
    pg.add_argument('--w-node', type=float, nargs=2, default=(1.0, 1.0), metavar=('LOW', 'HIGH'))
    pg.add_argument('--q-link', type=float, nargs=2, default=(0.9, 0.9), metavar=('LOW', 'HIGH'))
    pg.add_argument('--fidelity', type=float, nargs=2, default=(0.7, 0.95), metavar=('LOW', 'HIGH'))
    pg.add_argument('--capacity', type=int, nargs=2, default=(26, 35), metavar=('LOW', 'HIGH'))
    pg.add_argument('-o', '--output', required=True)
    pg.set_defaults(func=cmd_gen)

    po = sub.add_parser('ored', help='maximum expected EDR eflow')
    _add_sd(po)
    po.add_argument('-o', '--output')
    po.set_defaults(func=cmd_ored)

    pfe = sub.add_parser('fendi', help='maximise the worst-case fidelity under an EDR bound')
    _add_sd(pfe)
    pfe.add_argument('--delta', type=float, required=True, help='expected EDR bound')
    pfe.add_argument('--eps', type=float, default=0.5, help='accuracy (default 0.5)')
    pfe.add_argument('--hdf5', help='also archive the solution to this hdf5 file')
    pfe.add_argument('-o', '--output')
    pfe.set_defaults(func=cmd_fendi)

    pp = sub.add_parser('pareto', help='EDR-fidelity trade-off sweep to CSV')
    _add_sd(pp)
    pp.add_argument('--eps', type=float, default=0.5)
    pp.add_argument('--steps', type=int, default=10)
    pp.add_argument('--jobs', type=int, default=1, help='worker processes')
    pp.add_argument('-o', '--output')
    pp.set_defaults(func=cmd_pareto)

    pd = sub.add_parser('decompose', help='decompose an eflow, layered eflow or solution into pflows')
    pd.add_argument('-t', '--topology', required=True)
    pd.add_argument('-f', '--flow', required=True, help='eflow, layered eflow or FENDI solution JSON')
    pd.add_argument('-o', '--output')
    pd.set_defaults(func=cmd_decompose)

    ps = sub.add_parser('simulate', help='simulate the data-plane protocol for a plan')
    ps.add_argument('-t', '--topology', required=True)
    ps.add_argument('-f', '--flow', required=True, help='eflow, layered eflow or FENDI solution JSON')
    ps.add_argument('--slots', type=int, default=1000)
    ps.add_argument('--seed', type=int, default=None, help='random seed (default: $FENDI_SEED or 0)')
    ps.add_argument('--delta', type=float, default=None, help='EDR bound to check the achieved EDR against')
    ps.add_argument('--buffer-lifetime', type=int, default=None, help='slots an ebit may be stored (1: bufferless)')
    ps.add_argument('--buffer-capacity', type=int, default=None, help='ebits per output buffer')
    ps.add_argument('--swap-passes', choices=['fixpoint', 'single'], default='fixpoint')
    ps.add_argument('--trace', help='per-slot trace CSV file')
    ps.add_argument('-o', '--output')
    ps.set_defaults(func=cmd_simulate)
    return p


def config_from_args(args):
    """RunConfig holding every option of the parsed command"""
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {key: value for key, value in vars(args).items() if (key in fields) and (value is not None)}
    for key in ['q_node', 'w_node', 'q_link', 'fidelity', 'capacity']:
        if key in values:
            values[key] = tuple(values[key])
    values['seed'] = default_seed() if (getattr(args, 'seed', None) is None) else args.seed
    return RunConfig(**values)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args)
    try:
        cfg.validate()
    except ValueError as e:
        parser.error(str(e))
    mf.customize_logger(None, cfg.command, args.verbose)
    try:
        args.func(cfg)
    except ef.UnachievableEdrError as e:
        print(f'fendi: {e} (maximum expected EDR: {e.eta_star})', file=sys.stderr)
        return EXIT_UNACHIEVABLE
    except Exception as e:
        logger.error(f'{type(e).__name__}: {e}')
        print(f'fendi: error: {e}', file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
