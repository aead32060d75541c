"""FENDI
Fidelity-aware ENtanglement DIstribution

This Python module contains the main functions that link together all functionality.
"""
import os
import time
import logging
import functools as fct
import multiprocessing as mp
import numpy as np

from . import network as nw
from . import eflow as ef
from . import fptas as fp
from . import simulator as sim
from . import utility as ut


# initialize logger
logger = logging.getLogger(__name__)


def customize_logger(save_dir, target_id, verbose):
    """Create a custom logger for logging to file and to stdout

    Parameters
    ----------
    save_dir: str, None
        folder to save the log file (no log file if None)
    target_id: str
        Identifier to use for the log file
    verbose: bool
        If set to True, information will be printed by the logger

    Returns
    -------
     : None
    """
    # customize the package logger, module loggers propagate to it
    pkg_logger = logging.getLogger('fendi')
    pkg_logger.setLevel(logging.INFO)  # set base activation level for logger
    # make formatters for the handlers
    s_format = logging.Formatter(fmt='%(asctime)s - %(levelname)s - %(message)s', datefmt='%Y-%m-%d %H:%M:%S')
    f_format = logging.Formatter(fmt='%(asctime)s %(levelname)s %(module)s - %(funcName)s: %(message)s',
                                 datefmt='%Y-%m-%d %H:%M:%S')
    # remove existing handlers to avoid duplicate messages
    if (pkg_logger.hasHandlers()):
        pkg_logger.handlers.clear()
    # make stream handler
    if verbose:
        s_handler = logging.StreamHandler()  # for printing
        s_handler.setLevel(logging.INFO)  # print everything with level 20 or above
        s_handler.setFormatter(s_format)
        pkg_logger.addHandler(s_handler)
    # file handler
    if save_dir is not None:
        logname = os.path.join(save_dir, f'{target_id}.log')
        f_handler = logging.FileHandler(logname, mode='a')  # for saving
        f_handler.setLevel(logging.INFO)  # save everything with level 20 or above
        f_handler.setFormatter(f_format)
        pkg_logger.addHandler(f_handler)
    return None


def plan_from_file(topology_file, source, destination, delta, eps=0.5, save_dir=None, data_id='none',
                   simulate=False, sim_config=None, overwrite=False, verbose=False):
    """Plan entanglement distribution for one SD pair of a topology file

    Parameters
    ----------
    topology_file: str
        Path to a topology JSON file
    source: str, int
        Source node identifier
    destination: str, int
        Destination node identifier
    delta: float
        Expected EDR bound
    eps: float
        Accuracy of the approximation scheme
    save_dir: str, None
        Directory for the results and the log. The directory of the
        topology file is used if None.
    data_id: int, str
        User defined identification for the topology
    simulate: bool
        Also run the simulator on the resulting plan
    sim_config: SimConfig, None
        Simulator settings, defaults if None
    overwrite: bool
        If set to True, overwrite old results in save_dir, or (if False)
        load them if present.
    verbose: bool
        If set to True, this function will print some information

    Returns
    -------
    solution: FendiSolution
        The plan
    report: SimReport, None
        The simulation report if simulate is set

    Notes
    -----
    Results are saved as <target_id>_fendi.json and .hdf5 (and
    <target_id>_sim.json), with target_id made of the topology file
    name and the SD pair.
    """
    t_a = time.time()
    if save_dir is None:
        save_dir = os.path.dirname(os.path.abspath(topology_file))
    os.makedirs(save_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(topology_file))[0]
    target_id = f'{stem}_{source}_{destination}'
    customize_logger(save_dir, target_id, verbose)  # log stuff to a file and/or stdout
    logger.info(f'Start of planning for {target_id} with delta={delta}, eps={eps}')
    net = nw.load_topology(topology_file)
    file_name = os.path.join(save_dir, f'{target_id}_fendi.json')
    config = {'topology': os.path.basename(topology_file), 'source': str(source), 'destination': str(destination),
              'delta': float(delta), 'eps': float(eps), 'data_id': data_id}
    # guard for existing file when not overwriting
    if os.path.isfile(file_name) & (not overwrite):
        data, _ = ut.read_json(file_name)
        solution = fp.solution_from_dict(data, net)
        logger.info('Loaded existing solution')
    else:
        solution = fp.fendi(net, source, destination, delta, eps=eps)
        ut.write_json_atomic(file_name, {'meta': ut.meta_header(config, command='fendi'),
                                         **fp.solution_to_dict(solution, net)})
        ut.save_solution_hdf5(file_name.replace('.json', '.hdf5'), solution, net, description='FENDI plan',
                              data_id=data_id)
    t_b = time.time()
    if verbose:
        print(f'\033[1;32;48mPlanning complete.\033[0m')
        print(f'\033[0;32;48meta: {solution.eta:.4g}, worst-case fidelity: {solution.worst_fidelity:.6f}, '
              f'{len(solution.pflows)} pflows. Time taken: {t_b - t_a:1.1f}s\033[0m\n')
    report = None
    if simulate:
        cfg = sim.SimConfig() if (sim_config is None) else sim_config
        plan = sim.derive_plan(solution.layered, net)
        report = sim.run(net, plan, cfg, delta=delta)
        sim_config_dict = {**config, 'slots': cfg.slots, 'seed': cfg.seed, 'swap_passes': cfg.swap_passes,
                           'buffer_lifetime': (None if (cfg.buffer_lifetime == float('inf')) else cfg.buffer_lifetime),
                           'buffer_capacity': (None if (cfg.buffer_capacity == float('inf')) else cfg.buffer_capacity)}
        ut.write_json_atomic(os.path.join(save_dir, f'{target_id}_sim.json'),
                             {'meta': ut.meta_header(sim_config_dict, command='simulate'), **report.to_dict()})
        if verbose:
            print(f'\033[1;32;48mSimulation complete.\033[0m')
            print(f'\033[0;32;48mdelivered: {report.delivered}, achieved EDR: {report.achieved_edr:.4g}, '
                  f'lowest fidelity: {report.min_fidelity}\033[0m\n')
    t_c = time.time()
    logger.info(f'End of planning. Total time elapsed: {t_c - t_a:1.1f}s.')  # info to save to log
    return solution, report


def ored_baseline(net, source, destination, delta, sim_config=None):
    """Simulate the fidelity-agnostic maximum-rate plan under the same protocol

    Parameters
    ----------
    net: Network
        The network
    source: str, int
        Source node identifier
    destination: str, int
        Destination node identifier
    delta: float
        Expected EDR bound the achieved rate is compared against
    sim_config: SimConfig, None
        Simulator settings, defaults if None

    Returns
    -------
    eta_star: float
        Maximum expected EDR
    report: SimReport
        Simulation of the maximum-rate eflow
    solve_millis: float
        Time spent on solving and pruning the eflow
    """
    t_a = time.time()
    eta_star, flow = ef.solve_ored(net, source, destination)
    flow = ef.prune_noncontributing(flow, net)
    t_b = time.time()
    cfg = sim.SimConfig() if (sim_config is None) else sim_config
    report = sim.run(net, sim.derive_plan(flow, net), cfg, delta=delta)
    return eta_star, report, 1000 * (t_b - t_a)


SUMMARY_FIELDS = ['topology', 'source', 'destination', 'n_nodes', 'delta', 'eps', 'status', 'eta_star', 'eta',
                  'worst_fidelity', 'min_pflow_fidelity', 'fendi_ms', 'delivered', 'min_fidelity', 'avg_fidelity',
                  'achieved_edr', 'edr_satisfied', 'ored_ms', 'ored_delivered', 'ored_min_fidelity',
                  'ored_avg_fidelity', 'ored_achieved_edr', 'ored_edr_satisfied']


def _report_fields(report, prefix=''):
    """Summary fields of a simulation report, NaN where nothing was delivered"""
    def number(value):
        return np.nan if (value is None) else float(value)
    return {f'{prefix}delivered': report.delivered, f'{prefix}min_fidelity': number(report.min_fidelity),
            f'{prefix}avg_fidelity': number(report.avg_fidelity), f'{prefix}achieved_edr': report.achieved_edr,
            f'{prefix}edr_satisfied': number(report.edr_satisfied)}


def _plan_job(job, delta_fraction=None, baseline=False, **kwargs):
    """Plan one job of a set and return its summary record

    A job is (topology file, source, destination) with an optional fourth
    element: a dict of plan_from_file arguments for this job only.
    """
    topology_file, source, destination = job[:3]
    if (len(job) > 3):
        kwargs = {**kwargs, **job[3]}
    net = nw.load_topology(topology_file)
    row = {'topology': os.path.basename(topology_file), 'source': str(source), 'destination': str(destination),
           'n_nodes': net.n_nodes, 'eps': float(kwargs.get('eps', 0.5))}
    eta_star, _ = ef.solve_ored(net, source, destination)
    row['eta_star'] = eta_star
    if delta_fraction is not None:
        kwargs['delta'] = delta_fraction * eta_star
    row['delta'] = float(kwargs['delta'])
    if not (kwargs['delta'] > 0):
        logger.info(f'Skipping {topology_file} ({source}, {destination}): maximum expected EDR is {eta_star:.6g}')
        return {**row, 'status': 'unachievable'}
    try:
        solution, report = plan_from_file(topology_file, source, destination, **kwargs)
    except ef.UnachievableEdrError as e:
        logger.info(f'Skipping {topology_file} ({source}, {destination}): {e}')
        return {**row, 'status': 'unachievable'}
    row.update(status='ok', eta=solution.eta, worst_fidelity=solution.worst_fidelity,
               min_pflow_fidelity=solution.min_pflow_fidelity, fendi_ms=solution.diagnostics['total_ms'])
    if report is not None:
        row.update(_report_fields(report))
    if baseline:
        _, ored_report, ored_ms = ored_baseline(net, source, destination, kwargs['delta'],
                                                sim_config=kwargs.get('sim_config'))
        row.update(ored_ms=ored_ms, **_report_fields(ored_report, prefix='ored_'))
    return row


def summarise_set(records, by='eps'):
    """Aggregate the records of a set per value of one field

    Parameters
    ----------
    records: list[dict]
        Records returned by analyse_set
    by: str
        Field to group on, for example 'eps' or 'n_nodes'

    Returns
    -------
    summary: list[dict]
        Per group: number of runs, lowest and mean delivered fidelity,
        EDR satisfaction ratio and mean running time, for FENDI and (if
        present) the maximum-rate baseline. Unachievable jobs are left out.
    """
    done = [record for record in records if (record.get('status') == 'ok')]
    summary = []
    for value in sorted({record[by] for record in done}):
        group = [record for record in done if (record[by] == value)]
        entry = {by: value, 'runs': len(group)}
        for prefix in ['', 'ored_']:
            if (f'{prefix}delivered' not in group[0]):
                continue
            min_fid = np.array([record.get(f'{prefix}min_fidelity', np.nan) for record in group], dtype=float)
            avg_fid = np.array([record.get(f'{prefix}avg_fidelity', np.nan) for record in group], dtype=float)
            satisfied = np.array([record.get(f'{prefix}edr_satisfied', np.nan) for record in group], dtype=float)
            entry[f'{prefix}min_fidelity'] = np.nanmin(min_fid) if np.any(np.isfinite(min_fid)) else np.nan
            entry[f'{prefix}avg_fidelity'] = np.nanmean(avg_fid) if np.any(np.isfinite(avg_fid)) else np.nan
            entry[f'{prefix}edr_satisfaction'] = np.nanmean(satisfied) if np.any(np.isfinite(satisfied)) else np.nan
        entry['fendi_ms'] = float(np.mean([record['fendi_ms'] for record in group]))
        if ('ored_ms' in group[0]):
            entry['ored_ms'] = float(np.mean([record['ored_ms'] for record in group]))
        summary.append(entry)
    return summary


def analyse_set(job_list, n_threads=max(1, os.cpu_count() - 2), summary_file=None, **kwargs):
    """Plan a set of SD pairs and/or topologies in parallel

    Parameters
    ----------
    job_list: list[tuple]
        List of (topology file, source, destination) triples, each
        optionally with a fourth element: a dict of per-job arguments
        (for example {'eps': 0.25})
    n_threads: int
        Number of threads to use.
        Uses two fewer than the available amount by default.
    summary_file: str, None
        CSV file to write one record per job to
    **kwargs: dict
        Extra arguments to plan_from_file (delta is required): refer to
        its documentation for a list of all possible arguments.
        Additionally, delta_fraction sets delta per job as a fraction of
        the maximum expected EDR (instead of delta), and baseline=True
        also simulates the maximum-rate eflow for comparison.

    Returns
    -------
    records: list[dict]
        One summary record per job, in job order
    """
    if ('delta' not in kwargs.keys()) & (kwargs.get('delta_fraction') is None):
        raise ValueError('keyword delta (or delta_fraction) is required')
    t1 = time.time()
    with mp.Pool(processes=n_threads) as pool:
        records = pool.map(fct.partial(_plan_job, **kwargs), job_list, chunksize=1)
    t2 = time.time()
    if summary_file is not None:
        ut.write_table_atomic(summary_file, SUMMARY_FIELDS, records)
    print(f'Finished planning set in: {(t2 - t1):1.2} s ({(t2 - t1) / 3600:1.2} h) for {len(job_list)} jobs,\n'
          f'using {n_threads} threads ({(t2 - t1) * n_threads / max(1, len(job_list)):1.2} s '
          f'average per job single threaded).')
    return records
