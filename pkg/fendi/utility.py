"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains utility functions for saving and loading results:
atomic JSON and CSV writers, the reproducibility metadata header and
the hdf5 archive of a FENDI solution.
"""

import os
import json
import hashlib
import logging
import tempfile
import h5py
import numpy as np


# package version, kept in step with setup.py
VERSION = '1.0.0'

# initialize logger
logger = logging.getLogger(__name__)


def plain(x):
    """Convert numpy scalars to the built-in Python equivalent for JSON"""
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def canonical_json(obj):
    """Key-sorted compact JSON text of obj"""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), default=plain)


def config_hash(config):
    """SHA-256 hex digest of the canonical JSON form of a configuration dict"""
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


def meta_header(config, command=None):
    """Metadata header embedded in every output file

    Parameters
    ----------
    config: dict
        All resolved options of the run (JSON serialisable)
    command: str, None
        Name of the command that produced the output

    Returns
    -------
    meta: dict
        Tool name, version, command, configuration and its hash

    Notes
    -----
    No timestamps are included so that repeated runs produce
    byte-identical files.
    """
    meta = {'tool': 'fendi', 'version': VERSION}
    if command is not None:
        meta['command'] = command
    meta['config'] = config
    meta['config_hash'] = config_hash(config)
    return meta


def _replace_atomic(file_name, write_fn):
    dir_name = os.path.dirname(os.path.abspath(file_name))
    os.makedirs(dir_name, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=dir_name, prefix='.fendi_', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', newline='') as file:
            write_fn(file)
        os.replace(tmp_name, file_name)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    return None


def write_json_atomic(file_name, data):
    """Write data as indented JSON, via a temporary file in the same directory

    Parameters
    ----------
    file_name: str
        Destination path
    data: dict, list
        JSON serialisable content

    Returns
    -------
    None
    """
    def write_fn(file):
        json.dump(data, file, indent=2, default=plain)
        file.write('\n')
    _replace_atomic(file_name, write_fn)
    return None


def write_csv_atomic(file_name, header, rows, fmt='%.17g'):
    """Write a numeric table as CSV with a plain header line

    Parameters
    ----------
    file_name: str
        Destination path
    header: list[str]
        Column names
    rows: numpy.ndarray, list[list[float]]
        Table body, one row per record
    fmt: str, list[str]
        Number format(s) passed on to numpy.savetxt

    Returns
    -------
    None
    """
    table = np.asarray(rows, dtype=float).reshape(-1, len(header))

    def write_fn(file):
        np.savetxt(file, table, delimiter=',', fmt=fmt, header=','.join(header), comments='')
    _replace_atomic(file_name, write_fn)
    return None


def write_table_atomic(file_name, header, records):
    """Write dict records with mixed text and numbers as CSV, columns in header order"""
    table = np.array([[plain(record.get(key, '')) for key in header] for record in records], dtype=object)
    table = table.reshape(-1, len(header))

    def write_fn(file):
        np.savetxt(file, table, delimiter=',', fmt='%s', header=','.join(header), comments='')
    _replace_atomic(file_name, write_fn)
    return None


def read_json(file_name):
    """Load a JSON file, returning the content and the (possibly empty) meta header"""
    with open(file_name, 'r') as file:
        data = json.load(file)
    meta = {}
    if isinstance(data, dict):
        meta = data.pop('meta', {})
    return data, meta


def save_solution_hdf5(file_name, solution, net, description='none', data_id='none'):
    """Save a FENDI solution to an hdf5 file.

    Parameters
    ----------
    file_name: str
        File name (including path) for saving the results.
    solution: FendiSolution
        The solution to archive
    net: Network
        The network the solution was computed on
    description: str
        Optional description of the saved results
    data_id: int, str
        Optional identifier for the data set used

    Returns
    -------
    None

    Notes
    -----
    The file contains the data sets (array-like) and attributes
    to describe the data, in hdf5 format.

    Pflow walks of unequal length are padded with -1.
    """
    ext = os.path.splitext(os.path.basename(file_name))[1]
    if (ext != '.hdf5'):
        file_name = file_name[:len(file_name) - len(ext)] + '.hdf5'
    lef = solution.layered
    walks = [p.walk for p in solution.pflows]
    max_len = max([len(w) for w in walks], default=0)
    walk_arr = -np.ones((len(walks), max_len), dtype=np.int64)
    for i, w in enumerate(walks):
        walk_arr[i, :len(w)] = w
    with h5py.File(file_name, 'w') as file:
        file.attrs['identifier'] = os.path.splitext(os.path.basename(file_name))[0]
        file.attrs['description'] = description
        file.attrs['data_id'] = data_id
        file.attrs['version'] = VERSION
        file.attrs['source'] = str(net.node_ids[lef.s])
        file.attrs['destination'] = str(net.node_ids[lef.t])
        file.attrs['delta'] = solution.delta  # expected EDR bound
        file.attrs['eps'] = solution.eps  # approximation accuracy
        file.attrs['eta'] = solution.eta  # achieved expected EDR
        file.attrs['z_plus'] = solution.z_plus  # maximum true walk length
        file.attrs['worst_fidelity'] = solution.worst_fidelity
        file.attrs['min_pflow_fidelity'] = solution.min_pflow_fidelity
        file.attrs['lb'] = solution.bounds.lb
        file.attrs['ub'] = solution.bounds.ub
        for key, value in solution.diagnostics.items():
            file.attrs[f'diag_{key}'] = value
        # network identifiers for the index arrays
        file.create_dataset('node_ids', data=np.array([str(i) for i in net.node_ids], dtype='S'))
        file['node_ids'].attrs['description'] = 'node identifiers in index order'
        # the layered eflow
        file.create_dataset('g', data=lef.g)
        file['g'].attrs['description'] = 'generation ratio per link'
        for name in ['m', 'n', 'z', 'k', 'z1', 'x']:
            file.create_dataset(f'term_{name}', data=getattr(lef, name))
        file['term_x'].attrs['unit'] = 'ebits per time unit'
        file['term_x'].attrs['description'] = 'swap rates of the terms (m, n, z, k, z1)'
        file.create_dataset('zq_node', data=lef.quant.node_lengths)
        file.create_dataset('zq_link', data=lef.quant.link_lengths)
        file['zq_node'].attrs['theta'] = lef.quant.theta
        file['zq_node'].attrs['z_max'] = lef.z_max
        # the pflows
        file.create_dataset('pflow_walks', data=walk_arr)
        file['pflow_walks'].attrs['description'] = 'node indices of each pflow walk, padded with -1'
        file.create_dataset('pflow_values', data=np.array([p.value for p in solution.pflows], dtype=float))
        file['pflow_values'].attrs['unit'] = 'ebits per time unit'
        file.create_dataset('pflow_fidelities', data=np.array([p.fidelity for p in solution.pflows], dtype=float))
        file.create_dataset('pflow_lengths', data=np.array([p.length for p in solution.pflows], dtype=float))
    return None


def read_solution_hdf5(file_name, verbose=False):
    """Read a FENDI solution archive

    Parameters
    ----------
    file_name: str
        File name (including path) for loading the results.
    verbose: bool
        If set to True, this function will print some information.

    Returns
    -------
    results: dict
        Contains the attributes under their own names, the diagnostics
        in 'diagnostics', the layered eflow arrays in 'layered' and the
        pflows in 'pflows' (walks as lists of node identifiers).
    """
    with h5py.File(file_name, 'r') as file:
        attrs = {key: plain(value) for key, value in file.attrs.items()}
        node_ids = [s.decode() for s in np.copy(file['node_ids'])]
        layered = {'g': np.copy(file['g']), 'zq_node': np.copy(file['zq_node']),
                   'zq_link': np.copy(file['zq_link']), 'theta': float(file['zq_node'].attrs['theta']),
                   'z_max': int(file['zq_node'].attrs['z_max'])}
        for name in ['m', 'n', 'z', 'k', 'z1', 'x']:
            layered[name] = np.copy(file[f'term_{name}'])
        walk_arr = np.copy(file['pflow_walks'])
        values = np.copy(file['pflow_values'])
        fidelities = np.copy(file['pflow_fidelities'])
        lengths = np.copy(file['pflow_lengths'])
    diagnostics = {key[5:]: attrs.pop(key) for key in list(attrs.keys()) if key.startswith('diag_')}
    pflows = [{'walk': [node_ids[i] for i in walk if (i >= 0)], 'value': float(values[j]),
               'fidelity': float(fidelities[j]), 'length': float(lengths[j])} for j, walk in enumerate(walk_arr)]
    results = {**attrs, 'diagnostics': diagnostics, 'node_ids': node_ids, 'layered': layered, 'pflows': pflows}
    if verbose:
        print(f'Loaded solution file with identifier: {attrs["identifier"]}. \n'
              f'data_id: {attrs["data_id"]}. Description: {attrs["description"]} \n')
    return results
