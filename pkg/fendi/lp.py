"""FENDI
Fidelity-aware ENtanglement DIstribution

This module contains a small sparse linear programming layer: a problem
builder (maximise a linear objective over box-bounded variables under
linear constraints), a pluggable solver backend (SciPy's HiGHS by default)
and an LP text dump for debugging.
"""

import logging
import dataclasses
import numpy as np
import scipy.sparse as sp
import scipy.optimize as sco


# initialize logger
logger = logging.getLogger(__name__)

# relative tolerances used throughout the package
FEASIBILITY_TOL = 1e-6
OPTIMALITY_TOL = 1e-8

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'

_SENSES = {'<=': -1, '==': 0, '>=': 1}


class LpSolverError(RuntimeError):
    """Numerical failure of the LP backend (never reported as infeasibility)"""


@dataclasses.dataclass(frozen=True)
class Tolerances:
    """Relative feasibility and optimality tolerances"""
    feasibility: float = FEASIBILITY_TOL
    optimality: float = OPTIMALITY_TOL


@dataclasses.dataclass
class LpSolution:
    """Status, objective value and variable values of a solved problem"""
    status: str
    objective: float
    values: np.ndarray

    @property
    def optimal(self):
        return self.status == OPTIMAL


class LpProblem:
    """Sparse maximisation problem built up in coordinate form

    Variables are dense integer handles. Constraints are stored as
    COO triplets with a sense ('<=', '==', '>=') and a right hand side.
    Both one-at-a-time and bulk (array) construction are supported.
    """

    def __init__(self, name='fendi'):
        self.name = name
        self._lower = []
        self._upper = []
        self._objective = []
        self._labels = {}
        self._rows = []
        self._cols = []
        self._vals = []
        self._senses = []
        self._rhs = []
        self._row_labels = {}
        self.n_variables = 0
        self.n_constraints = 0

    def add_variables(self, n, lower=0.0, upper=np.inf, objective=0.0, labels=None):
        """Add n variables at once

        Parameters
        ----------
        n: int
            Number of variables
        lower: float, numpy.ndarray[float]
            Lower bound(s)
        upper: float, numpy.ndarray[float]
            Upper bound(s), np.inf for none
        objective: float, numpy.ndarray[float]
            Objective coefficient(s) (maximised)
        labels: list[str], None
            Optional human-readable labels

        Returns
        -------
        handles: numpy.ndarray[int]
            The variable handles
        """
        handles = np.arange(self.n_variables, self.n_variables + n, dtype=np.int64)
        lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
        objective = np.broadcast_to(np.asarray(objective, dtype=float), (n,)).copy()
        if not (np.all(np.isfinite(lower)) & np.all(np.isfinite(objective)) & np.all(~np.isnan(upper))):
            raise ValueError('variable bounds and objective coefficients must be finite')
        if np.any(lower > upper):
            raise ValueError('variable lower bound above its upper bound')
        self._lower.append(lower)
        self._upper.append(upper)
        self._objective.append(objective)
        if labels is not None:
            self._labels.update(zip(handles.tolist(), labels))
        self.n_variables += n
        return handles

    def add_variable(self, label=None, lower=0.0, upper=np.inf, objective=0.0):
        """Add one variable, returning its handle"""
        labels = None if (label is None) else [label]
        return int(self.add_variables(1, lower=lower, upper=upper, objective=objective, labels=labels)[0])

    def add_constraints(self, rows, cols, vals, sense, rhs):
        """Add a block of constraints in coordinate form

        Parameters
        ----------
        rows: numpy.ndarray[int]
            Row numbers local to this block, in [0, len(rhs))
        cols: numpy.ndarray[int]
            Variable handles
        vals: numpy.ndarray[float]
            Coefficients (duplicates are summed)
        sense: str
            One of '<=', '==', '>=' for the whole block
        rhs: numpy.ndarray[float]
            Right hand sides

        Returns
        -------
        handles: numpy.ndarray[int]
            Constraint (row) handles
        """
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if sense not in _SENSES:
            raise ValueError(f'unknown constraint sense {sense!r}')
        if not (np.all(np.isfinite(vals)) & np.all(np.isfinite(rhs))):
            raise ValueError('constraint coefficients must be finite')
        if (len(cols) > 0) and ((cols.min() < 0) | (cols.max() >= self.n_variables)):
            raise ValueError('constraint refers to an undeclared variable')
        if (len(rows) > 0) and ((rows.min() < 0) | (rows.max() >= len(rhs))):
            raise ValueError('constraint row outside of the block')
        handles = np.arange(self.n_constraints, self.n_constraints + len(rhs), dtype=np.int64)
        self._rows.append(rows + self.n_constraints)
        self._cols.append(cols)
        self._vals.append(vals)
        self._senses.append(np.full(len(rhs), _SENSES[sense], dtype=np.int64))
        self._rhs.append(rhs)
        self.n_constraints += len(rhs)
        return handles

    def add_constraint(self, coefs, sense, rhs, label=None):
        """Add one constraint sum(coef * var) <sense> rhs from a {handle: coef} dict"""
        cols = np.array(list(coefs.keys()), dtype=np.int64)
        vals = np.array(list(coefs.values()), dtype=float)
        handle = int(self.add_constraints(np.zeros(len(cols), dtype=np.int64), cols, vals, sense, [rhs])[0])
        if label is not None:
            self._row_labels[handle] = label
        return handle

    def set_objective(self, coefs):
        """Replace the (maximised) objective by a {handle: coef} dict"""
        c = np.zeros(self.n_variables)
        for handle, coef in coefs.items():
            c[handle] += coef
        self._objective = [c]
        return None

    def label(self, handle):
        return self._labels.get(handle, f'x{handle}')

    def bounds(self):
        """Lower and upper bound arrays"""
        if (self.n_variables == 0):
            return np.zeros(0), np.zeros(0)
        return np.concatenate(self._lower), np.concatenate(self._upper)

    def objective(self):
        """Objective coefficient array"""
        if (self.n_variables == 0):
            return np.zeros(0)
        return np.concatenate(self._objective)

    def matrices(self):
        """Constraint matrix (CSR), senses and right hand sides"""
        if (self.n_constraints == 0):
            return sp.csr_matrix((0, self.n_variables)), np.zeros(0, dtype=np.int64), np.zeros(0)
        a_mat = sp.coo_matrix((np.concatenate(self._vals), (np.concatenate(self._rows), np.concatenate(self._cols))),
                              shape=(self.n_constraints, self.n_variables)).tocsr()
        return a_mat, np.concatenate(self._senses), np.concatenate(self._rhs)


def constraint_violation(problem, values):
    """Largest relative constraint or bound violation of a point

    Parameters
    ----------
    problem: LpProblem
        The problem
    values: numpy.ndarray[float]
        Variable values

    Returns
    -------
    violation: float
        Maximum over rows of the violation divided by max(1, |rhs|, sum|a x|)
    """
    lower, upper = problem.bounds()
    violation = 0.0
    if (problem.n_variables > 0):
        scale = np.maximum(1, np.abs(values))
        violation = max(np.max((lower - values) / scale), np.max((values - upper) / scale), 0.0)
    a_mat, senses, rhs = problem.matrices()
    if (len(rhs) > 0):
        ax = a_mat @ values
        scale = np.maximum(np.maximum(1, np.abs(rhs)), abs(a_mat) @ np.abs(values))
        diff = (ax - rhs) / scale
        row_viol = np.where(senses < 0, np.maximum(diff, 0), np.where(senses > 0, np.maximum(-diff, 0), np.abs(diff)))
        violation = max(violation, float(np.max(row_viol)))
    return float(violation)


def _linprog_backend(method):
    def backend(problem, tol):
        lower, upper = problem.bounds()
        c = -problem.objective()
        a_mat, senses, rhs = problem.matrices()
        is_eq = (senses == 0)
        sign = np.where(senses > 0, -1.0, 1.0)
        a_ub = sp.diags(sign[~is_eq]) @ a_mat[~is_eq] if np.any(~is_eq) else None
        b_ub = (sign * rhs)[~is_eq] if np.any(~is_eq) else None
        a_eq = a_mat[is_eq] if np.any(is_eq) else None
        b_eq = rhs[is_eq] if np.any(is_eq) else None
        bounds = np.column_stack([lower, upper])
        options = {'presolve': True, 'primal_feasibility_tolerance': 1e-3 * tol.feasibility,
                   'dual_feasibility_tolerance': tol.optimality}
        res = sco.linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method=method,
                          options=options)
        status = {0: OPTIMAL, 2: INFEASIBLE, 3: UNBOUNDED}.get(res.status)
        if status is None:
            raise LpSolverError(f'LP backend {method} failed: {res.message} (status {res.status})')
        return status, res.x
    return backend


_BACKENDS = {'highs': _linprog_backend('highs'),
             'highs-ds': _linprog_backend('highs-ds'),
             'highs-ipm': _linprog_backend('highs-ipm')}


def register_backend(name, backend):
    """Make an LP backend available under a name

    Parameters
    ----------
    name: str
        Name to select the backend with in solve
    backend: callable
        backend(problem, tol) -> (status, values), with status one of
        OPTIMAL, INFEASIBLE, UNBOUNDED (values may be None unless optimal).
        Numerical failures must raise LpSolverError.

    Returns
    -------
    None
    """
    _BACKENDS[name] = backend
    return None


def solve(problem, tol=None, backend='highs'):
    """Solve a maximisation problem

    Parameters
    ----------
    problem: LpProblem
        The problem
    tol: Tolerances, None
        Tolerances, default Tolerances()
    backend: str
        Name of a registered backend

    Returns
    -------
    solution: LpSolution
        Status, objective and values (clipped to the variable bounds)

    Raises
    ------
    LpSolverError:
        On a backend failure, or if an optimal answer violates the
        constraints by more than ten times the feasibility tolerance
    """
    if tol is None:
        tol = Tolerances()
    if backend not in _BACKENDS:
        raise ValueError(f'unknown LP backend {backend!r}, choose from {sorted(_BACKENDS)}')
    if (problem.n_variables == 0):
        _, senses, rhs = problem.matrices()
        ok = np.all(np.where(senses < 0, rhs >= -tol.feasibility,
                             np.where(senses > 0, rhs <= tol.feasibility, np.abs(rhs) <= tol.feasibility)))
        status = OPTIMAL if ok else INFEASIBLE
        return LpSolution(status=status, objective=0.0, values=np.zeros(0))
    status, x = _BACKENDS[backend](problem, tol)
    if (status != OPTIMAL):
        return LpSolution(status=status, objective=np.nan, values=np.zeros(problem.n_variables))
    lower, upper = problem.bounds()
    values = np.clip(np.asarray(x, dtype=float), lower, upper)
    violation = constraint_violation(problem, values)
    if (violation > tol.feasibility):
        logger.warning(f'LP {problem.name} solution violates constraints by {violation:.3e} '
                       f'(tol={tol.feasibility:.1e})')
        if (violation > 10 * tol.feasibility):
            raise LpSolverError(f'LP {problem.name} solution violates constraints significantly ({violation:.3e})')
    objective = float(problem.objective() @ values)
    return LpSolution(status=OPTIMAL, objective=objective, values=values)


def write_lp(problem, file_name):
    """Dump a problem in CPLEX LP text format for external debugging

    Parameters
    ----------
    problem: LpProblem
        The problem
    file_name: str
        Destination path

    Returns
    -------
    None
    """
    def terms(cols, vals):
        if (len(cols) == 0):
            return '0 x0' if (problem.n_variables > 0) else '0'
        return ' '.join(f'{"+" if (v >= 0) else "-"} {abs(v):.17g} x{c}' for c, v in zip(cols, vals))

    lower, upper = problem.bounds()
    c = problem.objective()
    a_mat, senses, rhs = problem.matrices()
    sense_str = {-1: '<=', 0: '=', 1: '>='}
    lines = [f'\\ {problem.name}']
    lines += [f'\\ x{h}: {label}' for h, label in sorted(problem._labels.items())]
    nz = np.nonzero(c)[0]
    lines += ['Maximize', f' obj: {terms(nz, c[nz])}', 'Subject To']
    for r in range(problem.n_constraints):
        row = a_mat.getrow(r)
        name = problem._row_labels.get(r, f'c{r}')
        lines.append(f' {name}: {terms(row.indices, row.data)} {sense_str[senses[r]]} {rhs[r]:.17g}')
    lines.append('Bounds')
    for h in range(problem.n_variables):
        up = 'inf' if np.isinf(upper[h]) else f'{upper[h]:.17g}'
        lines.append(f' {lower[h]:.17g} <= x{h} <= {up}')
    lines.append('End')
    with open(file_name, 'w') as file:
        file.write('\n'.join(lines) + '\n')
    return None
