import numpy as np
import pytest

import fendi.lp as lp


def small_problem():
    """max x + y s.t. x + 2y <= 4, 3x + y <= 6"""
    problem = lp.LpProblem('small')
    x = problem.add_variable('x', objective=1.0)
    y = problem.add_variable('y', objective=1.0)
    problem.add_constraint({x: 1, y: 2}, '<=', 4, label='first')
    problem.add_constraint({x: 3, y: 1}, '<=', 6)
    return problem, x, y


@pytest.mark.parametrize('backend', ['highs', 'highs-ds', 'highs-ipm'])
def test_small_problem(backend):
    problem, x, y = small_problem()
    solution = lp.solve(problem, backend=backend)
    assert solution.optimal
    assert solution.objective == pytest.approx(2.8, rel=1e-6)
    assert solution.values[[x, y]] == pytest.approx([1.6, 1.2], rel=1e-5)


def test_bulk_matches_single():
    problem, _, _ = small_problem()
    bulk = lp.LpProblem('bulk')
    handles = bulk.add_variables(2, objective=1.0)
    bulk.add_constraints([0, 0, 1, 1], [handles[0], handles[1], handles[0], handles[1]], [1, 2, 3, 1], '<=', [4, 6])
    a_single, _, _ = problem.matrices()
    a_bulk, _, _ = bulk.matrices()
    assert (a_single != a_bulk).nnz == 0
    assert lp.solve(bulk).objective == pytest.approx(lp.solve(problem).objective)


def test_duplicates_summed_and_equalities():
    problem = lp.LpProblem()
    x = problem.add_variable(objective=1.0, upper=10.0)
    problem.add_constraints([0, 0], [x, x], [1.0, 1.0], '==', [3.0])
    solution = lp.solve(problem)
    assert solution.values[x] == pytest.approx(1.5)


def test_infeasible_and_unbounded():
    problem = lp.LpProblem()
    x = problem.add_variable(objective=1.0)
    problem.add_constraint({x: 1}, '>=', 2)
    problem.add_constraint({x: 1}, '<=', 1)
    assert lp.solve(problem).status == lp.INFEASIBLE
    problem = lp.LpProblem()
    problem.add_variable(objective=1.0)
    assert lp.solve(problem).status == lp.UNBOUNDED


def test_empty_problem():
    assert lp.solve(lp.LpProblem()).status == lp.OPTIMAL
    problem = lp.LpProblem()
    problem.add_constraints([], [], [], '>=', [1.0])
    assert lp.solve(problem).status == lp.INFEASIBLE


def test_invalid_input():
    problem = lp.LpProblem()
    x = problem.add_variable()
    with pytest.raises(ValueError):
        problem.add_constraint({x: 1}, '<', 1)
    with pytest.raises(ValueError):
        problem.add_constraint({x: np.nan}, '<=', 1)
    with pytest.raises(ValueError):
        problem.add_constraint({x + 1: 1.0}, '<=', 1)
    with pytest.raises(ValueError):
        problem.add_variables(1, lower=2.0, upper=1.0)
    with pytest.raises(ValueError):
        lp.solve(problem, backend='simplex-by-hand')


def test_constraint_violation():
    problem, x, y = small_problem()
    assert lp.constraint_violation(problem, np.array([1.6, 1.2])) == pytest.approx(0, abs=1e-12)
    assert lp.constraint_violation(problem, np.array([2.0, 2.0])) > 0.1
    assert lp.constraint_violation(problem, np.array([-1.0, 0.0])) == pytest.approx(1.0)


def test_register_backend_and_violation_check():
    def bad_backend(problem, tol):
        return lp.OPTIMAL, np.array([4.0, 4.0])

    lp.register_backend('bad', bad_backend)
    problem, _, _ = small_problem()
    with pytest.raises(lp.LpSolverError):
        lp.solve(problem, backend='bad')


def test_write_lp(tmp_path):
    problem, _, _ = small_problem()
    file_name = tmp_path / 'small.lp'
    lp.write_lp(problem, str(file_name))
    text = file_name.read_text()
    assert text.startswith('\\ small')
    assert 'Maximize' in text
    assert ' first: ' in text
    assert text.rstrip().endswith('End')
