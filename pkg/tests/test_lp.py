import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hnl.lp import LPProblem, simplex, solve_lp


def enumerate_vertices(P: LPProblem):
    """Oracle: best objective over all basic feasible points, or None if infeasible.

    Every constraint (inequality row, equality row, finite bound) becomes a
    hyperplane; each choice of n linearly independent hyperplanes that
    includes all equalities gives a candidate vertex.
    """
    n = P.n
    rows, rhs, eq = [], [], []
    for a, b in zip(P.A_eq, P.b_eq):
        rows.append(a), rhs.append(b), eq.append(True)
    for a, b in zip(P.A_ub, P.b_ub):
        rows.append(a), rhs.append(b), eq.append(False)
    for j in range(n):
        e = np.eye(n)[j]
        if np.isfinite(P.lb[j]):
            rows.append(e), rhs.append(P.lb[j]), eq.append(False)
        if np.isfinite(P.ub[j]):
            rows.append(e), rhs.append(P.ub[j]), eq.append(False)
    rows, rhs = np.array(rows), np.array(rhs)
    n_eq = len(P.b_eq)
    best = None
    for combo in itertools.combinations(range(n_eq, len(rows)), n - n_eq):
        idx = list(range(n_eq)) + list(combo)
        A = rows[idx]
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        x = np.linalg.solve(A, rhs[idx])
        if P.max_violation(x) <= 1e-9:
            val = P.objective(x)
            best = val if best is None else min(best, val)
    return best


def random_lp(rng):
    n = int(rng.integers(1, 7))
    m_ub = int(rng.integers(0, 7 - n + 1)) if n < 6 else int(rng.integers(0, 3))
    m_eq = int(rng.integers(0, min(n, 3)))
    x0 = rng.uniform(0, 2, size=n)  # keeps the equality system feasible
    A_ub = rng.normal(size=(m_ub, n))
    b_ub = A_ub @ x0 + rng.uniform(-0.5, 1.0, size=m_ub)
    A_eq = rng.normal(size=(m_eq, n))
    b_eq = A_eq @ x0
    lb = np.where(rng.random(n) < 0.2, -3.0, 0.0)
    ub = np.where(rng.random(n) < 0.8, rng.uniform(2, 4, size=n), 5.0)
    return LPProblem(rng.normal(size=n), A_ub, b_ub, A_eq, b_eq, lb, ub)


def test_facet_example():
    P = LPProblem([-1.0, -1.0], A_ub=[[1.0, 1.0]], b_ub=[1.0])
    sol = solve_lp(P)
    assert sol.ok and sol.objective == pytest.approx(-1.0, abs=1e-12)
    assert sol.x.sum() == pytest.approx(1.0) and np.all(sol.x >= -1e-12)
    assert enumerate_vertices(P) == pytest.approx(-1.0)


def test_infeasible_example():
    P = LPProblem([1.0], A_ub=[[-1.0], [1.0]], b_ub=[-1.0, 0.0], lb=[-np.inf])
    assert solve_lp(P).status == "infeasible"
    assert solve_lp(P, "highs").status == "infeasible"


def test_unbounded_example():
    P = LPProblem([-1.0, 0.0], A_ub=[[1.0, -1.0]], b_ub=[1.0])
    assert solve_lp(P).status == "unbounded"


def test_free_variable_and_equalities():
    # min x - y, x + y = 2, x - y >= -4, x free, 0 <= y <= 5
    P = LPProblem([1.0, -1.0], A_ub=[[-1.0, 1.0]], b_ub=[4.0], A_eq=[[1.0, 1.0]], b_eq=[2.0],
                  lb=[-np.inf, 0.0], ub=[np.inf, 5.0])
    sol = solve_lp(P)
    assert sol.ok and sol.objective == pytest.approx(-4.0, abs=1e-10)
    np.testing.assert_allclose(sol.x, [-1.0, 3.0], atol=1e-10)


def test_degenerate_problem_terminates():
    # Classic cycling example for Dantzig's rule without anti-cycling safeguards.
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    sol = solve_lp(LPProblem(c, A_ub=A, b_ub=[0.0, 0.0, 1.0]))
    assert sol.ok and sol.objective == pytest.approx(-0.05, abs=1e-10)


def test_non_finite_data_rejected():
    with pytest.raises(ValueError):
        LPProblem([np.nan, 1.0])


@pytest.mark.parametrize("seed", range(50))
def test_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    P = random_lp(rng)
    ref = enumerate_vertices(P)
    sol = solve_lp(P)
    if ref is None:
        assert sol.status == "infeasible"
    else:
        assert sol.ok
        assert abs(sol.objective - ref) <= 1e-8 * max(1.0, abs(ref))
        assert P.max_violation(sol.x) <= 1e-9


@settings(max_examples=100)
@given(st.integers(0, 2**31 - 1))
def test_agrees_with_highs(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 15)), int(rng.integers(1, 12))
    A = rng.normal(size=(m, n))
    P = LPProblem(rng.normal(size=n), A, A @ rng.uniform(0, 1, n) + 0.1, ub=rng.uniform(1, 3, n))
    a, b = simplex(P), solve_lp(P, "highs")
    assert a.status == b.status == "optimal"
    assert a.objective == pytest.approx(b.objective, rel=1e-8, abs=1e-8)


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve_lp(LPProblem([1.0]), "glpk")
