"""Independent reference computations used by the tests."""

import itertools

import numpy as np


def basic_solution_l1(X, x):
    """min ||c||_1 s.t. Xc = x by enumerating basic solutions (X full row rank).

    An LP optimum is attained at a vertex, i.e. with support inside a set of
    n linearly independent columns.
    """
    n, N = X.shape
    best = np.inf
    best_c = None
    for cols in itertools.combinations(range(N), n):
        B = X[:, cols]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        cb = np.linalg.solve(B, x)
        val = np.sum(np.abs(cb))
        if val < best:
            best = val
            best_c = np.zeros(N)
            best_c[list(cols)] = cb
    return best, best_c


def cvx_constrained_l1(Y, y, tau):
    import cvxpy as cp

    c = cp.Variable(Y.shape[1])
    prob = cp.Problem(cp.Minimize(cp.norm1(c)), [cp.norm(y - Y @ c, 2) <= tau])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return prob.value, c.value


def random_feasible_instance(rng, n, N, slack=(1.05, 3.0)):
    """Random (Y, y, tau) with tau above the least-squares residual, so the program is feasible."""
    Y = rng.standard_normal((n, N))
    y = rng.standard_normal(n)
    ls, *_ = np.linalg.lstsq(Y, y, rcond=None)
    base = np.linalg.norm(y - Y @ ls)
    lo = max(base * slack[0], 0.05 * np.linalg.norm(y))
    tau = float(rng.uniform(lo, max(lo * slack[1], 0.9 * np.linalg.norm(y))))
    return Y, y, tau
