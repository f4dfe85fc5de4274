"""scikit-learn style wrappers around the l1 solvers.

Rows are samples, as usual in scikit-learn; the dictionary passed to ``fit``
is stored with atoms as columns (``dictionary_``, shape (n_features, n_atoms)).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InfeasibleProblem
from .solver import SolverOptions, Status, solve_constrained_l1, solve_equality_l1, solve_lasso


class _CoderBase(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.dictionary_ = X.T.copy()
        self.n_features_in_ = X.shape[1]
        return self

    def _encode(self, D, q) -> tuple[np.ndarray, Status]:
        raise NotImplementedError

    def transform(self, X):
        """Codes of each row of ``X`` over the fitted atoms, shape (n_samples, n_atoms)."""
        check_is_fitted(self, "dictionary_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        codes = np.empty((X.shape[0], self.dictionary_.shape[1]))
        status = []
        for k, row in enumerate(X):
            codes[k], st = self._encode(self.dictionary_, row)
            status.append(st)
        self.status_ = status
        return codes

    def self_expression(self, X):
        """Code each row of ``X`` by all *other* rows (zero diagonal).

        This is the coefficient matrix used in sparse subspace clustering.
        """
        X = check_array(X, dtype=np.float64)
        self.fit(X)
        n = X.shape[0]
        C = np.zeros((n, n))
        status = []
        for j in range(n):
            rest = np.delete(np.arange(n), j)
            c, st = self._encode(self.dictionary_[:, rest], X[j])
            C[j, rest] = c
            status.append(st)
        self.status_ = status
        return C


class SubspaceSparseCoder(_CoderBase):
    """Minimum-l1 codes with a residual budget.

    Solves ``min ||c||_1 s.t. ||x - D c|| <= tau`` per sample; ``tau = 0``
    gives exact basis pursuit. Samples whose program is infeasible get a zero
    code and status ``Infeasible``.

    Parameters
    ----------
    tau : float
        Residual budget (e.g. ``gamma * epsilon``).
    max_iterations, gap_tol : solver options.
    method : {"auto", "admm", "homotopy"}
    """

    def __init__(self, tau=0.0, max_iterations=100_000, gap_tol=1e-6, method="auto"):
        self.tau = tau
        self.max_iterations = max_iterations
        self.gap_tol = gap_tol
        self.method = method

    def _options(self):
        return SolverOptions(max_iterations=self.max_iterations, gap_tol=self.gap_tol, method=self.method)

    def _encode(self, D, q):
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        try:
            if self.tau == 0:
                res = solve_equality_l1(D, q, self._options())
            else:
                res = solve_constrained_l1(D, q, self.tau, self._options())
        except InfeasibleProblem:
            return np.zeros(D.shape[1]), Status.INFEASIBLE
        return res.coefficients, res.status


class LassoCoder(_CoderBase):
    """Lasso codes ``argmin 1/2 ||x - D c||^2 + alpha ||c||_1``."""

    def __init__(self, alpha=1.0, max_iterations=100_000, gap_tol=1e-8):
        self.alpha = alpha
        self.max_iterations = max_iterations
        self.gap_tol = gap_tol

    def _encode(self, D, q):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        res = solve_lasso(D, q, self.alpha, SolverOptions(max_iterations=self.max_iterations, gap_tol=self.gap_tol))
        return res.coefficients, res.status
