"""l1 programs used throughout the package, each with a checkable certificate.

* :func:`solve_constrained_l1` -- ``min ||c||_1  s.t. ||y - Yc||_2 <= tau``
* :func:`solve_equality_l1`    -- ``min ||c||_1  s.t. x = Xc``
* :func:`solve_lasso`          -- ``min lam ||c||_1 + 1/2 ||y - Yc||_2^2``

The constrained program is first attacked by the lasso homotopy (the
solution path ``c(lam)`` is piecewise linear and ``||y - Yc(lam)||`` is
monotone, so the point where the residual reaches ``tau`` is found exactly).
If that candidate does not certify, over-relaxed ADMM is run on the splitting
``w = c, v = Yc`` (soft-thresholding on ``w``, projection of the residual onto
the l2 ball on ``v``). Periodically the sign pattern of ``w`` is used to solve
the KKT system on the active set in closed form; the candidate is accepted
only when :func:`certify` reports a duality gap below tolerance.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import linprog

from .exceptions import InfeasibleProblem, ParameterError


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100_000
    primal_tol: float = 1e-8
    dual_tol: float = 1e-8
    gap_tol: float = 1e-6
    rho: float = 1.0
    relaxation: float = 1.6
    polish_every: int = 25
    method: str = "auto"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        for name in ("primal_tol", "dual_tol", "gap_tol", "rho"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        if not 0 < self.relaxation < 2:
            raise ParameterError("relaxation must lie in (0, 2)")
        if self.method not in ("auto", "admm", "homotopy"):
            raise ParameterError(f"unknown method {self.method!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class SolveResult:
    coefficients: np.ndarray
    residual_norm: float
    objective: float
    status: Status
    iterations: int
    duality_gap: float
    dual_certificate: np.ndarray = field(repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True)
class Problem:
    """Description of one program instance, as consumed by :func:`certify`.

    ``kind`` is one of ``"constrained"``, ``"equality"`` or ``"lasso"``;
    ``param`` is ``tau`` for the constrained program and ``lambda`` for lasso.
    """

    kind: str
    A: np.ndarray
    b: np.ndarray
    param: float = 0.0


def feasibility_tolerance(Y, y, tau, c) -> float:
    """Allowed excess of ``||y - Yc||`` over ``tau``.

    Relative slack ``1e-8 tau`` plus the rounding floor of evaluating the
    residual in double precision, which dominates when ``tau`` is tiny.
    """
    eps = np.finfo(float).eps
    floor = 32 * eps * (float(np.linalg.norm(y)) + float(np.linalg.norm(Y, 2)) * float(np.sum(np.abs(c))))
    return 1e-8 * tau + floor


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _constrained_lower_bound(A, b, tau, r):
    """Dual objective of the constrained program at ``nu = t r`` with the best feasible ``t``."""
    corr = float(np.max(np.abs(A.T @ r))) if r.size else 0.0
    slope = float(b @ r) - tau * float(np.linalg.norm(r))
    if corr <= 0.0 or slope <= 0.0:
        return 0.0, np.zeros_like(b)
    nu = r / corr
    return slope / corr, nu


def _equality_dual(A, b, c):
    support = np.flatnonzero(np.abs(c) > 1e-12 * max(1.0, float(np.max(np.abs(c), initial=0.0))))
    if support.size == 0:
        return np.zeros_like(b)
    nu, *_ = np.linalg.lstsq(A[:, support].T, np.sign(c[support]), rcond=None)
    return nu


def certify(problem: Problem, result_or_coefficients, dual=None) -> float:
    """Recompute the duality gap of a candidate solution from scratch.

    Only the problem data, the coefficients and (for the equality program)
    an optional dual vector are used; nothing from solver state.

    For the constrained and lasso programs the dual point is built from the
    residual. For the equality program the dual is ``result.dual_certificate``
    when available, otherwise a least-squares fit on the support; in both
    cases it is rescaled to dual feasibility before evaluation.
    """
    if isinstance(result_or_coefficients, SolveResult):
        c = result_or_coefficients.coefficients
        if dual is None and problem.kind in ("equality", "constrained"):
            dual = result_or_coefficients.dual_certificate
    else:
        c = np.asarray(result_or_coefficients, dtype=float)
    A, b = problem.A, problem.b
    objective = float(np.sum(np.abs(c)))
    r = b - A @ c
    if problem.kind == "constrained":
        lower, _ = _constrained_lower_bound(A, b, problem.param, r)
        if dual is not None and np.any(dual):
            lower = max(lower, _constrained_lower_bound(A, b, problem.param, np.asarray(dual, float))[0])
        return max(objective - lower, 0.0)
    if problem.kind == "equality":
        nu = _equality_dual(A, b, c) if dual is None or not np.any(dual) else np.asarray(dual, float)
        scale = max(1.0, float(np.max(np.abs(A.T @ nu)))) if nu.size else 1.0
        return max(objective - float(b @ nu) / scale, 0.0)
    if problem.kind == "lasso":
        lam = problem.param
        primal = lam * objective + 0.5 * float(r @ r)
        corr = float(np.max(np.abs(A.T @ r))) if r.size else 0.0
        theta = r * min(1.0, lam / corr) if corr > 0 else r
        dual_obj = 0.5 * float(b @ b) - 0.5 * float((b - theta) @ (b - theta))
        return max(primal - dual_obj, 0.0)
    raise ValueError(f"unknown problem kind {problem.kind!r}")


def _result(problem, c, status, iterations, dual=None):
    r = problem.b - problem.A @ c
    if dual is not None and problem.kind == "constrained":
        # Keep whichever candidate certifies more, normalized to dual feasibility.
        lo_r, nu_r = _constrained_lower_bound(problem.A, problem.b, problem.param, r)
        lo_d, nu_d = _constrained_lower_bound(problem.A, problem.b, problem.param, np.asarray(dual, float))
        dual = nu_d if lo_d > lo_r else nu_r
    if dual is None:
        if problem.kind == "constrained":
            _, dual = _constrained_lower_bound(problem.A, problem.b, problem.param, r)
        elif problem.kind == "lasso":
            dual = r
        else:
            dual = _equality_dual(problem.A, problem.b, c)
    res = SolveResult(
        coefficients=c,
        residual_norm=float(np.linalg.norm(r)),
        objective=float(np.sum(np.abs(c))),
        status=status,
        iterations=iterations,
        duality_gap=0.0,
        dual_certificate=np.asarray(dual, dtype=float),
    )
    return replace(res, duality_gap=certify(problem, res))


def _polish_constrained(Y, y, tau, w):
    """Closed-form KKT solution on the sign pattern of ``w``.

    On support S with signs s the optimum satisfies ``Y_S^T nu = s`` with
    ``nu = theta * r`` and ``||r|| = tau``, which gives
    ``c_S = c_ls - G^+ s / theta`` with ``G = Y_S^T Y_S``.
    """
    support = np.flatnonzero(w)
    if support.size == 0:
        return None
    s = np.sign(w[support])
    Ys = Y[:, support]
    pinv = np.linalg.pinv(Ys)
    c_ls = pinv @ y
    y_perp = y - Ys @ c_ls
    u = pinv.T @ s  # = Y_S G^+ s
    slack = tau**2 - float(y_perp @ y_perp)
    u_norm = float(np.linalg.norm(u))
    if slack <= 0.0 or u_norm == 0.0:
        return None
    theta = u_norm / np.sqrt(slack)
    c = np.zeros(Y.shape[1])
    c[support] = c_ls - (pinv @ u) / theta
    return c


def solve_constrained_l1(Y, y, tau: float, opts: SolverOptions | None = None) -> SolveResult:
    """Solve ``min ||c||_1  s.t.  ||y - Yc||_2 <= tau``.

    ``tau = 0`` is delegated to :func:`solve_equality_l1`. When ``||y|| <= tau``
    the origin is returned immediately.
    """
    opts = opts or SolverOptions()
    Y = np.asarray(Y, dtype=float)
    y = np.asarray(y, dtype=float)
    if Y.ndim != 2 or y.shape != (Y.shape[0],):
        raise ParameterError(f"shape mismatch: Y {Y.shape}, y {y.shape}")
    if tau < 0:
        raise ParameterError("tau must be nonnegative")
    if not np.any(Y):
        raise ParameterError("Y must be nonzero")
    if tau == 0:
        return solve_equality_l1(Y, y, opts)
    problem = Problem("constrained", Y, y, float(tau))
    N = Y.shape[1]
    if np.linalg.norm(y) <= tau:
        return _result(problem, np.zeros(N), Status.OPTIMAL, 0)
    c_ls, *_ = np.linalg.lstsq(Y, y, rcond=None)
    if np.linalg.norm(y - Y @ c_ls) > tau:
        # Only possible when Y lacks full row rank.
        return replace(_result(problem, c_ls, Status.INFEASIBLE, 0), status=Status.INFEASIBLE)

    if opts.method in ("auto", "homotopy"):
        cand, steps, nu = _homotopy_constrained(Y, y, tau, opts.max_iterations)
        if cand is not None:
            res = _result(problem, cand, Status.OPTIMAL, steps, dual=nu)
            if res.residual_norm <= tau + feasibility_tolerance(Y, y, tau, res.coefficients) and res.duality_gap <= opts.gap_tol * (1 + res.objective):
                return res
        if opts.method == "homotopy":
            fallback = cand if cand is not None else np.zeros(N)
            return _result(problem, fallback, Status.MAX_ITERATIONS, steps)
    return _admm_constrained(problem, opts)


def _homotopy_constrained(Y, y, tau, max_steps):
    """Follow the lasso path from ``lam = ||Y^T y||_inf`` down until ``||r|| = tau``.

    On an active set A with signs s, ``c_A(lam) = a - lam b`` with
    ``a = G^-1 Y_A^T y`` and ``b = G^-1 s``. Events are an inactive
    correlation reaching ``lam`` (join) or an active coefficient hitting zero
    (drop). Returns ``(c, steps, nu)`` with ``nu`` the exact residual (a dual
    direction); ``c`` is None if the path degenerates.
    """
    n, N = Y.shape
    corr = Y.T @ y
    j = int(np.argmax(np.abs(corr)))
    lam = float(abs(corr[j]))
    active = [j]
    signs = [float(np.sign(corr[j]))]
    last = ("join", j)  # (kind, column) of the previous event; excluded to avoid cycling
    for step in range(1, max_steps + 1):
        A_idx = np.array(active)
        YA = Y[:, A_idx]
        s = np.array(signs)
        # QR keeps r_a (orthogonal to range(Y_A)) and u (inside it) accurate.
        Q, R = np.linalg.qr(YA)
        if np.min(np.abs(np.diag(R))) <= 1e-12 * np.max(np.abs(np.diag(R))):
            return None, step, None
        Qty = Q.T @ y
        a = solve_triangular(R, Qty)
        w = solve_triangular(R, s, trans="T")
        b = solve_triangular(R, w)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            return None, step, None
        r_a = y - Q @ Qty
        r_a -= Q @ (Q.T @ r_a)  # second pass: Y_A^T r_a must vanish to full precision
        u = Q @ w
        # r(l) = r_a + l u; inactive correlations are p + l q.
        p = Y.T @ r_a
        q = Y.T @ u
        inactive = np.ones(N, dtype=bool)
        inactive[A_idx] = False
        # The column changed by the previous event may not re-trigger at the current lam
        # (that is the event just processed), but it may at any smaller lam.
        recent = np.zeros(N, dtype=bool)
        if last[0] == "drop":
            recent[last[1]] = True
        upper = lam * (1 + 1e-10)
        best = (0.0, "end", -1, 0.0)
        # A column whose correlation already exceeds lam (rounding drift) joins right away.
        cur = np.where(inactive & ~recent, np.abs(p + lam * q), 0.0)
        k = int(np.argmax(cur))
        if cur[k] > lam * (1 + 1e-9):
            best = (lam, "join", k, float(np.sign(p[k] + lam * q[k])))
        if best[1] != "join":
            with np.errstate(divide="ignore", invalid="ignore"):
                for sign in (1.0, -1.0):
                    lj = np.where(inactive, p / (sign - q), np.nan)
                    ok = np.isfinite(lj) & (lj > 0) & (lj <= upper)
                    ok &= ~recent | (lj < lam * (1 - 1e-9))
                    if np.any(ok):
                        k = int(np.flatnonzero(ok)[np.argmax(lj[ok])])
                        if lj[k] > best[0]:
                            best = (float(lj[k]), "join", k, sign)
                ld = a / b
                ok = np.isfinite(ld) & (ld > 0) & (ld <= upper)
                if last[0] == "join":
                    pos = active.index(last[1])
                    ok[pos] &= ld[pos] < lam * (1 - 1e-9)
                if np.any(ok):
                    pos = int(np.flatnonzero(ok)[np.argmax(ld[ok])])
                    if ld[pos] > best[0]:
                        best = (float(ld[pos]), "drop", pos, 0.0)
        next_lam, kind, idx, sign = best
        next_lam = min(next_lam, lam)
        # r_a is orthogonal to u, so ||r(l)||^2 = rr + l^2 uu without cancellation.
        rr, uu = float(r_a @ r_a), float(u @ u)
        target = (tau * (1 - 1e-9)) ** 2
        if rr + next_lam**2 * uu <= target:
            if uu <= 0 or rr > target:
                return None, step, None
            root = min(max(math.sqrt((target - rr) / uu), next_lam), lam)
            c = np.zeros(N)
            c[A_idx] = a - root * b
            # Residual direction from the factorization: a dual certificate immune to
            # the rounding in y - Yc when tau is tiny.
            return c, step, r_a + root * u
        if kind == "end":
            return None, step, None
        lam = next_lam
        if kind == "join":
            active.append(idx)
            signs.append(sign)
            last = ("join", idx)
        else:
            last = ("drop", active[idx])
            del active[idx]
            del signs[idx]
        if len(active) > n or not active:
            return None, step, None
    return None, max_steps, None


def _admm_constrained(problem, opts):
    Y, y, tau = problem.A, problem.b, problem.param
    N = Y.shape[1]
    # Scale so that the splitting is well balanced; undone on output.
    scale = float(np.linalg.norm(Y, 2))
    A = Y / scale
    rho, alpha = opts.rho, opts.relaxation
    chol = cho_factor(np.eye(N) + A.T @ A)
    w = np.zeros(N)  # copy of c (in scaled units c * scale)
    v = np.zeros_like(y)  # copy of A c
    u1 = np.zeros(N)
    u2 = np.zeros_like(y)
    tol_feas = opts.primal_tol * (1.0 + float(np.linalg.norm(y)))

    def accept(c_candidate):
        res = _result(problem, c_candidate, Status.OPTIMAL, it)
        ok = res.residual_norm <= tau + feasibility_tolerance(Y, y, tau, res.coefficients) and res.duality_gap <= opts.gap_tol * (1 + res.objective)
        return res, ok

    best = None
    last_support = None
    it = 0
    for it in range(1, opts.max_iterations + 1):
        x = cho_solve(chol, (w - u1) + A.T @ (v - u2))
        Ax = A @ x
        x_hat = alpha * x + (1 - alpha) * w
        Ax_hat = alpha * Ax + (1 - alpha) * v
        w_old, v_old = w, v
        w = _soft(x_hat + u1, 1.0 / rho)
        d = Ax_hat + u2 - y
        dn = np.linalg.norm(d)
        v = y + (d if dn <= tau else d * (tau / dn))
        u1 = u1 + x_hat - w
        u2 = u2 + Ax_hat - v

        if it % opts.polish_every == 0 or it == opts.max_iterations:
            support = tuple(np.flatnonzero(w))
            if support != last_support:
                last_support = support
                cand = _polish_constrained(Y, y, tau, w)
                if cand is not None:
                    res, ok = accept(cand)
                    if ok:
                        return res
            primal_res = max(np.linalg.norm(x - w), np.linalg.norm(Ax - v))
            dual_res = rho * max(np.linalg.norm(w - w_old), np.linalg.norm(v - v_old))
            c = w / scale
            res, ok = accept(c)
            if ok:
                return res
            if best is None or _merit(res, tau) < _merit(best, tau):
                best = res
            # Residual balancing; the factorization does not depend on rho.
            if primal_res > 10 * dual_res:
                rho *= 2.0
                u1, u2 = u1 / 2.0, u2 / 2.0
            elif dual_res > 10 * primal_res:
                rho /= 2.0
                u1, u2 = u1 * 2.0, u2 * 2.0
            if primal_res < tol_feas * 1e-4 and dual_res < opts.dual_tol * 1e-4:
                break
    best = best if best is not None else _result(problem, w / scale, Status.MAX_ITERATIONS, it)
    return replace(best, status=Status.MAX_ITERATIONS, iterations=it)


def _merit(res, tau):
    return res.duality_gap + max(res.residual_norm - tau, 0.0)


def solve_equality_l1(X, x, opts: SolverOptions | None = None) -> SolveResult:
    """Solve ``min ||c||_1  s.t.  x = Xc`` through its LP reformulation.

    The LP ``min 1^T(u + v)  s.t.  X(u - v) = x, u, v >= 0`` is handed to
    HiGHS; its equality multipliers give the dual certificate. The returned
    coefficients are re-fit by least squares on the support so that the
    equality residual sits at machine precision.

    Raises
    ------
    InfeasibleProblem
        If ``x`` is not in the range of ``X``.
    """
    opts = opts or SolverOptions()
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    if X.ndim != 2 or x.shape != (X.shape[0],):
        raise ParameterError(f"shape mismatch: X {X.shape}, x {x.shape}")
    n, N = X.shape
    problem = Problem("equality", X, x)
    xn = float(np.linalg.norm(x))
    ls, *_ = np.linalg.lstsq(X, x, rcond=None)
    if np.linalg.norm(X @ ls - x) > 1e-9 * (1.0 + xn):
        raise InfeasibleProblem("x is not in the range of X")
    if xn == 0.0:
        return _result(problem, np.zeros(N), Status.OPTIMAL, 0, dual=np.zeros(n))
    res = linprog(
        np.ones(2 * N),
        A_eq=np.hstack([X, -X]),
        b_eq=x,
        bounds=[(0, None)] * (2 * N),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise InfeasibleProblem(f"LP solver failed: {res.message}")
    c = res.x[:N] - res.x[N:]
    support = np.flatnonzero(np.abs(c) > 1e-12)
    if support.size:
        refit, *_ = np.linalg.lstsq(X[:, support], x, rcond=None)
        if np.all(np.sign(refit) == np.sign(c[support])):
            c = np.zeros(N)
            c[support] = refit
    nu = np.asarray(res.eqlin.marginals, dtype=float)
    out = _result(problem, c, Status.OPTIMAL, int(res.nit), dual=nu)
    ok = np.linalg.norm(X @ c - x) <= 1e-8 * (1 + xn) and out.duality_gap <= opts.gap_tol * (1 + out.objective)
    return out if ok else replace(out, status=Status.MAX_ITERATIONS)


def _polish_lasso(Y, y, lam, c):
    support = np.flatnonzero(c)
    if support.size == 0:
        return None
    s = np.sign(c[support])
    Ys = Y[:, support]
    G = Ys.T @ Ys
    cs = np.linalg.lstsq(G, Ys.T @ y - lam * s, rcond=None)[0]
    out = np.zeros(Y.shape[1])
    out[support] = cs
    return out


def lasso_kkt_residual(Y, y, lam, c) -> float:
    """Largest violation of the lasso stationarity conditions at ``c``."""
    corr = Y.T @ (y - Y @ c)
    viol = max(float(np.max(np.abs(corr))) - lam, 0.0)
    nz = np.flatnonzero(c)
    if nz.size:
        viol = max(viol, float(np.max(np.abs(corr[nz] - lam * np.sign(c[nz])))))
    return viol


def solve_lasso(Y, y, lam: float, opts: SolverOptions | None = None) -> SolveResult:
    """Solve ``min lam ||c||_1 + 1/2 ||y - Yc||^2`` by cyclic coordinate descent.

    Sweeps are followed by an active-set refit; the result is optimal when the
    duality gap is within tolerance and the stationarity conditions hold to
    ``gap_tol``.
    """
    opts = opts or SolverOptions()
    Y = np.asarray(Y, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam <= 0:
        raise ParameterError("lambda must be positive")
    problem = Problem("lasso", Y, y, float(lam))
    N = Y.shape[1]
    if float(np.max(np.abs(Y.T @ y))) <= lam:
        return _result(problem, np.zeros(N), Status.OPTIMAL, 0)
    col_sq = np.einsum("ij,ij->j", Y, Y)
    active = np.flatnonzero(col_sq > 0)
    c = np.zeros(N)
    r = y.copy()
    best = None
    for it in range(1, opts.max_iterations + 1):
        for j in active:
            old = c[j]
            rho_j = Y[:, j] @ r + col_sq[j] * old
            new = np.sign(rho_j) * max(abs(rho_j) - lam, 0.0) / col_sq[j]
            if new != old:
                r -= Y[:, j] * (new - old)
                c[j] = new
        if it % 5 == 0 or it == opts.max_iterations:
            for cand in (c, _polish_lasso(Y, y, lam, c)):
                if cand is None:
                    continue
                res = _result(problem, cand.copy(), Status.OPTIMAL, it)
                kkt = lasso_kkt_residual(Y, y, lam, cand)
                if kkt <= opts.gap_tol and res.duality_gap <= opts.gap_tol * (1 + res.objective):
                    return res
                if best is None or res.duality_gap < best.duality_gap:
                    best = res
    return replace(best, status=Status.MAX_ITERATIONS, iterations=opts.max_iterations)
