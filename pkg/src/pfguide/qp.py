"""Dense strictly convex QP solver with double-sided linear constraints.

Solves   min  1/2 x^T H x + g^T x   s.t.  lb <= A x <= ub

with a primal active-set method.  Problem sizes here are tiny (n <= ~30),
so one Cholesky factorization of H is reused across iterations and each
working-set change re-solves a small Schur system.  Ties in the ratio test
break toward the lowest constraint row, making runs reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.linalg import LinAlgError

from .exceptions import Infeasible

# Regularization floor for H and the primal feasibility tolerance.
REG_EPS = 1e-10
FEAS_TOL = 1e-9
KKT_TOL = 1e-8

_ZERO_STEP = 1e-11
_DIR_TOL = 1e-13

# Active-set entries are (row, side): side +1 at the upper bound, -1 at the
# lower bound, 0 for an equality row (lb == ub).
Active = Tuple[Tuple[int, int], ...]


@dataclass
class QPProblem:
    H: np.ndarray   # (n, n) symmetric positive definite (after regularization)
    g: np.ndarray   # (n,)
    A: np.ndarray   # (m, n)
    lb: np.ndarray  # (m,) entries may be -inf
    ub: np.ndarray  # (m,) entries may be +inf

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        n = self.g.shape[0]
        m = self.lb.shape[0]
        if self.H.shape != (n, n):
            raise ValueError(f"H must be ({n},{n}), got {self.H.shape}")
        if self.A.shape != (m, n):
            raise ValueError(f"A must be ({m},{n}), got {self.A.shape}")
        if self.ub.shape != (m,):
            raise ValueError("lb and ub must have matching shapes")
        if np.any(self.lb > self.ub):
            raise ValueError("lb must not exceed ub")


@dataclass
class QPSolution:
    x: np.ndarray
    active_set: Active
    kkt_residual: float
    iterations: int
    multipliers: dict = field(default_factory=dict)  # (row, side) -> value

    @property
    def converged(self) -> bool:
        return self.kkt_residual <= KKT_TOL


def _chol_factor(H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Cholesky of H, adding REG_EPS*I whenever a pivot falls below REG_EPS."""
    Hr = 0.5 * (H + H.T)
    for bump in (0.0, REG_EPS, 1e4 * REG_EPS, 1e8 * REG_EPS):
        try:
            Hb = Hr + bump * np.eye(Hr.shape[0]) if bump else Hr
            L = np.linalg.cholesky(Hb)
            if np.min(np.diag(L)) ** 2 >= REG_EPS * 0.5 or bump:
                return L, Hb
        except LinAlgError:
            continue
    raise LinAlgError("Hessian not positive definite after regularization")


def _chol_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def _violation(A, lb, ub, x) -> float:
    r = A @ x
    return float(max(np.max(np.append(r - ub, 0.0)),
                     np.max(np.append(lb - r, 0.0))))


def _kkt_residual(H, g, A, lb, ub, x, mult) -> float:
    """KKT residual; stationarity and complementarity are scaled by the
    gradient magnitude so badly scaled Hessians stay certifiable."""
    grad = H @ x + g
    scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
    for (row, side), lam in mult.items():
        # Stationarity: grad + sum(lam_ub * a) - sum(lam_lb * a) = 0, lam >= 0.
        grad = grad + (lam if side >= 0 else -lam) * A[row]
    r = float(np.max(np.abs(grad))) / scale
    res = A @ x
    r = max(r, _violation(A, lb, ub, x))
    for (row, side), lam in mult.items():
        if side == 0:
            continue  # equality multipliers are sign-free
        r = max(r, (-lam if lam < 0.0 else 0.0) / scale)  # sign condition
        slack = (ub[row] - res[row]) if side >= 0 else (res[row] - lb[row])
        r = max(r, abs(lam * slack) / scale)
    return r


def _polish(H, g, A, lb, ub, x, work) -> np.ndarray:
    """Re-solve the KKT system at the final active set with one round of
    iterative refinement; adopt the result only if it stays feasible."""
    n = x.shape[0]
    k = len(work)
    KKT = np.zeros((n + k, n + k))
    KKT[:n, :n] = H
    rhs = np.empty(n + k)
    rhs[:n] = -g
    if k:
        rows = [rs[0] for rs in work]
        Aw = A[rows]
        KKT[:n, n:] = Aw.T
        KKT[n:, :n] = Aw
        rhs[n:] = [ub[r] if s >= 0 else lb[r] for r, s in work]
    try:
        sol = np.linalg.solve(KKT, rhs)
        sol += np.linalg.solve(KKT, rhs - KKT @ sol)
    except LinAlgError:
        return x
    x_new = sol[:n]
    if _violation(A, lb, ub, x_new) <= FEAS_TOL:
        return x_new
    return x


def _active_set(H, L, g, A, lb, ub, x0, objective_trace=None) -> QPSolution:
    """Primal active-set iteration from a feasible start x0.

    objective_trace, when given, collects the objective value after every
    iteration (debug hook for the monotone-descent invariant).
    """
    n = g.shape[0]
    m = lb.shape[0]
    x = np.array(x0, dtype=float)

    # Working set from currently active rows (warm sets are re-detected from
    # the point itself, which keeps the set consistent after bound changes).
    work: list = []
    if m:
        r = A @ x
        for i in range(m):
            if lb[i] == ub[i]:
                work.append((i, 0))
            elif r[i] >= ub[i] - FEAS_TOL and np.isfinite(ub[i]):
                work.append((i, +1))
            elif r[i] <= lb[i] + FEAS_TOL and np.isfinite(lb[i]):
                work.append((i, -1))
            if len(work) == n:
                break

    mult: dict = {}
    mu = np.zeros(0)
    max_iter = 50 * (m + 1)
    it = 0
    stall = 0
    obj = 0.5 * float(x @ H @ x) + float(g @ x)
    while it < max_iter:
        it += 1
        grad = H @ x + g
        if len(work) == n:
            # Full square working set: the equality step is identically
            # zero and the multipliers come from stationarity directly.
            Aw = A[[rs[0] for rs in work]]
            try:
                mu = -np.linalg.solve(Aw.T, grad)
            except LinAlgError:
                mu, *_ = np.linalg.lstsq(Aw.T, -grad, rcond=None)
            d = np.zeros(n)
        elif work:
            rows = [rs[0] for rs in work]
            Aw = A[rows]
            Hin_g = _chol_solve(L, grad)
            Hin_At = _chol_solve(L, Aw.T)
            S = Aw @ Hin_At
            rhs = -(Aw @ Hin_g)
            try:
                mu = np.linalg.solve(S, rhs)
                mu += np.linalg.solve(S, rhs - S @ mu)
            except LinAlgError:
                mu, *_ = np.linalg.lstsq(S, rhs, rcond=None)
            d = -Hin_g - Hin_At @ mu
        else:
            mu = np.zeros(0)
            d = -_chol_solve(L, grad)

        # A dependent or noisy working set yields phantom steps that do not
        # move the objective; treat those like a stationary point too.
        tiny_d = float(np.max(np.abs(d), initial=0.0)) <= \
            _ZERO_STEP * (1.0 + float(np.max(np.abs(x), initial=0.0)))
        if tiny_d or stall >= 2:
            # Stationary on the working set; check multiplier signs.
            # Stationarity was solved as grad + Aw^T mu = 0, so an upper
            # bound needs mu >= 0 and a lower bound needs mu <= 0.
            stall = 0
            worst = None
            worst_val = -1e-10
            mult = {}
            for k, (row, side) in enumerate(work):
                lam = float(mu[k]) if side >= 0 else -float(mu[k])
                mult[(row, side)] = lam if side != 0 else float(mu[k])
                if side != 0 and (lam < worst_val
                                  or (worst is not None and lam == worst_val
                                      and row < work[worst][0])):
                    worst_val = lam
                    worst = k
            if worst is None:
                # Guard against sign-valid garbage multipliers from a
                # dependent working set: require genuine stationarity.
                stat = grad.copy()
                for k, (row, side) in enumerate(work):
                    stat += float(mu[k]) * A[row]
                scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
                if float(np.max(np.abs(stat), initial=0.0)) <= 1e-6 * scale:
                    x = _polish(H, g, A, lb, ub, x, work)
                    return QPSolution(x, tuple(work),
                                      _kkt_residual(H, g, A, lb, ub, x, mult),
                                      it, mult)
                # Dependent set: discard the lowest-index inequality row.
                for k, (_, side) in enumerate(work):
                    if side != 0:
                        del work[k]
                        break
                else:
                    break
                continue
            del work[worst]
            continue

        # Ratio test toward the nearest blocking constraint.
        alpha = 1.0
        blocker = None
        if m:
            Ad = A @ d
            res = A @ x
            in_work = {rs[0] for rs in work}
            for i in range(m):
                if i in in_work:
                    continue
                ad = Ad[i]
                if ad > _DIR_TOL and np.isfinite(ub[i]):
                    a_i = (ub[i] - res[i]) / ad
                    if a_i < alpha - 1e-15:
                        alpha, blocker = max(a_i, 0.0), (i, +1)
                elif ad < -_DIR_TOL and np.isfinite(lb[i]):
                    a_i = (lb[i] - res[i]) / ad
                    if a_i < alpha - 1e-15:
                        alpha, blocker = max(a_i, 0.0), (i, -1)
        x = x + alpha * d
        obj_new = 0.5 * float(x @ H @ x) + float(g @ x)
        if blocker is None and obj_new >= obj - 1e-9 * (1.0 + abs(obj)):
            stall += 1  # unblocked full step with no real progress: noise
        else:
            stall = 0
        obj = obj_new
        if objective_trace is not None:
            objective_trace.append(obj)
        if blocker is not None and len(work) < n:
            work.append(blocker)

    mult = {rs: float(m_) for rs, m_ in zip(work, mu)} if work else {}
    return QPSolution(x, tuple(work),
                      _kkt_residual(H, g, A, lb, ub, x, mult), it, mult)


def _phase1(A, lb, ub, x0) -> np.ndarray:
    """Feasible point via the single-artificial-variable auxiliary QP.

    Relaxes every finite bound by t >= 0 and minimizes t (plus a small
    regularizer on x); (x0, violation+1) is feasible by construction, so
    the auxiliary problem needs no phase 1 of its own.
    """
    n = A.shape[1]
    rows = []
    lbs = []
    ubs = []
    inf = np.inf
    for i in range(A.shape[0]):
        if np.isfinite(ub[i]):
            rows.append(np.append(A[i], -1.0))
            lbs.append(-inf)
            ubs.append(ub[i])
        if np.isfinite(lb[i]):
            rows.append(np.append(A[i], 1.0))
            lbs.append(lb[i])
            ubs.append(inf)
    t_row = np.zeros(n + 1)
    t_row[-1] = 1.0
    rows.append(t_row)
    lbs.append(0.0)
    ubs.append(inf)
    Aa = np.vstack(rows)
    Ha = np.diag(np.append(np.full(n, 1e-4), 1.0))
    ga = np.zeros(n + 1)
    ga[-1] = 1.0
    y0 = np.append(x0, _violation(A, lb, ub, x0) + 1.0)
    La, _ = _chol_factor(Ha)
    sol = _active_set(Ha, La, ga, Aa, np.asarray(lbs), np.asarray(ubs), y0)
    t = float(sol.x[-1])
    if t > 1e2 * FEAS_TOL:
        raise Infeasible(f"no feasible point (best bound relaxation {t:.3e})")
    return sol.x[:n]


def solve_qp(prob: QPProblem, warm: Optional[QPSolution] = None,
             objective_trace: Optional[list] = None) -> QPSolution:
    """Minimize over the polytope; deterministic for fixed inputs.

    Returns the optimum with KKT residual <= 1e-8, or the best feasible
    iterate with a larger reported residual when the iteration cap is hit.
    Raises Infeasible when no point satisfies the constraints.
    objective_trace, when given, records the per-iteration objective.
    """
    H, g, A, lb, ub = prob.H, prob.g, prob.A, prob.lb, prob.ub
    n = g.shape[0]
    m = lb.shape[0]
    L, _ = _chol_factor(H)

    if (warm is not None and warm.x.shape == (n,)
            and _violation(A, lb, ub, warm.x) <= FEAS_TOL):
        x = np.array(warm.x, dtype=float)
    elif m == 0:
        x = -_chol_solve(L, g)
    else:
        x = -_chol_solve(L, g)
        if _violation(A, lb, ub, x) > FEAS_TOL:
            x = _phase1(A, lb, ub, x)
    return _active_set(H, L, g, A, lb, ub, x, objective_trace)
