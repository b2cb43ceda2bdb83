"""Dense strictly-convex QP solver for the shooting subproblems.

Solves  min 0.5 x'Hx + g'x  subject to  A x <= b  with H symmetric positive
definite, via a dual active-set scheme: start at the unconstrained minimizer,
repeatedly add the most violated constraint while keeping the current point
optimal for the active subset and all multipliers nonnegative, dropping
blocking constraints along the way. Needs no phase-1 point and reports
infeasibility when a violated constraint cannot be activated.

H is factorized once; H^{-1}a columns are computed lazily per activated row
and the active-set Gram matrix is maintained incrementally. Solves are fully
deterministic (ties broken by lowest row index).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = ["QpResult", "solve_qp", "QpError"]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"

_RTINY = 1e-14


class QpError(RuntimeError):
    """Raised when the active-set iteration fails to make progress."""


@dataclass
class QpResult:
    x: np.ndarray
    lam: np.ndarray  # one multiplier per row, >= 0, nonzero only on active rows
    status: str
    iterations: int
    active: list

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def solve_qp(
    hess: np.ndarray,
    grad: np.ndarray,
    a_ineq: np.ndarray | None = None,
    b_ineq: np.ndarray | None = None,
    *,
    feas_tol: float = 1e-10,
    max_iter: int | None = None,
    warm_active: list[int] | None = None,
) -> QpResult:
    """Solve the inequality-constrained QP described in the module docstring.

    Zero rows of ``a_ineq`` are admissible: they are feasible iff b >= -tol,
    otherwise the problem is reported infeasible outright. ``warm_active``
    seeds the active set (e.g. from the previous receding-horizon step): the
    equality-constrained KKT system over those rows is solved once, rows with
    negative multipliers are dropped, and the usual iteration continues from
    there; a bad guess only costs the bootstrap solve.
    """
    hess = np.asarray(hess, dtype=float)
    grad = np.asarray(grad, dtype=float)
    n = grad.shape[0]
    if a_ineq is None or len(a_ineq) == 0:
        a_ineq = np.zeros((0, n))
        b_ineq = np.zeros(0)
    a_ineq = np.asarray(a_ineq, dtype=float)
    b_ineq = np.asarray(b_ineq, dtype=float)
    m = a_ineq.shape[0]

    chol = cho_factor(hess, lower=True)
    x = cho_solve(chol, -grad)
    lam = np.zeros(m)
    if m == 0:
        return QpResult(x=x, lam=lam, status=OPTIMAL, iterations=0, active=[])

    row_scale = np.maximum(1.0, np.abs(b_ineq))
    zero_rows = ~np.any(a_ineq, axis=1)
    if np.any(zero_rows & (b_ineq < -feas_tol * row_scale)):
        return QpResult(x=x, lam=lam, status=INFEASIBLE, iterations=0, active=[])

    hi_cache: dict[int, np.ndarray] = {}

    def hi_col(idx: int) -> np.ndarray:
        col = hi_cache.get(idx)
        if col is None:
            col = cho_solve(chol, a_ineq[idx])
            hi_cache[idx] = col
        return col

    active: list[int] = []
    hi_w = np.zeros((n, 0))  # H^{-1} A_W'
    gram_w = np.zeros((0, 0))  # A_W H^{-1} A_W'

    if warm_active:
        guess = [int(i) for i in dict.fromkeys(warm_active) if 0 <= int(i) < m and not zero_rows[i]]
        x_unc = x
        for _ in range(len(guess) + 1):
            if not guess:
                break
            cols = np.column_stack([hi_col(i) for i in guess])
            gram = a_ineq[guess] @ cols
            rhs = a_ineq[guess] @ x_unc - b_ineq[guess]
            try:
                lam_guess = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                lam_guess = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            worst = int(np.argmin(lam_guess))
            if lam_guess[worst] < 0.0:
                guess.pop(worst)
                continue
            active = guess
            hi_w = cols
            gram_w = gram
            x = x_unc - cols @ lam_guess
            lam[active] = lam_guess
            break

    if max_iter is None:
        max_iter = 20 * (m + n) + 100
    it = 0
    while True:
        viol = (a_ineq @ x - b_ineq) / row_scale
        if active:
            viol[active] = -np.inf
        viol[zero_rows] = -np.inf
        p = int(np.argmax(viol))
        if viol[p] <= feas_tol:
            return QpResult(x=x, lam=lam, status=OPTIMAL, iterations=it, active=list(active))

        a_p = a_ineq[p]
        hi_p = hi_col(p)
        gram_pp = float(a_p @ hi_p)
        lam_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise QpError("active-set iteration limit exceeded")
            k = len(active)
            if k:
                cross = a_ineq[active] @ hi_p
                try:
                    r = np.linalg.solve(gram_w, cross)
                except np.linalg.LinAlgError:
                    r = np.linalg.lstsq(gram_w, cross, rcond=None)[0]
                z = hi_p - hi_w @ r
                denom = gram_pp - float(cross @ r)
            else:
                cross = np.zeros(0)
                r = np.zeros(0)
                z = hi_p
                denom = gram_pp

            # dual step length: keep active multipliers nonnegative
            t1 = np.inf
            j_block = -1
            if k:
                lam_w = lam[active]
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = np.where(r > _RTINY, lam_w / np.where(r > _RTINY, r, 1.0), np.inf)
                j_block = int(np.argmin(ratios))
                t1 = float(ratios[j_block])
                if not np.isfinite(t1):
                    j_block = -1
            # primal step length: distance to make row p tight
            slack = float(a_p @ x - b_ineq[p])
            t2 = slack / denom if denom > _RTINY else np.inf

            t = min(t1, t2)
            if not np.isfinite(t):
                return QpResult(x=x, lam=lam, status=INFEASIBLE, iterations=it, active=list(active))
            if denom > _RTINY:
                x = x - t * z
            lam_p += t
            if k:
                lam[active] = np.maximum(lam[active] - t * r, 0.0)
            if t == t2 and np.isfinite(t2):
                # activate p: border the Gram matrix and append the solve column
                new_gram = np.empty((k + 1, k + 1))
                new_gram[:k, :k] = gram_w
                new_gram[:k, k] = cross
                new_gram[k, :k] = cross
                new_gram[k, k] = gram_pp
                gram_w = new_gram
                hi_w = np.concatenate([hi_w, hi_p[:, None]], axis=1)
                active.append(p)
                lam[p] = lam_p
                break
            # dual step only: drop the blocking row and retry activating p
            dropped = active.pop(j_block)
            lam[dropped] = 0.0
            keep = np.arange(k) != j_block
            gram_w = gram_w[np.ix_(keep, keep)]
            hi_w = hi_w[:, keep]
