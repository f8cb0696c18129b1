"""Dense two-phase simplex for the small envelope LPs.

The problems have the form::

    minimize    c @ lam
    subject to  A @ lam = r,  lam >= 0

with ``A`` having only ``d + 1`` rows, so a dense tableau with Bland's rule
is plenty fast and never cycles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERIC_FAILURE = "numeric-failure"


@dataclass(frozen=True, eq=False)
class LpProblem:
    cost: np.ndarray      # (n,)
    columns: np.ndarray   # (m, n)
    rhs: np.ndarray       # (m,)
    tol: float = 1e-9

    def __post_init__(self):
        if self.columns.ndim != 2 or self.columns.shape[1] < 1:
            raise ValueError("need at least one column")
        if self.columns.shape != (len(self.rhs), len(self.cost)):
            raise ValueError("shape mismatch between cost, columns and rhs")

    @classmethod
    def hull(cls, points, values, x, tol: float = 1e-9) -> "LpProblem":
        """Convex-combination LP: points lifted to ``(s, 1)``, rhs ``(x, 1)``."""
        points = np.asarray(points, dtype=float)
        cols = np.vstack([points.T, np.ones(len(points))])
        rhs = np.append(np.asarray(x, dtype=float), 1.0)
        return cls(np.asarray(values, dtype=float), cols, rhs, tol)

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.rhs))), float(np.max(np.abs(self.cost))))


@dataclass(frozen=True, eq=False)
class LpSolution:
    lam: np.ndarray
    objective: float
    dual: np.ndarray
    status: str
    iterations: int
    basis: tuple[int, ...] = ()

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.lam > 0.0)


class _Tableau:
    def __init__(self, A, r):
        m, n = A.shape
        self.m, self.n = m, n
        self.T = np.hstack([A, np.eye(m)])
        self.beta = r.copy()
        self.basis = list(range(n, n + m))
        self.iterations = 0

    def pivot(self, i, j):
        T = self.T
        piv = T[i, j]
        T[i] /= piv
        self.beta[i] /= piv
        col = T[:, j].copy()
        col[i] = 0.0
        T -= np.outer(col, T[i])
        self.beta -= col * self.beta[i]
        self.basis[i] = j
        self.iterations += 1

    def run(self, c, allowed, rc_tol, piv_tol, max_iter):
        """Bland's rule on cost ``c``; returns False on iteration blow-up."""
        while True:
            if self.iterations > max_iter:
                return False
            rc = c - c[self.basis] @ self.T
            cand = np.flatnonzero(allowed & (rc < -rc_tol))
            if cand.size == 0:
                return True
            j = int(cand[0])
            colj = self.T[:, j]
            rows = np.flatnonzero(colj > piv_tol)
            if rows.size == 0:
                # unbounded cannot happen on the simplex-bounded feasible set
                return False
            ratios = self.beta[rows] / colj[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-14 * max(1.0, abs(best))]
            i = int(min(ties, key=lambda k: self.basis[k]))
            self.pivot(i, j)


def solve_lp(problem: LpProblem) -> LpSolution:
    A = np.asarray(problem.columns, dtype=float)
    r = np.asarray(problem.rhs, dtype=float)
    c = np.asarray(problem.cost, dtype=float)
    m, n = A.shape
    scale = problem.scale
    rc_tol = problem.tol * scale
    piv_tol = 1e-11 * max(1.0, float(np.max(np.abs(A))))
    max_iter = 50 * (n + m)

    sign = np.where(r < 0, -1.0, 1.0)
    tab = _Tableau(A * sign[:, None], r * sign)

    def fail():
        return LpSolution(np.zeros(n), np.nan, np.full(m, np.nan), NUMERIC_FAILURE, tab.iterations)

    # phase 1: minimize the sum of artificials
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    if not tab.run(c1, allowed, 1e-12 * scale, piv_tol, max_iter):
        return fail()
    infeas = float(np.sum(tab.beta[[k for k, v in enumerate(tab.basis) if v >= n]]))
    if infeas > problem.tol * scale:
        return LpSolution(np.zeros(n), np.nan, np.full(m, np.nan), INFEASIBLE, tab.iterations)

    # drive zero-level artificials out of the basis where possible
    for i in range(m):
        if tab.basis[i] >= n:
            nz = np.flatnonzero(np.abs(tab.T[i, :n]) > piv_tol)
            if nz.size:
                tab.pivot(i, int(nz[0]))

    # phase 2
    c2 = np.concatenate([c, np.zeros(m)])
    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    if not tab.run(c2, allowed, rc_tol, piv_tol, max_iter):
        return fail()

    basis = list(tab.basis)
    real = [k for k, v in enumerate(basis) if v < n]
    lam = np.zeros(n)
    if len(real) == m:
        # clean re-solve against the original columns
        B = A[:, basis]
        try:
            lam_b = np.linalg.solve(B, r)
            dual = np.linalg.solve(B.T, c[basis])
        except np.linalg.LinAlgError:
            return fail()
        lam[basis] = lam_b
    else:
        lam[[basis[k] for k in real]] = tab.beta[real]
        binv = tab.T[:, n:]
        cb = np.array([c[v] if v < n else 0.0 for v in basis])
        dual = (cb @ binv) * sign

    # weights are dimensionless; allow conditioning-level noise before failing
    if np.any(lam < -max(problem.tol, 1e-9)):
        return fail()
    lam = np.where(lam < 0.0, 0.0, lam)
    if np.max(np.abs(A @ lam - r)) > max(problem.tol, 1e-9) * scale:
        return fail()
    objective = float(c @ lam)
    return LpSolution(lam, objective, dual, OPTIMAL, tab.iterations, tuple(basis))
