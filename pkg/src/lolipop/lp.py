"""Dense primal simplex (Bland's rule) and the Charnes-Cooper reduction for
linear-fractional programs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9


class LPError(RuntimeError):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """maximize ``c @ x`` subject to ``A_eq @ x = b_eq``, ``x >= 0``."""

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, float).ravel()
        A = np.asarray(self.A_eq, float).reshape(-1, c.size)
        b = np.asarray(self.b_eq, float).ravel()
        if A.shape[0] != b.size:
            raise ValueError(f"A_eq has {A.shape[0]} rows but b_eq has {b.size} entries")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_eq", A)
        object.__setattr__(self, "b_eq", b)


@dataclass(frozen=True, eq=False)
class LPSolution:
    value: float
    x: np.ndarray
    iterations: int


@dataclass(frozen=True, eq=False)
class LinearFractionalProgram:
    """maximize ``(num @ x + num0) / (den @ x + den0)`` subject to ``A_eq @ x = b_eq``, ``x >= 0``.

    The denominator must be strictly positive on the feasible region.
    """

    num: np.ndarray
    num0: float
    den: np.ndarray
    den0: float
    A_eq: np.ndarray
    b_eq: np.ndarray


@dataclass(frozen=True, eq=False)
class LFPSolution:
    value: float
    x: np.ndarray
    t: float


class _Tableau:
    """Rows ``[A | b]`` in canonical form w.r.t. ``basis``; reduced costs kept separately."""

    def __init__(self, T: np.ndarray, basis: list[int]):
        self.T = T
        self.basis = basis
        self.iterations = 0

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.iterations += 1

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> float:
        """Maximize ``cost @ x`` over the columns flagged in ``allowed``."""
        T = self.T
        m = T.shape[0]
        while True:
            cb = cost[self.basis]
            # reduced cost of column j: cost_j - cb @ T[:, j]
            reduced = cost - cb @ T[:, :-1]
            cand = np.flatnonzero(allowed & (reduced > PIVOT_TOL))
            if cand.size == 0:
                return float(cb @ T[:, -1])
            j = int(cand[0])  # Bland: smallest entering index
            colj = T[:, j]
            rows = np.flatnonzero(colj > PIVOT_TOL)
            if rows.size == 0:
                raise Unbounded("objective is unbounded above")
            ratios = T[rows, -1] / colj[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            # Bland: among tied rows, leave the basic variable with the smallest index
            r = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(r, j)
            if self.iterations > max_iter:
                raise LPError(f"simplex exceeded {max_iter} pivots on a {m}-row tableau")


def solve_lp(lp: LinearProgram, max_iter: int = 50_000) -> LPSolution:
    """Two-phase primal simplex with Bland's anti-cycling rule.

    Raises ``Infeasible`` or ``Unbounded``.
    """
    A, b, c = lp.A_eq.copy(), lp.b_eq.copy(), lp.c
    m, n = A.shape
    if m == 0:
        if np.any(c > PIVOT_TOL):
            raise Unbounded("no constraints and a positive objective coefficient")
        return LPSolution(0.0, np.zeros(n), 0)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    # phase 1: artificials n..n+m-1, maximize -sum(artificials)
    T = np.hstack([A, np.eye(m), b[:, None]])
    tab = _Tableau(T, list(range(n, n + m)))
    cost1 = np.concatenate([np.zeros(n), -np.ones(m)])
    allowed = np.ones(n + m, dtype=bool)
    val1 = tab.run(cost1, allowed, max_iter)
    if val1 < -FEAS_TOL * max(1.0, float(np.abs(b).max())):
        raise Infeasible(f"phase 1 ended with infeasibility {-val1:.3g}")
    # drive artificials out of the basis; drop redundant rows
    r = 0
    while r < tab.T.shape[0]:
        if tab.basis[r] >= n:
            nz = np.flatnonzero(np.abs(tab.T[r, :n]) > PIVOT_TOL)
            if nz.size:
                tab.pivot(r, int(nz[0]))
            else:
                tab.T = np.delete(tab.T, r, axis=0)
                del tab.basis[r]
                continue
        r += 1
    tab.T[:, n:n + m] = 0.0
    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    cost2 = np.concatenate([c, np.zeros(m)])
    value = tab.run(cost2, allowed, max_iter)
    x = np.zeros(n + m)
    x[tab.basis] = tab.T[:, -1]
    x = np.clip(x[:n], 0.0, None)
    return LPSolution(float(c @ x), x, tab.iterations)


def charnes_cooper(lfp: LinearFractionalProgram) -> LinearProgram:
    """Variables ``(y, t)`` with ``y = t x``: maximize ``num @ y + num0 t`` subject to
    ``A_eq y - b_eq t = 0`` and ``den @ y + den0 t = 1``."""
    num = np.asarray(lfp.num, float)
    den = np.asarray(lfp.den, float)
    A = np.asarray(lfp.A_eq, float).reshape(-1, num.size)
    b = np.asarray(lfp.b_eq, float)
    A_cc = np.vstack([
        np.hstack([A, -b[:, None]]),
        np.concatenate([den, [lfp.den0]])[None, :],
    ])
    b_cc = np.zeros(A_cc.shape[0])
    b_cc[-1] = 1.0
    return LinearProgram(np.concatenate([num, [lfp.num0]]), A_cc, b_cc)


def solve_lfp(lfp: LinearFractionalProgram, t_min: float = 1e-12) -> LFPSolution:
    sol = solve_lp(charnes_cooper(lfp))
    y, t = sol.x[:-1], sol.x[-1]
    if t <= t_min:
        raise LPError(f"Charnes-Cooper scale t = {t:.3g}: ratio unbounded or denominator vanishes")
    return LFPSolution(sol.value, y / t, float(t))
