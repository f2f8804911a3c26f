"""Per-context policy covers: trusted transitions, trusted occupancy measures,
reach-maximizing cover members, and inverse gap weighting.

Layers are 0-based here (layer ``h`` is layer ``h + 1`` in 1-based counting).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cmdp import OccupancyTable, Policy, TabularCMDP, evaluate_policy, optimal_values
from .lp import LinearFractionalProgram, solve_lfp

TRUST_TOL = 1e-12
MASS_TOL = 1e-10
COND_TOL = 1e-7
ZERO_OBJECTIVE = 1e-15


@dataclass(frozen=True)
class EpochParams:
    m: int
    budget: float
    gamma: float
    eta: float
    zeta: float


@dataclass(frozen=True, eq=False)
class PolicyCover:
    policies: tuple[Policy, ...]
    regrets: np.ndarray  # estimated regret of each member under the previous-epoch model
    objectives: np.ndarray | None = None

    def __len__(self):
        return len(self.policies)


@dataclass(frozen=True, eq=False)
class IGWDistribution:
    weights: np.ndarray
    lam: float


@dataclass(frozen=True, eq=False)
class CoverMember:
    policy: Policy
    objective: float
    relaxation: float  # value of the unlinked two-block program at the root node
    nodes: int = 1


class CoverError(RuntimeError):
    pass


# --- occupancy recursions -------------------------------------------------------------

def clipped_occupancy(transitions: np.ndarray, trusted: np.ndarray | None, policy: Policy,
                      start_state: int, layers: int | None = None) -> np.ndarray:
    """Occupancy recursion that only propagates mass through trusted transitions.

    ``transitions`` is ``[H, S, A, S]`` for one context; ``trusted`` is a boolean
    ``[L, S, A, S]`` mask for layers ``0..L-1`` (``None`` trusts everything). Returns
    ``[H, S, A]``; layers at index ``> L`` (or ``>= layers``) are left at zero.
    """
    H, S, A, _ = transitions.shape
    if layers is None:
        layers = H if trusted is None else min(H, len(trusted) + 1)
    d = np.zeros((H, S, A))
    state = np.zeros(S)
    state[start_state] = 1.0
    for h in range(layers):
        d[h] = state[:, None] * policy.probs[h]
        if h + 1 < layers:
            kern = transitions[h] if trusted is None else transitions[h] * trusted[h]
            state = np.einsum("sa,sat->t", d[h], kern)
    return d


def trusted_occupancy(estimate: TabularCMDP, trusted: np.ndarray, policy: Policy,
                      context: int) -> OccupancyTable:
    """Trusted occupancy under the estimated kernels; mass on untrusted transitions is dropped."""
    c = estimate.check_context(context)
    return OccupancyTable(clipped_occupancy(estimate.transitions[c], trusted, policy, estimate.start_state))


def observable_occupancy(truth: TabularCMDP, trusted: np.ndarray, policy: Policy,
                         context: int) -> OccupancyTable:
    """The same clipped recursion run under the true kernels (a test-only object)."""
    c = truth.check_context(context)
    return OccupancyTable(clipped_occupancy(truth.transitions[c], trusted, policy, truth.start_state))


# --- inverse gap weighting -----------------------------------------------------------

def igw_distribution(cover: PolicyCover, eta: float, normalization: str = "bisection") -> IGWDistribution:
    """Weights ``1 / (lam + eta * reg)`` with ``lam`` chosen so they sum to one.

    ``normalization="falcon"`` instead gives every member except the first zero-regret
    one the weight ``1 / (2K + eta * reg)`` with ``K = |cover| - 1`` and puts the rest
    on the zero-regret member.
    """
    reg = np.asarray(cover.regrets, float)
    zero = np.flatnonzero(reg == 0.0)
    if zero.size == 0:
        raise CoverError("cover must contain a zero-estimated-regret policy")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    K = len(reg)
    if normalization == "falcon":
        w = 1.0 / (2.0 * max(K - 1, 1) + eta * reg)
        w[zero[0]] = 0.0
        w[zero[0]] = 1.0 - w.sum()
        return IGWDistribution(w, 2.0 * max(K - 1, 1))
    if normalization != "bisection":
        raise ValueError(f"unknown normalization {normalization!r}")
    g = eta * reg

    def u(lam):
        return float(np.sum(1.0 / (lam + g)))

    # u is strictly decreasing, u(0+) = inf and u(K) <= 1
    lo, hi = 0.0, float(K)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if u(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    lam = hi if abs(u(hi) - 1.0) <= abs(u(lo) - 1.0) or lo == 0.0 else lo
    w = 1.0 / (lam + g)
    return IGWDistribution(w, lam)


# --- cover members -------------------------------------------------------------------

@dataclass
class _ContextPlan:
    """Cached per-context artifacts for one epoch."""

    v_star: float
    pi_hat: Policy
    objectives: dict = field(default_factory=dict)  # layer -> [S, A]
    members: dict = field(default_factory=dict)  # layer -> list[list[CoverMember]]
    trusted: dict = field(default_factory=dict)  # layer -> [S, A, S] bool
    covers: dict = field(default_factory=dict)  # layer -> (PolicyCover, IGWDistribution)


class EpochCovers:
    """Lazy, memoized construction of covers for one epoch.

    ``prev_model`` is the full estimate from the previous epoch (used for estimated
    regrets). Layer estimates of the current epoch are attached with
    ``set_layer_estimate`` as their segments finish.
    """

    def __init__(self, params: EpochParams, prev_model: TabularCMDP, normalization: str = "bisection"):
        self.params = params
        self.prev = prev_model
        self.normalization = normalization
        C, H, S, A = prev_model.dims
        self.C, self.H, self.S, self.A = C, H, S, A
        self.layer_P: list[np.ndarray | None] = [None] * H  # [C, S, A, S] per layer
        self._plans: dict[int, _ContextPlan] = {}

    # -- bookkeeping
    def set_layer_estimate(self, h: int, model: TabularCMDP) -> None:
        self.layer_P[h] = np.array(model.transitions[:, h])

    def plan(self, c: int) -> _ContextPlan:
        if c not in self._plans:
            vt, pi_hat = optimal_values(self.prev, c)
            self._plans[c] = _ContextPlan(vt.initial, pi_hat)
        return self._plans[c]

    def estimated_regret(self, c: int, policy: Policy) -> float:
        p = self.plan(c)
        return max(0.0, p.v_star - evaluate_policy(self.prev, c, policy).initial)

    def current_transitions(self, c: int, upto: int) -> np.ndarray:
        """[H, S, A, S] kernel for context c with estimated layers ``< upto`` filled in."""
        P = np.zeros((self.H, self.S, self.A, self.S))
        for j in range(upto):
            if self.layer_P[j] is None:
                raise CoverError(f"layer {j} estimate not available yet")
            P[j] = self.layer_P[j][c]
        return P

    def trusted_masks(self, c: int, upto: int) -> np.ndarray:
        """Stacked trusted sets for layers ``0..upto-1``."""
        masks = np.zeros((upto, self.S, self.A, self.S), dtype=bool)
        for j in range(upto):
            masks[j] = self.trusted(c, j)
        return masks

    # -- trusted transitions
    def trusted(self, c: int, h: int) -> np.ndarray:
        p = self.plan(c)
        if h not in p.trusted:
            if self.layer_P[h] is None:
                raise CoverError(f"layer {h} estimate not available yet")
            obj = self.objectives(c, h)
            thresh = 1.0 / self.params.zeta
            prod = obj[:, :, None] * self.layer_P[h][c]
            p.trusted[h] = (prod > 0.0) & (prod >= thresh - TRUST_TOL)
        return p.trusted[h]

    def objectives(self, c: int, h: int) -> np.ndarray:
        self.layer_members(c, h)
        return self.plan(c).objectives[h]

    # -- members
    def layer_members(self, c: int, h: int) -> list[list[CoverMember]]:
        p = self.plan(c)
        if h not in p.members:
            P = self.current_transitions(c, h)
            T = self.trusted_masks(c, h)
            rows = [[self._member(c, h, s, a, P, T) for a in range(self.A)] for s in range(self.S)]
            p.members[h] = rows
            p.objectives[h] = np.array([[m.objective for m in row] for row in rows])
        return p.members[h]

    def member(self, c: int, h: int, s: int, a: int) -> CoverMember:
        return self.layer_members(c, h)[s][a]

    def cover(self, c: int, h: int) -> tuple[PolicyCover, IGWDistribution]:
        p = self.plan(c)
        if h not in p.covers:
            rows = self.layer_members(c, h)
            policies, seen = [p.pi_hat], {p.pi_hat.key}
            objs = [np.nan]
            for row in rows:
                for mem in row:
                    if mem.policy.key not in seen:
                        seen.add(mem.policy.key)
                        policies.append(mem.policy)
                        objs.append(mem.objective)
            regs = np.array([0.0] + [self.estimated_regret(c, q) for q in policies[1:]])
            regs[regs < 1e-12] = 0.0
            cov = PolicyCover(tuple(policies), regs, np.array(objs))
            p.covers[h] = (cov, igw_distribution(cov, self.params.eta, self.normalization))
        return p.covers[h]

    # -- the reach-maximization program
    def _member(self, c, hbar, sbar, abar, P, T) -> CoverMember:
        prog = _ReachProgram(self, c, hbar, sbar, abar, P, T)
        return prog.maximize()


class _ReachProgram:
    """max over policies of d~^hbar(sbar, abar; pi) / (SA + eta * reg_hat(pi)).

    The LP relaxation keeps two occupancy blocks: the trusted block (layers
    ``0..hbar`` under the current estimates, clipped to trusted transitions) and the
    previous-epoch block (all layers under the previous estimate), which are not
    forced to encode the same policy. The relaxation is tightened by branching on
    deterministic actions at states where the blocks disagree; restricting one state
    to a deterministic action loses nothing because, with every other state fixed,
    the objective is a ratio of affine functions of that state's action distribution.
    """

    def __init__(self, covers: EpochCovers, c, hbar, sbar, abar, P, T):
        self.cv = covers
        self.c, self.hbar, self.sbar, self.abar = c, hbar, sbar, abar
        self.P, self.T = P, T
        H, S, A = covers.H, covers.S, covers.A
        eta = covers.params.eta
        prev = covers.prev
        self.rbar = prev.mean_rewards[c]
        self.linked = eta > 0 and bool(np.any(self.rbar != 0))
        plan = covers.plan(c)
        self.v_star, self.pi_hat = plan.v_star, plan.pi_hat
        nt = (hbar + 1) * S * A
        nh = H * S * A if self.linked else 0
        self.nt, self.nh = nt, nh
        rows, rhs = [], []
        s0 = prev.start_state
        # trusted block
        for s in range(S):
            r = np.zeros(nt + nh)
            r[self._ti(0, s, 0):self._ti(0, s, 0) + A] = 1.0
            rows.append(r)
            rhs.append(1.0 if s == s0 else 0.0)
        for j in range(1, hbar + 1):
            kern = P[j - 1] * T[j - 1]  # [S, A, S]
            for s2 in range(S):
                r = np.zeros(nt + nh)
                r[self._ti(j - 1, 0, 0):self._ti(j, 0, 0)] = kern[:, :, s2].ravel()
                r[self._ti(j, s2, 0):self._ti(j, s2, 0) + A] -= 1.0
                rows.append(r)
                rhs.append(0.0)
        # previous-epoch block
        if self.linked:
            Pp = prev.transitions[c]
            for s in range(S):
                r = np.zeros(nt + nh)
                r[self._hi(0, s, 0):self._hi(0, s, 0) + A] = 1.0
                rows.append(r)
                rhs.append(1.0 if s == s0 else 0.0)
            for j in range(1, H):
                for s2 in range(S):
                    r = np.zeros(nt + nh)
                    r[self._hi(j - 1, 0, 0):self._hi(j, 0, 0)] = Pp[j - 1][:, :, s2].ravel()
                    r[self._hi(j, s2, 0):self._hi(j, s2, 0) + A] -= 1.0
                    rows.append(r)
                    rhs.append(0.0)
        self.A_eq = np.array(rows)
        self.b_eq = np.array(rhs)
        self.num = np.zeros(nt + nh)
        self.num[self._ti(hbar, sbar, abar)] = 1.0
        self.den = np.zeros(nt + nh)
        if self.linked:
            self.den[nt:] = -eta * self.rbar.ravel()
        self.den0 = S * A + (eta * self.v_star if self.linked else 0.0)

    def _ti(self, j, s, a):
        return (j * self.cv.S + s) * self.cv.A + a

    def _hi(self, j, s, a):
        return self.nt + (j * self.cv.S + s) * self.cv.A + a

    def _relevant(self):
        for j in range(self.hbar):
            for s in range(self.cv.S):
                yield j, s
        yield self.hbar, self.sbar

    def _solve(self, fixed: dict):
        keep = np.ones(self.nt + self.nh, dtype=bool)
        A = self.cv.A
        for (j, s), a in fixed.items():
            for a2 in range(A):
                if a2 == a:
                    continue
                if j <= self.hbar:
                    keep[self._ti(j, s, a2)] = False
                if self.linked:
                    keep[self._hi(j, s, a2)] = False
        idx = np.flatnonzero(keep)
        lfp = LinearFractionalProgram(self.num[idx], 0.0, self.den[idx], self.den0,
                                      self.A_eq[:, idx], self.b_eq)
        sol = solve_lfp(lfp)
        x = np.zeros(self.nt + self.nh)
        x[idx] = sol.x
        S = self.cv.S
        dt = x[:self.nt].reshape(self.hbar + 1, S, A)
        dh = x[self.nt:].reshape(self.cv.H, S, A) if self.linked else None
        return sol.value, dt, dh

    def _extract(self, dt, dh) -> Policy:
        H, S, A = self.cv.H, self.cv.S, self.cv.A
        probs = np.full((H, S, A), 1.0 / A)
        relevant = set(self._relevant())
        for j in range(H):
            for s in range(S):
                row = None
                if (j, s) in relevant and dt[j, s].sum() > MASS_TOL:
                    row = dt[j, s]
                elif dh is not None and dh[j, s].sum() > MASS_TOL:
                    row = dh[j, s]
                elif dh is None:
                    row = self.pi_hat.probs[j, s]
                if row is not None:
                    row = np.clip(row, 0.0, None)
                    row = row / row.sum()
                    row[np.abs(row) < 1e-9] = 0.0
                    row[np.abs(row - 1.0) < 1e-9] = 1.0
                    probs[j, s] = row / row.sum()
        return Policy(probs)

    def _inconsistent(self, dt, dh):
        if dh is None:
            return None
        for j, s in self._relevant():
            mt, mh = dt[j, s].sum(), dh[j, s].sum()
            if mt > MASS_TOL and mh > MASS_TOL:
                if np.max(np.abs(dt[j, s] / mt - dh[j, s] / mh)) > COND_TOL:
                    return j, s
        return None

    def value(self, policy: Policy) -> float:
        d = clipped_occupancy(self.P, self.T, policy, self.cv.prev.start_state, layers=self.hbar + 1)
        num = d[self.hbar, self.sbar, self.abar]
        reg = self.cv.estimated_regret(self.c, policy) if self.linked else 0.0
        return float(num / (self.cv.S * self.cv.A + self.cv.params.eta * reg))

    def maximize(self) -> CoverMember:
        best_val, best_pol = -np.inf, None
        root = None
        nodes = 0
        stack = [{}]
        while stack:
            fixed = stack.pop()
            ub, dt, dh = self._solve(fixed)
            nodes += 1
            if root is None:
                root = ub
            if ub <= best_val + 1e-12:
                continue
            pol = self._extract(dt, dh)
            val = self.value(pol)
            if val > best_val + 1e-15:
                best_val, best_pol = val, pol
            split = self._inconsistent(dt, dh)
            if split is None:
                continue
            for a in reversed(range(self.cv.A)):
                stack.append({**fixed, split: a})
        if best_val <= ZERO_OBJECTIVE:
            return CoverMember(self.pi_hat, 0.0, root, nodes)
        return CoverMember(best_pol, best_val, root, nodes)
