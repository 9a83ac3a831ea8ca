"""Integral association for fixed powers and bandwidths.

With powers and bandwidths frozen, choosing which satellite serves each
terminal is a generalized assignment problem: every terminal goes to exactly
one eligible satellite, each satellite has a bandwidth capacity, and the cost
of an assignment is the power it needs.  :func:`solve_gap` solves it by
best-first branch and bound over LP relaxations handled by a dense simplex.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .convex import LN2, Allocation, min_power_for_rate
from .errors import InfeasibleError
from .instance import ProblemInstance

REL_TOL = 1e-9
NODE_LIMIT = 1_000_000
ORACLE_LIMIT = 10**7


@dataclass(frozen=True, eq=False)
class BinaryAssociation:
    """Integral association: ``alpha`` (M x K) and ``mu`` (M x N) with entries in {0, 1}."""

    alpha: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if alpha.ndim != 2 or mu.ndim != 2 or alpha.shape[0] != mu.shape[0]:
            raise ValueError("alpha and mu must be 2-d with the same number of rows")
        for name, arr in (("alpha", alpha), ("mu", mu)):
            if not np.all((arr == 0.0) | (arr == 1.0)):
                raise ValueError(f"{name} entries must be exactly 0 or 1")
            if arr.size and np.any(arr.sum(axis=0) > 1):
                raise ValueError(f"{name}: a terminal is assigned to more than one satellite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "mu", mu)

    @property
    def weights(self) -> np.ndarray:
        return np.hstack((self.alpha, self.mu))

    @property
    def assignment(self) -> np.ndarray:
        """Serving satellite of every terminal (SUEs first), -1 when unassigned."""
        w = self.weights
        out = np.argmax(w, axis=0)
        out[w.sum(axis=0) == 0] = -1
        return out

    @classmethod
    def from_weights(cls, weights, K: int) -> "BinaryAssociation":
        weights = np.asarray(weights, dtype=float)
        return cls(weights[:, :K], weights[:, K:])

    @classmethod
    def from_assignment(cls, assignment, M: int, K: int) -> "BinaryAssociation":
        assignment = np.asarray(assignment, dtype=np.int64)
        w = np.zeros((M, assignment.size))
        idx = np.flatnonzero(assignment >= 0)
        w[assignment[idx], idx] = 1.0
        return cls.from_weights(w, K)

    def __eq__(self, other):
        if not isinstance(other, BinaryAssociation):
            return NotImplemented
        return np.array_equal(self.alpha, other.alpha) and np.array_equal(self.mu, other.mu)


# ---------------------------------------------------------------------------
# LP relaxation
# ---------------------------------------------------------------------------


@dataclass
class LPResult:
    status: str  # "Optimal" | "Infeasible" | "Unbounded" | "MaxIter"
    x: np.ndarray
    objective: float


def solve_lp(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, eps: float = 1e-10) -> LPResult:
    """Minimize ``c.x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub``, ``x >= 0``.

    Two-phase dense tableau simplex with Bland's rule.  Meant for the small,
    well-scaled relaxations built by :func:`solve_gap`.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A_eq = np.zeros((0, n)) if A_eq is None else np.asarray(A_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    A_ub = np.zeros((0, n)) if A_ub is None else np.asarray(A_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    me, mu = A_eq.shape[0], A_ub.shape[0]
    rows = me + mu

    # columns: x | slacks for ub rows | artificials
    sign_ub = np.where(b_ub < 0, -1.0, 1.0)
    needs_art = np.concatenate((np.ones(me, dtype=bool), b_ub < 0))
    art_rows = np.flatnonzero(needs_art)
    na = art_rows.size
    ncol = n + mu + na
    tab = np.zeros((rows + 1, ncol + 1))
    eq_sign = np.where(b_eq < 0, -1.0, 1.0)
    tab[:me, :n] = A_eq * eq_sign[:, None]
    tab[:me, -1] = b_eq * eq_sign
    tab[me:rows, :n] = A_ub * sign_ub[:, None]
    tab[me:rows, n : n + mu] = np.diag(sign_ub)
    tab[me:rows, -1] = b_ub * sign_ub
    basis = np.empty(rows, dtype=np.int64)
    basis[me:rows] = n + np.arange(mu)
    for j, r in enumerate(art_rows):
        tab[r, n + mu + j] = 1.0
        basis[r] = n + mu + j
    max_iter = 50 * (rows + ncol) + 100

    if na:
        tab[-1] = -tab[art_rows].sum(axis=0)
        tab[-1, n + mu : ncol] = 0.0
        status, _ = kernels.simplex(tab, basis, max_iter, eps)
        if status == 2:
            return LPResult("MaxIter", np.full(n, np.nan), math.nan)
        infeas = -tab[-1, -1]
        if infeas > 1e-9 * (1.0 + np.abs(tab[:rows, -1]).sum()):
            return LPResult("Infeasible", np.full(n, np.nan), math.inf)
        keep = np.ones(rows, dtype=bool)
        for r in range(rows):
            if basis[r] >= n + mu:
                cand = np.flatnonzero(np.abs(tab[r, : n + mu]) > 1e-9)
                if cand.size == 0:
                    keep[r] = False
                    continue
                j = cand[0]
                tab[r] /= tab[r, j]
                f = tab[:, j].copy()
                f[r] = 0.0
                tab -= np.outer(f, tab[r])
                basis[r] = j
        sel = np.concatenate((np.flatnonzero(keep), [rows]))
        tab = np.ascontiguousarray(np.delete(tab[sel], np.s_[n + mu : ncol], axis=1))
        basis = np.ascontiguousarray(basis[keep])
        rows = basis.size

    cost = np.concatenate((c, np.zeros(mu)))
    tab[-1, :-1] = cost
    tab[-1, -1] = 0.0
    for r in range(rows):
        cb = cost[basis[r]]
        if cb != 0.0:
            tab[-1] -= cb * tab[r]
    status, _ = kernels.simplex(tab, basis, max_iter, eps)
    if status == 1:
        return LPResult("Unbounded", np.full(n, np.nan), -math.inf)
    if status == 2:
        return LPResult("MaxIter", np.full(n, np.nan), math.nan)
    x = np.zeros(n + mu)
    x[basis] = tab[:rows, -1]
    x = x[:n]
    return LPResult("Optimal", x, float(c @ x))


# ---------------------------------------------------------------------------
# generalized assignment by branch and bound
# ---------------------------------------------------------------------------


@dataclass
class GapResult:
    assignment: np.ndarray  # satellite per terminal, -1 if infeasible
    objective: float
    status: str  # "Optimal" | "Infeasible" | "MaxIter"
    nodes: int
    root_bound: float


def _relaxation(cost, weight, cap, allowed):
    M, T = cost.shape
    mm, tt = np.nonzero(allowed)
    n = mm.size
    if n == 0 or np.any(~allowed.any(axis=0)):
        return None, None, None
    A_eq = np.zeros((T, n))
    A_eq[tt, np.arange(n)] = 1.0
    A_ub = np.zeros((M, n))
    A_ub[mm, np.arange(n)] = weight[mm, tt]
    res = solve_lp(cost[mm, tt], A_eq, np.ones(T), A_ub, cap)
    return res, mm, tt


def _integral_feasible(assign, weight, cap, allowed):
    T = assign.size
    if np.any(assign < 0) or not np.all(allowed[assign, np.arange(T)]):
        return False
    load = np.bincount(assign, weight[assign, np.arange(T)], minlength=cap.size)
    return bool(np.all(load <= cap * (1.0 + REL_TOL) + 1e-12))


def _branch_and_bound(cost, weight, cap, allowed, cutoff=math.inf, node_limit=NODE_LIMIT):
    """Best-first B&B; returns (best assignment or None, objective, nodes, root bound, hit_limit)."""
    M, T = cost.shape
    best, best_obj = None, math.inf
    counter = itertools.count()
    res, mm, tt = _relaxation(cost, weight, cap, allowed)
    nodes = 1
    if res is None or res.status != "Optimal":
        return None, math.inf, nodes, math.inf, False
    root_bound = res.objective
    heap = [(res.objective, next(counter), allowed, res, mm, tt)]
    hit_limit = False

    def bound_ok(b):
        limit = min(best_obj, cutoff)
        return b <= limit + REL_TOL * abs(limit) + 1e-300 if math.isfinite(limit) else True

    while heap:
        bound, _, allow, res, mm, tt = heapq.heappop(heap)
        if not bound_ok(bound):
            continue
        x = res.x
        frac = np.abs(x - np.round(x))
        if np.all(frac <= 1e-7):
            assign = np.full(T, -1, dtype=np.int64)
            on = x > 0.5
            assign[tt[on]] = mm[on]
            if _integral_feasible(assign, weight, cap, allow):
                obj = float(cost[assign, np.arange(T)].sum())
                if obj <= cutoff * (1.0 + REL_TOL) and obj < best_obj:
                    best, best_obj = assign, obj
                continue
        j = int(np.argmax(np.minimum(x, 1.0 - x)))
        m, t = mm[j], tt[j]
        for fix_one in (True, False):
            child = allow.copy()
            if fix_one:
                child[:, t] = False
                child[m, t] = True
            else:
                child[m, t] = False
            if nodes >= node_limit:
                hit_limit = True
                break
            nodes += 1
            cres, cmm, ctt = _relaxation(cost, weight, cap, child)
            if cres is None or cres.status != "Optimal":
                continue
            if bound_ok(cres.objective):
                heapq.heappush(heap, (max(cres.objective, bound), next(counter), child, cres, cmm, ctt))
        if hit_limit:
            break
    return best, best_obj, nodes, root_bound, hit_limit


def solve_gap(cost, weight, capacity, *, lexicographic: bool = True, node_limit: int = NODE_LIMIT) -> GapResult:
    """Assign every terminal (column) to exactly one satellite (row).

    Minimizes ``sum cost[a_t, t]`` subject to ``sum_{t: a_t = m} weight[m, t] <=
    capacity[m]``.  Entries of ``cost`` that are ``inf`` or ``nan`` mark
    ineligible pairs.  Among assignments within a relative 1e-9 of the optimum
    the lexicographically smallest assignment vector is returned when
    ``lexicographic`` is set.
    """
    cost = np.asarray(cost, dtype=float)
    weight = np.asarray(weight, dtype=float)
    capacity = np.asarray(capacity, dtype=float)
    M, T = cost.shape
    if T == 0:
        return GapResult(np.zeros(0, dtype=np.int64), 0.0, "Optimal", 0, 0.0)
    allowed = np.isfinite(cost) & (weight <= capacity[:, None] * (1.0 + REL_TOL))
    # scale rows and costs to O(1) for the simplex
    cscale = np.max(np.abs(cost[allowed])) if allowed.any() else 1.0
    cscale = cscale if cscale > 0 else 1.0
    wscale = np.where(capacity > 0, capacity, 1.0)
    c_s = np.where(allowed, cost, 0.0) / cscale
    w_s = weight / wscale[:, None]
    cap_s = capacity / wscale

    best, best_obj, nodes, root, hit = _branch_and_bound(c_s, w_s, cap_s, allowed, node_limit=node_limit)
    if best is None:
        status = "MaxIter" if hit else "Infeasible"
        return GapResult(np.full(T, -1, dtype=np.int64), math.inf, status, nodes, root * cscale)
    status = "MaxIter" if hit else "Optimal"
    if lexicographic and not hit:
        cutoff = best_obj
        for t in range(T):
            for m in range(best[t]):
                if not allowed[m, t]:
                    continue
                restrict = allowed.copy()
                restrict[:, :t] = False
                restrict[best[:t], np.arange(t)] = True
                restrict[:, t] = False
                restrict[m, t] = True
                cand, cobj, n_extra, _, _ = _branch_and_bound(
                    c_s, w_s, cap_s, restrict, cutoff=cutoff, node_limit=node_limit
                )
                nodes += n_extra
                if cand is not None and cobj <= cutoff * (1.0 + REL_TOL):
                    best, best_obj = cand, cobj
                    break
    objective = float(np.where(allowed, cost, 0.0)[best, np.arange(T)].sum())
    return GapResult(best, objective, status, nodes, root * cscale)


# ---------------------------------------------------------------------------
# association subproblem
# ---------------------------------------------------------------------------


def fixed_link_powers(inst: ProblemInstance, alloc: Allocation) -> np.ndarray:
    """Power of every (satellite, terminal) pair under the frozen allocation.

    Links the allocation left at zero power get the least power that meets
    the terminal's demand over its current bandwidth, capped at the terminal's
    power limit.
    """
    powers = alloc.powers.copy()
    W = alloc.bandwidth
    fill = min_power_for_rate(
        np.broadcast_to(inst.demand, powers.shape),
        np.broadcast_to(np.maximum(W, 1e-300), powers.shape),
        inst.gains,
        inst.noise[:, None],
    )
    fill = np.minimum(fill, inst.power_cap[None, :])
    zero = powers <= 0.0
    powers[zero] = fill[zero]
    return powers


def _single_link_rates(inst, powers, W):
    Wb = np.maximum(W, 1e-300)[None, :]
    return Wb * np.log1p(powers * inst.gains / (inst.noise[:, None] * Wb)) / LN2


def association_problem(inst: ProblemInstance, alloc: Allocation):
    """Cost, eligibility and bandwidth weights of the association subproblem.

    Returns ``(cost, weight, capacity)`` with ``cost = inf`` on pairs that
    cannot meet demand within the power cap at the frozen allocation.
    """
    powers = fixed_link_powers(inst, alloc)
    W = alloc.bandwidth
    rates = _single_link_rates(inst, powers, W)
    ok = (rates >= inst.demand[None, :] * (1.0 - REL_TOL)) & (
        powers <= inst.power_cap[None, :] * (1.0 + REL_TOL)
    )
    ok &= (W > 0)[None, :] & (inst.gains > 0)
    cost = np.where(ok, powers, np.inf)
    weight = np.broadcast_to(W, powers.shape).copy()
    return cost, weight, inst.W_leo.copy()


def solve_association(inst: ProblemInstance, alloc: Allocation, tol: float = REL_TOL):
    """Cheapest integral association for frozen powers and bandwidths.

    Returns ``(BinaryAssociation, objective)``.  Raises :class:`InfeasibleError`
    when no assignment serves every terminal within the power caps and the
    per-satellite bandwidth budgets.
    """
    cost, weight, cap = association_problem(inst, alloc)
    res = solve_gap(cost, weight, cap)
    if res.status == "Infeasible":
        raise InfeasibleError("no integral association meets all demands", res)
    return BinaryAssociation.from_assignment(res.assignment, inst.M, inst.K), res.objective


def enumerate_association_oracle(inst: ProblemInstance, alloc: Allocation):
    """Brute-force optimum of the association subproblem (test oracle).

    Every terminal may pick any satellite or none.  Only for
    ``(M + 1) ** (K + N) <= 1e7``; raises ``ValueError`` beyond that.
    """
    M, T = inst.M, inst.T
    if (M + 1) ** T > ORACLE_LIMIT:
        raise ValueError(f"(M + 1)^(K + N) = {(M + 1) ** T} exceeds the enumeration limit {ORACLE_LIMIT}")
    powers = fixed_link_powers(inst, alloc)
    W = alloc.bandwidth
    rate = _single_link_rates(inst, powers, W)
    best, best_obj = None, math.inf
    cols = np.arange(T)
    for choice in itertools.product(range(-1, M), repeat=T):
        a = np.array(choice, dtype=np.int64)
        if np.any(a < 0):
            continue  # positive demand makes "unassigned" infeasible
        if np.any(rate[a, cols] < inst.demand * (1.0 - REL_TOL)):
            continue
        if np.any(powers[a, cols] > inst.power_cap * (1.0 + REL_TOL)):
            continue
        if np.any(inst.gains[a, cols] <= 0):
            continue
        load = np.bincount(a, W, minlength=M)
        if np.any(load > inst.W_leo * (1.0 + REL_TOL) + 1e-12):
            continue
        obj = float(powers[a, cols].sum())
        if obj < best_obj * (1.0 - REL_TOL):
            best, best_obj = a, obj
    if best is None:
        raise InfeasibleError("no integral association meets all demands")
    return BinaryAssociation.from_assignment(best, M, inst.K), best_obj
