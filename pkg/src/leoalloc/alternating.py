"""Alternating optimization of association, power and bandwidth.

Each round solves the convex allocation problem for the current relaxed
association, picks a new integral association for the resulting allocation,
and blends it into the relaxed one with step ``rho``.  Blending, rather than
jumping straight to the new integral point, keeps the iterates from locking
onto the first association the integer step returns.  Once the objective
settles the relaxed association is rounded and the allocation re-solved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assoc import BinaryAssociation, solve_association, solve_gap
from .convex import (
    Allocation,
    FractionalAssociation,
    LN2,
    SolveReport,
    min_bandwidth_for_rate,
    min_power_for_rate,
    solve_allocation,
    split_satellite_band,
    terminal_rates,
)
from .errors import InfeasibleError
from .greedy import GreedyDeadlock, greedy_associate
from .instance import ProblemInstance

BUDGET_MARGIN = 1e-6


@dataclass
class AlgorithmConfig:
    """Settings of the alternating loop.

    ``association_rule`` picks the integer step.  ``"moves"`` (default) ranks
    single-terminal moves by the allocation's linearized cost and keeps the
    first one that lowers the exact power of the integral target, provided
    the blended iterate does not rise and the target sits within
    ``drift_tol`` of it; at most ``max_guard`` blended solves are spent per
    round.  ``"literal"`` solves the association problem with every
    terminal's bandwidth frozen at its current value.  ``polish`` runs an
    exact single-move / swap descent on the rounded association before the
    final solve.
    """

    rho: float = 0.7
    eps: float = 1e-4
    max_iters: int = 100
    tol: float = 1e-6
    association_rule: str = "moves"
    keep_initial: bool = True
    polish: bool = True
    max_guard: int = 3
    drift_tol: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.association_rule not in ("moves", "literal"):
            raise ValueError("association_rule must be 'moves' or 'literal'")


@dataclass
class Metrics:
    total_power_w: float
    total_power_dbw: float
    rates: np.ndarray
    satisfied: np.ndarray
    satisfaction: float
    per_leo_connections: np.ndarray
    bandwidth_used: np.ndarray
    bandwidth_utilization: np.ndarray


@dataclass
class Solution:
    allocation: Allocation
    association: BinaryAssociation
    fractional_trace: list
    objective_trace: list
    status: str  # "Converged" | "MaxIter" | "Infeasible"
    satisfaction: float
    per_leo_connections: np.ndarray
    objective: float
    association_trace: list = field(default_factory=list)
    report: SolveReport | None = None
    info: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.objective_trace)


def to_dbw(watts):
    """``10 log10(P)``; 0 W maps to ``-inf``."""
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.asarray(watts, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def from_dbw(dbw):
    out = 10.0 ** (np.asarray(dbw, dtype=float) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------


def min_link_bandwidth(inst: ProblemInstance) -> np.ndarray:
    """(M x T) least bandwidth each link needs to carry its demand at full power; inf if none suffices."""
    out = min_bandwidth_for_rate(
        np.broadcast_to(inst.demand, (inst.M, inst.T)),
        np.broadcast_to(inst.power_cap, (inst.M, inst.T)),
        inst.gains,
        np.broadcast_to(inst.noise[:, None], (inst.M, inst.T)),
    )
    return np.asarray(out).reshape(inst.M, inst.T)


def association_fits(inst: ProblemInstance, assoc: BinaryAssociation, wmin: np.ndarray | None = None) -> bool:
    """Whether some power/bandwidth allocation serves every terminal under ``assoc``.

    Exact for integral associations: each terminal needs at least its link's
    minimum bandwidth, and granting exactly that is enough.
    """
    wmin = min_link_bandwidth(inst) if wmin is None else wmin
    a = assoc.assignment
    if np.any(a < 0):
        return False
    need = wmin[a, np.arange(inst.T)]
    if not np.all(np.isfinite(need)):
        return False
    load = np.bincount(a, need, minlength=inst.M)
    return bool(np.all(load < inst.W_leo * (1.0 - BUDGET_MARGIN)))


def initialize_association(inst: ProblemInstance, wmin: np.ndarray | None = None) -> BinaryAssociation:
    """Feasible integral starting association.

    Tries the capped greedy association, then every terminal on its best-gain
    satellite, then a bandwidth-feasibility assignment.  Raises
    :class:`InfeasibleError` when no integral association can be served.
    """
    wmin = min_link_bandwidth(inst) if wmin is None else wmin
    try:
        cand = greedy_associate(inst)
        if association_fits(inst, cand, wmin):
            return cand
    except GreedyDeadlock:
        pass
    best_gain = np.argmax(inst.gains, axis=0)
    cand = BinaryAssociation.from_assignment(best_gain, inst.M, inst.K)
    if association_fits(inst, cand, wmin):
        return cand
    budget = inst.W_leo * (1.0 - BUDGET_MARGIN)
    cost = wmin / budget[:, None]
    res = solve_gap(cost, wmin, budget, lexicographic=False)
    if res.status != "Optimal":
        raise InfeasibleError("no association lets every terminal meet its demand within the budgets", res)
    return BinaryAssociation.from_assignment(res.assignment, inst.M, inst.K)


def update_association(prev: FractionalAssociation, new: BinaryAssociation, rho: float) -> FractionalAssociation:
    """Relaxed step ``(1 - rho) * prev + rho * new``."""
    if np.shape(prev.alpha) != np.shape(new.alpha) or np.shape(prev.mu) != np.shape(new.mu):
        raise ValueError("association shapes differ")
    w = (1.0 - rho) * np.hstack((prev.alpha, prev.mu)) + rho * new.weights
    # a convex combination of columns summing to <= 1 can drift above 1 by an ulp
    colsum = w.sum(axis=0)
    w = np.where(colsum > 1.0, w / np.maximum(colsum, 1.0), w)
    return FractionalAssociation.from_weights(np.clip(w, 0.0, 1.0), prev.alpha.shape[1])


def link_reduced_costs(inst: ProblemInstance, alloc: Allocation, report: SolveReport, wmin: np.ndarray) -> np.ndarray:
    """First-order change of the allocation's Lagrangian per unit of association weight.

    For link ``(m, t)`` this is ``min_p [p (1 + eta_t) - lambda_t r(p, W_t)] + nu_m W_t``
    with the allocation's rate, power-cap and bandwidth multipliers and the
    terminal's current bandwidth; the inner minimum is the water-filling
    power clipped to the cap.  Links that cannot carry the demand at all are
    ``inf``.
    """
    lam = report.rate_price[None, :]
    eta = report.power_price[None, :]
    nu = report.bandwidth_price[:, None]
    W = alloc.bandwidth[None, :]
    G = inst.gains
    sigma = inst.noise[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        p = lam * W / (LN2 * (1.0 + eta)) - sigma * W / G
        p = np.clip(np.where(G > 0, p, 0.0), 0.0, inst.power_cap[None, :])
        rate = W * np.log1p(p * G / (sigma * W)) / LN2
    val = p * (1.0 + eta) - lam * rate + nu * W
    return np.where(np.isfinite(wmin) & (G > 0), val, np.inf)


class IntegralCost:
    """Exact least total power of integral associations, cached per (satellite, terminal set)."""

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self._cache: dict = {}

    def satellite(self, m: int, members) -> float:
        key = (int(m), tuple(int(t) for t in members))
        if key not in self._cache:
            idx = np.asarray(key[1], dtype=np.int64)
            inst = self.inst
            try:
                _, p, _ = split_satellite_band(
                    inst.demand[idx], inst.gains[m, idx], float(inst.noise[m]), inst.power_cap[idx], float(inst.W_leo[m])
                )
                self._cache[key] = float(p.sum())
            except InfeasibleError:
                self._cache[key] = math.inf
        return self._cache[key]

    def total(self, assignment) -> float:
        assignment = np.asarray(assignment)
        return sum(self.satellite(m, np.flatnonzero(assignment == m)) for m in range(self.inst.M))


def improve_association(inst: ProblemInstance, assignment, costs: IntegralCost | None = None, swaps: bool = True):
    """Steepest descent on the exact integral power over single moves, then pairwise swaps.

    Returns the improved satellite-per-terminal vector (a local optimum).
    """
    costs = costs or IntegralCost(inst)
    a = np.array(assignment, dtype=np.int64)
    M, T = inst.M, inst.T
    members = [np.flatnonzero(a == m) for m in range(M)]
    cur = np.array([costs.satellite(m, members[m]) for m in range(M)])
    while True:
        base = float(cur.sum())
        best_gain, best = 1e-9 * base, None
        for t in range(T):
            m = a[t]
            without = costs.satellite(m, members[m][members[m] != t])
            for m2 in range(M):
                if m2 == m:
                    continue
                gain = cur[m] + cur[m2] - without - costs.satellite(m2, np.sort(np.append(members[m2], t)))
                if gain > best_gain:
                    best_gain, best = gain, ((t, m2),)
        if best is None and swaps:
            for t in range(T):
                for u in range(t + 1, T):
                    m, m2 = a[t], a[u]
                    if m == m2:
                        continue
                    new_m = np.sort(np.append(members[m][members[m] != t], u))
                    new_m2 = np.sort(np.append(members[m2][members[m2] != u], t))
                    gain = cur[m] + cur[m2] - costs.satellite(m, new_m) - costs.satellite(m2, new_m2)
                    if gain > best_gain:
                        best_gain, best = gain, ((t, m2), (u, m))
        if best is None:
            return a
        for t, m2 in best:
            a[t] = m2
        members = [np.flatnonzero(a == m) for m in range(M)]
        cur = np.array([costs.satellite(m, members[m]) for m in range(M)])


def propose_moves(inst: ProblemInstance, alloc: Allocation, report: SolveReport, target, wmin: np.ndarray):
    """Single-terminal moves away from ``target`` that the linearized cost says pay off.

    Returns ``(decrease, satellite, terminal)`` triples, most promising first.
    """
    c = link_reduced_costs(inst, alloc, report, wmin)
    T = inst.T
    d = c - c[target, np.arange(T)][None, :]
    order = np.argsort(d, axis=None, kind="stable")
    out = []
    for q in order:
        m2, t = divmod(int(q), T)
        if not d[m2, t] < 0.0:
            break
        out.append((float(d[m2, t]), m2, t))
    return out


def round_association(
    frac: FractionalAssociation, inst: ProblemInstance, alloc: Allocation | None = None, wmin: np.ndarray | None = None
) -> BinaryAssociation:
    """Round a relaxed association to an integral one.

    Every terminal goes to its largest weight (ties to the lower satellite
    index).  While some satellite cannot host its terminals' minimum
    bandwidths, the terminal whose move costs the least channel gain (in dB)
    moves to its best-gain satellite that still has room.  ``alloc`` is accepted
    for interface symmetry and not needed by the rule.
    """
    wmin = min_link_bandwidth(inst) if wmin is None else wmin
    weights = np.hstack((frac.alpha, frac.mu))
    T = inst.T
    cols = np.arange(T)
    assign = np.argmax(weights, axis=0)
    assign[weights.sum(axis=0) <= 0] = -1
    need = np.where(np.isfinite(wmin), wmin, np.inf)
    budget = inst.W_leo * (1.0 - BUDGET_MARGIN)
    with np.errstate(divide="ignore"):
        gain_db = 10.0 * np.log10(inst.gains)
    for t in np.flatnonzero(assign < 0):
        assign[t] = int(np.argmax(inst.gains[:, t]))
    moved = np.zeros(T, dtype=bool)
    for _ in range(T * inst.M + 1):
        load = np.bincount(assign, np.where(np.isfinite(need[assign, cols]), need[assign, cols], np.inf), minlength=inst.M)
        over = np.flatnonzero(load > budget)
        if over.size == 0:
            return BinaryAssociation.from_assignment(assign, inst.M, inst.K)
        best = None
        for m in over:
            for t in np.flatnonzero(assign == m):
                if moved[t]:
                    continue
                for m2 in np.argsort(-inst.gains[:, t], kind="stable"):
                    if m2 == m or not np.isfinite(need[m2, t]):
                        continue
                    if load[m2] + need[m2, t] > budget[m2]:
                        continue
                    penalty = gain_db[m, t] - gain_db[m2, t]
                    if best is None or penalty < best[0]:
                        best = (penalty, t, m2)
                    break
        if best is None:
            raise InfeasibleError("rounding repair found no terminal that can move to a satellite with room")
        _, t, m2 = best
        assign[t] = m2
        moved[t] = True
    raise InfeasibleError("rounding repair did not terminate")


def evaluate_solution(inst: ProblemInstance, assoc, alloc: Allocation) -> Metrics:
    """Power, demand satisfaction and per-satellite load of a solution."""
    w = np.hstack((np.asarray(assoc.alpha, dtype=float), np.asarray(assoc.mu, dtype=float)))
    total = float(np.sum(w * alloc.powers))
    rates = terminal_rates(inst, assoc, alloc)
    satisfied = rates >= inst.demand * (1.0 - 1e-9)
    used = w @ alloc.bandwidth
    return Metrics(
        total_power_w=total,
        total_power_dbw=to_dbw(total),
        rates=rates,
        satisfied=satisfied,
        satisfaction=float(satisfied.mean()) if inst.T else 1.0,
        per_leo_connections=np.rint(w.sum(axis=1)).astype(np.int64),
        bandwidth_used=used,
        bandwidth_utilization=used / inst.W_leo,
    )


# ---------------------------------------------------------------------------
# main loop
# ---------------------------------------------------------------------------


def _integral_solve(inst, assoc, tol):
    try:
        return solve_allocation(inst, FractionalAssociation(assoc.alpha, assoc.mu), tol)
    except InfeasibleError:
        return None


def _move_step(inst, cfg, frac, alloc, report, target, v_target, wmin, costs):
    """One integer step of the default rule; returns (target, value, next frac, next solve or None)."""
    guards = 0
    for _, m2, t in propose_moves(inst, alloc, report, target, wmin):
        cand = target.copy()
        cand[t] = m2
        v = costs.total(cand)
        if not v < v_target * (1.0 - 1e-9):
            continue
        nxt_frac = update_association(frac, BinaryAssociation.from_assignment(cand, inst.M, inst.K), cfg.rho)
        guards += 1
        try:
            nxt = solve_allocation(inst, nxt_frac, cfg.tol, seed_allocation=alloc)
        except InfeasibleError:
            nxt = None
        if nxt is not None and nxt[1].objective <= report.objective and v <= (1.0 + cfg.drift_tol) * nxt[1].objective:
            return cand, v, nxt_frac, nxt
        if guards >= cfg.max_guard:
            break
    held = BinaryAssociation.from_assignment(target, inst.M, inst.K)
    return target, v_target, update_association(frac, held, cfg.rho), None


def run_algorithm1(inst: ProblemInstance, config: AlgorithmConfig | None = None) -> Solution:
    """Alternating association / allocation optimization followed by rounding.

    Raises :class:`InfeasibleError` when the starting association cannot be
    served.  If a later allocation step turns infeasible the loop stops and
    the last feasible iterate is rounded; the status then reads
    ``"Infeasible"``.
    """
    cfg = config or AlgorithmConfig()
    wmin = min_link_bandwidth(inst)
    costs = IntegralCost(inst)
    init = initialize_association(inst, wmin)
    frac = FractionalAssociation(init.alpha, init.mu)
    target = init.assignment
    v_target = costs.total(target)

    objective_trace: list[float] = []
    fractional_trace: list[FractionalAssociation] = []
    association_trace: list[BinaryAssociation] = []
    status = "MaxIter"
    alloc = None
    initial = None
    last_feasible = frac
    pending = None
    for it in range(cfg.max_iters):
        if pending is not None:
            alloc, report = pending
            pending = None
        else:
            try:
                alloc, report = solve_allocation(inst, frac, cfg.tol, seed_allocation=alloc)
            except InfeasibleError:
                if it == 0:
                    raise
                status = "Infeasible"
                break
        last_feasible = frac
        if it == 0:
            initial = (alloc, report)
        fractional_trace.append(frac)
        objective_trace.append(report.objective)
        if it > 0:
            prev = objective_trace[-2]
            if abs(report.objective - prev) <= cfg.eps * abs(prev):
                status = "Converged"
                break
        if cfg.association_rule == "moves":
            target, v_target, frac, pending = _move_step(
                inst, cfg, frac, alloc, report, target, v_target, wmin, costs
            )
            new = BinaryAssociation.from_assignment(target, inst.M, inst.K)
        else:
            try:
                new, _ = solve_association(inst, alloc)
            except InfeasibleError:
                new = BinaryAssociation.from_assignment(np.argmax(frac.weights, axis=0), inst.M, inst.K)
            frac = update_association(frac, new, cfg.rho)
        association_trace.append(new)

    # phase 2: round and re-solve with the integral association
    candidates = []
    try:
        rounded = round_association(last_feasible, inst, alloc, wmin)
        if cfg.polish:
            rounded = BinaryAssociation.from_assignment(
                improve_association(inst, rounded.assignment, costs), inst.M, inst.K
            )
        solved = _integral_solve(inst, rounded, cfg.tol)
        if solved is not None:
            candidates.append(("rounded", rounded, *solved))
    except InfeasibleError:
        pass
    if cfg.keep_initial or not candidates:
        candidates.append(("initial", init, *initial))
    source, assoc, final_alloc, final_report = min(candidates, key=lambda c: c[3].objective)

    metrics = evaluate_solution(inst, assoc, final_alloc)
    return Solution(
        allocation=final_alloc,
        association=assoc,
        fractional_trace=fractional_trace,
        objective_trace=objective_trace,
        status=status,
        satisfaction=metrics.satisfaction,
        per_leo_connections=metrics.per_leo_connections,
        objective=final_report.objective,
        association_trace=association_trace,
        report=final_report,
        info={"source": source, "candidates": {c[0]: c[3].objective for c in candidates}},
    )
