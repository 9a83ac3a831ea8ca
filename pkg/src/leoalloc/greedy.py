"""Greedy baseline: capped best-channel association, even bandwidth split, closed-form powers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assoc import BinaryAssociation
from .convex import Allocation, min_power_for_rate
from .errors import InfeasibleError
from .instance import ProblemInstance


class GreedyDeadlock(InfeasibleError):
    """Satellite capacity ran out before every terminal was assigned.

    ``partial`` holds the assignment reached so far (satellite per terminal,
    SUEs first, -1 where unassigned).
    """

    def __init__(self, message: str, partial: np.ndarray):
        super().__init__(message)
        self.partial = partial


def per_satellite_cap(count: int, M: int, strict: bool = False) -> int:
    """Connections each satellite may accept out of ``count`` terminals.

    The rounded share ``floor(count / M + 0.5)`` can leave terminals without a
    slot (10 terminals over 3 satellites get 3 slots each), so by default the
    cap is raised to ``ceil(count / M)``.  ``strict`` keeps the rounded share.
    """
    rounded = math.floor(count / M + 0.5)
    if strict:
        return rounded
    return max(rounded, math.ceil(count / M))


def _capped_pass(gains: np.ndarray, cap: int) -> tuple[np.ndarray, bool]:
    """Repeatedly take the globally best remaining gain; returns (assignment, complete)."""
    G = np.array(gains, dtype=float)
    M, T = G.shape
    slots = np.full(M, cap)
    assign = np.full(T, -1, dtype=np.int64)
    remaining = T
    while remaining:
        flat = int(np.argmax(G))
        m, t = divmod(flat, T)
        if G[m, t] <= 0.0:
            return assign, False
        if slots[m] > 0:
            assign[t] = m
            slots[m] -= 1
            G[:, t] = 0.0
            remaining -= 1
        else:
            G[m, :] = 0.0
    return assign, True


def greedy_associate(inst: ProblemInstance, strict: bool = False) -> BinaryAssociation:
    """Capped best-channel association: base stations first, then SUEs.

    Raises :class:`GreedyDeadlock` when the caps leave some terminal unassigned
    (only possible with ``strict`` caps or terminals without any usable gain).
    """
    M = inst.M
    bs, bs_done = _capped_pass(inst.g, per_satellite_cap(inst.N, M, strict))
    sue, sue_done = _capped_pass(inst.h, per_satellite_cap(inst.K, M, strict))
    assign = np.concatenate((sue, bs))
    if not (bs_done and sue_done):
        raise GreedyDeadlock(
            f"{int(np.sum(assign < 0))} terminal(s) left unassigned by the capped greedy pass", assign
        )
    return BinaryAssociation.from_assignment(assign, M, inst.K)


def _strict_ue_weight(inst: ProblemInstance) -> float:
    cfg = inst.meta.get("config", {}) if isinstance(inst.meta, dict) else {}
    return float(cfg.get("mean_ues_per_bs", 10.0))


def greedy_bandwidth(inst: ProblemInstance, assoc: BinaryAssociation, strict: bool = False):
    """Split each satellite's band evenly per user.

    A base station counts as one user per UE it serves (its own ``L_n``, or
    the mean UE count under ``strict``).  Returns ``(W_sue, W_bs)`` in Hz;
    unassigned terminals get 0.
    """
    ue_weight = np.full(inst.N, _strict_ue_weight(inst)) if strict else inst.ue_counts.astype(float)
    load = assoc.alpha.sum(axis=1) + assoc.mu @ ue_weight
    per_user = np.divide(inst.W_leo, load, out=np.zeros(inst.M), where=load > 0)
    W_sue = assoc.alpha.T @ per_user
    W_bs = (assoc.mu.T @ per_user) * ue_weight
    return W_sue, W_bs


@dataclass
class GreedyResult:
    association: BinaryAssociation
    W_sue: np.ndarray
    W_bs: np.ndarray
    powers: Allocation
    satisfaction: float
    feasible: bool
    satisfied: np.ndarray
    total_power: float
    meta: dict = field(default_factory=dict)


def greedy_power(inst: ProblemInstance, assoc: BinaryAssociation, W_sue, W_bs) -> GreedyResult:
    """Least power meeting each demand on its single link, clipped to the terminal's cap.

    A terminal whose requirement exceeds its cap transmits at the cap and is
    flagged unsatisfied.  Unassigned terminals transmit nothing and count as
    unsatisfied.
    """
    W = np.concatenate((np.asarray(W_sue, dtype=float), np.asarray(W_bs, dtype=float)))
    assign = assoc.assignment
    T = inst.T
    need = np.full(T, np.inf)
    on = assign >= 0
    if np.any(on & (W <= 0)):
        raise ValueError("assigned terminals need positive bandwidth")
    idx = np.flatnonzero(on)
    need[idx] = min_power_for_rate(
        inst.demand[idx], W[idx], inst.gains[assign[idx], idx], inst.noise[assign[idx]]
    )
    cap = inst.power_cap
    satisfied = on & (need <= cap * (1.0 + 1e-9))
    power = np.where(on, np.minimum(need, cap), 0.0)
    powers = np.zeros((inst.M, T))
    powers[assign[idx], idx] = power[idx]
    alloc = Allocation.from_unified(powers, W, inst.K)
    satisfaction = float(satisfied.mean()) if T else 1.0
    return GreedyResult(
        association=assoc,
        W_sue=alloc.W_sue,
        W_bs=alloc.W_bs,
        powers=alloc,
        satisfaction=satisfaction,
        feasible=bool(satisfied.all()),
        satisfied=satisfied,
        total_power=float(power.sum()),
        meta={"unassigned": int(np.sum(~on))},
    )


def run_greedy(inst: ProblemInstance, strict: bool = False) -> GreedyResult:
    """Full greedy pipeline; a strict-cap deadlock leaves the stragglers unassigned."""
    deadlock = False
    try:
        assoc = greedy_associate(inst, strict)
    except GreedyDeadlock as exc:
        assoc = BinaryAssociation.from_assignment(exc.partial, inst.M, inst.K)
        deadlock = True
    W_sue, W_bs = greedy_bandwidth(inst, assoc, strict)
    res = greedy_power(inst, assoc, W_sue, W_bs)
    res.meta.update({"strict": strict, "deadlock": deadlock})
    return res
