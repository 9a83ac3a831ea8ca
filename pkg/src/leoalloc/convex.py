"""Power and bandwidth allocation for a fixed (possibly fractional) association.

For fixed association weights the problem

    minimize    sum_{m,t} a_{m,t} p_{m,t}
    subject to  sum_m a_{m,t} W_t log2(1 + p_{m,t} G_{m,t} / (sigma_m W_t)) >= R_t
                sum_m a_{m,t} p_{m,t} <= pmax_t
                sum_t a_{m,t} W_t <= W_leo_m
                p >= 0, W >= 1 Hz

is convex: every rate term is the perspective of a concave function.  It is
solved here with a two-phase log-barrier interior-point method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import brentq
from scipy.special import lambertw

from . import kernels
from .errors import InfeasibleError
from .instance import ProblemInstance

LN2 = math.log(2.0)
LINK_THRESHOLD = 1e-9
MIN_BANDWIDTH_HZ = 1.0
EXPONENT_LIMIT = 60.0


@dataclass(frozen=True, eq=False)
class FractionalAssociation:
    """Relaxed association weights, ``alpha`` (M x K) and ``mu`` (M x N) in [0, 1]."""

    alpha: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        mu = np.array(self.mu, dtype=float)
        if alpha.ndim != 2 or mu.ndim != 2 or alpha.shape[0] != mu.shape[0]:
            raise ValueError("alpha and mu must be 2-d with the same number of rows")
        for name, arr in (("alpha", alpha), ("mu", mu)):
            if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
                raise ValueError(f"{name} entries must lie in [0, 1]")
            if arr.size and np.any(arr.sum(axis=0) > 1 + 1e-9):
                raise ValueError(f"{name} column sums must not exceed 1")
        object.__setattr__(self, "alpha", np.clip(alpha, 0.0, 1.0))
        object.__setattr__(self, "mu", np.clip(mu, 0.0, 1.0))

    @property
    def weights(self) -> np.ndarray:
        return np.hstack((self.alpha, self.mu))

    @classmethod
    def from_weights(cls, weights, K: int) -> "FractionalAssociation":
        weights = np.asarray(weights, dtype=float)
        return cls(weights[:, :K], weights[:, K:])


@dataclass(frozen=True, eq=False)
class Allocation:
    """Link powers ``p`` (M x K), ``P`` (M x N) in W and bandwidths in Hz."""

    p: np.ndarray
    P: np.ndarray
    W_sue: np.ndarray
    W_bs: np.ndarray

    def __post_init__(self):
        for name in ("p", "P", "W_sue", "W_bs"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))

    @property
    def powers(self) -> np.ndarray:
        return np.hstack((self.p, self.P))

    @property
    def bandwidth(self) -> np.ndarray:
        return np.concatenate((self.W_sue, self.W_bs))

    @classmethod
    def from_unified(cls, powers, bandwidth, K: int) -> "Allocation":
        powers = np.asarray(powers, dtype=float)
        bandwidth = np.asarray(bandwidth, dtype=float)
        return cls(powers[:, :K], powers[:, K:], bandwidth[:K], bandwidth[K:])


@dataclass
class SolveReport:
    objective: float
    kkt_residual: float
    iterations: int
    status: str  # "Optimal" | "Infeasible" | "MaxIter"
    phase1_iterations: int = 0
    bandwidth_price: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rate_price: np.ndarray = field(default_factory=lambda: np.zeros(0))
    power_price: np.ndarray = field(default_factory=lambda: np.zeros(0))


# ---------------------------------------------------------------------------
# rate helpers
# ---------------------------------------------------------------------------


def _weights(assoc) -> np.ndarray:
    return np.hstack((np.asarray(assoc.alpha, dtype=float), np.asarray(assoc.mu, dtype=float)))


def link_rates(inst: ProblemInstance, alloc: Allocation) -> np.ndarray:
    """Per-link rates ``W_t log2(1 + p G / (sigma W_t))`` as an (M x T) array."""
    W = alloc.bandwidth[None, :]
    snr = alloc.powers * inst.gains / (inst.noise[:, None] * W)
    return W * np.log2(1.0 + snr)


def terminal_rates(inst: ProblemInstance, assoc, alloc: Allocation) -> np.ndarray:
    """Association-weighted rate of every terminal (SUEs first, then BSs)."""
    return np.sum(_weights(assoc) * link_rates(inst, alloc), axis=0)


def rate_sue(alloc: Allocation, assoc, inst: ProblemInstance, k: int) -> float:
    W = alloc.W_sue[k]
    snr = alloc.p[:, k] * inst.h[:, k] / (inst.noise * W)
    return float(np.sum(np.asarray(assoc.alpha)[:, k] * W * np.log2(1.0 + snr)))


def rate_bs(alloc: Allocation, assoc, inst: ProblemInstance, n: int) -> float:
    W = alloc.W_bs[n]
    snr = alloc.P[:, n] * inst.g[:, n] / (inst.noise * W)
    return float(np.sum(np.asarray(assoc.mu)[:, n] * W * np.log2(1.0 + snr)))


def min_power_for_rate(rate, bandwidth, gain, noise):
    """Smallest power that carries ``rate`` over one link: ``sigma W (2^(R/W) - 1) / G``.

    Broadcasts over array inputs.  Where ``R / W`` exceeds 60 bit/s/Hz the
    required power is astronomically large and ``inf`` is returned instead.
    """
    rate = np.asarray(rate, dtype=float)
    bandwidth = np.asarray(bandwidth, dtype=float)
    gain = np.asarray(gain, dtype=float)
    if np.any(bandwidth <= 0):
        raise ValueError("bandwidth must be positive")
    se = rate / bandwidth
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = noise * bandwidth * np.expm1(np.minimum(se, EXPONENT_LIMIT) * LN2) / gain
    out = np.where((se > EXPONENT_LIMIT) | (gain <= 0), np.inf, out)
    out = np.where(rate <= 0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def min_bandwidth_for_rate(rate, power, gain, noise):
    """Smallest bandwidth carrying ``rate`` with transmit power ``power``.

    Solves ``W log2(1 + P G / (sigma W)) = R``; ``inf`` where even unlimited
    bandwidth cannot reach the rate (``P G / sigma <= R ln 2``).
    """
    rate, power, gain, noise = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (rate, power, gain, noise))
    )
    out = np.full(rate.shape, np.inf)
    flat_out = out.reshape(-1)
    for i, (r, pw, gn, nz) in enumerate(zip(rate.ravel(), power.ravel(), gain.ravel(), noise.ravel())):
        if r <= 0:
            flat_out[i] = 0.0
            continue
        a = pw * gn / nz
        if a <= r * LN2 * (1 + 1e-12):
            continue

        def excess(W):
            return W * math.log1p(a / W) / LN2 - r

        lo = r / EXPONENT_LIMIT
        if excess(lo) >= 0:
            flat_out[i] = lo
            continue
        hi = max(2 * lo, r)
        while excess(hi) < 0:
            hi *= 2.0
        flat_out[i] = brentq(excess, lo, hi, xtol=1e-12 * hi, rtol=1e-15, maxiter=200)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# interior-point solver
# ---------------------------------------------------------------------------


class _Packed:
    """Active links of one subproblem in the scaled coordinates the barrier uses."""

    def __init__(self, inst: ProblemInstance, weights: np.ndarray):
        self.inst = inst
        M, T = weights.shape
        lt, lm = np.nonzero(weights.T > LINK_THRESHOLD)
        self.lt = lt.astype(np.int64)
        self.lm_global = lm.astype(np.int64)
        self.tptr = np.searchsorted(self.lt, np.arange(T + 1)).astype(np.int64)
        served = np.diff(self.tptr) > 0
        if T and not np.all(served):
            missing = np.flatnonzero(~served)
            raise ValueError(f"terminals {missing.tolist()} have no association weight")
        self.active_sats = np.unique(self.lm_global)
        remap = np.full(M, -1, dtype=np.int64)
        remap[self.active_sats] = np.arange(self.active_sats.size)
        self.lm = remap[self.lm_global]
        self.n_sat = int(self.active_sats.size)

        G = inst.gains
        pmax = inst.power_cap
        self.Wref = float(inst.W_leo.max())
        self.la = weights[self.lm_global, self.lt].astype(float)
        self.gain = G[self.lm_global, self.lt]
        self.sigma = inst.noise[self.lm_global]
        self.pmax_l = pmax[self.lt]
        self.lc = self.pmax_l * self.gain / (self.sigma * self.Wref)
        self.kappa = self.Wref / (inst.demand * LN2)
        self.bwc = self.la * self.Wref / inst.W_leo[self.lm_global]
        self.objc = self.la * self.pmax_l
        self.wlow = MIN_BANDWIDTH_HZ / self.Wref
        self.L = self.lt.size
        self.T = T
        self.M = M
        self.weights = weights

    def kernel_args(self):
        return (self.lt, self.tptr, self.lm, self.la, self.lc, self.kappa, self.bwc, self.n_sat, self.wlow)

    def soft_values(self, p, W):
        T = self.T
        Wl = W[self.lt]
        rate = np.bincount(self.lt, self.la * Wl * np.log1p(self.lc * p / Wl), minlength=T)
        fr = 1.0 - self.kappa * rate
        fc = np.bincount(self.lt, self.la * p, minlength=T) - 1.0
        fb = np.bincount(self.lm, self.bwc * Wl, minlength=self.n_sat) - 1.0
        return fr, fc, fb

    def n_constraints(self):
        return 2 * self.T + self.n_sat + self.L + self.T

    def heuristic_start(self):
        inst = self.inst
        load = np.bincount(self.lm, self.la, minlength=self.n_sat)
        share = inst.W_leo[self.active_sats] / load
        W = np.full(self.T, np.inf)
        np.minimum.at(W, self.lt, share[self.lm])
        W = np.maximum(0.999 * W, 2 * MIN_BANDWIDTH_HZ)
        total = np.bincount(self.lt, self.la, minlength=self.T)
        target = 1.001 * inst.demand / total
        p = min_power_for_rate(target[self.lt], W[self.lt], self.gain, self.sigma)
        pt = np.where(np.isfinite(p), p / self.pmax_l, 1.0)
        return np.maximum(pt, 1e-12), W / self.Wref

    def from_allocation(self, alloc: Allocation):
        p = alloc.powers[self.lm_global, self.lt] / self.pmax_l
        W = alloc.bandwidth / self.Wref
        if np.any(p <= 0):
            p = np.where(p > 0, p, 1e-9)
        return p, W


def _newton_solve(H, rhs):
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / d[:, None] / d[None, :]
    try:
        c = scipy.linalg.cho_factor(Hs, check_finite=False)
        y = scipy.linalg.cho_solve(c, rhs / d, check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        y = np.linalg.lstsq(Hs, rhs / d, rcond=None)[0]
    return y / d


class _Barrier:
    def __init__(self, pk: _Packed, newton_tol=1e-8, max_newton=60):
        self.pk = pk
        self.newton_tol = newton_tol
        self.max_newton = max_newton
        self.args = pk.kernel_args()
        self.steps = 0

    def _split(self, z, phase1):
        L, T = self.pk.L, self.pk.T
        return z[:L], z[L : L + T], (z[-1] if phase1 else 0.0)

    def value(self, z, phase1):
        p, W, s = self._split(z, phase1)
        return kernels.barrier_value(p, W, s, *self.args)

    def center(self, z, t, c0, phase1, stop_negative_s=False):
        """Newton iterations on ``t * c0.z + phi(z)``; returns (z, converged)."""
        for _ in range(self.max_newton):
            p, W, s = self._split(z, phase1)
            g, H = kernels.barrier_derivs(p, W, s, phase1, *self.args)
            grad = t * c0 + g
            dz = -_newton_solve(H, grad)
            slope = float(grad @ dz)
            if -slope / 2.0 <= self.newton_tol:
                return z, True
            self.steps += 1
            step = 1.0
            L, T = self.pk.L, self.pk.T
            dp, dW = dz[:L], dz[L : L + T]
            neg = dp < 0
            if neg.any():
                step = min(step, 0.99 * np.min(-p[neg] / dp[neg]))
            neg = dW < 0
            if neg.any():
                step = min(step, 0.99 * np.min(-(W[neg] - self.pk.wlow) / dW[neg]))
            if -slope < 1e-4:
                # near the centre value differences drown in roundoff at large t;
                # take the damped Newton step 1/(1+lambda) without a value test
                zn = z + min(step, 1.0 / (1.0 + math.sqrt(-slope))) * dz
                if self.value(zn, phase1)[0]:
                    z = zn
                    if stop_negative_s and z[-1] < 0.0:
                        return z, True
                    continue
            ok, phi = self.value(z, phase1)
            F = t * float(c0 @ z) + phi
            while True:
                zn = z + step * dz
                ok, phin = self.value(zn, phase1)
                if ok and t * float(c0 @ zn) + phin <= F + 0.01 * step * slope:
                    break
                step *= 0.5
                if step < 1e-16:
                    # no representable progress left; treat tiny decrements as converged
                    return z, -slope / 2.0 <= 1e-6
            z = zn
            if stop_negative_s and z[-1] < 0.0:
                return z, True
        return z, False


def _phase1(bar: _Barrier, p0, W0, max_outer=30):
    pk = bar.pk
    fr, fc, fb = pk.soft_values(p0, W0)
    s0 = max(fr.max(initial=-1.0), fc.max(initial=-1.0), fb.max(initial=-1.0))
    z = np.concatenate((p0, W0, [s0 + 0.1 * (1.0 + abs(s0))]))
    c0 = np.zeros(z.size)
    c0[-1] = 1.0
    m = pk.n_constraints()
    t = 1.0
    for _ in range(max_outer):
        z, _ = bar.center(z, t, c0, True, stop_negative_s=True)
        s = z[-1]
        if s < 0.0:
            return z[: pk.L], z[pk.L : pk.L + pk.T]
        if s - m / t > 0.0 or m / t < 1e-10:
            return None
        t *= 10.0
    return None


def solve_allocation(
    inst: ProblemInstance,
    assoc,
    tol: float = 1e-6,
    *,
    seed_allocation: Allocation | None = None,
    mu0: float = 1.0,
    barrier_factor: float = 10.0,
    newton_tol: float = 1e-8,
    max_outer: int = 40,
    polish: bool = True,
) -> tuple[Allocation, SolveReport]:
    """Optimal powers and bandwidths for fixed association weights.

    Links whose weight is below 1e-9 are dropped and carry zero power.
    ``seed_allocation`` is used as the starting point when it is strictly
    feasible.  Raises :class:`InfeasibleError` when phase I proves that no
    allocation meets every demand within the power and bandwidth budgets.
    """
    weights = _weights(assoc)
    if weights.shape != (inst.M, inst.T):
        raise ValueError(f"association shape {weights.shape} does not match instance {(inst.M, inst.T)}")
    pk = _Packed(inst, weights)
    M, T, K = inst.M, inst.T, inst.K
    if pk.L == 0:
        alloc = Allocation.from_unified(np.zeros((M, T)), np.zeros(T), K)
        return alloc, SolveReport(0.0, 0.0, 0, "Optimal", 0, np.zeros(M), np.zeros(T), np.zeros(T))

    bar = _Barrier(pk, newton_tol=newton_tol)
    start = None
    if seed_allocation is not None:
        p0, W0 = pk.from_allocation(seed_allocation)
        if bar.value(np.concatenate((p0, W0)), False)[0]:
            start = (p0, W0)
    if start is None:
        p0, W0 = pk.heuristic_start()
        if bar.value(np.concatenate((p0, W0)), False)[0]:
            start = (p0, W0)
    phase1_steps = 0
    if start is None:
        start = _phase1(bar, p0, W0)
        phase1_steps = bar.steps
        if start is None:
            report = SolveReport(math.inf, math.inf, bar.steps, "Infeasible", phase1_steps, np.zeros(M))
            raise InfeasibleError("no allocation meets all demands within the budgets", report)

    z = np.concatenate(start)
    scale = float(pk.objc @ start[0])
    c0 = np.concatenate((pk.objc / scale, np.zeros(T)))
    m = pk.n_constraints()
    t = 1.0 / mu0
    status = "MaxIter"
    for _ in range(max_outer):
        z, _ = bar.center(z, t, c0, False)
        f0 = float(c0 @ z)
        if m / t <= tol * f0:
            status = "Optimal"
            break
        t *= barrier_factor

    # re-center tightly so the stationarity part of the residual is not centering noise
    bar.newton_tol = min(newton_tol, 1e-14)
    z, _ = bar.center(z, t, c0, False)
    p, W = z[: pk.L], z[pk.L :]
    g, _ = kernels.barrier_derivs(p, W, 0.0, False, *bar.args)
    f0 = float(c0 @ z)
    stationarity = np.max(np.abs((t * c0 + g) / t * z)) / f0
    kkt = max(m / (t * f0), stationarity)
    if status == "Optimal" and kkt > tol:
        status = "MaxIter"

    # barrier multipliers 1 / (t * -f_i), converted to W per unit of each constraint
    fr, fc, fb = pk.soft_values(p, W)
    price = np.zeros(M)
    price[pk.active_sats] = scale / (t * -fb) / inst.W_leo[pk.active_sats]
    rate_price = scale / (t * -fr) / inst.demand
    power_price = scale / (t * -fc) / inst.power_cap

    powers = np.zeros((M, T))
    powers[pk.lm_global, pk.lt] = p * pk.pmax_l
    bandwidth = W * pk.Wref
    if polish:
        powers = _tighten_rates(inst, weights, powers, bandwidth, pk)
    alloc = Allocation.from_unified(powers, bandwidth, K)
    objective = float(np.sum(weights * powers))
    return alloc, SolveReport(
        objective, float(kkt), bar.steps, status, phase1_steps, price, rate_price, power_price
    )


def _tighten_rates(inst, weights, powers, bandwidth, pk: _Packed):
    """Scale each terminal's link powers down so its rate meets demand exactly.

    The barrier keeps every rate strictly above demand; shrinking powers
    uniformly per terminal only lowers power use and leaves the bandwidth and
    power-cap constraints satisfied.
    """
    G = inst.gains
    out = powers.copy()
    for t in range(pk.T):
        links = pk.lm_global[pk.tptr[t] : pk.tptr[t + 1]]
        a = weights[links, t]
        Wt = bandwidth[t]
        q = powers[links, t] * G[links, t] / (inst.noise[links] * Wt)
        R = inst.demand[t]

        def excess(tau):
            return float(np.sum(a * Wt * np.log1p(tau * q))) / LN2 - R

        if excess(1.0) <= 0.0:
            continue
        if links.size == 1:
            tau = math.expm1(R * LN2 / (a[0] * Wt)) / q[0]
        else:
            tau = brentq(excess, 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=200)
        out[links, t] = powers[links, t] * min(tau, 1.0)
    return out


# ---------------------------------------------------------------------------
# constraint evaluation in original units
# ---------------------------------------------------------------------------


def constraint_values(inst: ProblemInstance, assoc, alloc: Allocation) -> dict[str, np.ndarray]:
    """Constraint functions of the allocation subproblem, written as ``f <= 0``.

    ``rate``: demand minus achieved rate (bit/s); ``power``: weighted power
    minus cap (W); ``bandwidth``: weighted bandwidth minus budget (Hz).
    """
    w = _weights(assoc)
    return {
        "rate": inst.demand - terminal_rates(inst, assoc, alloc),
        "power": np.sum(w * alloc.powers, axis=0) - inst.power_cap,
        "bandwidth": w @ alloc.bandwidth - inst.W_leo,
    }


def allocation_objective(assoc, alloc: Allocation) -> float:
    return float(np.sum(_weights(assoc) * alloc.powers))


# ---------------------------------------------------------------------------
# integral associations: per-satellite dual search
# ---------------------------------------------------------------------------


def _bandwidth_at_price(price, demand, gain, noise, wmin):
    """Bandwidth minimizing ``p(W) + price * W`` for single links, floored at ``wmin``.

    With spectral efficiency ``s = R / W`` the marginal saving is
    ``-p'(W) = (sigma / G) * ((s ln2 - 1) 2^s + 1)``; setting it equal to the
    price and solving with the Lambert W function gives ``s`` in closed form.
    """
    y = price * gain / noise
    s = (1.0 + lambertw((y - 1.0) / math.e, 0).real) / LN2
    with np.errstate(divide="ignore"):
        W = np.where(s > 0, demand / np.maximum(s, 1e-300), np.inf)
    return np.maximum(W, wmin)


def split_satellite_band(demand, gain, noise: float, power_cap, budget: float):
    """Optimal bandwidth split of one satellite among the terminals it serves alone.

    Minimizes ``sum_t p_t(W_t)`` with ``p_t`` the least power meeting demand,
    subject to ``sum W_t <= budget`` and ``p_t <= power_cap_t``.  Returns
    ``(W, p, price)`` where ``price`` is the bandwidth multiplier in W/Hz.
    Raises :class:`InfeasibleError` when the minimum bandwidths do not fit.
    """
    demand = np.asarray(demand, dtype=float)
    gain = np.asarray(gain, dtype=float)
    power_cap = np.asarray(power_cap, dtype=float)
    if demand.size == 0:
        return np.zeros(0), np.zeros(0), 0.0
    wmin = np.asarray(min_bandwidth_for_rate(demand, power_cap, gain, noise), dtype=float).reshape(-1)
    if not np.all(np.isfinite(wmin)) or wmin.sum() >= budget:
        raise InfeasibleError("minimum bandwidths exceed the satellite budget")

    def excess(log_price):
        return float(np.sum(_bandwidth_at_price(math.exp(log_price), demand, gain, noise, wmin))) / budget - 1.0

    # start from the marginal saving at an even split and widen until the sign flips
    W0 = budget / demand.size
    se = demand / W0
    phi = (se * LN2 - 1.0) * np.exp2(se) + 1.0
    x0 = math.log(max(float(np.mean(noise / gain * phi)), 1e-300))
    lo, hi = x0 - 1.0, x0 + 1.0
    while excess(lo) < 0.0:
        lo -= 2.0
    while excess(hi) > 0.0:
        hi += 2.0
    x = brentq(excess, lo, hi, xtol=1e-13, rtol=1e-15, maxiter=300)
    W = _bandwidth_at_price(math.exp(x), demand, gain, noise, wmin)
    W *= budget / W.sum()
    p = np.minimum(min_power_for_rate(demand, W, gain, noise), power_cap)
    return W, p, math.exp(x)


def integral_allocation(inst: ProblemInstance, assignment) -> tuple[Allocation, float]:
    """Optimal allocation for an integral association given as a satellite per terminal.

    The problem separates by satellite; each piece is solved by
    :func:`split_satellite_band`.  Returns ``(Allocation, total power)``.
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    if np.any(assignment < 0):
        raise ValueError("every terminal needs a satellite")
    powers = np.zeros((inst.M, inst.T))
    W = np.zeros(inst.T)
    for m in range(inst.M):
        idx = np.flatnonzero(assignment == m)
        if idx.size == 0:
            continue
        Wm, pm, _ = split_satellite_band(
            inst.demand[idx], inst.gains[m, idx], float(inst.noise[m]), inst.power_cap[idx], float(inst.W_leo[m])
        )
        W[idx] = Wm
        powers[m, idx] = pm
    return Allocation.from_unified(powers, W, inst.K), float(powers.sum())
