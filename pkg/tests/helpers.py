"""Small hand-built instances shared by the tests."""

import numpy as np

from leoalloc.instance import ProblemInstance

NOISE = 3.981071705534986e-21


def make_instance(h, g=None, demand_sue=1e8, demand_bs=None, W=500e6, p_max=100.0, P_max=1e4, ue_counts=None):
    h = np.atleast_2d(np.asarray(h, dtype=float))
    M = h.shape[0]
    g = np.zeros((M, 0)) if g is None else np.atleast_2d(np.asarray(g, dtype=float))
    K, N = h.shape[1], g.shape[1]
    ue_counts = np.ones(N, dtype=int) if ue_counts is None else np.asarray(ue_counts)
    demand_bs = 1e8 * ue_counts if demand_bs is None else demand_bs
    return ProblemInstance(
        h=h,
        g=g,
        demand_sue=np.broadcast_to(np.asarray(demand_sue, dtype=float), (K,)).copy(),
        demand_bs=np.broadcast_to(np.asarray(demand_bs, dtype=float), (N,)).copy(),
        p_max=np.full(K, p_max),
        P_max=np.full(N, P_max),
        W_leo=np.broadcast_to(np.asarray(W, dtype=float), (M,)).copy(),
        noise=np.full(M, NOISE),
        ue_counts=ue_counts,
    )


def random_association_case(rng, max_m=2, max_k=3, max_n=3):
    """Micro instance plus a frozen allocation for the association subproblem.

    Each terminal's demand is a random fraction of what one random link
    carries, so most draws have at least one eligible satellite per terminal;
    bandwidths are drawn independently, so some draws overload a satellite.
    Roughly one link in six gets zero power to exercise the backfill.
    """
    from leoalloc.convex import Allocation, link_rates

    M = int(rng.integers(1, max_m + 1))
    while True:
        K, N = int(rng.integers(0, max_k + 1)), int(rng.integers(0, max_n + 1))
        if K + N:
            break
    T = K + N
    gains = 10 ** rng.uniform(-13, -11, (M, T))
    W = rng.uniform(0.15, 0.6, T) * 5e8
    cap = np.concatenate((np.full(K, 100.0), np.full(N, 1e4)))
    powers = rng.uniform(0.05, 1.0, (M, T)) * cap
    powers[rng.random((M, T)) < 1 / 6] = 0.0
    probe = make_instance(gains[:, :K], gains[:, K:], ue_counts=np.ones(N, dtype=int))
    alloc = Allocation.from_unified(powers, W, K)
    rates = link_rates(probe, alloc)
    pick = rng.integers(0, M, T)
    demand = np.maximum(rates[pick, np.arange(T)], 1e6) * rng.uniform(0.6, 1.05, T)
    inst = make_instance(gains[:, :K], gains[:, K:], demand_sue=demand[:K], demand_bs=demand[K:])
    return inst, alloc
