import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leoalloc import alternating as alt
from leoalloc.alternating import (
    AlgorithmConfig,
    IntegralCost,
    association_fits,
    evaluate_solution,
    from_dbw,
    improve_association,
    initialize_association,
    min_link_bandwidth,
    round_association,
    run_algorithm1,
    to_dbw,
    update_association,
)
from leoalloc.assoc import BinaryAssociation
from leoalloc.convex import Allocation, FractionalAssociation, solve_allocation
from leoalloc.errors import InfeasibleError
from leoalloc.greedy import run_greedy
from leoalloc.instance import ScenarioConfig, generate_scenario

from helpers import make_instance


def frac(w, K):
    return FractionalAssociation.from_weights(np.asarray(w, dtype=float), K)


def binary(a, M, K):
    return BinaryAssociation.from_assignment(np.asarray(a), M, K)


def joint_oracle(inst):
    """Least power over every integral association, each solved exactly."""
    best = np.inf
    for a in itertools.product(range(inst.M), repeat=inst.T):
        try:
            _, rep = solve_allocation(inst, binary(a, inst.M, inst.K))
        except InfeasibleError:
            continue
        best = min(best, rep.objective)
    return best


# ---------------------------------------------------------------------------
# config and unit helpers
# ---------------------------------------------------------------------------


def test_config_validation():
    for bad in ({"rho": 0.0}, {"rho": 1.5}, {"eps": 0.0}, {"max_iters": 0}, {"association_rule": "x"}):
        with pytest.raises(ValueError):
            AlgorithmConfig(**bad)
    assert AlgorithmConfig().rho == 0.7


@given(st.floats(1e-12, 1e12))
def test_dbw_round_trip(w):
    assert from_dbw(to_dbw(w)) == pytest.approx(w, rel=1e-12)


def test_dbw_zero_and_arrays():
    assert to_dbw(0.0) == -np.inf
    np.testing.assert_allclose(to_dbw([1.0, 10.0, 100.0]), [0.0, 10.0, 20.0])


# ---------------------------------------------------------------------------
# relaxation update
# ---------------------------------------------------------------------------


def test_update_endpoint_and_midpoint():
    prev = frac([[0.0, 0.3], [0.0, 0.7]], 1)
    new = binary([0, 1], 2, 1)
    np.testing.assert_array_equal(update_association(prev, new, 1.0).weights, new.weights)
    out = update_association(prev, new, 0.5)
    np.testing.assert_allclose(out.weights, [[0.5, 0.15], [0.0, 0.85]])


def test_update_geometric_convergence():
    x = frac([[0.2, 1.0], [0.8, 0.0]], 1)
    x0 = x.weights.copy()
    new = binary([0, 1], 2, 1)
    rho = 0.3
    for i in range(1, 15):
        x = update_association(x, new, rho)
        np.testing.assert_allclose(np.abs(x.weights - new.weights), (1 - rho) ** i * np.abs(x0 - new.weights), atol=1e-15)


def test_update_shape_mismatch():
    with pytest.raises(ValueError):
        update_association(frac([[1.0]], 1), binary([0, 0], 1, 1), 0.5)


@given(st.integers(0, 10_000), st.floats(0.01, 1.0), st.integers(1, 30))
def test_update_keeps_columns_valid(seed, rho, steps):
    rng = np.random.default_rng(seed)
    M, T = 3, 5
    x = frac(rng.dirichlet(np.ones(M), T).T, 2)
    for _ in range(steps):
        x = update_association(x, binary(rng.integers(0, M, T), M, 2), rho)
        w = x.weights
        assert np.all(w >= 0) and np.all(w <= 1)
        assert np.all(w.sum(axis=0) <= 1 + 1e-12)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def test_init_single_satellite():
    inst = make_instance([[1e-12, 2e-12]], [[1e-11]])
    np.testing.assert_array_equal(initialize_association(inst).assignment, [0, 0, 0])


def test_init_symmetric_pair_balanced():
    inst = make_instance([[1e-12, 1e-12], [1e-12, 1e-12]])
    assert sorted(initialize_association(inst).assignment) == [0, 1]


def test_init_centre_plurality():
    inst = generate_scenario(ScenarioConfig(seed=2))
    counts = np.bincount(initialize_association(inst).assignment, minlength=3)
    best_gain = np.bincount(np.argmax(inst.gains, axis=0), minlength=3)
    assert np.argmax(best_gain) == 1
    assert counts[1] > counts[0] and counts[1] > counts[2]


def test_init_falls_back_when_greedy_overloads():
    # greedy caps spread the terminals, but only satellite 0 can reach terminal 1
    inst = make_instance([[1e-12, 1e-12], [1e-12, 1e-18]])
    a = initialize_association(inst)
    assert association_fits(inst, a)
    assert a.assignment[1] == 0


def test_init_infeasible():
    inst = make_instance([[1e-16, 1e-16]], demand_sue=5e9)
    with pytest.raises(InfeasibleError):
        initialize_association(inst)


def test_min_link_bandwidth_meets_demand_at_cap():
    from leoalloc.convex import min_power_for_rate

    inst = generate_scenario(ScenarioConfig(seed=1, K=3, N=2))
    wmin = min_link_bandwidth(inst)
    p = min_power_for_rate(inst.demand[None, :], wmin, inst.gains, inst.noise[:, None])
    np.testing.assert_allclose(p, np.broadcast_to(inst.power_cap, p.shape), rtol=1e-6)


# ---------------------------------------------------------------------------
# rounding
# ---------------------------------------------------------------------------


def test_round_binary_is_identity():
    inst = generate_scenario(ScenarioConfig(seed=1, K=3, N=3))
    a = initialize_association(inst)
    assert round_association(FractionalAssociation(a.alpha, a.mu), inst) == a


def test_round_argmax_and_ties():
    inst = make_instance([[1e-12, 1e-12], [1e-12, 1e-12]])
    out = round_association(frac([[0.6, 0.5], [0.4, 0.5]], 2), inst)
    np.testing.assert_array_equal(out.assignment, [0, 0])


def repair_oracle(inst, base, budget):
    """Feasible assignment with the least summed dB gain loss against ``base``."""
    wmin = min_link_bandwidth(inst)
    gdb = 10 * np.log10(inst.gains)
    cols = np.arange(inst.T)
    best, best_pen = None, np.inf
    for a in itertools.product(range(inst.M), repeat=inst.T):
        a = np.array(a)
        if np.any(np.bincount(a, wmin[a, cols], minlength=inst.M) > budget * (1 - 1e-6)):
            continue
        pen = float(np.sum(gdb[base, cols] - gdb[a, cols]))
        if pen < best_pen:
            best, best_pen = a, pen
    return best


@pytest.mark.parametrize("budget", [300e6, 200e6])
def test_round_repair_matches_oracle(budget):
    # all four SUEs lean to satellite 0 whose budget cannot hold their minimum bandwidths
    h = np.array([[1.0, 1.1, 1.2, 1.3], [0.9, 0.8, 1.1, 1.0]]) * 1e-12
    inst = make_instance(h, demand_sue=6.5e8, W=budget)
    weights = np.array([[0.7, 0.8, 0.6, 0.9], [0.3, 0.2, 0.4, 0.1]])
    out = round_association(frac(weights, 4), inst)
    np.testing.assert_array_equal(out.assignment, repair_oracle(inst, np.zeros(4, dtype=int), budget))
    assert association_fits(inst, out)


def test_round_repair_gives_up():
    inst = make_instance(np.full((2, 4), 1e-12), demand_sue=6.5e8, W=100e6)
    with pytest.raises(InfeasibleError):
        round_association(frac(np.full((2, 4), 0.5), 4), inst)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def test_evaluate_zero_power():
    inst = make_instance([[1e-12, 1e-12]])
    a = binary([0, 0], 1, 2)
    m = evaluate_solution(inst, a, Allocation.from_unified(np.zeros((1, 2)), [1e8, 1e8], 2))
    assert m.total_power_w == 0.0 and m.total_power_dbw == -np.inf
    assert m.satisfaction == 0.0


def test_evaluate_single_link():
    inst = make_instance([[1e-14]])
    alloc, rep = solve_allocation(inst, binary([0], 1, 1))
    m = evaluate_solution(inst, binary([0], 1, 1), alloc)
    assert m.total_power_w == alloc.p[0, 0]
    assert m.satisfaction == 1.0
    np.testing.assert_array_equal(m.per_leo_connections, [1])
    assert m.bandwidth_utilization[0] == pytest.approx(1.0, rel=1e-5)


# ---------------------------------------------------------------------------
# exact integral costs and local search
# ---------------------------------------------------------------------------


def test_integral_cost_matches_solver():
    inst = generate_scenario(ScenarioConfig(seed=3, K=4, N=3))
    a = initialize_association(inst).assignment
    _, rep = solve_allocation(inst, binary(a, inst.M, inst.K), tol=1e-9)
    assert IntegralCost(inst).total(a) == pytest.approx(rep.objective, rel=1e-6)


def test_improve_never_worse_and_is_local_optimum():
    inst = generate_scenario(ScenarioConfig(seed=4, K=5, N=4))
    costs = IntegralCost(inst)
    a0 = initialize_association(inst).assignment
    a1 = improve_association(inst, a0, costs)
    v1 = costs.total(a1)
    assert v1 <= costs.total(a0)
    for t in range(inst.T):
        for m in range(inst.M):
            b = a1.copy()
            b[t] = m
            assert costs.total(b) >= v1 * (1 - 1e-9)


# ---------------------------------------------------------------------------
# the alternating loop
# ---------------------------------------------------------------------------


def test_optimal_start_converges_fast():
    inst = make_instance([[1e-13, 2e-13]], [[1e-11]])
    sol = run_algorithm1(inst)
    assert sol.status == "Converged" and sol.iterations <= 3
    tr = sol.objective_trace
    assert all(b <= a * (1 + 1e-4) for a, b in zip(tr, tr[1:]))


@pytest.mark.parametrize("seed", [1, 2])
def test_default_scenario(seed):
    sol = run_algorithm1(generate_scenario(ScenarioConfig(seed=seed)))
    assert sol.status == "Converged" and sol.iterations < 100
    assert sol.satisfaction == 1.0
    assert sol.iterations == len(sol.objective_trace) == len(sol.fractional_trace)
    tr = np.array(sol.objective_trace)
    assert np.all(tr[1:] <= tr[:-1] * 1.05)


@pytest.mark.parametrize("seed", range(1, 6))
def test_micro_between_oracle_and_greedy(seed):
    inst = generate_scenario(ScenarioConfig(seed=seed, M=2, K=2, N=1))
    sol = run_algorithm1(inst)
    assert sol.objective >= joint_oracle(inst) * (1 - 1e-6)
    g = run_greedy(inst)
    if g.feasible:
        assert sol.objective <= g.total_power * (1 + 1e-9)


def test_final_solution_satisfies_all_constraints():
    from leoalloc.convex import constraint_values

    inst = generate_scenario(ScenarioConfig(seed=6))
    sol = run_algorithm1(inst)
    cons = constraint_values(inst, sol.association, sol.allocation)
    assert np.all(cons["rate"] <= 1e-6 * inst.demand)
    assert np.all(cons["power"] <= 1e-9 * inst.power_cap)
    assert np.all(cons["bandwidth"] <= 1e-9 * inst.W_leo)
    assert np.all(sol.association.weights.sum(axis=0) == 1)


def test_literal_rule_never_moves():
    # with every satellite's band fully split, frozen bandwidths pack only the current association
    inst = generate_scenario(ScenarioConfig(seed=1, K=5, N=5))
    sol = run_algorithm1(inst, AlgorithmConfig(association_rule="literal", polish=False))
    init = initialize_association(inst)
    assert all(a == init for a in sol.association_trace)


def test_midrun_infeasibility_falls_back(monkeypatch):
    inst = generate_scenario(ScenarioConfig(seed=2, K=5, N=5))
    calls = {"n": 0}
    real = alt.solve_allocation

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 3:
            raise InfeasibleError("injected")
        return real(*args, **kw)

    monkeypatch.setattr(alt, "solve_allocation", flaky)
    sol = run_algorithm1(inst, AlgorithmConfig(max_guard=0))
    assert sol.status == "Infeasible"
    assert sol.satisfaction == 1.0


def test_infeasible_start_raises():
    with pytest.raises(InfeasibleError):
        run_algorithm1(make_instance([[1e-16]], demand_sue=5e9))
