"""Pricing tests against exhaustive path enumeration and the DP oracle."""

import math

import numpy as np
import pytest

from tdtsp.expand import build, tour_to_arcids
from tdtsp.heur import static_warmstart
from tdtsp.instgen import GenConfig, generate, tighten_horizon
from tdtsp.master import ArcMaster, PathMaster, build_arc_master, build_path_master
from tdtsp.model import SOURCE, constant_instance, instance_from_tables, is_feasible_tour, tour_arrival
from tdtsp.oracle import solve_dp
from tdtsp.pricing import (
    EPS_PRICE,
    MODE_2CF,
    MODE_ARC,
    MODE_PLAIN,
    DualView,
    arc_reduced_costs,
    lagrangean_bound,
    price_paths,
    price_single_arc,
    pricing_loop,
    reduced_cost,
    _plain_kernel,
    _plain_pass,
    _twocf_kernel,
    _twocf_pass,
)

from pathenum import all_paths, path_reduced_cost


def tiny_instance(n, theta_max, seed):
    """Random FIFO tables with small horizon, for exhaustive enumeration."""
    rng = np.random.default_rng(seed)
    cost = rng.integers(1, 5, size=(n, n, theta_max + 1)).astype(np.int64)
    theta = np.arange(theta_max + 1)
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            arr = np.maximum.accumulate(theta + cost[u, v])
            cost[u, v] = arr - theta
    return instance_from_tables(cost, n, theta_max)


def rand_duals(g, seed, with_adjust=False):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(-3.0, 8.0, g.inst.n)
    mu = rng.uniform(-4.0, 4.0, g.num_tv)
    adjust = rng.uniform(-1.0, 1.0, g.num_arcs) if with_adjust else np.zeros(g.num_arcs)
    return DualView(lam, mu, adjust)


@pytest.fixture(scope="module")
def tiny_graphs():
    out = []
    for seed in range(3):
        inst = tiny_instance(4, 7, seed)
        out.append(build(inst))
    return out


def check_chain(g, path):
    assert int(g.arc_tail[path[0]]) == g.source_tv
    for a, b in zip(path, path[1:]):
        assert int(g.arc_head[a]) == int(g.arc_tail[b])
    assert int(g.arc_head_base[path[-1]]) == SOURCE


def is_two_cycle_free(g, path):
    bases = [SOURCE] + [int(g.arc_head_base[a]) for a in path]
    return all(bases[i] != bases[i + 2] for i in range(len(bases) - 2))


def test_plain_matches_enumeration(tiny_graphs):
    for g in tiny_graphs:
        paths = all_paths(g)
        assert paths
        for seed in range(4):
            d = rand_duals(g, seed, with_adjust=seed % 2 == 1)
            rc = arc_reduced_costs(g, d)
            want = min(path_reduced_cost(g, p, rc) for p in paths)
            found, min_rc = price_paths(g, d, MODE_PLAIN)
            assert min_rc == pytest.approx(want, abs=1e-9)
            for val, p in found:
                check_chain(g, p)
                assert val == pytest.approx(path_reduced_cost(g, p, rc), abs=1e-9)
                assert val < -EPS_PRICE


def test_2cf_matches_enumeration(tiny_graphs):
    for g in tiny_graphs:
        paths = all_paths(g, two_cycle_free=True)
        assert paths
        for seed in range(4):
            d = rand_duals(g, seed + 11)
            rc = arc_reduced_costs(g, d)
            want = min(path_reduced_cost(g, p, rc) for p in paths)
            found, min_rc = price_paths(g, d, MODE_2CF)
            assert min_rc == pytest.approx(want, abs=1e-9)
            for val, p in found:
                check_chain(g, p)
                assert is_two_cycle_free(g, p)
                assert val == pytest.approx(path_reduced_cost(g, p, rc), abs=1e-9)


def test_plain_bound_no_weaker_than_2cf(tiny_graphs):
    for g in tiny_graphs:
        for seed in range(4):
            d = rand_duals(g, seed + 23)
            _, plain_rc = price_paths(g, d, MODE_PLAIN)
            _, twocf_rc = price_paths(g, d, MODE_2CF)
            assert plain_rc <= twocf_rc + 1e-12


def test_double_visit_path_priced_only_in_plain_mode():
    # lambda on vertex 1 rewards every departure from it, so the best plain
    # path leaves it twice: 0 -> 1 -> 2 -> 1 -> 0 at reduced cost 4 - 2*10
    inst = constant_instance(3, 1, 4)
    g = build(inst)
    d = DualView(np.array([0.0, 10.0, 0.0]), np.zeros(g.num_tv), np.zeros(g.num_arcs))
    found, min_rc = price_paths(g, d, MODE_PLAIN)
    assert min_rc == pytest.approx(-16.0)
    assert sorted(val for val, _ in found) == pytest.approx([-16.0, -8.0, -7.0])
    best = min(found)[1]
    bases = [SOURCE] + [int(g.arc_head_base[a]) for a in best]
    assert bases == [0, 1, 2, 1, 0]

    found2, min_rc2 = price_paths(g, d, MODE_2CF)
    assert min_rc2 == pytest.approx(-7.0)
    assert len(found2) == 1
    assert len(found2[0][1]) == 3
    assert is_two_cycle_free(g, found2[0][1])


def test_reduced_cost_single_arc_matches_vector(tiny_graphs):
    g = tiny_graphs[0]
    d = rand_duals(g, 5, with_adjust=True)
    rc = arc_reduced_costs(g, d)
    for a in range(0, g.num_arcs, max(1, g.num_arcs // 17)):
        assert reduced_cost(g, a, d) == pytest.approx(rc[a], abs=1e-12)


def test_price_single_arc(tiny_graphs):
    g = tiny_graphs[0]
    d = rand_duals(g, 7)
    rc = arc_reduced_costs(g, d)
    present = {0, 1, int(np.argmin(rc))}
    a, val = price_single_arc(g, d, present)
    mask = np.ones(g.num_arcs, dtype=bool)
    for p in present:
        mask[p] = False
    idx = np.nonzero(mask)[0]
    assert val == pytest.approx(rc[idx].min())
    assert a == idx[np.argmin(rc[idx])]
    assert a not in present

    a_none, val_none = price_single_arc(g, d, set(range(g.num_arcs)))
    assert a_none == -1 and val_none == math.inf


def test_dead_arcs_are_skipped(tiny_graphs):
    for g in tiny_graphs:
        for seed in range(20):
            d = rand_duals(g, seed)
            found, base_rc = price_paths(g, d, MODE_PLAIN)
            if found:
                break
        assert found
        dead = np.zeros(g.num_arcs, dtype=bool)
        dead[list(found[0][1])] = True
        found2, rc2 = price_paths(g, d, MODE_PLAIN, dead=dead)
        assert rc2 >= base_rc - 1e-12
        for _, p in found2:
            assert not any(dead[a] for a in p)


def test_kernels_match_reference(tiny_graphs):
    g = tiny_graphs[1]
    d = rand_duals(g, 13)
    rc = arc_reduced_costs(g, d)
    alive = np.ones(g.num_arcs, dtype=bool)
    alive[::5] = False

    args = (g.num_tv, g.source_tv, g.out_indptr, g.out_arcs, g.arc_head, rc, alive)
    dist_a = np.full(g.num_tv, np.inf)
    pred_a = np.full(g.num_tv, -1, dtype=np.int64)
    dist_b = dist_a.copy()
    pred_b = pred_a.copy()
    _plain_pass(*args, dist_a, pred_a)
    _plain_kernel(*args, dist_b, pred_b)
    assert np.array_equal(dist_a, dist_b)
    assert np.array_equal(pred_a, pred_b)

    def fresh():
        return (
            np.full(g.num_tv, np.inf),
            np.full(g.num_tv, np.inf),
            np.full(g.num_tv, -1, dtype=np.int64),
            np.full(g.num_tv, -1, dtype=np.int64),
            np.zeros(g.num_tv, dtype=np.int8),
            np.zeros(g.num_tv, dtype=np.int8),
            np.full(g.num_tv, -2, dtype=np.int32),
            np.full(g.num_tv, -2, dtype=np.int32),
        )

    args2 = (
        g.num_tv,
        g.source_tv,
        g.out_indptr,
        g.out_arcs,
        g.arc_head,
        g.arc_tail_base,
        g.arc_head_base,
        rc,
        alive,
    )
    ref = fresh()
    jit = fresh()
    _twocf_pass(*args2, *ref)
    _twocf_kernel(*args2, *jit)
    for x, y in zip(ref, jit):
        assert np.array_equal(x, y)


def _grow(master, g, paths):
    added = 0
    for _, p in paths:
        if isinstance(master, PathMaster):
            before = master.lp.num_cols
            master.add_path(p)
            added += master.lp.num_cols - before
        else:
            for a in p:
                if not master.has_arc(a):
                    master.add_arc(a)
                    added += 1
    return added


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_round_bounds_below_optimum(seed):
    inst = tighten_horizon(generate(GenConfig(n=5, seed=seed)))
    g = build(inst)
    opt = solve_dp(inst)[1]
    ws = static_warmstart(inst)
    warm = tour_to_arcids(g, ws.tour)

    for mode, master in [
        (MODE_PLAIN, build_arc_master(g, warm)),
        (MODE_2CF, build_path_master(g, [warm])),
    ]:
        for _ in range(15):
            sol = master.solve()
            assert sol.optimal
            d = DualView.from_master(master, sol)
            paths, min_rc = price_paths(g, d, mode)
            assert lagrangean_bound(sol.objective, min_rc) <= opt + 1e-7
            if min_rc >= -EPS_PRICE:
                break
            if _grow(master, g, paths) == 0:
                break


def test_pricing_loop_unit_triangle():
    inst = constant_instance(3, 1, 3)
    g = build(inst)
    master = build_arc_master(g, tour_to_arcids(g, [0, 1, 2]))
    res = pricing_loop(master, g, mode=MODE_PLAIN)
    assert res.converged
    assert res.lp_value == pytest.approx(3.0, abs=1e-8)
    assert res.dual_bound <= res.lp_value + 1e-9
    assert res.dual_bound >= res.lp_value - 1e-5


def feasible_tiny_instances():
    picked = []
    seed = 0
    while len(picked) < 3 and seed < 40:
        inst = tiny_instance(4, 8, seed)
        if solve_dp(inst) is not None:
            picked.append(inst)
        seed += 1
    assert len(picked) == 3
    return picked


@pytest.fixture(scope="module")
def warm_tiny():
    out = []
    for inst in feasible_tiny_instances():
        g = build(inst)
        tour, _ = solve_dp(inst)
        out.append((inst, g, tour_to_arcids(g, tour)))
    return out


def test_plain_convergence_matches_full_lp(warm_tiny):
    # converged column generation must reproduce the LP over every arc
    for inst, g, warm in warm_tiny:
        full = build_arc_master(g, range(g.num_arcs))
        full_lp = full.solve().objective
        master = build_arc_master(g, warm)
        res = pricing_loop(master, g, mode=MODE_PLAIN)
        assert res.converged or res.stalled
        assert res.lp_value == pytest.approx(full_lp, abs=1e-6)
        assert res.dual_bound <= full_lp + 1e-6


def test_2cf_path_lp_at_least_arc_lp(warm_tiny):
    for inst, g, warm in warm_tiny:
        full = build_arc_master(g, range(g.num_arcs))
        full_lp = full.solve().objective
        opt = solve_dp(inst)[1]
        master = build_path_master(g, [warm])
        res = pricing_loop(master, g, mode=MODE_2CF)
        assert res.converged or res.stalled
        if res.converged:
            assert res.lp_value >= full_lp - 1e-6
        assert res.dual_bound <= opt + 1e-7


def test_arc_mode_converges_to_full_lp(warm_tiny):
    inst, g, warm = warm_tiny[0]
    full = build_arc_master(g, range(g.num_arcs))
    full_lp = full.solve().objective
    master = build_arc_master(g, warm)
    res = pricing_loop(master, g, mode=MODE_ARC)
    assert res.converged
    assert res.lp_value == pytest.approx(full_lp, abs=1e-5)
    assert res.added == res.rounds - 1
    assert res.dual_bound <= full_lp + 1e-6


def test_stall_keeps_valid_bound(warm_tiny):
    # with every arc already present nothing can be added, whatever the duals
    for inst, g, _ in warm_tiny:
        opt = solve_dp(inst)[1]
        master = build_arc_master(g, range(g.num_arcs))
        res = pricing_loop(master, g, mode=MODE_PLAIN)
        assert res.converged or (res.stalled and res.added == 0)
        assert res.dual_bound <= opt + 1e-7


class Meter:
    def __init__(self, lp_budget, pass_budget):
        self.lp_budget = lp_budget
        self.pass_budget = pass_budget

    def try_spend_lp(self, ncols):
        if self.lp_budget <= 0:
            return False
        self.lp_budget -= 1
        return True

    def try_spend_pass(self, num_arcs, twocf):
        if self.pass_budget <= 0:
            return False
        self.pass_budget -= 1
        return True


def test_meter_stops_loop(warm_tiny):
    inst, g, warm = warm_tiny[0]
    master = build_arc_master(g, warm)
    res = pricing_loop(master, g, mode=MODE_2CF, meter=Meter(0, 0))
    assert res.rounds == 0 and res.sol is None and not res.converged
    assert res.dual_bound == -math.inf

    master = build_arc_master(g, warm)
    res = pricing_loop(master, g, mode=MODE_2CF, meter=Meter(2, 1))
    assert res.rounds == 1
    assert res.sol is not None
    opt = solve_dp(inst)[1]
    assert res.dual_bound <= opt + 1e-7


def test_max_rounds_cap(warm_tiny):
    inst, g, warm = warm_tiny[0]
    master = build_arc_master(g, warm)
    res = pricing_loop(master, g, mode=MODE_PLAIN, max_rounds=1)
    assert res.rounds == 1


def test_harvested_tours_are_feasible(warm_tiny):
    for inst, g, warm in warm_tiny:
        master = build_path_master(g, [warm])
        res = pricing_loop(master, g, mode=MODE_2CF)
        for arr, tour in res.tours:
            assert is_feasible_tour(inst, tour)
            assert tour_arrival(inst, tour) == arr


def test_bad_mode_rejected(tiny_graphs):
    g = tiny_graphs[0]
    d = rand_duals(g, 1)
    with pytest.raises(ValueError):
        price_paths(g, d, "best")
