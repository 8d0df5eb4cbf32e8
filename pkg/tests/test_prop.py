"""Propagation tests: hand rules on constant tables, safety oracle on solved instances."""

import numpy as np
import pytest

from tdtsp.expand import build, tour_to_arcids
from tdtsp.instgen import GenConfig, generate, tighten_horizon
from tdtsp.master import ArcMaster
from tdtsp.model import SOURCE, constant_instance
from tdtsp.oracle import solve_dp
from tdtsp.prop import propagate


@pytest.fixture(scope="module")
def const_graph():
    inst = constant_instance(4, 1, 12)
    return build(inst)


def test_vacuous_bounds_fix_nothing(const_graph):
    g = const_graph
    for literal in (False, True):
        mask = propagate(g, g.inst.theta_max + 1, 0.0, literal=literal)
        assert not mask.any()


def test_primal_rule_strengthened(const_graph):
    g = const_graph
    mask = propagate(g, 10, 0.0)
    # every arc departing at 10 or later is dead, and so is anything arriving past 9
    assert mask[g.arc_dep >= 10].all()
    expect = g.arc_arr >= 10
    assert np.array_equal(mask, expect)


def test_primal_rule_literal(const_graph):
    g = const_graph
    mask = propagate(g, 10, 0.0, literal=True)
    assert np.array_equal(mask, g.arc_dep >= 11)
    # unit costs: departure at 10 survives the literal rule but not the strengthened one
    border = (g.arc_dep == 10) & ~mask
    assert border.any()
    assert propagate(g, 10, 0.0)[border].all()


def test_return_rule(const_graph):
    g = const_graph
    into_depot = g.arc_head_base == SOURCE
    mask = propagate(g, g.inst.theta_max + 1, 5.0)
    assert np.array_equal(mask, into_depot & (g.arc_arr < 5))
    assert not mask[into_depot & (g.arc_arr == 5)].any()
    # a fractional dual bound rounds up through the strict comparison
    frac = propagate(g, g.inst.theta_max + 1, 4.3)
    assert np.array_equal(frac, into_depot & (g.arc_arr <= 4))


def test_monotone_and_copies(const_graph):
    g = const_graph
    rng = np.random.default_rng(0)
    seed_mask = rng.random(g.num_arcs) < 0.2
    before = seed_mask.copy()
    loose = propagate(g, 9, 3.0, dead=seed_mask)
    assert np.array_equal(seed_mask, before)  # input untouched
    assert loose[seed_mask].all()  # never unfixes
    tight = propagate(g, 7, 5.0, dead=loose)
    assert tight[loose].all()
    assert tight.sum() >= loose.sum()


@pytest.fixture(scope="module")
def solved_instances():
    out = []
    for n, seed in [(5, 0), (5, 3), (6, 1), (7, 2)]:
        inst = tighten_horizon(generate(GenConfig(n=n, seed=seed)))
        g = build(inst)
        tour, opt = solve_dp(inst)
        master = ArcMaster(g, range(g.num_arcs))
        sol = master.solve()
        assert sol.optimal
        out.append((g, tour, opt, master, sol.objective))
    return out


def test_safety_optimal_tour_survives(solved_instances):
    for g, tour, opt, _, root_lp in solved_instances:
        arcs = tour_to_arcids(g, tour)
        for literal in (False, True):
            mask = propagate(g, opt + 1, root_lp, literal=literal)
            assert not mask[arcs].any()
        # the strongest valid dual bound still keeps the closing arc alive
        mask = propagate(g, opt + 1, float(opt))
        assert not mask[arcs].any()


def test_masking_weakly_raises_lp(solved_instances):
    for g, tour, opt, master, base in solved_instances:
        mask = propagate(g, opt + 1, base)
        for a in np.flatnonzero(mask):
            master.set_arc_bounds(int(a), 0.0, 0.0)
        sol = master.solve()
        assert sol.optimal
        assert master.artificial_usage(sol) <= 1e-9
        assert sol.objective >= base - 1e-9
        assert sol.objective <= opt + 1e-6
