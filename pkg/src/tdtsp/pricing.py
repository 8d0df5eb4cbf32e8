"""Column generation: reduced costs, DAG path pricing, Lagrangean bounds.

Timed vertex ids are topologically sorted, so one sequential pass over them
prices optimally.  Plain mode keeps one label per timed vertex; 2-cycle-free
mode keeps the best label plus the best label whose predecessor base vertex
differs, which suffices to exclude the base pattern u -> v -> u exactly.

The per-round dual bound: every feasible master point decomposes into
source-sink paths whose weights sum to 1 (the depot cover row), so the full
LP value is at least lpValue + min path reduced cost.  In 2-cycle-free mode
the same expression bounds the 2-cycle-free path relaxation, which is still
a relaxation of the problem and may exceed the plain arc bound; both are
safe for pruning.  Arc mode only supports the weaker lpValue + n * min arc
reduced cost.

Kernels run through numba when importable; the pure Python fallbacks are the
reference implementations and stay in sync by construction (same source).
"""

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .expand import TimeExpandedGraph, path_to_tour
from .lp import LpSolution
from .master import ArcMaster, PathMaster
from .model import SOURCE

EPS_PRICE = 1e-6

MODE_PLAIN = "plain"
MODE_2CF = "2cf"
MODE_ARC = "arc"


@dataclass
class DualView:
    lam: np.ndarray  # per base vertex
    mu: np.ndarray  # per timed vertex; 0 on depot copies
    adjust: np.ndarray  # per arc, from cut and branching rows

    @classmethod
    def from_master(cls, master, sol: LpSolution) -> "DualView":
        return cls(master.cover_duals(sol), master.flow_duals(sol), master.row_dual_costs(sol))


def arc_reduced_costs(g: TimeExpandedGraph, d: DualView) -> np.ndarray:
    """c_a - lambda_tail - mu_tail + mu_head - adjust, vectorized over arcs."""
    return (
        g.arc_cost.astype(np.float64)
        - d.lam[g.arc_tail_base]
        - d.mu[g.arc_tail]
        + d.mu[g.arc_head]
        - d.adjust
    )


def reduced_cost(g: TimeExpandedGraph, a: int, d: DualView) -> float:
    return float(
        g.arc_cost[a]
        - d.lam[g.arc_tail_base[a]]
        - d.mu[g.arc_tail[a]]
        + d.mu[g.arc_head[a]]
        - d.adjust[a]
    )


def _plain_pass(num_tv, source_tv, out_indptr, out_arcs, arc_head, rc, alive, dist, pred):
    dist[source_tv] = 0.0
    for tv in range(num_tv):
        dtv = dist[tv]
        if dtv == np.inf:
            continue
        for k in range(out_indptr[tv], out_indptr[tv + 1]):
            a = out_arcs[k]
            if not alive[a]:
                continue
            h = arc_head[a]
            nd = dtv + rc[a]
            if nd < dist[h]:
                dist[h] = nd
                pred[h] = a


def _twocf_pass(
    num_tv,
    source_tv,
    out_indptr,
    out_arcs,
    arc_head,
    arc_tail_base,
    arc_head_base,
    rc,
    alive,
    d1,
    d2,
    p1,
    p2,
    s1,
    s2,
    b1,
    b2,
):
    d1[source_tv] = 0.0
    b1[source_tv] = -1
    for tv in range(num_tv):
        for slot in range(2):
            dtv = d1[tv] if slot == 0 else d2[tv]
            if dtv == np.inf:
                continue
            pb = b1[tv] if slot == 0 else b2[tv]
            for k in range(out_indptr[tv], out_indptr[tv + 1]):
                a = out_arcs[k]
                if not alive[a]:
                    continue
                hb = arc_head_base[a]
                if hb == pb:
                    continue  # would close u -> v -> u
                h = arc_head[a]
                nd = dtv + rc[a]
                nb = arc_tail_base[a]
                if nd < d1[h]:
                    if nb == b1[h]:
                        d1[h] = nd
                        p1[h] = a
                        s1[h] = slot
                    else:
                        d2[h] = d1[h]
                        p2[h] = p1[h]
                        s2[h] = s1[h]
                        b2[h] = b1[h]
                        d1[h] = nd
                        p1[h] = a
                        s1[h] = slot
                        b1[h] = nb
                elif nb != b1[h] and nd < d2[h]:
                    d2[h] = nd
                    p2[h] = a
                    s2[h] = slot
                    b2[h] = nb


_plain_kernel = _plain_pass
_twocf_kernel = _twocf_pass
if os.environ.get("TDTSP_NO_NUMBA") != "1":
    try:
        from numba import njit

        _plain_kernel = njit(cache=True)(_plain_pass)
        _twocf_kernel = njit(cache=True)(_twocf_pass)
    except ImportError:
        pass


def price_paths(
    g: TimeExpandedGraph,
    d: DualView,
    mode: str = MODE_2CF,
    eps: float = EPS_PRICE,
    dead: Optional[np.ndarray] = None,
) -> Tuple[List[Tuple[float, Tuple[int, ...]]], float]:
    """Best path per sink with reduced cost < -eps, plus the global minimum.

    Returns ([(rc, arc ids), ...] sorted by rc, minReducedCost).  dead is a
    boolean mask of arcs to ignore.
    """
    rc = arc_reduced_costs(g, d)
    alive = np.ones(g.num_arcs, dtype=bool) if dead is None else ~dead
    if mode == MODE_PLAIN:
        dist = np.full(g.num_tv, np.inf)
        pred = np.full(g.num_tv, -1, dtype=np.int64)
        _plain_kernel(
            g.num_tv, g.source_tv, g.out_indptr, g.out_arcs, g.arc_head, rc, alive, dist, pred
        )

        def walk(tv: int) -> Tuple[int, ...]:
            arcs = []
            while pred[tv] >= 0:
                a = int(pred[tv])
                arcs.append(a)
                tv = int(g.arc_tail[a])
            return tuple(reversed(arcs))

        sink_costs = [(float(dist[tv]), int(tv)) for tv in g.sink_tvs]
        reconstruct: Callable[[int], Tuple[int, ...]] = walk
    elif mode == MODE_2CF:
        inf = np.inf
        d1 = np.full(g.num_tv, inf)
        d2 = np.full(g.num_tv, inf)
        p1 = np.full(g.num_tv, -1, dtype=np.int64)
        p2 = np.full(g.num_tv, -1, dtype=np.int64)
        s1 = np.zeros(g.num_tv, dtype=np.int8)
        s2 = np.zeros(g.num_tv, dtype=np.int8)
        b1 = np.full(g.num_tv, -2, dtype=np.int32)
        b2 = np.full(g.num_tv, -2, dtype=np.int32)
        _twocf_kernel(
            g.num_tv,
            g.source_tv,
            g.out_indptr,
            g.out_arcs,
            g.arc_head,
            g.arc_tail_base,
            g.arc_head_base,
            rc,
            alive,
            d1,
            d2,
            p1,
            p2,
            s1,
            s2,
            b1,
            b2,
        )

        def walk2(tv: int) -> Tuple[int, ...]:
            arcs = []
            slot = 0
            while True:
                a = int(p1[tv]) if slot == 0 else int(p2[tv])
                if a < 0:
                    break
                nxt = int(s1[tv]) if slot == 0 else int(s2[tv])
                arcs.append(a)
                tv = int(g.arc_tail[a])
                slot = nxt
            return tuple(reversed(arcs))

        sink_costs = [(float(d1[tv]), int(tv)) for tv in g.sink_tvs]
        reconstruct = walk2
    else:
        raise ValueError("price_paths mode must be plain or 2cf, got %r" % mode)

    finite = [c for c, _ in sink_costs if c < np.inf]
    min_rc = min(finite) if finite else math.inf
    out = [(c, reconstruct(tv)) for c, tv in sink_costs if c < -eps]
    out.sort(key=lambda t: (t[0], t[1]))
    return out, min_rc


def price_single_arc(
    g: TimeExpandedGraph, d: DualView, present, dead: Optional[np.ndarray] = None
) -> Tuple[int, float]:
    """Most negative reduced-cost arc not yet in the master; (-1, inf) if none."""
    rc = arc_reduced_costs(g, d)
    mask = np.ones(g.num_arcs, dtype=bool)
    if dead is not None:
        mask &= ~dead
    for a in present:
        mask[a] = False
    if not mask.any():
        return -1, math.inf
    idx = np.nonzero(mask)[0]
    k = idx[np.argmin(rc[idx])]
    return int(k), float(rc[k])


def lagrangean_bound(lp_value: float, min_reduced_cost: float) -> float:
    return lp_value + min(min_reduced_cost, 0.0)


@dataclass
class PricingResult:
    lp_value: float
    dual_bound: float
    rounds: int
    added: int
    converged: bool
    sol: Optional[LpSolution]
    tours: List[Tuple[int, List[int]]] = field(default_factory=list)
    stalled: bool = False


def pricing_loop(
    master,
    g: TimeExpandedGraph,
    mode: str = MODE_2CF,
    eps: float = EPS_PRICE,
    dead: Optional[np.ndarray] = None,
    max_rounds: Optional[int] = None,
    meter=None,
    log: Optional[Callable[[str], None]] = None,
) -> PricingResult:
    """Alternate master solves and pricing until no column prices out.

    meter, when given, is asked before each master solve
    (meter.try_spend_lp(ncols)) and each pricing pass
    (meter.try_spend_pass(num_arcs, twocf)); a False reply stops the loop
    with the best valid bound collected so far.

    Feasible tours stumbled upon while pricing are collected in the result.
    """
    n = g.inst.n
    best_bound = -math.inf
    rounds = 0
    added_total = 0
    tours: List[Tuple[int, List[int]]] = []
    seen_tours = set()
    sol = None
    lp_value = math.inf
    while True:
        if meter is not None and not meter.try_spend_lp(master.lp.num_cols):
            return PricingResult(lp_value, best_bound, rounds, added_total, False, sol, tours)
        sol = master.solve()
        if not sol.optimal:
            raise RuntimeError("master LP %s during pricing" % sol.status)
        lp_value = sol.objective
        if meter is not None and not meter.try_spend_pass(g.num_arcs, mode == MODE_2CF):
            return PricingResult(lp_value, best_bound, rounds, added_total, False, sol, tours)
        rounds += 1
        d = DualView.from_master(master, sol)
        if mode == MODE_ARC:
            a, min_rc = price_single_arc(g, d, master.col_of, dead)
            if min_rc >= -eps:
                # every absent arc prices out; certifies only the weak bound
                best_bound = max(best_bound, lp_value + n * min(min_rc, 0.0))
                return PricingResult(lp_value, best_bound, rounds, added_total, True, sol, tours)
            best_bound = max(best_bound, lagrangean_bound(lp_value, n * min_rc))
            master.add_arc(a)
            added_total += 1
        else:
            paths, min_rc = price_paths(g, d, mode, eps, dead)
            best_bound = max(best_bound, lagrangean_bound(lp_value, min_rc))
            if log:
                log(
                    "pricing round %d: %d candidate paths, minRC %.6g, bound %.6g"
                    % (rounds, len(paths), min_rc, best_bound)
                )
            if min_rc >= -eps:
                return PricingResult(lp_value, best_bound, rounds, added_total, True, sol, tours)
            added_round = 0
            for rc_val, path in paths:
                tour = path_to_tour(g, path)
                if tour is not None and tuple(tour) not in seen_tours:
                    seen_tours.add(tuple(tour))
                    tours.append((int(g.arc_arr[path[-1]]), tour))
                if isinstance(master, PathMaster):
                    before = master.lp.num_cols
                    master.add_path(path)
                    added_round += master.lp.num_cols - before
                else:
                    for a in path:
                        if not master.has_arc(a):
                            master.add_arc(a)
                            added_round += 1
            added_total += added_round
            if added_round == 0:
                # negative paths exist but all their columns are present:
                # the LP already enforces them, keep the bound and stop
                return PricingResult(
                    lp_value, best_bound, rounds, added_total, False, sol, tours, stalled=True
                )
        if max_rounds is not None and rounds >= max_rounds:
            return PricingResult(lp_value, best_bound, rounds, added_total, False, sol, tours)
