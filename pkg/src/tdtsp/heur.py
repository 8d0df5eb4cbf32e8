"""Primal heuristics.

Two ingredients: a static warm start (solve the classical ATSP on the
pointwise-minimal travel times, then evaluate that tour time-dependently),
and LP-guided randomized tour construction on the time-expanded graph.  The
warm start carries a worst-case guarantee: with lambda_hat the largest
max/min ratio over the travel-time tables, an optimal static tour evaluated
time-dependently arrives within lambda_hat times the true optimum.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import Instance, SOURCE, tour_arrival

INF_I = 10**9

# metric ids for construct_tours
METRIC_COST = 1  # 1 / c_uv(theta)
METRIC_ARC_VALUE = 2  # LP value of the timed arc
METRIC_COMBINED = 3  # combined (time-aggregated) LP value of the base arc


def static_cost_matrix(inst: Instance) -> np.ndarray:
    """Pointwise minimum travel times; a lower bound on any departure time."""
    d = inst.cost.min(axis=2).astype(np.int64)
    np.fill_diagonal(d, INF_I)
    return d


def lambda_hat(inst: Instance) -> float:
    """max over arcs of (max_theta c / min_theta c)."""
    lo = inst.cost.min(axis=2).astype(np.float64)
    hi = inst.cost.max(axis=2).astype(np.float64)
    off = ~np.eye(inst.n, dtype=bool)
    return float((hi[off] / lo[off]).max())


def held_karp_static(dist: np.ndarray) -> Tuple[int, List[int]]:
    """Exact Held-Karp on a static cost matrix.

    Ties are broken towards the lexicographically smallest predecessor so the
    reconstruction is deterministic.
    """
    n = dist.shape[0]
    m = n - 1  # vertices 1..n-1 mapped to bits 0..m-1
    full = (1 << m) - 1
    dp = [[INF_I] * m for _ in range(full + 1)]
    pred = [[-1] * m for _ in range(full + 1)]
    for j in range(m):
        dp[1 << j][j] = int(dist[SOURCE, j + 1])
    for mask in range(1, full + 1):
        row = dp[mask]
        for j in range(m):
            if not (mask >> j) & 1:
                continue
            cur = row[j]
            if cur >= INF_I:
                continue
            rest = full & ~mask
            k = rest
            while k:
                b = k & (-k)
                v = b.bit_length() - 1
                cand = cur + int(dist[j + 1, v + 1])
                nmask = mask | b
                if cand < dp[nmask][v]:
                    dp[nmask][v] = cand
                    pred[nmask][v] = j
                k ^= b
    best, last = INF_I, -1
    for j in range(m):
        total = dp[full][j] + int(dist[j + 1, SOURCE])
        if total < best:
            best, last = total, j
    if last < 0:
        raise ValueError("static TSP has no finite tour")
    seq = []
    mask = full
    j = last
    while j >= 0:
        seq.append(j + 1)
        pj = pred[mask][j]
        mask &= ~(1 << j)
        j = pj
    seq.reverse()
    return best, [SOURCE] + seq


def nearest_neighbor_tour(dist: np.ndarray) -> List[int]:
    n = dist.shape[0]
    tour = [SOURCE]
    seen = {SOURCE}
    while len(tour) < n:
        u = tour[-1]
        best, pick = INF_I + 1, -1
        for v in range(n):
            if v not in seen and dist[u, v] < best:
                best, pick = int(dist[u, v]), v
        tour.append(pick)
        seen.add(pick)
    return tour


def static_tour_cost(dist: np.ndarray, tour: Sequence[int]) -> int:
    c = 0
    for i in range(len(tour)):
        c += int(dist[tour[i], tour[(i + 1) % len(tour)]])
    return c


def two_opt_static(dist: np.ndarray, tour: List[int]) -> List[int]:
    """First-improvement 2-opt with full re-evaluation (costs are asymmetric)."""
    best = list(tour)
    best_cost = static_tour_cost(dist, best)
    improved = True
    while improved:
        improved = False
        n = len(best)
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                cand = best[:i] + best[i : j + 1][::-1] + best[j + 1 :]
                c = static_tour_cost(dist, cand)
                if c < best_cost:
                    best, best_cost = cand, c
                    improved = True
    return best


def solve_static_tsp(dist: np.ndarray, dp_limit: int = 16) -> Tuple[List[int], int]:
    """Optimal tour for n <= dp_limit, otherwise nearest neighbor + 2-opt."""
    n = dist.shape[0]
    if n <= dp_limit:
        cost, tour = held_karp_static(dist)
        return tour, cost
    tour = two_opt_static(dist, nearest_neighbor_tour(dist))
    return tour, static_tour_cost(dist, tour)


@dataclass
class WarmStart:
    tour: List[int]
    arrival: int
    static_value: int
    lam_hat: float


def static_warmstart(inst: Instance, dp_limit: int = 16) -> Optional[WarmStart]:
    """Tour from the static relaxation, evaluated time-dependently.

    Returns None when the static tour does not fit into the horizon.  With an
    exact static solve the arrival is at most lambda_hat * optimum.
    """
    dist = static_cost_matrix(inst)
    tour, static_value = solve_static_tsp(dist, dp_limit=dp_limit)
    arr = tour_arrival(inst, tour)
    if arr is None or arr > inst.theta_max:
        return None
    return WarmStart(tour=tour, arrival=int(arr), static_value=int(static_value), lam_hat=lambda_hat(inst))


def construct_tours(
    g,
    arc_values: Optional[np.ndarray],
    combined: Optional[np.ndarray],
    metric: int,
    trials: int = 32,
    seed: int = 0,
    dead: Optional[np.ndarray] = None,
    include_greedy: bool = True,
) -> List[Tuple[int, List[int], List[int]]]:
    """LP-guided randomized tour construction on the time-expanded graph.

    Walks forward from s_0, choosing among arcs into unvisited vertices with
    probability proportional to the metric score (shifted by 1e-9 so zero
    scores stay reachable).  Arcs fixed to zero are excluded.  The greedy
    variant picks the best score, breaking ties by smaller travel time, then
    smaller arc id.

    Returns feasible tours as (arrival, tour, arc ids), best first.
    """
    inst = g.inst
    n = inst.n
    rng = np.random.default_rng(seed)
    found = {}

    def scores_for(arcids: np.ndarray) -> np.ndarray:
        if metric == METRIC_COST:
            return 1.0 / g.arc_cost[arcids]
        if metric == METRIC_ARC_VALUE:
            if arc_values is None:
                return np.zeros(len(arcids))
            return arc_values[arcids]
        if metric == METRIC_COMBINED:
            if combined is None:
                return np.zeros(len(arcids))
            return combined[g.arc_tail_base[arcids], g.arc_head_base[arcids]]
        raise ValueError("unknown metric %r" % (metric,))

    def run(greedy: bool) -> None:
        tv = g.source_tv
        visited = np.zeros(n, dtype=bool)
        visited[SOURCE] = True
        path = []
        for _ in range(n - 1):
            out = g.out_arcs[g.out_indptr[tv] : g.out_indptr[tv + 1]]
            ok = ~visited[g.arc_head_base[out]]
            if dead is not None:
                ok &= ~dead[out]
            cand = out[ok]
            cand = cand[g.arc_head_base[cand] != SOURCE]
            if len(cand) == 0:
                return
            sc = scores_for(cand)
            if greedy:
                order = np.lexsort((cand, g.arc_cost[cand], -sc))
                a = int(cand[order[0]])
            else:
                p = sc + 1e-9
                p = p / p.sum()
                a = int(rng.choice(cand, p=p))
            path.append(a)
            visited[g.arc_head_base[a]] = True
            tv = int(g.arc_head[a])
        out = g.out_arcs[g.out_indptr[tv] : g.out_indptr[tv + 1]]
        back = out[g.arc_head_base[out] == SOURCE]
        if dead is not None:
            back = back[~dead[back]]
        if len(back) == 0:
            return
        a = int(back[0])
        path.append(a)
        tour = [SOURCE] + [int(g.arc_head_base[x]) for x in path[:-1]]
        found[tuple(tour)] = (int(g.arc_arr[a]), tour, path)

    if include_greedy:
        run(greedy=True)
    for _ in range(trials):
        run(greedy=False)
    return sorted(found.values(), key=lambda t: (t[0], t[1]))
