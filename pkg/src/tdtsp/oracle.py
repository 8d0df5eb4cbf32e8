"""Exact reference solvers for small instances.

Two independent methods: brute-force enumeration of all vertex orders, and
the time-dependent Held-Karp dynamic program.  The DP keeps one state per
(visited set, last vertex), storing the earliest arrival; under FIFO a later
arrival can never beat an earlier one on any completion, so this is exact.
Without FIFO the reduction is unsound, hence the precondition.

Both return (tour, arrival) with the tour starting at the depot, or None
when no tour finishes within the horizon.  Tie-breaking is deterministic
(brute force keeps the lexicographically first order, the DP the smallest
predecessor), so repeated runs reproduce the same tour; the two methods may
return different optimal tours of equal value.
"""

import itertools
from typing import List, Optional, Tuple

import numpy as np

from .model import Instance, SOURCE, check_fifo, tour_arrival

BRUTE_LIMIT = 11
DP_LIMIT = 22


class TooLarge(Exception):
    """Instance exceeds the size guard of the requested method."""


class NotFifo(Exception):
    """The DP requires the FIFO property."""


def solve_bruteforce(inst: Instance) -> Optional[Tuple[List[int], int]]:
    """Minimize arrival over all (n-1)! vertex orders."""
    if inst.n > BRUTE_LIMIT:
        raise TooLarge("brute force limited to n <= %d, got %d" % (BRUTE_LIMIT, inst.n))
    best: Optional[Tuple[List[int], int]] = None
    for perm in itertools.permutations(range(1, inst.n)):
        tour = [SOURCE] + list(perm)
        arr = tour_arrival(inst, tour)
        if arr is None or arr > inst.theta_max:
            continue
        if best is None or arr < best[1]:
            best = (tour, arr)
    return best


def _dp_tables(inst: Instance) -> Tuple[np.ndarray, np.ndarray]:
    """Forward DP over subsets of V \\ {s}.

    Returns (C, parent): C[mask, v] is the earliest arrival at vertex v+1
    having visited exactly the vertices of mask (bit i = vertex i+1), or -1
    if unreachable within theta_max; parent[mask, v] is the predecessor
    vertex on one such earliest path (smallest index among optimal ones).
    """
    n, tmax = inst.n, inst.theta_max
    cost = inst.cost
    size = 1 << (n - 1)
    C = np.full((size, n - 1), -1, dtype=np.int32)
    parent = np.full((size, n - 1), -1, dtype=np.int32)
    for v in range(1, n):
        arr = int(cost[SOURCE, v, 0])
        if arr <= tmax:
            C[1 << (v - 1), v - 1] = arr
            parent[1 << (v - 1), v - 1] = SOURCE
    others = np.arange(1, n)
    # extending a mask only sets bits, so plain ascending order is topological
    for mask in range(1, size):
        for v in range(1, n):
            arr = C[mask, v - 1]
            if arr < 0:
                continue
            out = others[((mask >> (others - 1)) & 1) == 0]
            if out.size == 0:
                continue
            cand = arr + cost[v, out, arr]
            ok = cand <= tmax
            for w, a in zip(out[ok], cand[ok]):
                nm = mask | (1 << (w - 1))
                if C[nm, w - 1] < 0 or a < C[nm, w - 1]:
                    C[nm, w - 1] = a
                    parent[nm, w - 1] = v
    return C, parent


def solve_dp(inst: Instance) -> Optional[Tuple[List[int], int]]:
    """Time-dependent Held-Karp; requires FIFO, O(2^n n^2) time."""
    if inst.n > DP_LIMIT:
        raise TooLarge("DP limited to n <= %d, got %d" % (DP_LIMIT, inst.n))
    if check_fifo(inst):
        raise NotFifo("instance violates FIFO; the subset DP would be unsound")
    n, tmax = inst.n, inst.theta_max
    C, parent = _dp_tables(inst)
    full = (1 << (n - 1)) - 1
    best_v, best_arr = -1, -1
    for v in range(1, n):
        arr = C[full, v - 1]
        if arr < 0:
            continue
        close = int(arr + inst.cost[v, SOURCE, arr])
        if close > tmax:
            continue
        if best_v < 0 or close < best_arr:
            best_v, best_arr = v, close
    if best_v < 0:
        return None
    tour = [best_v]
    mask = full
    v = best_v
    while parent[mask, v - 1] != SOURCE:
        u = int(parent[mask, v - 1])
        mask &= ~(1 << (v - 1))
        tour.append(u)
        v = u
    tour.append(SOURCE)
    tour.reverse()
    return tour, int(best_arr)


def solve(inst: Instance, method: str = "dp") -> Optional[Tuple[List[int], int]]:
    if method == "dp":
        return solve_dp(inst)
    if method == "brute":
        return solve_bruteforce(inst)
    raise ValueError("unknown method %r" % method)
