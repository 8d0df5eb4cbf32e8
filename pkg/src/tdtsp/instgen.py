"""Random instance generator.

Vertices are integer points in a square grid; static costs are the
floor-rounded Euclidean distances, made metric by an all-pairs shortest-path
closure BEFORE time dependence is added.  Each arc then gets a sawtooth
perturbation: a piecewise linear function f with f(0) = 0, initial slope +1
and slopes alternating between +1 and -1 at breakpoints sampled uniformly
without replacement from {1, ..., theta_max - 1}.  The travel time is

    c_a(theta) = c_a + max(min(f_a(theta), max_increase * c_a), 0)

so c_a <= c_a(theta) <= (1 + max_increase) * c_a and, since slopes are
>= -1, arrivals are non-decreasing (FIFO holds by construction).

The time-dependent triangle inequality does not follow automatically from
the static closure: offending arcs get their breakpoints resampled a bounded
number of times; any violations that survive are removed by a pointwise
time-dependent closure pass, which provably preserves FIFO, integrality and
the [c_a, (1+max_increase) c_a] band.

Identical configurations yield byte-identical instance files.
"""

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .heur import solve_static_tsp, static_cost_matrix
from .model import Instance, check_fifo, check_td_triangle, tour_arrival


class DegenerateInstance(Exception):
    """Raised when distinct coordinates cannot be sampled."""


class GenerationError(Exception):
    """Raised when a structurally sound instance cannot be produced."""


@dataclass
class GenConfig:
    n: int
    theta_max: int = 1000
    breakpoints: int = 100
    max_increase: float = 3.0
    coord_range: int = 100
    seed: int = 0
    triangle_retries: int = 20
    name: str = ""

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.theta_max < 2:
            raise ValueError("theta_max must be >= 2")
        if not (0 <= self.breakpoints <= self.theta_max - 1):
            raise ValueError("breakpoints must be in [0, theta_max - 1]")
        if self.max_increase < 0:
            raise ValueError("max_increase must be >= 0")
        if self.coord_range < 1:
            raise ValueError("coord_range must be >= 1")


def sawtooth_values(bps: np.ndarray, theta_max: int) -> np.ndarray:
    """Evaluate the sawtooth on the integer grid 0..theta_max.

    Starts at 0 with slope +1; the slope flips sign at every breakpoint.
    """
    m = len(bps)
    starts = np.concatenate(([0], np.sort(bps))).astype(np.int64)
    slopes = np.where(np.arange(m + 1) % 2 == 0, 1, -1).astype(np.int64)
    vals = np.zeros(m + 1, dtype=np.int64)
    if m:
        vals[1:] = np.cumsum(slopes[:-1] * np.diff(starts))
    thetas = np.arange(theta_max + 1, dtype=np.int64)
    seg = np.searchsorted(starts[1:], thetas, side="right")
    return vals[seg] + slopes[seg] * (thetas - starts[seg])


def _floyd_warshall(d: np.ndarray) -> np.ndarray:
    d = d.copy()
    n = d.shape[0]
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def _sample_coords(rng: np.random.Generator, n: int, coord_range: int) -> np.ndarray:
    for _ in range(100):
        pts = rng.integers(0, coord_range + 1, size=(n, 2))
        if len(np.unique(pts, axis=0)) == n:
            return pts
    raise DegenerateInstance("could not sample %d distinct grid points" % n)


def _perturbed_table(base: int, bps: np.ndarray, theta_max: int, max_increase: float) -> np.ndarray:
    f = sawtooth_values(bps, theta_max)
    cap = int(math.floor(max_increase * base))
    return base + np.clip(f, 0, cap)


def _triangle_offenders(cost: np.ndarray, theta_max: int):
    """Direct arcs (u, w) taking part in some triangle violation, plus a count."""
    n = cost.shape[0]
    thetas = np.arange(theta_max + 1, dtype=np.int64)
    offenders = set()
    count = 0
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            mid = thetas + cost[u, v, :]
            ok = np.nonzero(mid <= theta_max)[0]
            if ok.size == 0:
                continue
            bad = cost[u, :, :][:, ok] > cost[u, v, ok][None, :] + cost[v, :, :][:, mid[ok]]
            bad[u, :] = False
            bad[v, :] = False
            count += int(bad.sum())
            for w in np.nonzero(bad.any(axis=1))[0]:
                offenders.add((u, int(w)))
    return offenders, count


def _td_closure_repair(cost: np.ndarray, theta_max: int) -> int:
    """Pointwise time-dependent closure: lower direct arcs onto faster detours.

    Repeats until fixpoint; returns the number of entries lowered.  Each pass
    sets c_uw(t) := min(c_uw(t), c_uv(t) + c_vw(t + c_uv(t))) wherever the
    detour stays within the horizon.  Arrival functions stay non-decreasing
    (a pointwise min of compositions of non-decreasing functions), so FIFO
    survives the repair; values only move inside [c_a, previous value].
    """
    n = cost.shape[0]
    thetas = np.arange(theta_max + 1, dtype=np.int64)
    changed_total = 0
    for _ in range(3 * n):
        changed = 0
        for v in range(n):
            for u in range(n):
                if u == v:
                    continue
                mid = thetas + cost[u, v, :]
                ok = np.nonzero(mid <= theta_max)[0]
                if ok.size == 0:
                    continue
                # rows: every third vertex w at once (diagonals are 0, harmless)
                detour = cost[u, v, ok][None, :] + cost[v, :, :][:, mid[ok]]
                direct = cost[u, :, :][:, ok]
                lower = detour < direct
                lower[u, :] = False
                lower[v, :] = False
                if lower.any():
                    rows, cols = np.nonzero(lower)
                    cost[u, rows, ok[cols]] = detour[rows, cols]
                    changed += len(rows)
        changed_total += changed
        if changed == 0:
            break
    return changed_total


def generate(cfg: GenConfig) -> Instance:
    """Generate an instance; deterministic and byte-identical per config."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    pts = _sample_coords(rng, cfg.n, cfg.coord_range)
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.floor(np.sqrt((diff**2).sum(axis=2))).astype(np.int64)
    d = _floyd_warshall(d)

    def draw_bps() -> np.ndarray:
        if cfg.breakpoints == 0:
            return np.empty(0, dtype=np.int64)
        return np.sort(
            rng.choice(np.arange(1, cfg.theta_max, dtype=np.int64), size=cfg.breakpoints, replace=False)
        )

    n, tmax = cfg.n, cfg.theta_max
    cost = np.zeros((n, n, tmax + 1), dtype=np.int64)
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            cost[u, v, :] = _perturbed_table(int(d[u, v]), draw_bps(), tmax, cfg.max_increase)

    name = cfg.name or "n%d-t%d-m%d-l%g-seed%d" % (n, tmax, cfg.breakpoints, cfg.max_increase, cfg.seed)
    inst = Instance(n=n, theta_max=tmax, cost=cost, name=name, meta={"seed": str(cfg.seed)})

    # Resampling individual tables only converges when few arcs offend; with a
    # dense violation pattern go straight to the closure repair.
    for _ in range(cfg.triangle_retries):
        offenders, count = _triangle_offenders(cost, tmax)
        if count == 0:
            break
        if len(offenders) > max(4, n):
            _td_closure_repair(cost, tmax)
            break
        for u, w in sorted(offenders):
            cost[u, w, :] = _perturbed_table(int(d[u, w]), draw_bps(), tmax, cfg.max_increase)
    else:
        _td_closure_repair(cost, tmax)

    if check_fifo(inst):
        raise GenerationError("generated instance violates FIFO")
    if check_td_triangle(inst):
        raise GenerationError("triangle repair failed")
    inst.validate()
    return inst


def tighten_horizon(inst: Instance, dp_limit: int = 16) -> Instance:
    """Truncate the horizon at the time-dependent arrival of a static-optimal tour.

    Any reasonable tour finishes by then, so later time layers only inflate
    the expansion.  If the static tour does not fit within the current
    horizon the instance is returned unchanged.  Idempotent: applying it
    twice gives the same horizon.
    """
    dist = static_cost_matrix(inst)
    tour, _ = solve_static_tsp(dist, dp_limit=dp_limit)
    arr = tour_arrival(inst, tour)
    if arr is None or arr > inst.theta_max:
        return inst
    if arr == inst.theta_max:
        return inst
    cost = np.ascontiguousarray(inst.cost[:, :, : arr + 1])
    return Instance(n=inst.n, theta_max=int(arr), cost=cost, name=inst.name, meta=dict(inst.meta))
