"""Instance model for the time-dependent TSP.

An instance is a complete digraph on vertices 0..n-1 with integer travel-time
tables: traversing arc (u, v) departing at time theta takes cost[u, v, theta]
time units, theta in {0, ..., theta_max}.  Vertex 0 is the depot; a tour
starts there at time 0, visits every other vertex exactly once and returns.
There is no waiting, so the arrival time of an arc sequence is obtained by
chaining the tables.

The module also provides the two structural checks used throughout: the FIFO
(non-overtaking) property and the time-dependent triangle inequality, plus a
plain text file format for instances.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

SOURCE = 0

Arc = Tuple[int, int]


@dataclass
class Instance:
    """A time-dependent TSP instance.

    cost has shape (n, n, theta_max + 1); the diagonal is unused.  All
    entries are integers >= 1 so that time strictly advances along any arc.
    """

    n: int
    theta_max: int
    cost: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def travel(self, u: int, v: int, theta: int) -> int:
        return int(self.cost[u, v, theta])

    @property
    def vertices(self) -> range:
        return range(self.n)

    def validate(self) -> None:
        if self.n < 2:
            raise ValueError("instance needs at least 2 vertices")
        if self.theta_max < 1:
            raise ValueError("theta_max must be >= 1")
        if self.cost.shape != (self.n, self.n, self.theta_max + 1):
            raise ValueError("cost table shape mismatch: %s" % (self.cost.shape,))
        off = ~np.eye(self.n, dtype=bool)
        if int(self.cost[off].min(initial=1)) < 1:
            raise ValueError("travel times must be >= 1")


def arrival_time(inst: Instance, arcs: Sequence[Arc]) -> Optional[int]:
    """Chain the travel-time tables over an arc sequence.

    The first arc departs at time 0; every later arc departs at the arrival
    time of its predecessor.  Returns the final arrival time, or None if some
    intermediate departure exceeds theta_max (the tables end there, so the
    sequence cannot be continued).
    """
    theta = 0
    last = len(arcs) - 1
    for k, (u, v) in enumerate(arcs):
        if theta > inst.theta_max:
            return None
        theta = theta + int(inst.cost[u, v, theta])
        if k == last:
            return theta
    return theta if arcs else 0


def tour_arcs(tour: Sequence[int]) -> List[Arc]:
    """Arc sequence of a tour given as a vertex list starting at the depot.

    The closing arc back to tour[0] is appended automatically.
    """
    seq = list(tour)
    return [(seq[i], seq[i + 1]) for i in range(len(seq) - 1)] + [(seq[-1], seq[0])]


def tour_arrival(inst: Instance, tour: Sequence[int]) -> Optional[int]:
    return arrival_time(inst, tour_arcs(tour))


def is_feasible_tour(inst: Instance, tour: Sequence[int]) -> bool:
    """A tour is feasible if it visits every vertex once, starts at the depot
    and returns no later than theta_max."""
    if len(tour) != inst.n or tour[0] != SOURCE or set(tour) != set(range(inst.n)):
        return False
    arr = tour_arrival(inst, tour)
    return arr is not None and arr <= inst.theta_max


def check_fifo(inst: Instance) -> List[Tuple[int, int, int, int]]:
    """Exhaustive FIFO check.

    FIFO: departing later never means arriving earlier, i.e. for every arc
    theta + c(theta) <= theta' + c(theta') whenever theta <= theta' <= theta_max.
    By transitivity it suffices to compare consecutive departure times, so the
    check is O(n^2 * theta_max).  Returns witnesses (u, v, theta, theta + 1).
    """
    out = []
    thetas = np.arange(inst.theta_max + 1, dtype=np.int64)
    for u in range(inst.n):
        for v in range(inst.n):
            if u == v:
                continue
            arr = thetas + inst.cost[u, v, :]
            bad = np.nonzero(arr[1:] < arr[:-1])[0]
            for t in bad:
                out.append((u, v, int(t), int(t) + 1))
    return out


def check_td_triangle(inst: Instance) -> List[Tuple[int, int, int, int]]:
    """Exhaustive time-dependent triangle inequality check.

    For every ordered triple (u, v, w) of distinct vertices and every theta
    with theta + c_uv(theta) <= theta_max the detour over v must not be
    faster:  c_uw(theta) <= c_uv(theta) + c_vw(theta + c_uv(theta)).
    Returns violation witnesses (u, v, w, theta).
    """
    out = []
    thetas = np.arange(inst.theta_max + 1, dtype=np.int64)
    for u in range(inst.n):
        for v in range(inst.n):
            if u == v:
                continue
            mid = thetas + inst.cost[u, v, :]
            idx = np.nonzero(mid <= inst.theta_max)[0]
            if idx.size == 0:
                continue
            arr_mid = mid[idx]
            # all w at once: rows are candidate third vertices
            lhs = inst.cost[u, :, :][:, idx]
            rhs = inst.cost[u, v, idx][None, :] + inst.cost[v, :, :][:, arr_mid]
            bad_w, bad_t = np.nonzero(lhs > rhs)
            for w, b in zip(bad_w, bad_t):
                if w != u and w != v:
                    out.append((u, v, int(w), int(idx[b])))
    return out


# ---------------------------------------------------------------------------
# file format
#
#   TDTSP <n> <theta_max>
#   <u> <v> <c(0)> <c(1)> ... <c(theta_max)>     one line per ordered pair
#   # trailing comment lines
# ---------------------------------------------------------------------------


def save_instance(inst: Instance, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("TDTSP %d %d\n" % (inst.n, inst.theta_max))
        for u in range(inst.n):
            for v in range(inst.n):
                if u == v:
                    continue
                row = " ".join(str(int(c)) for c in inst.cost[u, v, :])
                fh.write("%d %d %s\n" % (u, v, row))
        if inst.name:
            fh.write("# name: %s\n" % inst.name)
        for key in sorted(inst.meta):
            fh.write("# %s: %s\n" % (key, inst.meta[key]))


def load_instance(path: str) -> Instance:
    """Parse the text format; rejects missing pairs and wrong table lengths."""
    header = None
    rows = {}
    name = ""
    meta = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, _, val = body.partition(":")
                    if key.strip() == "name":
                        name = val.strip()
                    else:
                        meta[key.strip()] = val.strip()
                continue
            toks = line.split()
            if header is None:
                if len(toks) != 3 or toks[0] != "TDTSP":
                    raise ValueError("line %d: expected 'TDTSP <n> <theta_max>'" % lineno)
                header = (int(toks[1]), int(toks[2]))
                continue
            n, theta_max = header
            if len(toks) != 2 + theta_max + 1:
                raise ValueError(
                    "line %d: expected %d travel times, got %d"
                    % (lineno, theta_max + 1, len(toks) - 2)
                )
            u, v = int(toks[0]), int(toks[1])
            if not (0 <= u < n and 0 <= v < n) or u == v:
                raise ValueError("line %d: bad arc (%d, %d)" % (lineno, u, v))
            if (u, v) in rows:
                raise ValueError("line %d: duplicate arc (%d, %d)" % (lineno, u, v))
            rows[(u, v)] = [int(t) for t in toks[2:]]
    if header is None:
        raise ValueError("missing TDTSP header")
    n, theta_max = header
    cost = np.zeros((n, n, theta_max + 1), dtype=np.int64)
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            if (u, v) not in rows:
                raise ValueError("missing arc (%d, %d)" % (u, v))
            cost[u, v, :] = rows[(u, v)]
    inst = Instance(n=n, theta_max=theta_max, cost=cost, name=name, meta=meta)
    inst.validate()
    return inst


def constant_instance(n: int, c: int, theta_max: int, name: str = "") -> Instance:
    """Instance with time-independent travel time c on every arc (test helper)."""
    cost = np.full((n, n, theta_max + 1), c, dtype=np.int64)
    return Instance(n=n, theta_max=theta_max, cost=cost, name=name)


def instance_from_tables(tables: dict, n: int, theta_max: int, name: str = "") -> Instance:
    """Build an instance from a {(u, v): [c(0), ..., c(theta_max)]} dict."""
    cost = np.zeros((n, n, theta_max + 1), dtype=np.int64)
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            tab = tables[(u, v)]
            if len(tab) != theta_max + 1:
                raise ValueError("table (%d, %d) has length %d" % (u, v, len(tab)))
            cost[u, v, :] = tab
    inst = Instance(n=n, theta_max=theta_max, cost=cost, name=name)
    inst.validate()
    return inst
