"""Time-expanded graph construction.

Every vertex v gets one copy v_theta per reachable arrival time theta; an arc
(u, v, theta) connects u_theta to v_theta' with theta' = theta + c_uv(theta)
whenever theta' <= theta_max.  Reachability is computed by a forward sweep
over time layers starting from the depot copy s_0 (walk semantics: visited
sets are not tracked).  Copies of the depot at theta > 0 are sinks: tours end
there, so no arc leaves them.

Because travel times are >= 1 the graph is acyclic, and vertex ids are
assigned in (time, base vertex) order, so ids are already topologically
sorted.  Arc ids form one contiguous range fixed at build time; LP columns,
cut coefficients and fixings all refer to these ids.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from .model import Instance, SOURCE


class EmptyExpansion(Exception):
    """Raised when no vertex other than the depot is reachable within theta_max."""


@dataclass
class TimeExpandedGraph:
    inst: Instance
    tv_base: np.ndarray  # (num_tv,) base vertex of each timed vertex
    tv_time: np.ndarray  # (num_tv,) arrival time of each timed vertex
    tv_index: Dict[Tuple[int, int], int]  # (v, theta) -> timed vertex id
    source_tv: int
    sink_tvs: np.ndarray  # depot copies at theta > 0, ascending theta
    arc_tail: np.ndarray  # (m,) tail timed vertex id
    arc_head: np.ndarray
    arc_tail_base: np.ndarray
    arc_head_base: np.ndarray
    arc_dep: np.ndarray  # departure time
    arc_arr: np.ndarray  # arrival time
    arc_cost: np.ndarray
    out_indptr: np.ndarray  # CSR adjacency: out arcs of timed vertex i are
    out_arcs: np.ndarray  # out_arcs[out_indptr[i]:out_indptr[i+1]]
    arc_lookup: Dict[Tuple[int, int, int], int] = field(repr=False, default_factory=dict)
    arcs_by_base: Dict[Tuple[int, int], np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def num_tv(self) -> int:
        return len(self.tv_base)

    @property
    def num_arcs(self) -> int:
        return len(self.arc_tail)

    def times_of(self, v: int) -> np.ndarray:
        """T(v): reachable arrival times of base vertex v (v=depot: theta>0 copies)."""
        sel = self.tv_base == v
        if v == SOURCE:
            sel &= self.tv_time > 0
        return np.sort(self.tv_time[sel])

    def find_arc(self, u: int, v: int, dep: int) -> int:
        """Arc id of (u, v, dep), or -1 if absent."""
        return self.arc_lookup.get((u, v, dep), -1)

    def arc_tuple(self, a: int) -> Tuple[int, int, int]:
        return (int(self.arc_tail_base[a]), int(self.arc_head_base[a]), int(self.arc_dep[a]))


def build(inst: Instance) -> TimeExpandedGraph:
    """Construct the time-expanded graph of an instance.

    Raises EmptyExpansion when not even one non-depot vertex is reachable.
    """
    n, tmax = inst.n, inst.theta_max
    cost = inst.cost
    reach = np.zeros((n, tmax + 1), dtype=bool)
    reach[SOURCE, 0] = True
    heads = np.arange(n)
    for theta in range(tmax + 1):
        vs = np.nonzero(reach[:, theta])[0]
        for v in vs:
            if v == SOURCE and theta > 0:
                continue  # depot copies are sinks
            arr = theta + cost[v, :, theta]
            ok = (heads != v) & (arr <= tmax)
            reach[heads[ok], arr[ok]] = True

    if not reach[np.arange(n) != SOURCE, :].any():
        raise EmptyExpansion("no vertex reachable from the depot within theta_max")

    # timed vertex ids in (time, base) order so ids are topologically sorted
    vv, tt = np.nonzero(reach)
    order = np.lexsort((vv, tt))
    tv_base = vv[order].astype(np.int32)
    tv_time = tt[order].astype(np.int32)
    tv_index = {(int(v), int(t)): i for i, (v, t) in enumerate(zip(tv_base, tv_time))}
    source_tv = tv_index[(SOURCE, 0)]

    tail, head, dep = [], [], []
    for i in range(len(tv_base)):
        v, theta = int(tv_base[i]), int(tv_time[i])
        if v == SOURCE and theta > 0:
            continue
        arr = theta + cost[v, :, theta]
        for w in range(n):
            if w == v or arr[w] > tmax:
                continue
            tail.append(i)
            head.append(tv_index[(w, int(arr[w]))])
            dep.append(theta)
    if not tail:
        raise EmptyExpansion("expansion has no arcs")

    arc_tail = np.asarray(tail, dtype=np.int32)
    arc_head = np.asarray(head, dtype=np.int32)
    arc_dep = np.asarray(dep, dtype=np.int32)
    arc_tail_base = tv_base[arc_tail].astype(np.int32)
    arc_head_base = tv_base[arc_head].astype(np.int32)
    # canonical arc order: by departure time, then tail base, then head base
    aorder = np.lexsort((arc_head_base, arc_tail_base, arc_dep))
    arc_tail, arc_head = arc_tail[aorder], arc_head[aorder]
    arc_dep = arc_dep[aorder]
    arc_tail_base, arc_head_base = arc_tail_base[aorder], arc_head_base[aorder]
    arc_cost = cost[arc_tail_base, arc_head_base, arc_dep].astype(np.int64)
    arc_arr = (arc_dep + arc_cost).astype(np.int32)

    m = len(arc_tail)
    tail_sort = np.argsort(arc_tail, kind="stable")
    out_indptr = np.zeros(len(tv_base) + 1, dtype=np.int64)
    np.add.at(out_indptr, arc_tail + 1, 1)
    out_indptr = np.cumsum(out_indptr)
    out_arcs = tail_sort.astype(np.int64)

    sink_sel = (tv_base == SOURCE) & (tv_time > 0)
    sink_tvs = np.nonzero(sink_sel)[0].astype(np.int64)

    g = TimeExpandedGraph(
        inst=inst,
        tv_base=tv_base,
        tv_time=tv_time,
        tv_index=tv_index,
        source_tv=source_tv,
        sink_tvs=sink_tvs,
        arc_tail=arc_tail,
        arc_head=arc_head,
        arc_tail_base=arc_tail_base,
        arc_head_base=arc_head_base,
        arc_dep=arc_dep,
        arc_arr=arc_arr,
        arc_cost=arc_cost,
        out_indptr=out_indptr,
        out_arcs=out_arcs,
    )
    g.arc_lookup = {
        (int(arc_tail_base[a]), int(arc_head_base[a]), int(arc_dep[a])): a for a in range(m)
    }
    by_base: Dict[Tuple[int, int], List[int]] = {}
    for a in range(m):
        by_base.setdefault((int(arc_tail_base[a]), int(arc_head_base[a])), []).append(a)
    g.arcs_by_base = {k: np.asarray(v, dtype=np.int64) for k, v in by_base.items()}
    return g


def tour_to_arcids(g: TimeExpandedGraph, tour: Sequence[int]) -> List[int]:
    """Embed a feasible tour as its (s_0, s_theta)-path, returning arc ids."""
    theta = 0
    ids = []
    seq = list(tour) + [SOURCE]
    for u, v in zip(seq[:-1], seq[1:]):
        a = g.find_arc(u, v, theta)
        if a < 0:
            raise ValueError("tour does not embed: missing arc (%d,%d,%d)" % (u, v, theta))
        ids.append(a)
        theta = int(g.arc_arr[a])
    return ids


def path_to_tour(g: TimeExpandedGraph, arcids: Sequence[int]) -> Optional[List[int]]:
    """Vertex tour of an (s_0, s_theta)-path visiting every base exactly once.

    Returns None when the path is not tour-shaped.
    """
    if len(arcids) != g.inst.n:
        return None
    seq = [int(g.arc_tail_base[arcids[0]])]
    for a in arcids:
        seq.append(int(g.arc_head_base[a]))
    if seq[0] != SOURCE or seq[-1] != SOURCE:
        return None
    body = seq[:-1]
    if sorted(body) != list(range(g.inst.n)):
        return None
    return body


def dump_expansion(g: TimeExpandedGraph, fh: TextIO) -> None:
    """Human-readable dump (--dump-expansion)."""
    fh.write("timed vertices: %d  arcs: %d\n" % (g.num_tv, g.num_arcs))
    for v in range(g.inst.n):
        ts = " ".join(str(int(t)) for t in g.times_of(v))
        fh.write("T(%d): %s\n" % (v, ts))
    for a in range(g.num_arcs):
        fh.write(
            "arc %d: (%d,%d) dep %d arr %d cost %d\n"
            % (
                a,
                g.arc_tail_base[a],
                g.arc_head_base[a],
                g.arc_dep[a],
                g.arc_arr[a],
                g.arc_cost[a],
            )
        )
