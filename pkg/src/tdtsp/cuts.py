"""Seven separation routines over timed-arc variables.

Every cut is globally valid: the incidence vector of any feasible tour
satisfies it, independent of the branch-and-bound node it was found at.
All separators take the time-expanded graph plus the current fractional
point (timed-arc values, or the combined per-base flow where that is the
natural domain) and return Cut objects sorted by decreasing violation.

Preconditions: callers separate on points satisfying the degree and flow
conservation rows (combined out-flow 1 per base vertex), with no
artificial slack active.
"""

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import networkx as nx
import numpy as np

from .expand import TimeExpandedGraph
from .lp import GE, LE
from .master import DecompositionFailure, combined_flow, decompose_paths
from .model import SOURCE

log = logging.getLogger(__name__)

EPS_CUT = 1e-4
MAX_PER_FAMILY = 20

SEC = "SEC"
LSEC = "LSEC"
DK = "DK"
ODDCAT = "ODDCAT"
ODDPF = "ODDPF"
CYCLE = "CYCLE"
UAFC = "UAFC"
ALL_FAMILIES = (SEC, LSEC, DK, ODDCAT, ODDPF, CYCLE, UAFC)

# exact stable-set solve is skipped above this many support arcs
ODDPF_GUARD = 48
DK_NODE_BUDGET = 200_000
UAFC_CANDIDATES = 40


@dataclass
class Cut:
    family: str
    sense: str
    rhs: float
    coefs: Dict[int, float]

    def lhs(self, arc_values: np.ndarray) -> float:
        return float(sum(c * arc_values[a] for a, c in self.coefs.items()))

    def violation(self, arc_values: np.ndarray) -> float:
        lhs = self.lhs(arc_values)
        if self.sense == LE:
            return max(0.0, lhs - self.rhs)
        return max(0.0, self.rhs - lhs)

    def key(self) -> Tuple:
        return (self.sense, round(self.rhs, 9), frozenset((a, round(c, 9)) for a, c in self.coefs.items()))


def _top(cands: List[Tuple[float, Cut]], max_cuts: int) -> List[Cut]:
    seen = set()
    out = []
    for viol, cut in sorted(cands, key=lambda t: -t[0]):
        k = cut.key()
        if k in seen:
            continue
        seen.add(k)
        out.append(cut)
        if len(out) >= max_cuts:
            break
    return out


def _base_pair_coefs(g: TimeExpandedGraph, weight: Dict[Tuple[int, int], float]) -> Dict[int, float]:
    coefs: Dict[int, float] = {}
    for (u, v), w in weight.items():
        for a in g.arcs_by_base.get((u, v), ()):
            coefs[int(a)] = coefs.get(int(a), 0.0) + w
    return coefs


# ---------------------------------------------------------------- SEC / LSEC


def _sec_sets(g: TimeExpandedGraph, combined: np.ndarray, eps: float) -> List[Tuple[float, FrozenSet[int]]]:
    """Depot-side sets S with x(delta_plus(S)) < 1 - eps, one min-cut per target."""
    n = g.inst.n
    net = nx.DiGraph()
    net.add_nodes_from(range(n))
    for u in range(n):
        for v in range(n):
            if u != v and combined[u, v] > 1e-12:
                net.add_edge(u, v, capacity=float(combined[u, v]))
    out = []
    seen = set()
    for v in range(1, n):
        cutval, (side_s, _) = nx.minimum_cut(net, SOURCE, v)
        if cutval < 1.0 - eps:
            s = frozenset(side_s)
            if s not in seen:
                seen.add(s)
                out.append((1.0 - cutval, s))
    return out


def separate_sec(g: TimeExpandedGraph, combined: np.ndarray, eps: float = EPS_CUT,
                 max_cuts: int = MAX_PER_FAMILY) -> List[Cut]:
    """x(delta_plus(S)) >= 1 for depot-side sets found by min cuts."""
    cands = []
    for viol, s in _sec_sets(g, combined, eps):
        weight = {(u, v): 1.0 for u in s for v in range(g.inst.n) if v not in s}
        cut = Cut(SEC, GE, 1.0, _base_pair_coefs(g, weight))
        cands.append((viol, cut))
    return _top(cands, max_cuts)


def _static_min_cost(g: TimeExpandedGraph) -> np.ndarray:
    return g.inst.cost.min(axis=2)


def _departure_slack(g: TimeExpandedGraph, s: FrozenSet[int]) -> int:
    """Lower bound on travel spent after the first departure from s.

    Contract s into a root: the tour segment after first leaving s contains
    the crossing arc plus one outgoing arc per vertex outside s, and those
    arcs connect every outside vertex to the root, so a minimum spanning
    arborescence on static minimum costs bounds the segment from below.
    """
    outside = [v for v in range(g.inst.n) if v not in s]
    if len(outside) <= 1:
        return 0
    cmin = _static_min_cost(g)
    root = -1
    net = nx.DiGraph()
    net.add_node(root)
    net.add_nodes_from(outside)
    for w in outside:
        net.add_edge(root, w, weight=float(min(cmin[u, w] for u in s)))
        for z in outside:
            if z != w:
                net.add_edge(w, z, weight=float(cmin[w, z]))
    tree = nx.minimum_spanning_arborescence(net)
    return int(round(sum(d["weight"] for _, _, d in tree.edges(data=True))))


def separate_lsec(g: TimeExpandedGraph, arc_values: np.ndarray, s: FrozenSet[int],
                  eps: float = EPS_CUT) -> Optional[Cut]:
    """Departure-window strengthening of the SEC for a depot-side set s."""
    theta_hat = g.inst.theta_max - _departure_slack(g, s)
    coefs = {}
    for u in s:
        for v in range(g.inst.n):
            if v in s:
                continue
            for a in g.arcs_by_base.get((u, v), ()):
                if int(g.arc_dep[a]) <= theta_hat:
                    coefs[int(a)] = 1.0
    cut = Cut(LSEC, GE, 1.0, coefs)
    if cut.violation(arc_values) > eps:
        return cut
    return None


# ------------------------------------------------------------------- D_k^+


def separate_dk(g: TimeExpandedGraph, combined: np.ndarray, kmax: int = 5,
                eps: float = EPS_CUT, max_cuts: int = MAX_PER_FAMILY,
                node_budget: int = DK_NODE_BUDGET) -> List[Cut]:
    """Sequence inequalities on the combined flow, exact pruned enumeration.

    For a sequence (v_1 .. v_k) the left side takes the path arcs, the
    closing arc v_k -> v_1, twice the arcs v_1 -> {v_3..v_k} and the back
    arcs v_j -> {v_3..v_{j-1}}; the right side is k - 1.  The branch bound
    uses: each appended vertex contributes at most its inbound path arc plus
    x[v_1, vertex] beyond one unit, all its counted outbound arcs sum to at
    most one (out-degree equation), matching the rhs growth.
    """
    n = g.inst.n
    kmax = min(kmax, n - 1)  # a closed length-n sequence is the tour itself
    if kmax < 2:
        return []
    x = combined
    row_max = x.max(axis=1, initial=0.0)
    top_prefix = np.concatenate(
        [np.zeros((n, 1)), np.cumsum(np.sort(x, axis=1)[:, ::-1], axis=1)], axis=1
    )
    best = [eps]
    found: List[Tuple[float, Tuple[int, ...], int]] = []
    visits = [0]

    def dfs(seq: List[int], lhs: float, used: List[bool]):
        visits[0] += 1
        t = len(seq)
        if t >= 2:
            viol = lhs + x[seq[-1], seq[0]] - (t - 1)
            if viol > eps:
                found.append((viol, tuple(seq), t))
                if viol > best[0]:
                    best[0] = viol
        if t >= kmax or visits[0] > node_budget:
            return
        m = kmax - t
        deficit = lhs - (t - 1)
        if deficit + row_max[seq[-1]] + 2.0 * top_prefix[seq[0], min(m, n)] <= best[0] + 1e-12:
            return
        v1 = seq[0]
        last = seq[-1]
        for w in range(n):
            if used[w]:
                continue
            add = x[last, w]
            if t + 1 >= 3:
                add += 2.0 * x[v1, w]
            if t + 1 >= 4:
                for i in range(2, t):
                    add += x[w, seq[i]]
            used[w] = True
            seq.append(w)
            dfs(seq, lhs + add, used)
            seq.pop()
            used[w] = False

    used = [False] * n
    for v1 in range(n):
        used[v1] = True
        dfs([v1], 0.0, used)
        used[v1] = False

    cands = []
    for viol, seq, k in sorted(found, key=lambda t: -t[0])[: 4 * max_cuts]:
        weight: Dict[Tuple[int, int], float] = {}

        def bump(u, v, w):
            weight[(u, v)] = weight.get((u, v), 0.0) + w

        for j in range(k - 1):
            bump(seq[j], seq[j + 1], 1.0)
        bump(seq[-1], seq[0], 1.0)
        for j in range(2, k):
            bump(seq[0], seq[j], 2.0)
        for j in range(3, k):
            for i in range(2, j):
                bump(seq[j], seq[i], 1.0)
        cands.append((viol, Cut(DK, LE, float(k - 1), _base_pair_coefs(g, weight))))
    return _top(cands, max_cuts)


# ----------------------------------------------------------------- odd CAT


def _incompatible(p: Tuple[int, int], q: Tuple[int, int]) -> bool:
    return p[1] == q[1] or p[0] == q[0] or (p[0] == q[1] and p[1] == q[0])


def separate_odd_cat(g: TimeExpandedGraph, combined: np.ndarray, eps: float = EPS_CUT,
                     max_cuts: int = MAX_PER_FAMILY) -> List[Cut]:
    """Odd cycles in the base-arc incompatibility graph, via parity doubling.

    Heuristic: searches the support only and keeps simple cycles; never
    emits an invalid cut.
    """
    n = g.inst.n
    arcs = [
        (u, v)
        for u in range(n)
        for v in range(n)
        if u != v and combined[u, v] > 1e-6
    ]
    if len(arcs) < 3:
        return []
    val = {p: float(combined[p]) for p in arcs}
    aux = nx.Graph()
    for i, p in enumerate(arcs):
        for j in range(i + 1, len(arcs)):
            q = arcs[j]
            if _incompatible(p, q):
                w = max(0.0, (1.0 - val[p] - val[q]) / 2.0)
                aux.add_edge((i, 0), (j, 1), weight=w)
                aux.add_edge((i, 1), (j, 0), weight=w)
    cands = []
    seen = set()
    for i in range(len(arcs)):
        if (i, 0) not in aux:
            continue
        try:
            dist, path = nx.single_source_dijkstra(aux, (i, 0), target=(i, 1))
        except nx.NetworkXNoPath:
            continue
        if dist >= 0.5 - 1e-9:
            continue
        cycle = [node[0] for node in path[:-1]]
        if len(cycle) % 2 == 0 or len(set(cycle)) != len(cycle):
            continue
        key = frozenset(cycle)
        if key in seen:
            continue
        seen.add(key)
        viol = sum(val[arcs[j]] for j in cycle) - (len(cycle) - 1) / 2.0
        if viol > eps:
            weight = {arcs[j]: 1.0 for j in cycle}
            cut = Cut(ODDCAT, LE, (len(cycle) - 1) / 2.0, _base_pair_coefs(g, weight))
            cands.append((viol, cut))
    return _top(cands, max_cuts)


# ----------------------------------------------------------- odd path-free


def _max_weight_stable(weights: List[float], adj: List[int]) -> Tuple[float, int]:
    """Exact max-weight stable set on a bitmask conflict graph.

    Branch on the heaviest vertex left; the optimistic bound treats the
    remaining mask as conflict-free.
    """
    order = sorted(range(len(weights)), key=lambda i: -weights[i])
    best_w, best_s = 0.0, 0
    full = (1 << len(weights)) - 1
    stack = [(full, 0.0, 0, sum(weights))]
    while stack:
        mask, w, chosen, remaining = stack.pop()
        if w > best_w:
            best_w, best_s = w, chosen
        if not mask or w + remaining <= best_w + 1e-12:
            continue
        for i in order:
            if mask >> i & 1:
                break
        rest = mask & ~(1 << i)
        stack.append((rest, w, chosen, remaining - weights[i]))
        stack.append((rest & ~adj[i], w + weights[i], chosen | 1 << i, remaining - weights[i]))
    return best_w, best_s


def separate_odd_path_free(g: TimeExpandedGraph, arc_values: np.ndarray, eps: float = EPS_CUT,
                           max_cuts: int = MAX_PER_FAMILY) -> List[Cut]:
    """Per 3-set stable sets of timed arcs: at most one arc of a tour fits.

    Two timed arcs conflict when they chain in time across 3 distinct
    vertices of the set; a conflict-free (path-free) selection intersects
    any tour at most once.
    """
    n = g.inst.n
    if n < 4:
        return []
    combined = combined_flow(g, arc_values)
    pair = combined + combined.T
    cands = []
    done = set()
    for v in range(1, n):
        best_set, best_w = None, -1.0
        others = [w for w in range(1, n) if w != v]
        for ai, a in enumerate(others):
            for b in others[ai + 1:]:
                w = pair[v, a] + pair[v, b] + pair[a, b]
                if w > best_w:
                    best_w, best_set = w, (v, a, b)
        if best_set is None or frozenset(best_set) in done:
            continue
        done.add(frozenset(best_set))
        sset = set(best_set)
        support = [
            int(a)
            for u in best_set
            for w in best_set
            if u != w
            for a in g.arcs_by_base.get((u, w), ())
            if arc_values[a] > 1e-9
        ]
        if not support:
            continue
        if len(support) > ODDPF_GUARD:
            log.debug("odd path-free: skipping 3-set %s with %d support arcs", best_set, len(support))
            continue
        m = len(support)
        adj = [0] * m
        for i in range(m):
            for j in range(i + 1, m):
                p, q = support[i], support[j]
                chain_pq = g.arc_head[p] == g.arc_tail[q] and g.arc_tail_base[p] != g.arc_head_base[q]
                chain_qp = g.arc_head[q] == g.arc_tail[p] and g.arc_tail_base[q] != g.arc_head_base[p]
                if chain_pq or chain_qp:
                    adj[i] |= 1 << j
                    adj[j] |= 1 << i
        weights = [float(arc_values[a]) for a in support]
        best_weight, chosen = _max_weight_stable(weights, adj)
        if best_weight > 1.0 + eps:
            coefs = {support[i]: 1.0 for i in range(m) if chosen >> i & 1}
            cands.append((best_weight - 1.0, Cut(ODDPF, LE, 1.0, coefs)))
    return _top(cands, max_cuts)


# ------------------------------------------------------------------ cycles


def separate_cycle(g: TimeExpandedGraph, arc_values: np.ndarray, rmax: int = 3,
                   eps: float = EPS_CUT, max_cuts: int = MAX_PER_FAMILY) -> List[Cut]:
    """Base-vertex revisits inside decomposed flow paths.

    A window z -> w_1 -> ... -> w_r = z of path arcs yields: the first
    window arc is at most the sum, over levels j, of the departures from
    w_j at the path's clock that escape {z, w_1..w_j, w_{j+1}}.  A tour
    using the first arc either follows the window (and the next level
    applies) or escapes through a counted arc; the closing step cannot
    revisit z, so some level always pays.
    """
    try:
        paths = decompose_paths(g, arc_values)
    except DecompositionFailure:
        return []
    cands = []
    for path, weight in paths:
        if weight <= eps:
            continue
        heads = [int(g.arc_head_base[a]) for a in path]
        tails = [int(g.arc_tail_base[a]) for a in path]
        for i in range(len(path)):
            z = tails[i]
            if z == SOURCE:
                continue
            for r in range(2, rmax + 1):
                if i + r > len(path):
                    break
                if heads[i + r - 1] != z:
                    continue
                window = path[i : i + r]
                ws = [heads[i + j] for j in range(r)]
                coefs = {int(window[0]): 1.0}
                for j in range(1, r):
                    tv = int(g.arc_head[window[j - 1]])
                    excl = {z} | set(ws[:j]) | {ws[j]}
                    for o in g.out_arcs[g.out_indptr[tv] : g.out_indptr[tv + 1]]:
                        if int(g.arc_head_base[o]) not in excl:
                            coefs[int(o)] = coefs.get(int(o), 0.0) - 1.0
                cut = Cut(CYCLE, LE, 0.0, coefs)
                viol = cut.violation(arc_values)
                if viol > eps:
                    cands.append((viol, cut))
                break  # only the innermost revisit per start
    return _top(cands, max_cuts)


# ------------------------------------------------------------- unitary AFC


def separate_unitary_afc(g: TimeExpandedGraph, arc_values: np.ndarray, eps: float = EPS_CUT,
                         max_cuts: int = MAX_PER_FAMILY,
                         max_candidates: int = UAFC_CANDIDATES) -> List[Cut]:
    """Trapped-flow cuts: flow on (u,v,theta) must escape toward the depot.

    The region X grows from the arc's head over support arcs whose heads
    avoid copies of u, v and the depot; a min cut bounds the escaping
    value.  Coefficients enumerate every graph arc leaving X whose head
    base is not u or v, so the cut stays valid for arcs outside today's
    support.
    """
    n = g.inst.n
    support = [
        int(a)
        for a in np.nonzero(arc_values > eps)[0]
        if g.arc_tail_base[a] != SOURCE and g.arc_head_base[a] != SOURCE
    ]
    support.sort(key=lambda a: -arc_values[a])
    sup_set = set(int(a) for a in np.nonzero(arc_values > 1e-12)[0])
    cands = []
    seen = set()
    for a in support[:max_candidates]:
        u = int(g.arc_tail_base[a])
        v = int(g.arc_head_base[a])
        entry = int(g.arc_head[a])
        banned = {u, v, SOURCE}

        region = {entry}
        frontier = [entry]
        net = nx.DiGraph()
        sink = -1
        net.add_node(entry)
        net.add_node(sink)
        while frontier:
            tv = frontier.pop()
            for o in g.out_arcs[g.out_indptr[tv] : g.out_indptr[tv + 1]]:
                o = int(o)
                if o not in sup_set:
                    continue
                hb = int(g.arc_head_base[o])
                head = int(g.arc_head[o])
                if hb == SOURCE:
                    net.add_edge(tv, sink, capacity=net.get_edge_data(tv, sink, {"capacity": 0.0})["capacity"] + float(arc_values[o]))
                elif hb not in banned:
                    net.add_edge(tv, head, capacity=float(arc_values[o]))
                    if head not in region:
                        region.add(head)
                        frontier.append(head)
        cutval, (side_s, _) = nx.minimum_cut(net, entry, sink)
        if cutval >= arc_values[a] - eps:
            continue
        x_set = set(side_s) - {sink}
        coefs = {int(a): 1.0}
        for tv in x_set:
            for o in g.out_arcs[g.out_indptr[tv] : g.out_indptr[tv + 1]]:
                o = int(o)
                head = int(g.arc_head[o])
                hb = int(g.arc_head_base[o])
                if head in x_set or hb == u or hb == v:
                    continue
                coefs[o] = coefs.get(o, 0.0) - 1.0
        cut = Cut(UAFC, LE, 0.0, coefs)
        k = cut.key()
        if k in seen:
            continue
        seen.add(k)
        viol = cut.violation(arc_values)
        if viol > eps:
            cands.append((viol, cut))
    return _top(cands, max_cuts)


# ------------------------------------------------------------ orchestration


def separate(g: TimeExpandedGraph, arc_values: np.ndarray, families: Iterable[str] = ALL_FAMILIES,
             kmax: int = 5, rmax: int = 3, eps: float = EPS_CUT,
             max_cuts: int = MAX_PER_FAMILY) -> List[Cut]:
    """Run the requested separators; subtour sets feed the lifted variant."""
    fams = set(families)
    unknown = fams - set(ALL_FAMILIES)
    if unknown:
        raise ValueError("unknown cut families: %s" % sorted(unknown))
    combined = combined_flow(g, arc_values)
    out: List[Cut] = []
    if LSEC in fams:
        cands = []
        for _, s in _sec_sets(g, combined, eps):
            cut = separate_lsec(g, arc_values, s, eps)
            if cut is not None:
                cands.append((cut.violation(arc_values), cut))
        out.extend(_top(cands, max_cuts))
    elif SEC in fams:
        out.extend(separate_sec(g, combined, eps, max_cuts))
    if CYCLE in fams:
        out.extend(separate_cycle(g, arc_values, rmax, eps, max_cuts))
    if DK in fams:
        out.extend(separate_dk(g, combined, kmax, eps, max_cuts))
    if ODDCAT in fams:
        out.extend(separate_odd_cat(g, combined, eps, max_cuts))
    if ODDPF in fams:
        out.extend(separate_odd_path_free(g, arc_values, eps, max_cuts))
    if UAFC in fams:
        out.extend(separate_unitary_afc(g, arc_values, eps, max_cuts))
    return out
