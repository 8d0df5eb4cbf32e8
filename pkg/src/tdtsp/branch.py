"""Branching on combined base-arc flow.

A branching decision picks a base arc (u, v) whose summed timed flow is
fractional.  The to-one child activates an equality row forcing one unit of
flow across the pair's timed copies and kills every incompatible base arc
(same tail, same head, or the reverse pair); the to-zero child kills the
pair itself.  Every feasible tour survives in exactly one child.

Candidates can be ranked three ways: most-fractional, strong branching
(product of child LP bound improvements, children solved without pricing),
or a learned scoring model over the 13-entry feature vector below.  Strong
branching scores double as labels for exported ranking data, grouped one
query per node in `label qid:<node> k:<value>` lines.

Scoring-model files are line oriented: either `linear <k> w1 .. wk`, or
`trees <T>` followed by each tree in preorder, one `node <feat> <thresh>` or
`leaf <value>` per line.  Feature indices are 1-based, matching the exported
columns; at a node, feature <= threshold descends left.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .expand import TimeExpandedGraph
from .master import PairRow

log = logging.getLogger(__name__)

EPS_FRAC = 1e-6
ZETA = 1e-6  # strong-branching score offset, keeps zero-improvement products ordered
GAP_SENTINEL = 1e6

TO_ONE = "toOne"
TO_ZERO = "toZero"

FEATURE_NAMES = (
    "cost_over_lp",
    "cost_over_incumbent",
    "cost_over_gap",
    "flow",
    "flow_complement",
    "fractional_slack",
    "copies_share",
    "priced_in",
    "pseudocost",
    "one_comp_u",
    "one_comp_v",
    "zero_comp_u",
    "zero_comp_v",
)
NUM_FEATURES = len(FEATURE_NAMES)


class NoFractional(Exception):
    """The combined flow is integral; nothing to branch on."""


class ModelFormatError(Exception):
    """A scoring-model or training-data file does not parse."""


@dataclass(frozen=True)
class BranchDecision:
    u: int
    v: int
    direction: str


@dataclass(frozen=True)
class BranchState:
    """Base arcs fixed along the path from the root, in decision order."""

    ones: Tuple[Tuple[int, int], ...] = ()
    zeros: Tuple[Tuple[int, int], ...] = ()


@dataclass
class Split:
    u: int
    v: int
    one: BranchState
    zero: BranchState


def incompatible_arcs(n: int, u: int, v: int) -> List[Tuple[int, int]]:
    """Base arcs that cannot share a tour with (u, v): 2(n-2)+1 of them."""
    out = [(u, w) for w in range(n) if w != u and w != v]
    out += [(w, v) for w in range(n) if w != u and w != v]
    out.append((v, u))
    return out


def fractional_candidates(
    flow: np.ndarray, eps: float = EPS_FRAC
) -> List[Tuple[Tuple[int, int], float]]:
    """Base arcs with fractional combined flow, sorted by (u, v)."""
    out = []
    n = flow.shape[0]
    for u in range(n):
        for v in range(n):
            if u == v:
                continue
            x = float(flow[u, v])
            if eps < x < 1.0 - eps:
                out.append(((u, v), x))
    return out


def dead_arcs_for(g: TimeExpandedGraph, state: BranchState) -> np.ndarray:
    """Timed-arc mask implied by the branching fixes."""
    mask = np.zeros(g.num_arcs, dtype=bool)
    pairs = set(state.zeros)
    for u, v in state.ones:
        pairs.update(incompatible_arcs(g.inst.n, u, v))
    for pair in pairs:
        for a in g.arcs_by_base.get(pair, ()):
            mask[int(a)] = True
    return mask


def branch_compound(
    state: BranchState,
    flow: np.ndarray,
    score_fn: Optional[Callable[[List[Tuple[int, int]]], Sequence[float]]] = None,
    eps: float = EPS_FRAC,
) -> Split:
    """Pick a fractional base arc and return both children's fixing states.

    Without a scorer the most fractional candidate wins; ties go to the
    lowest (u, v).
    """
    cands = fractional_candidates(flow, eps)
    if not cands:
        raise NoFractional("combined flow is integral")
    pairs = [p for p, _ in cands]
    if score_fn is None:
        scores: Sequence[float] = [min(x, 1.0 - x) for _, x in cands]
    else:
        scores = score_fn(pairs)
    i = int(np.argmax(scores))
    u, v = pairs[i]
    one = BranchState(state.ones + ((u, v),), state.zeros)
    zero = BranchState(state.ones, state.zeros + ((u, v),))
    return Split(u, v, one, zero)


# ---------------------------------------------------------------------------
# strong branching


def ensure_pair_row(master, u: int, v: int) -> PairRow:
    for pr in master.pair_rows:
        if pr.pair == (u, v):
            return pr
    return master.add_pair_row(u, v, active=False)


def child_bound(master, g: TimeExpandedGraph, u: int, v: int, to_one: bool, parent_bound: float) -> float:
    """Bound improvement of one child LP, solved in place and rolled back.

    Infeasible children report +inf (the child will be pruned); solver
    failures report -inf so the candidate is avoided.
    """
    if to_one:
        targets = [a for p in incompatible_arcs(g.inst.n, u, v) for a in g.arcs_by_base.get(p, ())]
    else:
        targets = list(g.arcs_by_base.get((u, v), ()))
    changed = []
    for a in targets:
        a = int(a)
        if not master.arc_fixed(a):
            master.set_arc_bounds(a, 0.0, 0.0)
            changed.append(a)
    pr = ensure_pair_row(master, u, v) if to_one else None
    if pr is not None:
        master.lp.set_row_active(pr.row, True)
    try:
        sol = master.solve()
        if sol.status == "infeasible":
            return math.inf
        if not sol.optimal:
            log.warning("child LP failed for (%d,%d) to %s: %s", u, v, to_one, sol.status)
            return -math.inf
        if master.artificial_usage(sol) > 1e-7:
            return math.inf
        return max(0.0, float(sol.objective) - parent_bound)
    finally:
        for a in changed:
            master.clear_arc_bounds(a)
        if pr is not None:
            master.lp.set_row_active(pr.row, False)


def score_product(d_one: float, d_zero: float) -> float:
    if d_one == -math.inf or d_zero == -math.inf:
        return -math.inf
    if math.isinf(d_one) or math.isinf(d_zero):
        return math.inf
    return (d_one + ZETA) * (d_zero + ZETA)


def strong_branch_scores(
    master,
    g: TimeExpandedGraph,
    candidates: Sequence[Tuple[int, int]],
    parent_bound: float,
    pseudocosts: Optional["Pseudocosts"] = None,
    flow: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Score each candidate by solving both child LPs without pricing."""
    out = np.empty(len(candidates))
    for i, (u, v) in enumerate(candidates):
        up = child_bound(master, g, u, v, True, parent_bound)
        down = child_bound(master, g, u, v, False, parent_bound)
        out[i] = score_product(up, down)
        if pseudocosts is not None and flow is not None:
            x = float(flow[u, v])
            if math.isfinite(up) and 1.0 - x > EPS_FRAC:
                pseudocosts.record(u, v, up / (1.0 - x))
            if math.isfinite(down) and x > EPS_FRAC:
                pseudocosts.record(u, v, down / x)
    return out


class Pseudocosts:
    """Average unit bound gains per base arc; global mean before any local data."""

    def __init__(self) -> None:
        self._sum: Dict[Tuple[int, int], float] = {}
        self._count: Dict[Tuple[int, int], int] = {}
        self._gsum = 0.0
        self._gcount = 0

    def record(self, u: int, v: int, unit_gain: float) -> None:
        if not math.isfinite(unit_gain) or unit_gain < 0:
            return
        key = (u, v)
        self._sum[key] = self._sum.get(key, 0.0) + unit_gain
        self._count[key] = self._count.get(key, 0) + 1
        self._gsum += unit_gain
        self._gcount += 1

    def estimate(self, u: int, v: int) -> float:
        key = (u, v)
        if key in self._count:
            return self._sum[key] / self._count[key]
        if self._gcount:
            return self._gsum / self._gcount
        return 0.0


# ---------------------------------------------------------------------------
# features


@dataclass
class FeatureContext:
    g: TimeExpandedGraph
    flow: np.ndarray  # combined (n, n) values
    arc_values: np.ndarray  # timed-arc LP values
    z_lp: float
    z_star: Optional[float]
    master: object
    state: BranchState = field(default_factory=BranchState)
    pseudocosts: Optional[Pseudocosts] = None


def _component_ratio(n: int, edges: Iterable[Tuple[int, int]], vertex: int) -> float:
    adj: Dict[int, List[int]] = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = {vertex}
    queue = [vertex]
    while queue:
        w = queue.pop()
        for nxt in adj.get(w, ()):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) / n


def priced_in_count(master, g: TimeExpandedGraph, u: int, v: int) -> int:
    arcs = g.arcs_by_base.get((u, v), ())
    if master.formulation == "arc":
        return sum(1 for a in arcs if int(a) in master.col_of)
    return sum(1 for a in arcs if master.cols_with_arc.get(int(a)))


def extract_features(ctx: FeatureContext, u: int, v: int) -> np.ndarray:
    g = ctx.g
    n = g.inst.n
    arcs = [int(a) for a in g.arcs_by_base.get((u, v), ())]
    x = float(ctx.flow[u, v])

    # flow-weighted mean cost of the copies carrying flow; static minimum
    # when the pair is unused
    num = sum(float(g.arc_cost[a]) * float(ctx.arc_values[a]) for a in arcs)
    if x > EPS_FRAC:
        cost = num / x
    else:
        cost = float(min(g.arc_cost[a] for a in arcs)) if arcs else 0.0

    if ctx.z_star is not None and ctx.z_star - ctx.z_lp > EPS_FRAC:
        gap_feat = cost / (ctx.z_star - ctx.z_lp)
    else:
        gap_feat = GAP_SENTINEL
    feats = np.empty(NUM_FEATURES)
    feats[0] = cost / ctx.z_lp
    feats[1] = cost / ctx.z_star if ctx.z_star is not None else 0.0
    feats[2] = gap_feat
    feats[3] = x
    feats[4] = 1.0 - x
    feats[5] = min(x, 1.0 - x)
    feats[6] = len(arcs) / g.num_arcs
    feats[7] = priced_in_count(ctx.master, g, u, v) / len(arcs) if arcs else 0.0
    feats[8] = ctx.pseudocosts.estimate(u, v) if ctx.pseudocosts is not None else 0.0
    feats[9] = _component_ratio(n, ctx.state.ones, u)
    feats[10] = _component_ratio(n, ctx.state.ones, v)
    feats[11] = _component_ratio(n, ctx.state.zeros, u)
    feats[12] = _component_ratio(n, ctx.state.zeros, v)
    return feats


# ---------------------------------------------------------------------------
# training-data export and learned scoring


@dataclass
class BranchSample:
    """One branching node's candidates: parallel feature rows and scores."""

    node: int
    features: List[Sequence[float]]
    scores: List[float]


def tercile_labels(scores: Sequence[float]) -> List[int]:
    """Rank buckets 2 (best third), 1, 0 by descending score."""
    m = len(scores)
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    labels = [0] * m
    for rank, idx in enumerate(order):
        labels[int(idx)] = 2 - min(2, (3 * rank) // m)
    return labels


def _fmt(x: float) -> str:
    return repr(float(x))


def export_training_data(samples: Iterable[BranchSample], path: str) -> int:
    """Write query-grouped ranking rows; returns the number of rows."""
    rows = 0
    with open(path, "w", encoding="ascii") as fh:
        for s in samples:
            labels = tercile_labels(s.scores)
            for feats, lab in zip(s.features, labels):
                cols = " ".join("%d:%s" % (k + 1, _fmt(f)) for k, f in enumerate(feats))
                fh.write("%d qid:%d %s\n" % (lab, s.node, cols))
                rows += 1
    return rows


def read_training_data(path: str) -> List[Tuple[int, int, np.ndarray]]:
    """Parse rows written by export_training_data: (label, qid, features)."""
    out = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2 or not parts[1].startswith("qid:"):
                raise ModelFormatError("bad training row: %r" % line)
            label = int(parts[0])
            qid = int(parts[1][4:])
            feats = np.empty(len(parts) - 2)
            for j, tok in enumerate(parts[2:]):
                k, _, val = tok.partition(":")
                if int(k) != j + 1:
                    raise ModelFormatError("feature indices must run 1..k")
                feats[j] = float(val)
            out.append((label, qid, feats))
    return out


@dataclass
class ScoringModel:
    kind: str  # "linear" | "trees"
    weights: Optional[np.ndarray] = None
    trees: Optional[List[tuple]] = None


def _parse_tree(lines: Iterable[List[str]]) -> tuple:
    try:
        parts = next(lines)
    except StopIteration:
        raise ModelFormatError("truncated tree") from None
    if parts[0] == "leaf" and len(parts) == 2:
        return ("leaf", float(parts[1]))
    if parts[0] == "node" and len(parts) == 3:
        feat = int(parts[1])
        if feat < 1:
            raise ModelFormatError("feature indices are 1-based")
        thresh = float(parts[2])
        left = _parse_tree(lines)
        right = _parse_tree(lines)
        return ("node", feat, thresh, left, right)
    raise ModelFormatError("bad tree line: %r" % " ".join(parts))


def parse_scoring_model(text: str) -> ScoringModel:
    lines = [l.split() for l in text.splitlines() if l.strip()]
    if not lines:
        raise ModelFormatError("empty model")
    head = lines[0]
    if head[0] == "linear":
        try:
            k = int(head[1])
        except (IndexError, ValueError):
            raise ModelFormatError("linear header needs a weight count") from None
        if len(head) != 2 + k or len(lines) != 1:
            raise ModelFormatError("linear model must be one line with k weights")
        return ScoringModel("linear", weights=np.array([float(w) for w in head[2:]]))
    if head[0] == "trees":
        try:
            t = int(head[1])
        except (IndexError, ValueError):
            raise ModelFormatError("trees header needs a count") from None
        it = iter(lines[1:])
        trees = [_parse_tree(it) for _ in range(t)]
        if next(it, None) is not None:
            raise ModelFormatError("trailing lines after last tree")
        return ScoringModel("trees", trees=trees)
    raise ModelFormatError("unknown model kind %r" % head[0])


def load_scoring_model(path: str) -> ScoringModel:
    with open(path, "r", encoding="ascii") as fh:
        return parse_scoring_model(fh.read())


def _eval_tree(tree: tuple, feats: np.ndarray) -> float:
    while tree[0] == "node":
        _, feat, thresh, left, right = tree
        tree = left if feats[feat - 1] <= thresh else right
    return tree[1]


def learned_scores(model: ScoringModel, rows: Sequence[Sequence[float]]) -> np.ndarray:
    """Deterministic score per candidate row; argmax picks the branch."""
    mat = np.asarray(rows, dtype=float)
    if mat.ndim != 2:
        mat = mat.reshape(1, -1)
    if model.kind == "linear":
        if model.weights is None or mat.shape[1] != model.weights.shape[0]:
            raise ModelFormatError("weight count does not match feature count")
        return mat @ model.weights
    if model.kind == "trees":
        assert model.trees is not None
        return np.array([sum(_eval_tree(t, row) for t in model.trees) for row in mat])
    raise ModelFormatError("unknown model kind %r" % model.kind)
