"""Restricted master problems over the time-expanded graph.

Two interchangeable formulations.  The arc master has one [0,1] variable per
timed arc, a cover row per base vertex (departures sum to 1) and a flow
conservation row per non-depot timed vertex.  The path master has one
variable per (s_0, s_theta)-path with cover coefficients alpha counting the
path's departures from each base vertex.

Cut rows and branching rows are registered with their sparse arc coefficients
so that columns generated later automatically receive the right entries, and
so pricing can fold the row duals into arc-level reduced costs.

Both masters leave node-local state (bound fixes, activatable rows) to the
search driver; everything added here is globally valid unless the caller
toggles it.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .expand import TimeExpandedGraph
from .lp import EQ, EPS_LP, GE, LE, LpModel, LpSolution
from .model import SOURCE


class InfeasibleStart(Exception):
    """The initial columns admit no feasible master solution."""


class DecompositionFailure(Exception):
    """Flow could not be decomposed into source-sink paths (conservation bug)."""


@dataclass
class CutRow:
    row: int
    family: str
    node: int
    sense: str
    rhs: float
    coefs: Dict[int, float]  # arc id -> coefficient


@dataclass
class PairRow:
    row: int
    pair: Tuple[int, int]


class ArcMaster:
    formulation = "arc"

    def __init__(self, g: TimeExpandedGraph, initial_arcs: Iterable[int], objective: str = "cost"):
        if objective not in ("cost", "arrival"):
            raise ValueError("objective must be 'cost' or 'arrival'")
        self.g = g
        self.objective = objective
        self.lp = LpModel("arc-master")
        self.cover_row: List[int] = [self.lp.add_row(EQ, 1.0) for _ in range(g.inst.n)]
        self.flow_row: Dict[int, int] = {}
        for tv in range(g.num_tv):
            if g.tv_base[tv] != SOURCE:
                self.flow_row[tv] = self.lp.add_row(EQ, 0.0)
        self.col_of: Dict[int, int] = {}
        self.arc_of: List[int] = []
        self.cuts: List[CutRow] = []
        self.pair_rows: List[PairRow] = []
        self._forced_bounds: Dict[int, Tuple[float, float]] = {}
        # slack columns keep node LPs feasible under branching fixes; any
        # usage above tolerance marks the node as (currently) uncoverable
        self.artificial_cost = 10.0 * g.inst.n * (g.inst.theta_max + 1)
        self.artificial_cols = [
            self.lp.add_column(self.artificial_cost, 0.0, 1.0, {r: 1.0}) for r in self.cover_row
        ]
        self.add_arcs(initial_arcs)

    def _arc_obj(self, a: int) -> float:
        if self.objective == "arrival":
            return float(self.g.arc_arr[a]) if self.g.arc_head_base[a] == SOURCE else 0.0
        return float(self.g.arc_cost[a])

    def has_arc(self, a: int) -> bool:
        return a in self.col_of

    def add_arc(self, a: int) -> int:
        if a in self.col_of:
            return self.col_of[a]
        g = self.g
        coefs = {self.cover_row[int(g.arc_tail_base[a])]: 1.0}
        head = int(g.arc_head[a])
        tail = int(g.arc_tail[a])
        # flow rows are out - in = 0, so leaving arcs carry +1
        if head in self.flow_row:
            coefs[self.flow_row[head]] = -1.0
        if tail in self.flow_row:
            coefs[self.flow_row[tail]] = 1.0
        for cut in self.cuts:
            c = cut.coefs.get(a)
            if c:
                coefs[cut.row] = c
        for pr in self.pair_rows:
            if pr.pair == (int(g.arc_tail_base[a]), int(g.arc_head_base[a])):
                coefs[pr.row] = 1.0
        # cover rows already cap each variable at 1; an explicit upper bound
        # would let optimal columns sit at it with negative reduced cost,
        # which pricing cannot tell apart from a missing column
        lb, ub = self._forced_bounds.get(a, (0.0, None))
        col = self.lp.add_column(self._arc_obj(a), lb, ub, coefs)
        self.col_of[a] = col
        self.arc_of.append(a)
        return col

    def add_arcs(self, arcs: Iterable[int]) -> None:
        for a in arcs:
            self.add_arc(a)

    def add_cut(self, family: str, sense: str, rhs: float, coefs: Dict[int, float], node: int = 0) -> CutRow:
        row = self.lp.add_row(sense, rhs, {self.col_of[a]: c for a, c in coefs.items() if a in self.col_of})
        self._slack_for_row(row, sense)
        cut = CutRow(row, family, node, sense, rhs, dict(coefs))
        self.cuts.append(cut)
        return cut

    def _slack_for_row(self, row: int, sense: str) -> None:
        # the restricted master may lack every column a new row relies on;
        # a priced slack keeps it feasible and flags the gap via usage
        direction = -1.0 if sense == LE else 1.0
        col = self.lp.add_column(self.artificial_cost, 0.0, None, {row: direction})
        self.artificial_cols.append(col)

    def add_pair_row(self, u: int, v: int, active: bool = False) -> PairRow:
        arcs = self.g.arcs_by_base.get((u, v), ())
        row = self.lp.add_row(EQ, 1.0, {self.col_of[a]: 1.0 for a in arcs if int(a) in self.col_of}, active=active)
        col = self.lp.add_column(self.artificial_cost, 0.0, 1.0, {row: 1.0})
        self.artificial_cols.append(col)
        pr = PairRow(row, (u, v))
        self.pair_rows.append(pr)
        return pr

    def set_arc_bounds(self, a: int, lb: float, ub: float) -> None:
        """Fix a timed arc's variable; remembered for columns priced in later."""
        self._forced_bounds[a] = (lb, ub)
        if a in self.col_of:
            self.lp.set_bounds(self.col_of[a], lb, ub)

    def clear_arc_bounds(self, a: int) -> None:
        self._forced_bounds.pop(a, None)
        if a in self.col_of:
            self.lp.set_bounds(self.col_of[a], 0.0, None)

    def arc_fixed(self, a: int) -> bool:
        return a in self._forced_bounds

    def solve(self) -> LpSolution:
        return self.lp.solve()

    def arc_values(self, sol: LpSolution) -> np.ndarray:
        x = np.zeros(self.g.num_arcs)
        known = len(sol.primal)  # columns added after the solve carry 0
        for a, col in self.col_of.items():
            if col < known:
                x[a] = sol.primal[col]
        return x

    def cover_duals(self, sol: LpSolution) -> np.ndarray:
        return np.array([sol.dual[r] for r in self.cover_row])

    def flow_duals(self, sol: LpSolution) -> np.ndarray:
        mu = np.zeros(self.g.num_tv)
        for tv, r in self.flow_row.items():
            mu[tv] = sol.dual[r]
        return mu

    def row_dual_costs(self, sol: LpSolution) -> np.ndarray:
        """Per-arc dual adjustment from cut rows and active pair rows.

        reduced_cost(a) = c_a - lambda_u - mu_tail + mu_head - adjust[a].
        """
        adj = np.zeros(self.g.num_arcs)
        for cut in self.cuts:
            y = sol.dual[cut.row]
            if y:
                for a, c in cut.coefs.items():
                    adj[a] += y * c
        for pr in self.pair_rows:
            y = sol.dual[pr.row]
            if y:
                for a in self.g.arcs_by_base.get(pr.pair, ()):
                    adj[int(a)] += y
        return adj

    def artificial_usage(self, sol: LpSolution) -> float:
        return float(sum(sol.primal[c] for c in self.artificial_cols))

    def counts(self) -> Tuple[int, int]:
        return self.lp.num_cols - len(self.artificial_cols), self.lp.num_rows


class PathMaster:
    formulation = "path"

    def __init__(self, g: TimeExpandedGraph, initial_paths: Iterable[Sequence[int]]):
        self.g = g
        self.lp = LpModel("path-master")
        self.cover_row: List[int] = [self.lp.add_row(EQ, 1.0) for _ in range(g.inst.n)]
        self.paths: List[Tuple[int, ...]] = []
        self.path_cols: List[int] = []
        self._registry: Dict[Tuple[int, ...], int] = {}
        self.cols_with_arc: Dict[int, List[int]] = {}
        self._path_of_col: Dict[int, Tuple[int, ...]] = {}
        self._dead_arcs: set = set()
        self.cuts: List[CutRow] = []
        self.pair_rows: List[PairRow] = []
        self.artificial_cost = 10.0 * g.inst.n * (g.inst.theta_max + 1)
        self.artificial_cols = [
            self.lp.add_column(self.artificial_cost, 0.0, 1.0, {r: 1.0}) for r in self.cover_row
        ]
        for p in initial_paths:
            self.add_path(p)

    def _path_cost(self, path: Tuple[int, ...]) -> float:
        return float(self.g.arc_arr[path[-1]])

    def _path_row_coef(self, path: Tuple[int, ...], coefs: Dict[int, float]) -> float:
        return sum(coefs.get(a, 0.0) for a in path)

    def add_path(self, arcs: Sequence[int]) -> int:
        path = tuple(int(a) for a in arcs)
        if path in self._registry:
            return self._registry[path]
        g = self.g
        if g.arc_tail[path[0]] != g.source_tv or g.arc_head_base[path[-1]] != SOURCE:
            raise ValueError("not a source-to-depot path")
        for a, b in zip(path[:-1], path[1:]):
            if g.arc_head[a] != g.arc_tail[b]:
                raise ValueError("arcs do not chain")
        coefs: Dict[int, float] = {}
        for a in path:
            r = self.cover_row[int(g.arc_tail_base[a])]
            coefs[r] = coefs.get(r, 0.0) + 1.0
        for cut in self.cuts:
            c = self._path_row_coef(path, cut.coefs)
            if c:
                coefs[cut.row] = c
        for pr in self.pair_rows:
            c = sum(1.0 for a in path if (int(g.arc_tail_base[a]), int(g.arc_head_base[a])) == pr.pair)
            if c:
                coefs[pr.row] = c
        # no explicit cap: the depot cover row keeps path weights at most 1,
        # and a column parked at an upper bound may price negative forever
        ub = 0.0 if any(a in self._dead_arcs for a in path) else None
        col = self.lp.add_column(self._path_cost(path), 0.0, ub, coefs)
        self.paths.append(path)
        self.path_cols.append(col)
        self._registry[path] = col
        self._path_of_col[col] = path
        for a in path:
            self.cols_with_arc.setdefault(a, []).append(col)
        return col

    def add_cut(self, family: str, sense: str, rhs: float, coefs: Dict[int, float], node: int = 0) -> CutRow:
        col_coefs: Dict[int, float] = {}
        for col, path in zip(self.path_cols, self.paths):
            c = self._path_row_coef(path, coefs)
            if c:
                col_coefs[col] = c
        row = self.lp.add_row(sense, rhs, col_coefs)
        direction = -1.0 if sense == LE else 1.0
        slack = self.lp.add_column(self.artificial_cost, 0.0, None, {row: direction})
        self.artificial_cols.append(slack)
        cut = CutRow(row, family, node, sense, rhs, dict(coefs))
        self.cuts.append(cut)
        return cut

    def add_pair_row(self, u: int, v: int, active: bool = False) -> PairRow:
        col_coefs: Dict[int, float] = {}
        for col, path in zip(self.path_cols, self.paths):
            c = sum(
                1.0
                for a in path
                if (int(self.g.arc_tail_base[a]), int(self.g.arc_head_base[a])) == (u, v)
            )
            if c:
                col_coefs[col] = c
        row = self.lp.add_row(EQ, 1.0, col_coefs, active=active)
        slack = self.lp.add_column(self.artificial_cost, 0.0, 1.0, {row: 1.0})
        self.artificial_cols.append(slack)
        pr = PairRow(row, (u, v))
        self.pair_rows.append(pr)
        return pr

    def set_arc_bounds(self, a: int, lb: float, ub: float) -> None:
        """Kill or revive a timed arc by bounding every path column using it.

        Only upper-bound fixing makes sense on path columns, so lb must be 0.
        """
        if lb != 0.0:
            raise ValueError("path master supports only upper-bound arc fixing")
        if ub == 0.0:
            self._dead_arcs.add(a)
        else:
            self._dead_arcs.discard(a)
        for col in self.cols_with_arc.get(a, ()):
            path = self._path_of_col[col]
            alive = not any(b in self._dead_arcs for b in path)
            self.lp.set_bounds(col, 0.0, None if alive else 0.0)

    def clear_arc_bounds(self, a: int) -> None:
        self.set_arc_bounds(a, 0.0, 1.0)

    def arc_fixed(self, a: int) -> bool:
        return a in self._dead_arcs

    def solve(self) -> LpSolution:
        return self.lp.solve()

    def arc_values(self, sol: LpSolution) -> np.ndarray:
        x = np.zeros(self.g.num_arcs)
        known = len(sol.primal)  # columns added after the solve carry 0
        for col, path in zip(self.path_cols, self.paths):
            if col >= known:
                continue
            w = sol.primal[col]
            if w > 0:
                for a in path:
                    x[a] += w
        return x

    def cover_duals(self, sol: LpSolution) -> np.ndarray:
        return np.array([sol.dual[r] for r in self.cover_row])

    def flow_duals(self, sol: LpSolution) -> np.ndarray:
        return np.zeros(self.g.num_tv)

    def row_dual_costs(self, sol: LpSolution) -> np.ndarray:
        adj = np.zeros(self.g.num_arcs)
        for cut in self.cuts:
            y = sol.dual[cut.row]
            if y:
                for a, c in cut.coefs.items():
                    adj[a] += y * c
        for pr in self.pair_rows:
            y = sol.dual[pr.row]
            if y:
                for a in self.g.arcs_by_base.get(pr.pair, ()):
                    adj[int(a)] += y
        return adj

    def artificial_usage(self, sol: LpSolution) -> float:
        return float(sum(sol.primal[c] for c in self.artificial_cols))

    def counts(self) -> Tuple[int, int]:
        return self.lp.num_cols - len(self.artificial_cols), self.lp.num_rows


def build_arc_master(g: TimeExpandedGraph, initial_arcs: Iterable[int], objective: str = "cost") -> ArcMaster:
    m = ArcMaster(g, initial_arcs, objective)
    sol = m.solve()
    if not sol.optimal or m.artificial_usage(sol) > EPS_LP:
        raise InfeasibleStart("initial arcs admit no feasible master point")
    return m


def build_path_master(g: TimeExpandedGraph, initial_paths: Iterable[Sequence[int]]) -> PathMaster:
    m = PathMaster(g, initial_paths)
    sol = m.solve()
    if not sol.optimal or m.artificial_usage(sol) > EPS_LP:
        raise InfeasibleStart("initial paths admit no feasible master point")
    return m


def combined_flow(g: TimeExpandedGraph, arc_values: np.ndarray) -> np.ndarray:
    """Project timed arc values onto base arcs: x_uv = sum over theta."""
    n = g.inst.n
    out = np.zeros((n, n))
    np.add.at(out, (g.arc_tail_base, g.arc_head_base), arc_values)
    return out


def decompose_paths(
    g: TimeExpandedGraph, arc_values: np.ndarray, tol: float = 1e-7
) -> List[Tuple[Tuple[int, ...], float]]:
    """Decompose a conserved source-sink flow into weighted paths.

    Deterministic: always follows the smallest arc id with residual above
    tol.  Raises DecompositionFailure if more than EPS_LP of flow remains
    stuck anywhere.
    """
    resid = np.asarray(arc_values, dtype=float).copy()
    out: List[Tuple[Tuple[int, ...], float]] = []
    sink_set = set(int(t) for t in g.sink_tvs)
    # each extracted path zeroes its minimum arc, so the support bounds the count
    for _ in range(int(np.count_nonzero(resid > 0)) + g.inst.n + 1):
        first = _best_out(g, resid, g.source_tv)
        if first < 0 or resid[first] <= tol:
            break
        path = [first]
        tv = int(g.arc_head[first])
        while tv not in sink_set:
            nxt = _best_out(g, resid, tv)
            if nxt < 0:
                # subtraction preserves conservation, so a stall means the
                # input flow was not conserved to begin with
                raise DecompositionFailure("walk stalled at timed vertex %d" % tv)
            path.append(nxt)
            tv = int(g.arc_head[nxt])
        w = float(resid[path].min())
        resid[path] -= w
        out.append((tuple(path), w))
    if resid.max(initial=0.0) > EPS_LP:
        raise DecompositionFailure("residual flow %.2e remains" % float(resid.max()))
    return out


def _best_out(g: TimeExpandedGraph, resid: np.ndarray, tv: int) -> int:
    """Out-arc of tv with the largest residual (smallest id on ties), or -1."""
    best, best_r = -1, 0.0
    for a in g.out_arcs[g.out_indptr[tv] : g.out_indptr[tv + 1]]:
        r = resid[a]
        if r > best_r:
            best, best_r = int(a), float(r)
    return best
