"""Branch-price-and-cut search and the benchmark harness.

Nodes are explored best-dual-bound first (ties to the deeper node).  Each
node runs column generation to convergence, separation rounds, bound
propagation, LP-guided primal heuristics, an integrality check, and finally
compound branching on the combined flow.  Objectives are integral, so a node
whose dual bound reaches incumbent - 1 (plus tolerance) is pruned.

Effort is metered in deterministic work units instead of wall time when a
work limit is set: LP solves charge their column count, pricing passes
charge per timed arc, separation and heuristics charge flat rates.  Two runs
with the same seeds and work limit therefore make identical decisions, which
is what makes benchmark CSVs byte-reproducible.

The benchmark writes one CSV row per (instance, config) pair plus one
aggregate row per config (instance column "ALL"): the solved column counts
solved instances, the numeric columns hold means.
"""

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .branch import (
    BranchSample,
    BranchState,
    FeatureContext,
    NoFractional,
    Pseudocosts,
    ScoringModel,
    Split,
    branch_compound,
    child_bound,
    dead_arcs_for,
    ensure_pair_row,
    extract_features,
    fractional_candidates,
    learned_scores,
    load_scoring_model,
    score_product,
)
from .cuts import ALL_FAMILIES, separate
from .expand import build, tour_to_arcids
from .heur import METRIC_COMBINED, construct_tours, static_warmstart
from .lp import EPS_LP
from .master import ArcMaster, DecompositionFailure, PathMaster, combined_flow, decompose_paths
from .model import Instance, tour_arrival
from .pricing import MODE_2CF, MODE_ARC, MODE_PLAIN, PricingResult, pricing_loop
from .prop import propagate

log = logging.getLogger(__name__)

WORK_PER_SECOND = 40_000.0  # rough calibration: one unit ~ 25 microseconds
EPS_INT = 1e-6

PRICING_MODES = {"path": MODE_PLAIN, "2cf": MODE_2CF, "arc": MODE_ARC, "none": None}

CSV_COLUMNS = (
    "instance",
    "config",
    "solved",
    "gap",
    "time",
    "nodes",
    "cols",
    "rows",
    "cuts_SEC",
    "cuts_LSEC",
    "cuts_DK",
    "cuts_ODDCAT",
    "cuts_ODDPF",
    "cuts_CYCLE",
    "cuts_UAFC",
)


class WorkMeter:
    """Deterministic effort budget; charges are checked before each step."""

    def __init__(self, limit: Optional[float] = None):
        self.limit = limit
        self.used = 0.0

    def _try(self, units: float) -> bool:
        if self.limit is not None and self.used >= self.limit:
            return False
        self.used += units
        return True

    def spend(self, units: float) -> bool:
        return self._try(units)

    def try_spend_lp(self, ncols: int) -> bool:
        return self._try(float(ncols))

    def try_spend_pass(self, num_arcs: int, twocf: bool) -> bool:
        return self._try(num_arcs / 100.0 * (2.0 if twocf else 1.0))

    def exhausted(self) -> bool:
        return self.limit is not None and self.used >= self.limit


@dataclass
class SolverConfig:
    formulation: str = "path"  # arc | path
    pricing: str = "2cf"  # arc | path | 2cf | none
    cuts: Tuple[str, ...] = ("LSEC",)
    heuristics: bool = True
    propagation: bool = True
    branching: str = "mostfrac"  # mostfrac | strong | learned
    model_file: Optional[str] = None
    time_limit: Optional[float] = None  # wall-clock seconds
    work_limit: Optional[float] = None  # deterministic units; overrides wall time
    node_limit: Optional[int] = None
    max_price_rounds: int = 400
    cut_rounds_root: int = 5
    cut_rounds_node: int = 1
    heur_trials: int = 16
    strong_limit: int = 8  # candidates evaluated by strong branching
    dk_max: int = 4
    cycle_max: int = 3
    seed: int = 0
    collect_branch_data: bool = False
    name: str = ""

    def validate(self) -> None:
        if self.formulation not in ("arc", "path"):
            raise ValueError("formulation must be arc or path")
        if self.pricing not in PRICING_MODES:
            raise ValueError("pricing must be one of %s" % (sorted(PRICING_MODES),))
        if self.formulation == "path" and self.pricing in ("arc", "none"):
            raise ValueError("path formulation requires path or 2cf pricing")
        unknown = set(self.cuts) - set(ALL_FAMILIES)
        if unknown:
            raise ValueError("unknown cut families %s" % sorted(unknown))
        if self.branching not in ("mostfrac", "strong", "learned"):
            raise ValueError("branching must be mostfrac, strong or learned")
        if self.branching == "learned" and not self.model_file:
            raise ValueError("learned branching needs a model file")

    def label(self) -> str:
        if self.name:
            return self.name
        parts = [self.formulation, self.pricing]
        parts.append("+".join(self.cuts) if self.cuts else "nocuts")
        if self.heuristics:
            parts.append("heur")
        if self.propagation:
            parts.append("prop")
        if self.branching != "mostfrac":
            parts.append(self.branching)
        return "-".join(parts)


PRESETS = {
    # pricing comparison (no cuts so the dual bound reflects pricing alone)
    "full": dict(formulation="arc", pricing="none", cuts=()),
    "arc": dict(formulation="arc", pricing="arc", cuts=()),
    "path": dict(formulation="path", pricing="path", cuts=()),
    "2cf": dict(formulation="path", pricing="2cf", cuts=()),
    # cut ablation: bare search baselines against the full feature set
    "nocuts": dict(formulation="path", pricing="2cf", cuts=(), heuristics=False, propagation=False),
    "cycle": dict(formulation="path", pricing="2cf", cuts=("CYCLE",), heuristics=False, propagation=False),
    "lsec": dict(formulation="path", pricing="2cf", cuts=("LSEC",)),
    "allcuts": dict(formulation="path", pricing="2cf", cuts=ALL_FAMILIES),
}


def preset(name: str, **overrides) -> SolverConfig:
    if name not in PRESETS:
        raise ValueError("unknown preset %r (have %s)" % (name, sorted(PRESETS)))
    kw = dict(PRESETS[name])
    kw.update(overrides)
    kw.setdefault("name", name)
    cfg = SolverConfig(**kw)
    cfg.validate()
    return cfg


@dataclass
class RunStats:
    instance: str
    config: str
    solved: bool = False
    gap: float = 1.0
    time: float = 0.0
    nodes: int = 0
    cols: int = 0
    rows: int = 0
    cuts: Dict[str, int] = field(default_factory=lambda: {f: 0 for f in ALL_FAMILIES})
    incumbent: Optional[int] = None
    dual_bound: float = -math.inf
    root_lp_solves: int = 0
    work_used: float = 0.0
    incumbent_history: List[Tuple[int, int]] = field(default_factory=list)  # (node, value)
    branch_samples: List[BranchSample] = field(default_factory=list)

    def row(self) -> List[str]:
        return [
            self.instance,
            self.config,
            "%d" % int(self.solved),
            "%.6f" % self.gap,
            "%.3f" % self.time,
            "%d" % self.nodes,
            "%d" % self.cols,
            "%d" % self.rows,
        ] + ["%d" % self.cuts.get(f, 0) for f in ALL_FAMILIES]


class BnbNode:
    __slots__ = ("dual_bound", "depth", "id", "state", "dead")

    def __init__(self, dual_bound: float, depth: int, id: int, state: BranchState, dead: Optional[np.ndarray]):
        self.dual_bound = dual_bound
        self.depth = depth
        self.id = id
        self.state = state
        self.dead = dead

    def key(self) -> Tuple[float, int, int]:
        # best bound first, deeper first on ties, then creation order
        return (self.dual_bound, -self.depth, self.id)


class _Search:
    def __init__(self, inst: Instance, cfg: SolverConfig):
        cfg.validate()
        self.inst = inst
        self.cfg = cfg
        self.g = build(inst)
        self.meter = WorkMeter(cfg.work_limit)
        self.t0 = time.monotonic()
        self.stats = RunStats(instance=inst.name or "unnamed", config=cfg.label())
        self.incumbent: Optional[Tuple[List[int], int]] = None
        self.pseudocosts = Pseudocosts()
        self.model: Optional[ScoringModel] = None
        if cfg.branching == "learned":
            self.model = load_scoring_model(cfg.model_file)
        self.mode = PRICING_MODES[cfg.pricing]
        if self.mode == MODE_2CF and inst.n < 3:
            log.info("2cf pricing needs n >= 3; using plain paths")
            self.mode = MODE_PLAIN
        self._next_id = 1
        self._applied_dead: set = set()
        self._active_pairs: set = set()
        self.heap: List[Tuple[Tuple[float, int, int], BnbNode]] = []
        self.master = None

    def _push(self, node: BnbNode) -> None:
        heapq.heappush(self.heap, (node.key(), node))

    # ------------------------------------------------------------------
    # incumbent handling

    def _offer(self, tour: Sequence[int], arrival: int, node_id: int) -> None:
        arrival = int(arrival)
        if self.incumbent is not None and arrival >= self.incumbent[1]:
            return
        check = tour_arrival(self.inst, tour)
        if check is None or check != arrival or check > self.inst.theta_max:
            log.warning("discarding bad candidate tour %s", tour)
            return
        self.incumbent = (list(tour), arrival)
        self.stats.incumbent_history.append((node_id, arrival))

    def _theta_bar(self) -> int:
        return self.incumbent[1] if self.incumbent else self.inst.theta_max + 1

    def _prunable(self, bound: float) -> bool:
        return self.incumbent is not None and bound >= self.incumbent[1] - 1 + EPS_LP

    # ------------------------------------------------------------------
    # master construction and per-node configuration

    def _init_master(self) -> None:
        cfg, g = self.cfg, self.g
        seed_arcs: List[int] = []
        if self.incumbent is not None:
            seed_arcs = tour_to_arcids(g, self.incumbent[0])
        if cfg.formulation == "arc":
            initial = range(g.num_arcs) if cfg.pricing == "none" else seed_arcs
            self.master = ArcMaster(g, initial)
        else:
            self.master = PathMaster(g, [seed_arcs] if seed_arcs else [])

    def _configure(self, node: BnbNode) -> None:
        master = self.master
        want = set(int(a) for a in np.flatnonzero(node.dead))
        for a in self._applied_dead - want:
            master.clear_arc_bounds(a)
        for a in want - self._applied_dead:
            master.set_arc_bounds(a, 0.0, 0.0)
        self._applied_dead = want
        want_pairs = set(node.state.ones)
        for pair in self._active_pairs - want_pairs:
            master.lp.set_row_active(ensure_pair_row(master, *pair).row, False)
        for pair in want_pairs - self._active_pairs:
            master.lp.set_row_active(ensure_pair_row(master, *pair).row, True)
        self._active_pairs = want_pairs

    # ------------------------------------------------------------------
    # stopping

    def _stopped(self) -> bool:
        if self.meter.exhausted():
            return True
        if self.cfg.work_limit is None and self.cfg.time_limit is not None:
            if time.monotonic() - self.t0 > self.cfg.time_limit:
                return True
        if self.cfg.node_limit is not None and self.stats.nodes >= self.cfg.node_limit:
            return True
        return False

    def _elapsed(self) -> float:
        if self.cfg.work_limit is not None:
            return self.meter.used / WORK_PER_SECOND
        return time.monotonic() - self.t0

    # ------------------------------------------------------------------
    # per-node pieces

    def _price(self, node: BnbNode) -> PricingResult:
        if self.mode is None:
            if self.meter.try_spend_lp(self.master.lp.num_cols):
                sol = self.master.solve()
                ok = sol.optimal
                val = float(sol.objective) if ok else math.inf
                res = PricingResult(val, val if ok else -math.inf, 1, 0, ok, sol)
            else:
                res = PricingResult(math.inf, -math.inf, 0, 0, False, None)
        else:
            res = pricing_loop(
                self.master,
                self.g,
                mode=self.mode,
                dead=node.dead,
                max_rounds=self.cfg.max_price_rounds,
                meter=self.meter,
            )
        if node.depth == 0:
            self.stats.root_lp_solves += res.rounds
        for arrival, tour in res.tours:
            self._offer(tour, arrival, node.id)
        return res

    def _separate(self, node: BnbNode, arc_values: np.ndarray) -> int:
        cfg = self.cfg
        self.meter.spend(self.g.num_arcs / 50.0)
        cuts = separate(self.g, arc_values, families=cfg.cuts, kmax=cfg.dk_max, rmax=cfg.cycle_max)
        for cut in cuts:
            self.master.add_cut(cut.family, cut.sense, cut.rhs, cut.coefs, node=node.id)
            self.stats.cuts[cut.family] = self.stats.cuts.get(cut.family, 0) + 1
        return len(cuts)

    def _run_heuristics(self, node: BnbNode, arc_values: np.ndarray, flow: np.ndarray) -> None:
        self.meter.spend(self.cfg.heur_trials * self.inst.n / 10.0)
        tours = construct_tours(
            self.g,
            arc_values,
            flow,
            METRIC_COMBINED,
            trials=self.cfg.heur_trials,
            seed=self.cfg.seed + node.id,
            dead=node.dead,
        )
        for arrival, tour, _ in tours[:4]:
            self._offer(tour, arrival, node.id)

    def _close_integral(self, node: BnbNode, x: np.ndarray) -> bool:
        """Close the node when the combined flow is integral.

        The support is then a single base tour; decomposed paths differ only
        in departure times, so the best one is a feasible tour at or below
        the node LP value.  Returns False when the node must stay open.
        """
        try:
            paths = decompose_paths(self.g, x)
        except DecompositionFailure:
            log.error("integral combined flow failed to decompose at node %d", node.id)
            return False
        best = None
        for path, _ in paths:
            arcs = [int(a) for a in path]
            tour = [int(self.g.arc_tail_base[a]) for a in arcs]
            if sorted(tour) != list(range(self.inst.n)):
                return False
            arr = int(self.g.arc_arr[arcs[-1]])
            if best is None or arr < best[1]:
                best = (tour, arr)
        if best is None:
            return False
        self._offer(best[0], best[1], node.id)
        return True

    def _strong_scores(self, short, lp_value, flow) -> np.ndarray:
        scores = np.empty(len(short))
        for i, (u, v) in enumerate(short):
            self.meter.spend(2.0 * self.master.lp.num_cols)
            up = child_bound(self.master, self.g, u, v, True, lp_value)
            down = child_bound(self.master, self.g, u, v, False, lp_value)
            scores[i] = score_product(up, down)
            xf = float(flow[u, v])
            if math.isfinite(up) and 1.0 - xf > EPS_INT:
                self.pseudocosts.record(u, v, up / (1.0 - xf))
            if math.isfinite(down) and xf > EPS_INT:
                self.pseudocosts.record(u, v, down / xf)
        return scores

    def _pick_branch(self, node: BnbNode, res: PricingResult, flow: np.ndarray, x: np.ndarray) -> Split:
        cfg = self.cfg
        cands = fractional_candidates(flow)
        if not cands:
            raise NoFractional("combined flow is integral")
        pairs = [p for p, _ in cands]
        pick: Optional[Tuple[int, int]] = None
        if cfg.branching == "strong" or cfg.collect_branch_data:
            by_frac = sorted(pairs, key=lambda p: -min(flow[p], 1.0 - flow[p]))
            short = sorted(by_frac[: cfg.strong_limit])
            scores = self._strong_scores(short, res.lp_value, flow)
            if cfg.collect_branch_data:
                ctx = self._feature_context(node, res, flow, x)
                feats = [extract_features(ctx, u, v) for u, v in short]
                self.stats.branch_samples.append(BranchSample(node.id, feats, [float(s) for s in scores]))
            if cfg.branching == "strong":
                pick = short[int(np.argmax(scores))]
        if cfg.branching == "learned":
            ctx = self._feature_context(node, res, flow, x)
            rows = [extract_features(ctx, u, v) for u, v in pairs]
            pick = pairs[int(np.argmax(learned_scores(self.model, rows)))]
        if pick is None:
            return branch_compound(node.state, flow)  # most fractional
        return branch_compound(node.state, flow, score_fn=lambda ps: [p == pick for p in ps])

    def _feature_context(self, node, res, flow, x) -> FeatureContext:
        return FeatureContext(
            self.g,
            flow,
            x,
            z_lp=res.lp_value,
            z_star=float(self.incumbent[1]) if self.incumbent else None,
            master=self.master,
            state=node.state,
            pseudocosts=self.pseudocosts,
        )

    # ------------------------------------------------------------------

    def run(self) -> Tuple[Optional[List[int]], RunStats]:
        cfg, g = self.cfg, self.g
        if cfg.heuristics:
            ws = static_warmstart(self.inst)
            if ws is not None:
                self._offer(ws.tour, ws.arrival, -1)
        self._init_master()
        root = BnbNode(-math.inf, 0, 0, BranchState(), np.zeros(g.num_arcs, dtype=bool))
        self._push(root)
        interrupted = False

        while self.heap:
            if self._stopped():
                interrupted = True
                break
            _, node = heapq.heappop(self.heap)
            if self._prunable(node.dual_bound):
                self._push(node)  # keep the bound; nothing in the heap is better
                break
            self.stats.nodes += 1
            if cfg.propagation:
                lo = node.dual_bound if math.isfinite(node.dual_bound) else 0.0
                node.dead = propagate(g, self._theta_bar(), lo, node.dead)
            self._configure(node)

            cut_rounds = cfg.cut_rounds_root if node.depth == 0 else cfg.cut_rounds_node
            res: Optional[PricingResult] = None
            infeasible = False
            for round_no in range(cut_rounds + 1):
                res = self._price(node)
                if math.isfinite(res.dual_bound):
                    node.dual_bound = max(node.dual_bound, res.dual_bound)
                if res.converged:
                    node.dual_bound = max(node.dual_bound, res.lp_value)
                if not res.converged or self._stopped():
                    break
                if self.master.artificial_usage(res.sol) > EPS_LP:
                    infeasible = True  # no tour satisfies this node's fixings
                    break
                if round_no == cut_rounds or not cfg.cuts or self._prunable(node.dual_bound):
                    break
                if self._separate(node, self.master.arc_values(res.sol)) == 0:
                    break

            if infeasible or self._prunable(node.dual_bound):
                continue
            if self._stopped():
                interrupted = True
                self._push(node)
                break
            if res.sol is None:
                self._push(node)
                interrupted = True
                break
            if not res.converged and self.master.artificial_usage(res.sol) > EPS_LP:
                # rows still lean on slack columns, so the point proves
                # nothing; resume pricing unless it cannot make progress
                self._push(node)
                if res.stalled:
                    log.error("node %d: pricing stalled on slack support", node.id)
                    interrupted = True
                    break
                continue

            x = self.master.arc_values(res.sol)
            flow = combined_flow(g, x)
            if cfg.heuristics:
                self._run_heuristics(node, x, flow)
                if self._prunable(node.dual_bound):
                    continue
            if not fractional_candidates(flow):
                closed = self._close_integral(node, x)
                if closed and (res.converged or self._prunable(node.dual_bound)):
                    continue
                if res.stalled or not closed:
                    # degenerate pricing or a broken decomposition: park the
                    # node and stop rather than drop it unproven
                    log.error("node %d: integral flow without a pricing proof", node.id)
                    self._push(node)
                    interrupted = True
                    break
                self._push(node)  # pricing ran out of rounds; resume later
                continue

            try:
                split = self._pick_branch(node, res, flow, x)
            except NoFractional:
                log.error("node %d: no branching candidate on a fractional LP", node.id)
                self._push(node)
                interrupted = True
                break
            for state in (split.one, split.zero):
                child = BnbNode(node.dual_bound, node.depth + 1, self._next_id, state, node.dead | dead_arcs_for(g, state))
                self._next_id += 1
                self._push(child)

        # wrap up
        stats = self.stats
        stats.work_used = self.meter.used
        stats.time = self._elapsed()
        stats.cols, stats.rows = self.master.counts() if self.master else (0, 0)
        primal = self.incumbent[1] if self.incumbent else None
        dual = min((n.dual_bound for _, n in self.heap), default=math.inf)
        if primal is None:
            stats.solved = not self.heap and not interrupted
            stats.gap = 0.0 if stats.solved else 1.0
            stats.dual_bound = dual
        else:
            stats.solved = (not self.heap) or dual >= primal - 1 + EPS_LP
            if stats.solved:
                stats.gap = 0.0
                stats.dual_bound = float(primal)
            else:
                stats.dual_bound = min(dual, float(primal))
                spread = (primal - stats.dual_bound) / primal if primal > 0 else 0.0
                stats.gap = min(1.0, max(0.0, spread))
        stats.incumbent = primal
        return (self.incumbent[0] if self.incumbent else None, stats)


def solve(inst: Instance, cfg: Optional[SolverConfig] = None) -> Tuple[Optional[List[int]], RunStats]:
    return _Search(inst, cfg or SolverConfig()).run()


def benchmark(
    instances: Sequence[Instance],
    configs: Sequence[SolverConfig],
    out: Optional[str] = None,
) -> List[RunStats]:
    """Run every config on every instance; per-instance failures are recorded."""
    stats: List[RunStats] = []
    for inst in instances:
        for cfg in configs:
            try:
                _, st = solve(inst, cfg)
            except Exception:
                log.exception("solver failed on %s / %s", inst.name, cfg.label())
                st = RunStats(instance=inst.name or "unnamed", config=cfg.label())
            stats.append(st)
    if out is not None:
        write_benchmark_csv(stats, [c.label() for c in configs], out)
    return stats


def write_benchmark_csv(stats: Sequence[RunStats], config_order: Sequence[str], path: str) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for st in stats:
        lines.append(",".join(st.row()))
    for name in config_order:
        group = [s for s in stats if s.config == name]
        if not group:
            continue
        m = len(group)
        agg = [
            "ALL",
            name,
            "%d" % sum(int(s.solved) for s in group),
            "%.6f" % (sum(s.gap for s in group) / m),
            "%.3f" % (sum(s.time for s in group) / m),
            "%d" % round(sum(s.nodes for s in group) / m),
            "%d" % round(sum(s.cols for s in group) / m),
            "%d" % round(sum(s.rows for s in group) / m),
        ] + ["%d" % sum(s.cuts.get(f, 0) for s in group) for f in ALL_FAMILIES]
        lines.append(",".join(agg))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
