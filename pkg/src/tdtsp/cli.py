"""Command line front end: generate, solve, benchmark, export-branching-data.

Instances travel as text files in the model module's format.  benchmark
writes the delimited results table plus the report figures next to it;
solve prints a human-readable summary and optionally a one-row CSV.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from .branch import BranchSample, export_training_data
from .cuts import ALL_FAMILIES
from .driver import PRESETS, RunStats, SolverConfig, benchmark, preset, solve, write_benchmark_csv
from .expand import build, dump_expansion
from .instgen import GenConfig, generate
from .model import Instance, load_instance, save_instance
from .oracle import solve as oracle_solve
from .report import render_figures

log = logging.getLogger(__name__)


def _parse_cuts(text: str):
    text = text.strip()
    if text.lower() in ("", "none"):
        return ()
    if text.lower() == "all":
        return ALL_FAMILIES
    return tuple(tok.strip().upper() for tok in text.split(",") if tok.strip())


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--formulation", choices=("arc", "path"), default="path")
    p.add_argument("--pricing", choices=("arc", "path", "2cf", "none"), default="2cf")
    p.add_argument("--cuts", default="LSEC", help="comma list of families, or 'all' / 'none'")
    p.add_argument("--heuristics", choices=("on", "off"), default="on")
    p.add_argument("--propagation", choices=("on", "off"), default="on")
    p.add_argument("--branching", choices=("mostfrac", "strong", "learned"), default="mostfrac")
    p.add_argument("--model", help="scoring model file (required with --branching learned)")
    p.add_argument("--time-limit", type=float, help="wall-clock seconds")
    p.add_argument("--work-limit", type=float, help="deterministic work units; overrides wall time")
    p.add_argument("--node-limit", type=int)
    p.add_argument("--seed", type=int, default=0)


def _config_from_args(args, collect: bool = False) -> SolverConfig:
    return SolverConfig(
        formulation=args.formulation,
        pricing=args.pricing,
        cuts=_parse_cuts(args.cuts),
        heuristics=args.heuristics == "on",
        propagation=args.propagation == "on",
        branching=args.branching,
        model_file=args.model,
        time_limit=args.time_limit,
        work_limit=args.work_limit,
        node_limit=args.node_limit,
        seed=args.seed,
        collect_branch_data=collect,
    )


def _limit_overrides(args) -> dict:
    out = {}
    for key in ("time_limit", "work_limit", "node_limit", "seed"):
        val = getattr(args, key)
        if val is not None:
            out[key] = val
    return out


def _collect_instances(paths: List[str]) -> List[Instance]:
    files: List[str] = []
    for p in paths:
        if os.path.isdir(p):
            files.extend(os.path.join(p, f) for f in sorted(os.listdir(p)))
        else:
            files.append(p)
    return [load_instance(f) for f in files if os.path.isfile(f)]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(args) -> int:
    cfg = GenConfig(
        n=args.n,
        theta_max=args.theta_max,
        breakpoints=args.breakpoints,
        max_increase=args.max_increase,
        coord_range=args.coord_range,
        seed=args.seed,
        name=args.name or "",
    )
    inst = generate(cfg)
    save_instance(inst, args.out)
    print("wrote %s (n=%d, horizon=%d)" % (args.out, inst.n, inst.theta_max))
    return 0


def _print_solution(inst: Instance, tour: Optional[List[int]], arrival: Optional[int]) -> None:
    if tour is None:
        print("%s: no feasible tour within horizon %d" % (inst.name or "instance", inst.theta_max))
    else:
        print("%s: arrival %d" % (inst.name or "instance", arrival))
        print("tour " + " ".join(str(v) for v in tour))


def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    if args.dump_expansion:
        with open(args.dump_expansion, "w", encoding="ascii") as fh:
            dump_expansion(build(inst), fh)
        print("expansion dumped to %s" % args.dump_expansion)
    if args.method in ("dp", "brute"):
        res = oracle_solve(inst, method=args.method)
        _print_solution(inst, *(res if res else (None, None)))
        return 0
    cfg = _config_from_args(args, collect=bool(args.export_branching_data))
    tour, stats = solve(inst, cfg)
    _print_solution(inst, tour, stats.incumbent)
    status = "solved" if stats.solved else "stopped"
    print(
        "%s  gap %.6f  nodes %d  time %.3fs  cols %d  rows %d"
        % (status, stats.gap, stats.nodes, stats.time, stats.cols, stats.rows)
    )
    if args.export_branching_data:
        rows = export_training_data(stats.branch_samples, args.export_branching_data)
        print("wrote %d ranking rows to %s" % (rows, args.export_branching_data))
    if args.out:
        write_benchmark_csv([stats], [stats.config], args.out)
        print("stats written to %s" % args.out)
    return 0 if stats.solved or tour is not None else 1


def _cmd_benchmark(args) -> int:
    instances = _collect_instances(args.instances)
    if not instances:
        print("no instances found", file=sys.stderr)
        return 2
    if args.presets:
        names = [tok.strip() for tok in args.presets.split(",") if tok.strip()]
        configs = [preset(nm, **_limit_overrides(args)) for nm in names]
    else:
        configs = [_config_from_args(args)]
    stats = benchmark(instances, configs, out=args.out)
    print("wrote %s (%d rows)" % (args.out, len(stats)))
    if not args.no_figures:
        for path in render_figures(stats, [c.label() for c in configs], args.out):
            print("wrote %s" % path)
    return 0


def _cmd_export(args) -> int:
    instances = _collect_instances(args.instances)
    if not instances:
        print("no instances found", file=sys.stderr)
        return 2
    samples: List[BranchSample] = []
    for inst in instances:
        _, stats = solve(inst, _config_from_args(args, collect=True))
        # query ids must stay distinct across runs, so groups are renumbered
        for s in stats.branch_samples:
            samples.append(BranchSample(len(samples), s.features, s.scores))
    rows = export_training_data(samples, args.out)
    print("wrote %d ranking rows (%d nodes) to %s" % (rows, len(samples), args.out))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdtsp", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--theta-max", type=int, default=1000)
    g.add_argument("--breakpoints", type=int, default=100)
    g.add_argument("--lambda", dest="max_increase", type=float, default=3.0)
    g.add_argument("--coord-range", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--name", default="")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    s.add_argument("--method", choices=("bnb", "dp", "brute"), default="bnb")
    _add_solver_flags(s)
    s.add_argument("--out", help="write the run statistics as CSV")
    s.add_argument("--dump-expansion", metavar="FILE", help="write timed arcs as 'u v dep arr'")
    s.add_argument("--export-branching-data", metavar="FILE")
    s.set_defaults(func=_cmd_solve)

    b = sub.add_parser("benchmark", help="run configurations over instances")
    b.add_argument("instances", nargs="+", help="instance files or directories")
    b.add_argument("--presets", help="comma list from: %s" % ",".join(sorted(PRESETS)))
    _add_solver_flags(b)
    b.add_argument("--out", required=True, help="CSV path; figures land next to it")
    b.add_argument("--no-figures", action="store_true")
    b.set_defaults(func=_cmd_benchmark)

    e = sub.add_parser("export-branching-data", help="strong-branching ranking data")
    e.add_argument("instances", nargs="+", help="instance files or directories")
    _add_solver_flags(e)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_export)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
