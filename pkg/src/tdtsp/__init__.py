"""Exact and heuristic solvers for the time-dependent traveling salesman problem.

The package is organised around a branch-price-and-cut solver working on a
time-expanded graph:

- model:    instance data, arrival recursion, FIFO / triangle checks, file I/O
- instgen:  random instance generator (sawtooth travel-time functions)
- expand:   time-expanded graph construction
- oracle:   brute-force and Held-Karp reference solvers
- lp:       bounded-variable LP wrapper (duals, incremental columns/rows)
- master:   arc-based and path-based restricted master problems
- pricing:  shortest-path pricing (plain, 2-cycle-free, single-arc)
- cuts:     separation routines for seven families of valid inequalities
- heur:     LP-guided tour construction and the static warm start
- prop:     arc fixing by primal/dual bound propagation
- branch:   compound branching, strong branching, learned branching
- driver:   branch-and-bound driver and the benchmark harness
"""

__version__ = "0.1.0"

SOURCE = 0
