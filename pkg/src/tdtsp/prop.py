"""Bound propagation: mark timed arcs dead from primal and dual bounds.

Costs are integral, so an incumbent of value theta-bar means improving tours
arrive by theta-bar - 1; any arc arriving later cannot lie on one.  The
literal flag falls back to killing only departures strictly beyond
theta-bar.  Return arcs into the depot arriving strictly below the node's
dual bound close tours that the bound already excludes.

Dead arcs are a mask over arc ids: pricing skips them, the master keeps the
columns at upper bound zero.  Masks are copied, never mutated, so parent
nodes keep theirs.
"""

from typing import Optional

import numpy as np

from .expand import TimeExpandedGraph
from .model import SOURCE

EPS_BOUND = 1e-6


def propagate(
    g: TimeExpandedGraph,
    primal_bound: float,
    dual_bound: float,
    dead: Optional[np.ndarray] = None,
    literal: bool = False,
) -> np.ndarray:
    out = np.zeros(g.num_arcs, dtype=bool) if dead is None else dead.copy()
    if literal:
        out |= g.arc_dep > primal_bound + EPS_BOUND
    else:
        out |= g.arc_arr > primal_bound - 1 + EPS_BOUND
    out |= (g.arc_head_base == SOURCE) & (g.arc_arr < dual_bound - EPS_BOUND)
    return out
