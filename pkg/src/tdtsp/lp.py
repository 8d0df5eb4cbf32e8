"""Linear programming backend.

A thin incremental wrapper around scipy.optimize.linprog (HiGHS).  Columns
and rows accumulate in Python structures; every solve rebuilds the sparse
matrix, which is cheap next to the simplex work at our sizes.  Rows can be
deactivated and reactivated without renumbering, which the search tree uses
for node-local rows.

Dual sign convention, uniform across row senses: the returned dual vector y
satisfies reduced_cost(j) = c_j - sum_i y_i * A_ij.  Duals of '>=' rows are
>= 0, of '<=' rows <= 0, of '==' rows free.  scipy reports marginals of
upper-bound rows directly in this convention once '>=' rows are negated into
'<=' form, so only a sign flip on those rows is needed.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, TextIO

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csc_matrix

LE = "<="
EQ = "=="
GE = ">="

EPS_LP = 1e-6


class NumericalFailure(Exception):
    """The backend reported numerical trouble; never absorbed silently."""


class IndexOutOfRange(Exception):
    """Column or row index outside the model."""


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float
    primal: Optional[np.ndarray]
    dual: Optional[np.ndarray]  # indexed by row id; inactive rows carry 0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class LpModel:
    def __init__(self, name: str = ""):
        self.name = name
        self._obj: List[float] = []
        self._lb: List[float] = []
        self._ub: List[float] = []
        self._cols: List[Dict[int, float]] = []  # column -> {row: coef}
        self._sense: List[str] = []
        self._rhs: List[float] = []
        self._active: List[bool] = []
        self.solves = 0

    @property
    def num_cols(self) -> int:
        return len(self._obj)

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    def _check_col(self, j: int) -> None:
        if not 0 <= j < self.num_cols:
            raise IndexOutOfRange("column %d of %d" % (j, self.num_cols))

    def _check_row(self, i: int) -> None:
        if not 0 <= i < self.num_rows:
            raise IndexOutOfRange("row %d of %d" % (i, self.num_rows))

    def add_column(
        self,
        obj: float,
        lb: float = 0.0,
        ub: Optional[float] = 1.0,
        coefs: Optional[Dict[int, float]] = None,
    ) -> int:
        for i in coefs or ():
            self._check_row(i)
        self._obj.append(float(obj))
        self._lb.append(float(lb))
        self._ub.append(np.inf if ub is None else float(ub))
        self._cols.append(dict(coefs or {}))
        return self.num_cols - 1

    def add_row(self, sense: str, rhs: float, coefs: Optional[Dict[int, float]] = None, active: bool = True) -> int:
        if sense not in (LE, EQ, GE):
            raise ValueError("bad sense %r" % sense)
        for j in coefs or ():
            self._check_col(j)
        i = self.num_rows
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._active.append(bool(active))
        for j, c in (coefs or {}).items():
            self._cols[j][i] = float(c)
        return i

    def set_bounds(self, j: int, lb: float, ub: Optional[float]) -> None:
        self._check_col(j)
        self._lb[j] = float(lb)
        self._ub[j] = np.inf if ub is None else float(ub)

    def bounds(self, j: int):
        self._check_col(j)
        return self._lb[j], self._ub[j]

    def set_row_active(self, i: int, active: bool) -> None:
        self._check_row(i)
        self._active[i] = active

    def row_active(self, i: int) -> bool:
        self._check_row(i)
        return self._active[i]

    def objective_of(self, j: int) -> float:
        self._check_col(j)
        return self._obj[j]

    def column_coefs(self, j: int) -> Dict[int, float]:
        self._check_col(j)
        return dict(self._cols[j])

    def _matrices(self):
        eq_rows = [i for i in range(self.num_rows) if self._active[i] and self._sense[i] == EQ]
        ub_rows = [i for i in range(self.num_rows) if self._active[i] and self._sense[i] != EQ]
        eq_pos = {i: k for k, i in enumerate(eq_rows)}
        ub_pos = {i: k for k, i in enumerate(ub_rows)}
        ei, ej, ev, ui, uj, uv = [], [], [], [], [], []
        for j, col in enumerate(self._cols):
            for i, c in col.items():
                if not self._active[i]:
                    continue
                if self._sense[i] == EQ:
                    ei.append(eq_pos[i])
                    ej.append(j)
                    ev.append(c)
                else:
                    sgn = -1.0 if self._sense[i] == GE else 1.0
                    ui.append(ub_pos[i])
                    uj.append(j)
                    uv.append(sgn * c)
        n = self.num_cols
        A_eq = csc_matrix((ev, (ei, ej)), shape=(len(eq_rows), n)) if eq_rows else None
        b_eq = np.array([self._rhs[i] for i in eq_rows]) if eq_rows else None
        A_ub = csc_matrix((uv, (ui, uj)), shape=(len(ub_rows), n)) if ub_rows else None
        b_ub = (
            np.array([self._rhs[i] if self._sense[i] == LE else -self._rhs[i] for i in ub_rows])
            if ub_rows
            else None
        )
        return eq_rows, ub_rows, A_eq, b_eq, A_ub, b_ub

    def solve(self, warm_start=None) -> LpSolution:
        """Solve to optimality; warm_start is accepted for interface parity
        but the backend refactorizes from scratch."""
        if self.num_cols == 0:
            raise ValueError("empty model")
        eq_rows, ub_rows, A_eq, b_eq, A_ub, b_ub = self._matrices()
        res = linprog(
            c=np.asarray(self._obj),
            A_eq=A_eq,
            b_eq=b_eq,
            A_ub=A_ub,
            b_ub=b_ub,
            bounds=list(zip(self._lb, self._ub)),
            method="highs",
        )
        self.solves += 1
        if res.status == 2:
            return LpSolution("infeasible", np.inf, None, None)
        if res.status == 3:
            return LpSolution("unbounded", -np.inf, None, None)
        if res.status != 0:
            raise NumericalFailure("backend status %d: %s" % (res.status, res.message))
        dual = np.zeros(self.num_rows)
        if eq_rows:
            dual[eq_rows] = res.eqlin.marginals
        for k, i in enumerate(ub_rows):
            m = res.ineqlin.marginals[k]
            dual[i] = -m if self._sense[i] == GE else m
        return LpSolution("optimal", float(res.fun), res.x.copy(), dual)

    def reduced_cost(self, j: int, dual: np.ndarray) -> float:
        self._check_col(j)
        return self._obj[j] - sum(dual[i] * c for i, c in self._cols[j].items())

    def write_lp(self, fh: TextIO) -> None:
        """Fixed-format text dump for debugging."""
        fh.write("min")
        for j, c in enumerate(self._obj):
            fh.write(" %+g x%d" % (c, j))
        fh.write("\n")
        for i in range(self.num_rows):
            if not self._active[i]:
                continue
            terms = [
                "%+g x%d" % (col[i], j) for j, col in enumerate(self._cols) if i in col
            ]
            fh.write("r%d: %s %s %g\n" % (i, " ".join(terms), self._sense[i], self._rhs[i]))
        for j in range(self.num_cols):
            fh.write("b%d: %g <= x%d <= %g\n" % (j, self._lb[j], j, self._ub[j]))
