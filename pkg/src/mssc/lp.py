"""Linear programming backend.

A dense revised (two-phase) simplex with an explicit basis inverse, plus an
optional external adapter backed by scipy's HiGHS. The bundled solver favors
transparency and warm-startability over raw speed: master problems here are
small by construction, and re-solves after column additions reuse the prior
basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
ITERATION_LIMIT = "IterationLimit"

GEQ = ">="
LEQ = "<="
EQ = "="

BACKEND_BUNDLED = "bundled"
BACKEND_EXTERNAL = "external"


class DimensionMismatch(ValueError):
    pass


class NumericalFailure(RuntimeError):
    """Solve went numerically bad; caller should retry without a warm start."""


@dataclass
class LpSolution:
    status: str
    objective: float
    primal: np.ndarray
    duals: np.ndarray
    basis: tuple | None = None  # opaque warm-start hint


class LinearProgram:
    """A minimization LP with dense column storage.

    Variables have bounds [lb, ub] with lb finite and >= coordinates shifted
    internally; finite upper bounds become internal rows at solve time. Rows
    carry a sense from {>=, <=, =}.
    """

    def __init__(self):
        self._cap_rows = 16
        self._cap_cols = 16
        self._A = np.zeros((self._cap_rows, self._cap_cols))
        self.nrows = 0
        self.ncols = 0
        self.costs: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.col_names: list[str] = []
        self.row_names: list[str] = []
        self.meta: dict = {}

    # -- construction -----------------------------------------------------

    def _grow(self, rows: int, cols: int):
        if rows <= self._cap_rows and cols <= self._cap_cols:
            return
        new_rows = max(self._cap_rows, int(rows * 1.5) + 1)
        new_cols = max(self._cap_cols, int(cols * 1.5) + 1)
        A = np.zeros((new_rows, new_cols))
        A[: self.nrows, : self.ncols] = self._A[: self.nrows, : self.ncols]
        self._A = A
        self._cap_rows, self._cap_cols = new_rows, new_cols

    @property
    def matrix(self) -> np.ndarray:
        return self._A[: self.nrows, : self.ncols]

    def add_variable(self, cost: float, lb: float = 0.0, ub: float = np.inf, name: str | None = None) -> int:
        return self.add_columns([cost], [[]], lb=lb, ub=ub, names=[name] if name else None)[0]

    def add_columns(self, costs, entries, lb: float = 0.0, ub: float = np.inf, names=None) -> list[int]:
        """Append columns. ``entries[t]`` lists (row, coefficient) pairs."""
        costs = list(costs)
        if len(costs) != len(entries):
            raise DimensionMismatch("one cost per column required")
        first = self.ncols
        self._grow(self.nrows, self.ncols + len(costs))
        for t, (c, ent) in enumerate(zip(costs, entries)):
            j = first + t
            for row, coef in ent:
                if not 0 <= row < self.nrows:
                    raise DimensionMismatch(f"column entry references row {row}")
                self._A[row, j] = coef
            self.costs.append(float(c))
            self.lb.append(float(lb))
            self.ub.append(float(ub))
            self.col_names.append(names[t] if names else f"x{j}")
        self.ncols += len(costs)
        return list(range(first, self.ncols))

    def add_row(self, sense: str, rhs: float, entries, name: str | None = None) -> int:
        return self.add_rows([(sense, rhs, entries)], names=[name] if name else None)[0]

    def add_rows(self, rows, names=None) -> list[int]:
        """Append rows. Each row is (sense, rhs, [(col, coefficient), ...])."""
        first = self.nrows
        self._grow(self.nrows + len(rows), self.ncols)
        for r, (sense, rhs, entries) in enumerate(rows):
            if sense not in (GEQ, LEQ, EQ):
                raise ValueError(f"bad row sense {sense!r}")
            i = first + r
            for col, coef in entries:
                if not 0 <= col < self.ncols:
                    raise DimensionMismatch(f"row entry references column {col}")
                self._A[i, col] = coef
            self.senses.append(sense)
            self.rhs.append(float(rhs))
            self.row_names.append(names[r] if names else f"r{i}")
        self.nrows += len(rows)
        return list(range(first, self.nrows))

    def set_cost(self, col: int, cost: float):
        self.costs[col] = float(cost)

    # -- debugging --------------------------------------------------------

    def to_cplex_lp(self) -> str:
        """Dump in CPLEX-LP text format."""

        def term(coef, name, lead):
            sign = "-" if coef < 0 else ("" if lead else "+")
            return f"{sign} {abs(coef):.12g} {name}"

        out = ["Minimize", " obj: " + " ".join(
            term(c, self.col_names[j], j == 0) for j, c in enumerate(self.costs)
        ), "Subject To"]
        A = self.matrix
        op = {GEQ: ">=", LEQ: "<=", EQ: "="}
        for i in range(self.nrows):
            cols = np.flatnonzero(A[i])
            body = " ".join(term(A[i, j], self.col_names[j], k == 0) for k, j in enumerate(cols))
            out.append(f" {self.row_names[i]}: {body or '0 ' + self.col_names[0]} {op[self.senses[i]]} {self.rhs[i]:.12g}")
        out.append("Bounds")
        for j in range(self.ncols):
            hi = "+inf" if np.isinf(self.ub[j]) else f"{self.ub[j]:.12g}"
            out.append(f" {self.lb[j]:.12g} <= {self.col_names[j]} <= {hi}")
        out.append("End")
        return "\n".join(out) + "\n"


# -- bundled revised simplex ------------------------------------------------

_PIVOT_TOL = 1e-10
_FEAS_TOL = 1e-9


def _scaled_tol(costs: np.ndarray) -> float:
    scale = float(np.max(np.abs(costs))) if costs.size else 1.0
    return 1e-9 * max(1.0, scale)


class _Simplex:
    """Revised simplex on the standard-form system W x = b, x >= 0."""

    def __init__(self, W, b, struct_cols, art_cols, refactor_every=100):
        self.W = W
        self.b = b
        self.m, self.N = W.shape
        self.struct_cols = struct_cols
        self.art_cols = art_cols
        self.refactor_every = refactor_every
        self.basis = None
        self.Binv = None
        self.xB = None
        self.pivots = 0

    def set_basis(self, basis) -> bool:
        basis = np.asarray(basis, dtype=np.intp)
        if basis.shape[0] != self.m:
            return False
        try:
            Binv = np.linalg.inv(self.W[:, basis])
        except np.linalg.LinAlgError:
            return False
        xB = Binv @ self.b
        if np.min(xB) < -1e-7 * max(1.0, float(np.max(np.abs(self.b)))):
            return False
        self.basis = basis
        self.Binv = Binv
        self.xB = np.maximum(xB, 0.0)
        return True

    def refactor(self):
        self.Binv = np.linalg.inv(self.W[:, self.basis])
        self.xB = np.maximum(self.Binv @ self.b, 0.0)

    def run(self, costs, blocked, max_iter) -> str:
        """Minimize costs over the current system; returns a status string."""
        tol_rc = _scaled_tol(costs)
        m = self.m
        allowed = ~blocked
        bland = False
        degenerate_run = 0
        bland_threshold = 10 * (self.m + self.N)
        b_scale = max(1.0, float(np.max(np.abs(self.b))) if self.b.size else 1.0)

        for _ in range(max_iter):
            cB = costs[self.basis]
            y = cB @ self.Binv
            rc = costs - y @ self.W
            rc[self.basis] = 0.0
            cand = allowed & (rc < -tol_rc)
            cand[self.basis] = False
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return OPTIMAL
            enter = int(idx[0]) if bland else int(idx[np.argmin(rc[idx])])

            d = self.Binv @ self.W[:, enter]
            pos = d > _PIVOT_TOL
            # a basic artificial already at zero may not grow: such rows block
            # at ratio ~0 and the artificial gets pivoted out instead
            if self.art_cols.size:
                abasic = np.isin(self.basis, self.art_cols)
                pos |= abasic & (d < -_PIVOT_TOL) & (self.xB <= _FEAS_TOL * b_scale)
            if not np.any(pos):
                return UNBOUNDED
            ratios = np.full(m, np.inf)
            ratios[pos] = self.xB[pos] / d[pos]
            np.maximum(ratios, 0.0, out=ratios)
            rmin = float(ratios.min())
            near = np.flatnonzero(ratios <= rmin + 1e-9 * (1.0 + rmin))
            # prefer kicking artificials out, then the largest pivot for stability
            art_near = near[np.isin(self.basis[near], self.art_cols)] if self.art_cols.size else np.array([], dtype=np.intp)
            pool = art_near if art_near.size else near
            leave = int(pool[np.argmax(np.abs(d[pool]))])

            step = max(self.xB[leave] / d[leave], 0.0)
            if step <= _FEAS_TOL * b_scale:
                degenerate_run += 1
                if degenerate_run > bland_threshold:
                    bland = True
            else:
                degenerate_run = 0
                bland = False

            self.xB = self.xB - step * d
            self.xB[leave] = step
            self.xB = np.maximum(self.xB, 0.0)

            piv = d[leave]
            if abs(piv) < _PIVOT_TOL:
                raise NumericalFailure("vanishing pivot")
            row = self.Binv[leave] / piv
            self.Binv -= np.outer(d, row)
            self.Binv[leave] = row
            self.basis[leave] = enter

            self.pivots += 1
            if self.pivots % self.refactor_every == 0:
                self.refactor()
        return ITERATION_LIMIT


def _solve_bundled(lp: LinearProgram, warm_basis=None, max_iter: int | None = None) -> LpSolution:
    nstruct = lp.ncols
    A = lp.matrix.copy()
    costs = np.array(lp.costs, dtype=np.float64)
    lb = np.array(lp.lb, dtype=np.float64)
    ub = np.array(lp.ub, dtype=np.float64)
    senses = list(lp.senses)
    rhs = np.array(lp.rhs, dtype=np.float64)

    if np.any(~np.isfinite(lb)):
        raise ValueError("variables need a finite lower bound")

    # shift lower bounds to zero
    const = float(costs @ lb)
    rhs = rhs - A @ lb

    # finite upper bounds become internal <= rows
    ub_rows = []
    for j in np.flatnonzero(np.isfinite(ub)):
        ub_rows.append((int(j), ub[j] - lb[j]))
    nrows = lp.nrows + len(ub_rows)
    if ub_rows:
        extra = np.zeros((len(ub_rows), nstruct))
        extra_rhs = np.empty(len(ub_rows))
        for r, (j, val) in enumerate(ub_rows):
            extra[r, j] = 1.0
            extra_rhs[r] = val
        A = np.vstack([A, extra])
        rhs = np.concatenate([rhs, extra_rhs])
        senses = senses + [LEQ] * len(ub_rows)

    # normalize to nonnegative right-hand sides
    flip = rhs < 0
    A[flip] *= -1.0
    rhs = rhs.copy()
    rhs[flip] *= -1.0
    eff_senses = []
    for i, s in enumerate(senses):
        if flip[i] and s != EQ:
            s = GEQ if s == LEQ else LEQ
        eff_senses.append(s)

    # augment: one slack/surplus per inequality row, artificials as needed
    slack_of_row = np.full(nrows, -1, dtype=np.intp)
    art_of_row = np.full(nrows, -1, dtype=np.intp)
    aug_cols = []
    for i, s in enumerate(eff_senses):
        if s in (LEQ, GEQ):
            col = np.zeros(nrows)
            col[i] = 1.0 if s == LEQ else -1.0
            slack_of_row[i] = nstruct + len(aug_cols)
            aug_cols.append(col)
    n_slack = len(aug_cols)
    for i, s in enumerate(eff_senses):
        if s != LEQ:
            col = np.zeros(nrows)
            col[i] = 1.0
            art_of_row[i] = nstruct + len(aug_cols)
            aug_cols.append(col)
    W = np.hstack([A, np.column_stack(aug_cols)]) if aug_cols else A.copy()
    b = rhs
    N = W.shape[1]
    art_cols = art_of_row[art_of_row >= 0]

    full_costs = np.zeros(N)
    full_costs[:nstruct] = costs
    blocked_art = np.zeros(N, dtype=bool)
    blocked_art[art_cols] = True

    sx = _Simplex(W, b, np.arange(nstruct), art_cols)
    if max_iter is None:
        max_iter = max(5000, 50 * (nrows + N))

    warmed = False
    if warm_basis is not None:
        mapped = _map_basis(warm_basis, nstruct, lp.nrows, slack_of_row, art_of_row)
        if mapped is not None:
            warmed = sx.set_basis(mapped)

    if not warmed:
        start = np.empty(nrows, dtype=np.intp)
        for i, s in enumerate(eff_senses):
            start[i] = slack_of_row[i] if s == LEQ else art_of_row[i]
        if not sx.set_basis(start):
            raise NumericalFailure("could not factor the starting basis")
        if art_cols.size:
            phase1 = np.zeros(N)
            phase1[art_cols] = 1.0
            status = sx.run(phase1, np.zeros(N, dtype=bool), max_iter)
            if status == ITERATION_LIMIT:
                return LpSolution(ITERATION_LIMIT, np.nan, np.zeros(nstruct), np.zeros(lp.nrows))
            sx.refactor()
            if float(phase1[sx.basis] @ sx.xB) > 1e-7 * max(1.0, float(np.max(b)) if b.size else 1.0):
                return LpSolution(INFEASIBLE, np.inf, np.zeros(nstruct), np.zeros(lp.nrows))

    status = sx.run(full_costs, blocked_art, max_iter)
    if status == ITERATION_LIMIT:
        return LpSolution(ITERATION_LIMIT, np.nan, np.zeros(nstruct), np.zeros(lp.nrows))
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, -np.inf, np.zeros(nstruct), np.zeros(lp.nrows))

    sx.refactor()
    if art_cols.size and float(np.sum(sx.xB[np.isin(sx.basis, art_cols)])) > 1e-6 * max(1.0, float(np.max(b))):
        return LpSolution(INFEASIBLE, np.inf, np.zeros(nstruct), np.zeros(lp.nrows))

    x = np.zeros(N)
    x[sx.basis] = sx.xB
    primal = x[:nstruct] + lb
    y = full_costs[sx.basis] @ sx.Binv
    duals = y[: lp.nrows].copy()
    duals[flip[: lp.nrows]] *= -1.0
    objective = float(costs @ x[:nstruct]) + const
    basis_labels = _basis_labels(sx.basis, nstruct, slack_of_row, art_of_row)
    return LpSolution(OPTIMAL, objective, primal, duals, basis=basis_labels)


def _basis_labels(basis, nstruct, slack_of_row, art_of_row):
    slack_row = {int(c): int(r) for r, c in enumerate(slack_of_row) if c >= 0}
    art_row = {int(c): int(r) for r, c in enumerate(art_of_row) if c >= 0}
    labels = []
    for c in basis:
        c = int(c)
        if c < nstruct:
            labels.append(("v", c))
        elif c in slack_row:
            labels.append(("s", slack_row[c]))
        else:
            labels.append(("a", art_row[c]))
    return tuple(labels)


def _map_basis(labels, nstruct, base_rows, slack_of_row, art_of_row):
    nrows = slack_of_row.shape[0]
    mapped = []
    for kind, idx in labels:
        if kind == "v":
            if idx >= nstruct:
                return None
            mapped.append(idx)
        elif kind == "s":
            if idx >= nrows or slack_of_row[idx] < 0:
                return None
            mapped.append(int(slack_of_row[idx]))
        elif kind == "a":
            if idx >= nrows or art_of_row[idx] < 0:
                return None
            mapped.append(int(art_of_row[idx]))
        else:
            return None
    if len(mapped) != nrows:
        return None
    return mapped


# -- external adapter ---------------------------------------------------------


def _solve_external(lp: LinearProgram) -> LpSolution:
    """Solve via scipy's HiGHS interface; duals mapped to bundled conventions."""
    from scipy.optimize import linprog

    A = lp.matrix
    senses = np.array(lp.senses)
    rhs = np.array(lp.rhs)
    le = senses == LEQ
    ge = senses == GEQ
    eq = senses == EQ
    A_ub = np.vstack([A[le], -A[ge]]) if (le.any() or ge.any()) else None
    b_ub = np.concatenate([rhs[le], -rhs[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = rhs[eq] if A_eq is not None else None
    bounds = list(zip(lp.lb, [None if np.isinf(u) else u for u in lp.ub]))
    res = linprog(np.array(lp.costs), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return LpSolution(INFEASIBLE, np.inf, np.zeros(lp.ncols), np.zeros(lp.nrows))
    if res.status == 3:
        return LpSolution(UNBOUNDED, -np.inf, np.zeros(lp.ncols), np.zeros(lp.nrows))
    if res.status != 0:
        return LpSolution(ITERATION_LIMIT, np.nan, np.zeros(lp.ncols), np.zeros(lp.nrows))
    # both solvers report d(objective)/d(rhs): >= rows nonnegative, <= rows
    # nonpositive in a minimization; the >= block was negated going in.
    duals = np.zeros(lp.nrows)
    if A_ub is not None:
        marg = res.ineqlin.marginals
        n_le = int(le.sum())
        duals[le] = marg[:n_le]
        duals[ge] = -marg[n_le:]
    if A_eq is not None:
        duals[eq] = res.eqlin.marginals
    return LpSolution(OPTIMAL, float(res.fun), res.x.copy(), duals, basis=None)


def solve(lp: LinearProgram, warm_hint=None, backend: str = BACKEND_BUNDLED,
          max_iter: int | None = None) -> LpSolution:
    """Solve the LP, optionally warm-starting the bundled simplex from a prior
    basis (valid after pure column additions)."""
    if lp.ncols == 0:
        raise ValueError("LP has no variables")
    if backend == BACKEND_EXTERNAL:
        return _solve_external(lp)
    if backend != BACKEND_BUNDLED:
        raise ValueError(f"unknown LP backend {backend!r}")
    return _solve_bundled(lp, warm_basis=warm_hint, max_iter=max_iter)
