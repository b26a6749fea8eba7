"""Column pool and the stabilized aggregated restricted master problem.

The master covers each aggregated constraint at least once using at most k
columns. Per-row slack pairs (xi, eta) price the aggregated dual into a box
[lower_j, upper_j]; rows whose box has an infinite top get a penalty column
instead so the LP stays feasible at every branch-and-bound node.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lp as lpmod
from .aggregation import AggregationPartition, count_incompatibilities
from .instance import Instance, cluster_cost
from .kmeans import Clustering


class IncompatibleColumnInPool(ValueError):
    pass


class ComponentSpansClusters(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Column:
    """A candidate cluster: sorted member indices, cost and centroid.

    Equality and ordering look at members only; cost and centroid are derived
    data cached at construction.
    """

    members: tuple[int, ...]
    cost: float = field(compare=False)
    centroid: tuple[float, float] = field(compare=False)


def make_column(instance: Instance, members) -> Column:
    cost, centroid = cluster_cost(instance, members)
    return Column(tuple(sorted(int(i) for i in members)), cost, (float(centroid[0]), float(centroid[1])))


class ColumnPool:
    """Deduplicated column storage with a dense membership matrix."""

    def __init__(self, n: int):
        self.n = n
        self.columns: list[Column] = []
        self._index: dict[tuple[int, ...], int] = {}
        self._cap = 64
        self._mask = np.zeros((self._cap, n), dtype=bool)

    def __len__(self):
        return len(self.columns)

    def __iter__(self):
        return iter(self.columns)

    def __getitem__(self, t: int) -> Column:
        return self.columns[t]

    def index_of(self, members) -> int | None:
        return self._index.get(tuple(sorted(members)))

    def add(self, column: Column) -> tuple[int, bool]:
        """Insert a column, returning (index, was_new)."""
        t = self._index.get(column.members)
        if t is not None:
            return t, False
        t = len(self.columns)
        if t >= self._cap:
            self._cap = int(self._cap * 1.6) + 8
            mask = np.zeros((self._cap, self.n), dtype=bool)
            mask[:t] = self._mask[:t]
            self._mask = mask
        self._mask[t, list(column.members)] = True
        self.columns.append(column)
        self._index[column.members] = t
        return t, True

    @property
    def mask_matrix(self) -> np.ndarray:
        return self._mask[: len(self.columns)]

    @property
    def costs(self) -> np.ndarray:
        return np.array([c.cost for c in self.columns])


@dataclass
class StabilizationBox:
    """Per-component dual bounds, keyed by stable component id."""

    lower: dict[int, float]
    upper: dict[int, float]

    @classmethod
    def unbounded(cls, partition: AggregationPartition) -> "StabilizationBox":
        return cls({cid: 0.0 for cid in partition.ids}, {cid: np.inf for cid in partition.ids})

    def carry_over(self, origin: dict[int, int]) -> "StabilizationBox":
        """Box for a refined partition: split halves inherit the parent's bounds."""
        return StabilizationBox(
            {cid: self.lower[parent] for cid, parent in origin.items()},
            {cid: self.upper[parent] for cid, parent in origin.items()},
        )


@dataclass
class MasterSolution:
    objective: float
    lam_bar: np.ndarray
    sigma: float
    z: np.ndarray
    active_bounds: dict[int, str]
    artificial_usage: float
    basis: tuple | None
    status: str


def component_cover_matrix(pool: ColumnPool, partition: AggregationPartition) -> np.ndarray:
    """(m, T) boolean: component j fully contained in column t. Raises if any
    pooled column only partially intersects a component."""
    if len(pool) == 0:
        return np.zeros((partition.m, 0), dtype=bool)
    comp = np.zeros((partition.m, partition.n))
    comp[partition.row_of_point, np.arange(partition.n)] = 1.0
    cnt = comp @ pool.mask_matrix.T.astype(np.float64)
    cnt = np.rint(cnt)
    sizes = partition.sizes[:, None]
    partial = (cnt > 0) & (cnt < sizes)
    if partial.any():
        t = int(np.argwhere(partial.any(axis=0))[0][0])
        raise IncompatibleColumnInPool(f"pooled column {t} splits a component")
    return cnt == sizes


def build_agrmp(
    pool: ColumnPool,
    partition: AggregationPartition,
    k: int,
    box: StabilizationBox | None,
    penalty_cost: float | None = None,
) -> lpmod.LinearProgram:
    """Build the (optionally stabilized) aggregated master LP.

    With ``box=None`` no stabilization variables are added. Rows without a
    finite upper bound receive a penalty column with cost ``penalty_cost`` so
    the LP is feasible even when the pool does not cover every component.
    """
    cover = component_cover_matrix(pool, partition)
    m = partition.m
    T = len(pool)
    if penalty_cost is None:
        penalty_cost = 10.0 * float(sum(c.cost for c in pool) + 1.0)

    prog = lpmod.LinearProgram()
    cover_row = {}
    for row, cid in enumerate(partition.ids):
        prog.add_row(lpmod.GEQ, 1.0, [], name=f"cover_{cid}")
        cover_row[cid] = row
    card_row = prog.add_row(lpmod.LEQ, float(k), [], name="card")

    z_entries = []
    for t in range(T):
        rows = np.flatnonzero(cover[:, t])
        z_entries.append([(int(r), 1.0) for r in rows] + [(card_row, 1.0)])
    prog.add_columns([c.cost for c in pool], z_entries, names=[f"z{t}" for t in range(T)])

    xi_idx: dict[int, int] = {}
    eta_idx: dict[int, int] = {}
    art_idx: dict[int, int] = {}
    if box is not None:
        for row, cid in enumerate(partition.ids):
            xi_idx[cid] = prog.add_columns([-box.lower[cid]], [[(row, -1.0)]], names=[f"xi_{cid}"])[0]
        for row, cid in enumerate(partition.ids):
            if np.isfinite(box.upper[cid]):
                eta_idx[cid] = prog.add_columns([box.upper[cid]], [[(row, 1.0)]], names=[f"eta_{cid}"])[0]
    for row, cid in enumerate(partition.ids):
        if cid not in eta_idx:
            art_idx[cid] = prog.add_columns([penalty_cost], [[(row, 1.0)]], names=[f"pen_{cid}"])[0]

    prog.meta = {
        "kind": "agrmp",
        "z_cols": list(range(T)),
        "ids": partition.ids,
        "cover_row": cover_row,
        "card_row": card_row,
        "xi": xi_idx,
        "eta": eta_idx,
        "art": art_idx,
    }
    return prog


def add_pool_columns(prog: lpmod.LinearProgram, pool: ColumnPool, partition: AggregationPartition,
                     new_indices) -> None:
    """Append newly pooled columns to an existing master LP."""
    meta = prog.meta
    cover_row = meta["cover_row"]
    card_row = meta["card_row"]
    entries = []
    costs = []
    names = []
    for t in new_indices:
        col = pool[t]
        covered = {cover_row[partition.ids[partition.row_of_point[i]]] for i in col.members}
        entries.append([(r, 1.0) for r in sorted(covered)] + [(card_row, 1.0)])
        costs.append(col.cost)
        names.append(f"z{t}")
    added = prog.add_columns(costs, entries, names=names)
    meta["z_cols"].extend(added)


def estimate_dual_bounds(instance: Instance, x_bar: Clustering,
                         partition: AggregationPartition) -> StabilizationBox:
    """Initial dual box from the incumbent clustering.

    For a component living inside incumbent cluster s, the lower bound is the
    cost drop when its points leave s; the upper bound is the cheapest cost
    increase when they join some other cluster. Bounds are heuristic (they
    assume the incumbent is optimal) and get repaired by the boundary check at
    convergence.
    """
    clusters = [set(c.tolist()) for c in x_bar.clusters()]
    costs = []
    for c in range(x_bar.k):
        if clusters[c]:
            costs.append(cluster_cost(instance, clusters[c])[0])
        else:
            costs.append(0.0)

    lower: dict[int, float] = {}
    upper: dict[int, float] = {}
    for row, cid in enumerate(partition.ids):
        members = set(partition.components[row])
        labels = {int(x_bar.assignment[i]) for i in members}
        if len(labels) != 1:
            raise ComponentSpansClusters(f"component {cid} spans clusters {sorted(labels)}")
        s = labels.pop()
        rest = clusters[s] - members
        c_without = cluster_cost(instance, rest)[0] if rest else 0.0
        lo = costs[s] - c_without
        up = np.inf
        for s2 in range(x_bar.k):
            if s2 == s:
                continue
            grown = cluster_cost(instance, clusters[s2] | members)[0]
            up = min(up, grown - costs[s2])
        lo = max(0.0, min(lo, up))
        lower[cid] = lo
        upper[cid] = up
    return StabilizationBox(lower, upper)


def update_box(box: StabilizationBox, active_bounds: dict[int, str]) -> StabilizationBox:
    """Widen the box around components whose bound was active at the optimum.

    Symmetric widening by half the current width; degenerate zero-width boxes
    get a fixed minimum margin so the dual can move off the boundary.
    """
    lower = dict(box.lower)
    upper = dict(box.upper)
    for cid in active_bounds:
        lo, up = lower[cid], upper[cid]
        alpha = up - lo
        if not np.isfinite(alpha):
            lower[cid] = 0.0
            continue
        if alpha <= 1e-12:
            delta = max(1.0, 0.05 * up)
            lower[cid] = max(0.0, lo - delta)
            upper[cid] = up + delta
        else:
            lower[cid] = max(0.0, lo - alpha / 2.0)
            upper[cid] = up + alpha / 2.0
    return StabilizationBox(lower, upper)


_ACTIVE_TOL = 1e-9


def solve_master(prog: lpmod.LinearProgram, warm=None, backend: str = lpmod.BACKEND_BUNDLED) -> MasterSolution:
    """Solve the master LP and extract aggregated duals.

    The cardinality dual is sign-flipped to the nonnegative convention. A slack
    pair with positive value marks the corresponding component's bound active.
    Warm-start failures fall back to a cold solve before giving up.
    """
    meta = prog.meta
    try:
        sol = lpmod.solve(prog, warm_hint=warm, backend=backend)
    except lpmod.NumericalFailure:
        sol = lpmod.solve(prog, warm_hint=None, backend=backend)
    if sol.status == lpmod.ITERATION_LIMIT and warm is not None:
        sol = lpmod.solve(prog, warm_hint=None, backend=backend)
    if sol.status != lpmod.OPTIMAL:
        raise lpmod.NumericalFailure(f"master LP terminated with status {sol.status}")

    ids = meta["ids"]
    lam_bar = np.empty(len(ids))
    for row, cid in enumerate(ids):
        lam_bar[row] = max(0.0, float(sol.duals[meta["cover_row"][cid]]))
    sigma = max(0.0, -float(sol.duals[meta["card_row"]]))
    z = sol.primal[meta["z_cols"]].copy()

    # a bound is binding exactly when its slack pair carries weight; duals
    # touching the box with zero slack are mere degeneracy and need no move
    # (slack-free convergence already implies the unstabilized optimum)
    active: dict[int, str] = {}
    for cid, j in meta["xi"].items():
        if sol.primal[j] > _ACTIVE_TOL:
            active[cid] = "lower"
    for cid, j in meta["eta"].items():
        if sol.primal[j] > _ACTIVE_TOL and active.get(cid) != "lower":
            active[cid] = "upper"
    art = 0.0
    for j in meta["art"].values():
        art += float(sol.primal[j])
    return MasterSolution(
        objective=float(sol.objective),
        lam_bar=lam_bar,
        sigma=sigma,
        z=z,
        active_bounds=active,
        artificial_usage=art,
        basis=sol.basis,
        status=sol.status,
    )
