"""Column generation with dynamic constraint aggregation, inside best-first
branch and price.

Per node: solve the stabilized aggregated master, disaggregate duals, price.
Compatible negative columns enter directly; if only incompatible ones exist
the aggregation is refined around a selected column and the master rebuilt.
When pricing comes up empty the dual box is checked: active bounds widen the
box and the loop resumes, otherwise the node is converged and its master
value is a valid bound. Nodes whose relaxation stays fractional branch on a
point pair (shared cluster vs. separated) and children inherit the refined
aggregation, the dual box, and the useful part of the column pool.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import lp as lpmod
from .aggregation import (AggregationPartition, count_incompatibilities, disaggregate,
                          select_incompatible, split_origin, update_partition)
from .branching import (BranchState, InfeasibleConstraints, SolutionIntegral, TooLargeForExact,
                        exact_constrained_pricing, find_branch_pair,
                        heuristic_constrained_pricing)
from .config import RunConfig
from .instance import Instance, total_sum_of_squares
from .kmeans import Clustering, clustering_from_labels, initial_partition, multi_start
from .master import (Column, ColumnPool, MasterSolution, StabilizationBox, add_pool_columns,
                     build_agrmp, estimate_dual_bounds, make_column, solve_master)
from .pricing import PricingInput, assemble_output, price


@dataclass
class NodeRecord:
    node_id: int
    depth: int
    state: BranchState
    partition: AggregationPartition
    box: StabilizationBox
    columns: list
    lower_bound: float


@dataclass
class SolveStats:
    cg_iterations: int = 0
    m_start: int = 0
    m_end: int = 0
    m_avg: float = 0.0
    q_updates: int = 0
    u_avg: float = 0.0
    master_time: float = 0.0
    pricing_time: float = 0.0
    nodes_explored: int = 0
    root_gap_percent: float = float("nan")
    total_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class CgResult:
    lower_bound: float
    master: MasterSolution | None
    pool: ColumnPool
    partition: AggregationPartition
    box: StabilizationBox
    stats: SolveStats
    converged: bool
    certified: bool
    final_lam: np.ndarray | None = None
    final_sigma: float = 0.0

    def as_tuple(self):
        return self.lower_bound, self.master, self.pool, self.partition, self.stats


_GAP_SLACK = 1e-9
_INT_TOL = 1e-6
_MAX_BOX_UPDATES = 200


def _relative_gap(upper: float, lower: float) -> float:
    if not np.isfinite(upper):
        return np.inf
    if upper <= 1e-12:  # degenerate zero-cost optimum
        return 0.0 if lower >= upper - 1e-9 else np.inf
    return max(0.0, (upper - lower) / upper)


def column_generation(instance: Instance, k: int, node: NodeRecord, config: RunConfig,
                      upper_bound: float = np.inf, deadline: float | None = None) -> CgResult:
    """Run the aggregated column-generation loop at one node.

    Returns the node's certified lower bound together with the final master
    solution, pool, partition and per-node statistics. ``certified`` is False
    when the run hit the time limit or exceeded the exact-pricing cap at a
    constrained node.
    """
    points = instance.points
    n = instance.n
    is_constrained = bool(node.state.must_link or node.state.cannot_link)

    pool = ColumnPool(n)
    for col in node.columns:
        pool.add(col)
    partition, box = _reconcile_partition(node.partition, node.box, node.state)

    if np.isfinite(upper_bound):
        penalty = 1.001 * upper_bound + 1.0
    else:
        penalty = 10.0 * total_sum_of_squares(instance) + 1.0

    prog = build_agrmp(pool, partition, k, box, penalty_cost=penalty)
    basis = None
    stats = SolveStats(m_start=partition.m)
    lb = node.lower_bound if np.isfinite(node.lower_bound) else -np.inf
    u_sum = 0
    box_updates = 0
    m_sum = 0
    msol = None
    lam = None
    sigma = 0.0
    converged = False
    certified = True
    timed_out = False
    max_cols = max(config.columns_per_iter, 10)

    while stats.cg_iterations < config.max_cg_iterations:
        if deadline is not None and time.monotonic() > deadline:
            timed_out = True
            break

        t0 = time.perf_counter()
        msol = solve_master(prog, warm=basis, backend=config.lp_backend)
        stats.master_time += time.perf_counter() - t0
        basis = msol.basis
        stats.cg_iterations += 1
        m_sum += partition.m

        duals = disaggregate(msol.lam_bar, msol.sigma, partition, config.disaggregation,
                             seed=(config.seed, node.node_id, stats.cg_iterations))
        lam, sigma = duals.lam, duals.sigma

        t0 = time.perf_counter()
        out = price(points, PricingInput(lam, sigma, partition, max_columns=max_cols),
                    tol=config.rc_tolerance)
        exact_best_rc = out.best_reduced_cost  # unconstrained minimum: valid everywhere
        if is_constrained:
            direct = [(c, rc) for c, rc in out.columns if node.state.column_ok(c.members)]
            heur = heuristic_constrained_pricing(points, lam, sigma, node.state,
                                                 seeds=[c for c, _ in out.columns],
                                                 partition=partition, tol=config.rc_tolerance,
                                                 max_columns=None)
            merged = {c.members: (c, rc) for c, rc in heur.columns}
            for c, rc in direct:
                merged.setdefault(c.members, (c, rc))
            out = assemble_output(list(merged.values()), partition, max_cols)
        stats.pricing_time += time.perf_counter() - t0

        # valid at every iteration: any master solution spends at most k
        # column-units, each no cheaper than the global minimum reduced cost
        lb = max(lb, msol.objective + k * min(0.0, exact_best_rc))

        new_cols = [(c, rc) for c, rc in out.columns if pool.index_of(c.members) is None]
        compat_new = [(c, rc) for c, rc in out.compatible if pool.index_of(c.members) is None]

        if not new_cols and is_constrained and not msol.active_bounds:
            # heuristic dried up: certify (or refute) with exact pricing
            t0 = time.perf_counter()
            try:
                q_init = None
                q_members = None
                if out.columns:
                    q_init = out.columns[0][1] - sigma
                    q_members = out.columns[0][0].members
                members, rc_exact = exact_constrained_pricing(
                    points, lam, sigma, node.state, q_init=q_init, q_init_members=q_members)
                exact_best_rc = rc_exact
                lb = max(lb, msol.objective + k * min(0.0, rc_exact))
                if rc_exact < -config.rc_tolerance and members and pool.index_of(members) is None:
                    col = make_column(instance, members)
                    new_cols = [(col, rc_exact)]
                    if count_incompatibilities(members, partition) == 0:
                        compat_new = [(col, rc_exact)]
            except TooLargeForExact:
                certified = False
            stats.pricing_time += time.perf_counter() - t0

        if new_cols:
            if compat_new:
                take = compat_new[: config.columns_per_iter]
                added = []
                for c, _ in take:
                    t, is_new = pool.add(c)
                    if is_new:
                        added.append(t)
                add_pool_columns(prog, pool, partition, added)
            else:
                chosen, _rc = select_incompatible(new_cols, partition, config.q_update)
                u = count_incompatibilities(chosen.members, partition)
                u_sum += u
                stats.q_updates += 1
                old = partition
                partition = update_partition(partition, chosen.members)
                box = box.carry_over(split_origin(partition, old))
                pool.add(chosen)
                prog = build_agrmp(pool, partition, k, box, penalty_cost=penalty)
                basis = None
            continue

        if msol.active_bounds:
            if box_updates >= _MAX_BOX_UPDATES:
                certified = False
                break
            box = _apply_box_update(prog, box, msol.active_bounds)
            box_updates += 1
            continue

        converged = True
        break
    else:
        timed_out = True

    if timed_out:
        certified = False

    stats.m_end = partition.m
    stats.m_avg = m_sum / stats.cg_iterations if stats.cg_iterations else float(partition.m)
    stats.u_avg = u_sum / stats.q_updates if stats.q_updates else 0.0
    return CgResult(
        lower_bound=lb,
        master=msol,
        pool=pool,
        partition=partition,
        box=box,
        stats=stats,
        converged=converged,
        certified=certified and converged,
        final_lam=lam,
        final_sigma=sigma,
    )


def _reconcile_partition(partition: AggregationPartition, box: StabilizationBox,
                         state: BranchState) -> tuple[AggregationPartition, StabilizationBox]:
    """Split any component that contains both endpoints of a cannot-link pair.

    Such a component asserts the pair always travels together, so no feasible
    column could ever cover it and the node's master would never close. Both
    halves inherit the parent's dual box.
    """
    box = StabilizationBox(dict(box.lower), dict(box.upper))
    for i, j in sorted(state.cannot_link):
        if partition.row_of_point[i] == partition.row_of_point[j]:
            old = partition
            partition = update_partition(partition, {i})
            box = box.carry_over(split_origin(partition, old))
    return partition, box


def _apply_box_update(prog, box: StabilizationBox, active_bounds) -> StabilizationBox:
    from .master import update_box

    new_box = update_box(box, active_bounds)
    for cid, j in prog.meta["xi"].items():
        prog.set_cost(j, -new_box.lower[cid])
    for cid, j in prog.meta["eta"].items():
        prog.set_cost(j, new_box.upper[cid])
    return new_box


def _extract_incumbent(instance: Instance, msol: MasterSolution, pool: ColumnPool,
                       k: int) -> Clustering | None:
    """Turn an integral master solution into a partition.

    Multiply-covered points stay with the closest selected centroid; emptied
    or shrunken clusters are recosted from scratch.
    """
    if msol.artificial_usage > 1e-6:
        return None
    z = msol.z
    if np.any((z > _INT_TOL) & (z < 1.0 - _INT_TOL)):
        return None
    selected = np.flatnonzero(z > 1.0 - _INT_TOL)
    if selected.size == 0 or selected.size > k:
        return None
    labels = np.full(instance.n, -1, dtype=np.intp)
    for i in range(instance.n):
        best = None
        for t in selected:
            col = pool[int(t)]
            if i in col.members:
                d = (instance.points[i, 0] - col.centroid[0]) ** 2 + (instance.points[i, 1] - col.centroid[1]) ** 2
                if best is None or d < best[0]:
                    best = (d, int(t))
        if best is None:
            return None
        labels[i] = best[1]
    return clustering_from_labels(instance, labels)


@dataclass
class SolveResult:
    clustering: Clustering
    objective: float
    lower_bound: float
    gap: float
    certified: bool
    nodes_explored: int
    stats: SolveStats
    status: str  # optimal | gap_not_closed | time_limit


def _child_columns(res: CgResult, upper_bound: float, node_lb: float) -> list:
    """Columns a child inherits: the basic ones plus positive-reduced-cost pool
    columns within the node's integrality gap, capped at twice the aggregation
    size."""
    pool = res.pool
    z = res.master.z
    basic = [pool[t] for t in np.flatnonzero(z > 1e-9)]
    lam, sigma = res.final_lam, res.final_sigma
    gap = max(0.0, upper_bound - node_lb)
    extras = []
    basic_set = {c.members for c in basic}
    for t, col in enumerate(pool):
        if col.members in basic_set:
            continue
        rc = col.cost + sigma - float(lam[list(col.members)].sum())
        if rc <= gap:
            extras.append((rc, col.members, col))
    extras.sort(key=lambda x: (x[0], x[1]))
    cap = 2 * res.partition.m
    return basic + [col for _, _, col in extras[:cap]]


def branch_and_price(instance: Instance, k: int, config: RunConfig) -> SolveResult:
    """Solve one instance to the configured relative gap.

    The incumbent starts from multi-start k-means; nodes are explored
    best-first by bound. Integral master solutions update the incumbent after
    cover-to-partition repair and an independent recosting.
    """
    t_start = time.monotonic()
    deadline = t_start + config.time_limit_seconds if config.time_limit_seconds else None

    x_bar = multi_start(instance, k, config.restarts, (config.seed, 11), init=config.kmeans_init)
    incumbent = clustering_from_labels(instance, x_bar.assignment)
    upper = incumbent.cost

    partition0 = initial_partition(instance, x_bar, config.aggregation_level, seed=(config.seed, 13))
    box0 = estimate_dual_bounds(instance, x_bar, partition0)
    root_cols = [make_column(instance, members) for members in x_bar.clusters() if len(members)]
    root = NodeRecord(0, 0, BranchState(), partition0, box0, root_cols, lower_bound=-np.inf)

    heap: list = []
    counter = 0
    heapq.heappush(heap, (-np.inf, counter, root))
    stats = SolveStats(m_start=partition0.m)
    iter_weighted_m = 0.0
    holes: list[float] = []  # bounds of subtrees abandoned without certification
    timed_out = False
    global_lb = -np.inf

    while heap:
        lb_est, _, node = heapq.heappop(heap)
        global_lb = max(global_lb, min(lb_est, upper))
        if _relative_gap(upper, global_lb) <= config.epsilon + _GAP_SLACK:
            heapq.heappush(heap, (lb_est, -1, node))  # put back: still open, but done
            break
        if deadline is not None and time.monotonic() > deadline:
            heapq.heappush(heap, (lb_est, -1, node))
            timed_out = True
            break

        res = column_generation(instance, k, node, config, upper_bound=upper, deadline=deadline)
        stats.nodes_explored += 1
        stats.cg_iterations += res.stats.cg_iterations
        stats.q_updates += res.stats.q_updates
        stats.master_time += res.stats.master_time
        stats.pricing_time += res.stats.pricing_time
        iter_weighted_m += res.stats.m_avg * res.stats.cg_iterations
        if res.stats.q_updates:
            stats.u_avg = ((stats.u_avg * (stats.q_updates - res.stats.q_updates))
                           + res.stats.u_avg * res.stats.q_updates) / stats.q_updates
        node_lb = max(res.lower_bound, node.lower_bound if np.isfinite(node.lower_bound) else -np.inf)

        if node.node_id == 0:
            stats.m_end = res.stats.m_end
            stats.root_gap_percent = 100.0 * _relative_gap(upper, node_lb)

        candidate = _extract_incumbent(instance, res.master, res.pool, k) if res.master else None
        if candidate is not None and candidate.cost < upper - 1e-12:
            incumbent = candidate
            upper = candidate.cost
            if node.node_id == 0:
                stats.root_gap_percent = 100.0 * _relative_gap(upper, node_lb)

        if not res.certified:
            holes.append(node_lb)
            continue
        if _relative_gap(upper, node_lb) <= config.epsilon + _GAP_SLACK:
            continue  # fathomed
        if candidate is not None:
            continue  # integral and not fathomed: optimum found at this node

        try:
            i1, i2 = find_branch_pair(res.master, res.pool)
        except SolutionIntegral:
            # not fathomed, yet nothing to branch on: never silently certify
            holes.append(node_lb)
            continue
        inherit = _child_columns(res, upper, node_lb)
        for child_state in (node.state.with_must(i1, i2), node.state.with_cannot(i1, i2)):
            if not child_state.is_feasible(instance.n):
                continue
            cols = [c for c in inherit if child_state.column_ok(c.members)]
            counter += 1
            child = NodeRecord(counter, node.depth + 1, child_state, res.partition,
                               res.box, cols, lower_bound=node_lb)
            heapq.heappush(heap, (node_lb, counter, child))

    open_bounds = [entry[0] for entry in heap] + holes
    final_lb = min(open_bounds) if open_bounds else upper
    gap = _relative_gap(upper, final_lb)
    certified = gap <= config.epsilon + _GAP_SLACK and not timed_out

    incumbent = clustering_from_labels(instance, incumbent.assignment)
    stats.m_avg = iter_weighted_m / stats.cg_iterations if stats.cg_iterations else float(stats.m_start)
    stats.total_time = time.monotonic() - t_start
    if timed_out:
        status = "time_limit"
    elif certified:
        status = "optimal"
    else:
        status = "gap_not_closed"
    return SolveResult(
        clustering=incumbent,
        objective=incumbent.cost,
        lower_bound=final_lb,
        gap=gap,
        certified=certified,
        nodes_explored=stats.nodes_explored,
        stats=stats,
        status=status,
    )


def solve_root(instance: Instance, k: int, config: RunConfig,
               deadline: float | None = None) -> tuple[CgResult, Clustering]:
    """Run the column-generation loop at the root only (ablation entry point)."""
    x_bar = multi_start(instance, k, config.restarts, (config.seed, 11), init=config.kmeans_init)
    partition0 = initial_partition(instance, x_bar, config.aggregation_level, seed=(config.seed, 13))
    box0 = estimate_dual_bounds(instance, x_bar, partition0)
    root_cols = [make_column(instance, members) for members in x_bar.clusters() if len(members)]
    root = NodeRecord(0, 0, BranchState(), partition0, box0, root_cols, lower_bound=-np.inf)
    res = column_generation(instance, k, root, config, upper_bound=x_bar.cost, deadline=deadline)
    return res, x_bar
