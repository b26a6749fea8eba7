"""Ryan-Foster branching and pricing under pairwise constraints.

Branching fixes a pair of points to share a cluster (must-link) or not
(cannot-link). Must-link pairs are contracted into groups before pricing;
cannot-link pairs become edges of a conflict graph on those groups. When that
graph is bipartite the fixed-center assignment subproblem has a totally
unimodular constraint matrix and its LP relaxation is integral; otherwise the
constrained groups are enumerated. Exact pricing under constraints uses the
pairwise-distance ratio form of the problem, driven by a Dinkelbach loop over
an implicit-enumeration inner solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import lp as lpmod
from .aggregation import AggregationPartition
from .master import Column, ColumnPool
from .pricing import NEG_RC_TOL, PricingOutput, assemble_output


class InfeasibleConstraints(ValueError):
    pass


class SolutionIntegral(ValueError):
    pass


class TooLargeForExact(ValueError):
    pass


def _norm(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class BranchState:
    """Accumulated must-link / cannot-link pairs along a branch."""

    must_link: frozenset = frozenset()
    cannot_link: frozenset = frozenset()
    depth: int = 0

    def with_must(self, i: int, j: int) -> "BranchState":
        return replace(self, must_link=self.must_link | {_norm(i, j)}, depth=self.depth + 1)

    def with_cannot(self, i: int, j: int) -> "BranchState":
        return replace(self, cannot_link=self.cannot_link | {_norm(i, j)}, depth=self.depth + 1)

    def groups(self, n: int) -> list[tuple[int, ...]]:
        """Must-link closure: one group per transitively linked set, singletons
        for untouched points. Deterministic order by smallest member."""
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in sorted(self.must_link):
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        buckets: dict[int, list[int]] = {}
        for i in range(n):
            buckets.setdefault(find(i), []).append(i)
        return [tuple(buckets[r]) for r in sorted(buckets)]

    def is_feasible(self, n: int) -> bool:
        """False when a cannot-link pair is forced together by must-links."""
        group_of = {}
        for g, members in enumerate(self.groups(n)):
            for i in members:
                group_of[i] = g
        return all(group_of[i] != group_of[j] for i, j in self.cannot_link)

    def column_ok(self, members) -> bool:
        """A column must contain both or neither endpoint of every must-link
        pair, and never both endpoints of a cannot-link pair."""
        mset = members if isinstance(members, (set, frozenset)) else set(members)
        for i, j in self.must_link:
            if (i in mset) != (j in mset):
                return False
        for i, j in self.cannot_link:
            if i in mset and j in mset:
                return False
        return True


def find_branch_pair(master_solution, pool: ColumnPool, tol: float = 1e-6) -> tuple[int, int]:
    """Pick the row pair to branch on from a fractional master solution.

    Eligible pairs have one fractional column covering both rows and another
    covering exactly one. Among them the pair whose combined fractional
    coverage is most ambiguous (min(f, 1-f) largest) wins; ties go to the
    lexicographically smallest pair.
    """
    z = np.asarray(master_solution.z)
    masks = pool.mask_matrix
    frac = np.flatnonzero((z > tol) & (z < 1.0 - tol))
    if frac.size == 0:
        raise SolutionIntegral("master solution is integral")
    active = np.flatnonzero(z > tol)
    z_act = z[active]
    m_act = masks[active]

    candidates = set()
    for t in frac:
        members = pool[t].members
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                candidates.add((members[a_idx], members[b_idx]))

    frac_cols = masks[frac]
    best_key = None
    best_pair = None
    for a, b in sorted(candidates):
        together = m_act[:, a] & m_act[:, b]
        f = float(z_act[together].sum())
        has_a_only = bool(np.any(frac_cols[:, a] & ~frac_cols[:, b]))
        has_b_only = bool(np.any(frac_cols[:, b] & ~frac_cols[:, a]))
        has_both = bool(np.any(frac_cols[:, a] & frac_cols[:, b]))
        if not has_both or not (has_a_only or has_b_only):
            continue
        # orient so some fractional witness contains the first row but not the second
        pair = (a, b) if has_a_only else (b, a)
        key = (-min(f, 1.0 - f), a, b)
        if best_key is None or key < best_key:
            best_key = key
            best_pair = pair
    if best_pair is None:
        raise SolutionIntegral("no eligible branching pair (solution integral up to tolerance)")
    return best_pair


def is_bipartite_cl_graph(cannot_link, must_link, n: int | None = None) -> bool:
    """Two-colorability of the cannot-link graph after must-link contraction."""
    state = BranchState(frozenset(_norm(*p) for p in must_link),
                        frozenset(_norm(*p) for p in cannot_link))
    points = sorted({i for p in state.must_link | state.cannot_link for i in p})
    if n is None:
        n = (points[-1] + 1) if points else 0
    if n == 0:
        return True
    group_of = {}
    for g, members in enumerate(state.groups(n)):
        for i in members:
            group_of[i] = g
    adj: dict[int, set[int]] = {}
    for i, j in state.cannot_link:
        gi, gj = group_of[i], group_of[j]
        if gi == gj:
            return False
        adj.setdefault(gi, set()).add(gj)
        adj.setdefault(gj, set()).add(gi)
    color: dict[int, int] = {}
    for start in sorted(adj):
        if start in color:
            continue
        color[start] = 0
        queue = [start]
        while queue:
            u = queue.pop()
            for v in sorted(adj[u]):
                if v not in color:
                    color[v] = color[u] ^ 1
                    queue.append(v)
                elif color[v] == color[u]:
                    return False
    return True


def assignment_lp(weights, edges):
    """LP relaxation of min sum(w_g v_g) s.t. v_a + v_b <= 1, v in [0,1].

    Integral whenever the edge graph is bipartite (totally unimodular
    constraints); exposed separately so that property can be checked directly.
    """
    prog = lpmod.LinearProgram()
    for g, w in enumerate(weights):
        prog.add_variable(float(w), lb=0.0, ub=1.0, name=f"v{g}")
    for a, b in edges:
        prog.add_row(lpmod.LEQ, 1.0, [(a, 1.0), (b, 1.0)])
    sol = lpmod.solve(prog)
    if sol.status != lpmod.OPTIMAL:
        raise lpmod.NumericalFailure(f"assignment LP status {sol.status}")
    return sol.primal, sol.objective


def _enumerate_selection(weights, edges, node_count):
    """Exact min of sum(w_g v_g) under pairwise exclusions by pruned DFS."""
    adj = [[] for _ in range(node_count)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    order = sorted(range(node_count))
    suffix_gain = [0.0] * (node_count + 1)
    for pos in range(node_count - 1, -1, -1):
        suffix_gain[pos] = suffix_gain[pos + 1] + min(0.0, weights[order[pos]])

    best = [0.0, ()]  # value, chosen
    chosen: list[int] = []

    def dfs(pos, value):
        if value + suffix_gain[pos] >= best[0] - 1e-15:
            return
        if pos == node_count:
            best[0] = value
            best[1] = tuple(chosen)
            return
        g = order[pos]
        blocked = any(h in chosen_set for h in adj[g])
        if not blocked and weights[g] < 0:
            chosen.append(g)
            chosen_set.add(g)
            dfs(pos + 1, value + weights[g])
            chosen.pop()
            chosen_set.remove(g)
            dfs(pos + 1, value)
        else:
            dfs(pos + 1, value)
            if not blocked:
                chosen.append(g)
                chosen_set.add(g)
                dfs(pos + 1, value + weights[g])
                chosen.pop()
                chosen_set.remove(g)

    chosen_set: set[int] = set()
    dfs(0, 0.0)
    return best[1]


def assignment_step(points, lam, sigma, y_bar, state: BranchState) -> np.ndarray:
    """Optimal member set for a fixed center under the branch constraints.

    Unconstrained groups join exactly when their aggregate coefficient is
    negative; groups touched by cannot-link edges are optimized jointly, via
    the LP relaxation when the conflict graph is bipartite and by enumeration
    otherwise.
    """
    points = np.asarray(points, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    n = points.shape[0]
    coef = ((points - np.asarray(y_bar, dtype=np.float64)) ** 2).sum(axis=1) - lam

    groups = state.groups(n)
    group_of = np.empty(n, dtype=np.intp)
    for g, members in enumerate(groups):
        for i in members:
            group_of[i] = g
    w = np.zeros(len(groups))
    np.add.at(w, group_of, coef)

    edges = set()
    for i, j in state.cannot_link:
        gi, gj = int(group_of[i]), int(group_of[j])
        if gi == gj:
            raise InfeasibleConstraints(f"cannot-link ({i},{j}) inside a must-link group")
        edges.add(_norm(gi, gj))
    constrained = sorted({g for e in edges for g in e})

    selected = {g for g in range(len(groups)) if g not in constrained and w[g] < 0.0}
    if constrained:
        local = {g: idx for idx, g in enumerate(constrained)}
        local_w = [float(w[g]) for g in constrained]
        local_edges = [(local[a], local[b]) for a, b in sorted(edges)]
        if is_bipartite_cl_graph(state.cannot_link, state.must_link, n=n):
            values, _ = assignment_lp(local_w, local_edges)
            picked = {constrained[idx] for idx in np.flatnonzero(values > 0.5)}
        else:
            picked = {constrained[idx] for idx in _enumerate_selection(local_w, local_edges, len(constrained))}
        selected |= picked

    members = sorted(i for g in selected for i in groups[g])
    return np.array(members, dtype=np.intp)


def heuristic_constrained_pricing(points, lam, sigma, state: BranchState, seeds,
                                  partition: AggregationPartition | None = None,
                                  tol: float = NEG_RC_TOL, max_rounds: int = 200,
                                  max_columns: int | None = None,
                                  trace: list | None = None) -> PricingOutput:
    """Alternating assignment/centroid heuristic seeded by unconstrained columns.

    Each seed's center starts the loop; the member set can only take finitely
    many values and the objective never increases, so every run terminates.
    Results are deduplicated, scored, and split like the unconstrained pricer.
    """
    points = np.asarray(points, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    found: dict[tuple, tuple[Column, float]] = {}
    best_rc = np.inf

    for seed in seeds:
        col = seed[0] if isinstance(seed, tuple) else seed
        y = np.asarray(col.centroid, dtype=np.float64)
        seen = set()
        members = None
        run_trace = [] if trace is not None else None
        for _ in range(max_rounds):
            sel = assignment_step(points, lam, sigma, y, state)
            key = sel.tobytes()
            if sel.size == 0:
                members = None
                break
            y = points[sel].mean(axis=0)
            if run_trace is not None:
                diff = points[sel] - y
                run_trace.append(float(sigma + (diff ** 2).sum() - lam[sel].sum()))
            if key in seen:
                members = sel
                break
            seen.add(key)
            members = sel
        if trace is not None:
            trace.append(run_trace)
        if members is None or members.size == 0:
            continue
        centroid = points[members].mean(axis=0)
        diff = points[members] - centroid
        cost = float((diff ** 2).sum())
        rc = cost + sigma - float(lam[members].sum())
        best_rc = min(best_rc, rc)
        if rc < -tol:
            tup = tuple(int(i) for i in members)
            if tup not in found:
                found[tup] = (Column(tup, cost, (float(centroid[0]), float(centroid[1]))), rc)

    return assemble_output(list(found.values()), partition, max_columns, best_rc)


def _group_quadratic(points, lam, groups):
    """Pairwise-form coefficients aggregated to must-link groups."""
    points = np.asarray(points, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    n = points.shape[0]
    diff = points[:, None, :] - points[None, :, :]
    D = (diff ** 2).sum(axis=2)
    P = D - lam[:, None] - lam[None, :]  # pair coefficient for i != j
    G = len(groups)
    group_of = np.empty(n, dtype=np.intp)
    for g, members in enumerate(groups):
        for i in members:
            group_of[i] = g
    ind = np.zeros((G, n))
    ind[group_of, np.arange(n)] = 1.0
    A = ind @ P @ ind.T
    # diag(A) = 2*sum of within-group pair coefficients - 2*sum of member duals,
    # which is twice the group's linear coefficient in the selection objective
    lin = np.diag(A) / 2.0
    sizes = np.array([len(g) for g in groups], dtype=np.float64)
    A = A.copy()
    np.fill_diagonal(A, 0.0)
    return A, lin, sizes


def _inner_minimum(A, lin, edges_adj, order):
    """Min of the group quadratic over nonempty selections honoring exclusions."""
    G = len(lin)
    best_val = np.inf
    best_sel: tuple[int, ...] = ()
    neg_bound = np.minimum(A, 0.0).sum(axis=1)

    sel: list[int] = []
    sel_set: set[int] = set()

    def dfs(pos, value):
        nonlocal best_val, best_sel
        if sel and value < best_val:
            best_val = value
            best_sel = tuple(sel)
        if pos == G:
            return
        remaining = 0.0
        for idx in range(pos, G):
            g = order[idx]
            gain = lin[g] + neg_bound[g] + sum(A[g, h] for h in sel if A[g, h] > 0)
            remaining += min(0.0, gain)
        if value + remaining >= best_val - 1e-15:
            return
        g = order[pos]
        blocked = any(h in sel_set for h in edges_adj[g])
        if not blocked:
            delta = lin[g] + sum(A[g, h] for h in sel)
            sel.append(g)
            sel_set.add(g)
            dfs(pos + 1, value + delta)
            sel.pop()
            sel_set.remove(g)
        dfs(pos + 1, value)

    dfs(0, 0.0)
    return best_val, best_sel


def exact_constrained_pricing(points, lam, sigma, state: BranchState,
                              group_cap: int = 30, q_init: float | None = None,
                              q_init_members=None,
                              q_trace: list | None = None) -> tuple[tuple[int, ...], float]:
    """Globally optimal pricing under branch constraints via a Dinkelbach loop.

    Minimizes the pairwise-form ratio over nonempty feasible selections of
    must-link groups. The inner parametric problems are binary quadratics
    solved by pruned implicit enumeration, so the number of groups is capped.
    The start ratio must be achieved by a feasible selection for the stopping
    rule to certify optimality, so the loop starts from the best single group
    (or a caller-supplied column that does better).
    """
    points = np.asarray(points, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    n = points.shape[0]
    groups = state.groups(n)
    if len(groups) > group_cap:
        raise TooLargeForExact(f"{len(groups)} groups exceeds exact-pricing cap {group_cap}")
    group_of = {}
    for g, members in enumerate(groups):
        for i in members:
            group_of[i] = g
    adj: list[set[int]] = [set() for _ in groups]
    for i, j in state.cannot_link:
        gi, gj = group_of[i], group_of[j]
        if gi == gj:
            raise InfeasibleConstraints(f"cannot-link ({i},{j}) inside a must-link group")
        adj[gi].add(gj)
        adj[gj].add(gi)

    A, lin, sizes = _group_quadratic(points, lam, groups)
    order = sorted(range(len(groups)), key=lambda g: lin[g] + np.minimum(A[g], 0.0).sum())

    g0 = int(np.argmin(lin / sizes))
    best_ratio = float(lin[g0] / sizes[g0])
    best_members = tuple(sorted(groups[g0]))
    if q_init is not None and q_init_members is not None and q_init < best_ratio:
        best_ratio = float(q_init)
        best_members = tuple(sorted(q_init_members))
    q = best_ratio

    for _ in range(100):
        if q_trace is not None:
            q_trace.append(q)
        val, sel = _inner_minimum(A, lin - q * sizes, adj, order)
        if val >= -1e-9 * max(1.0, abs(q)):
            break
        num = float(lin[list(sel)].sum() + sum(A[a, b] for ai, a in enumerate(sel) for b in sel[ai + 1:]))
        den = float(sizes[list(sel)].sum())
        ratio = num / den
        if ratio < best_ratio:
            best_ratio = ratio
            best_members = tuple(sorted(i for g in sel for i in groups[g]))
        q = ratio
    return best_members, float(sigma + best_ratio)
