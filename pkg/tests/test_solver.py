import time

import numpy as np
import pytest

from conftest import blob_instance, random_instance
from mssc.branching import BranchState
from mssc.config import RunConfig
from mssc.instance import Instance, cluster_cost
from mssc.kmeans import clustering_from_labels, initial_partition, multi_start
from mssc.master import estimate_dual_bounds, make_column
from mssc.solver import (NodeRecord, branch_and_price, column_generation, solve_root)
from oracles import exact_mssc


def _root_node(instance, k, config):
    x = multi_start(instance, k, config.restarts, (config.seed, 11))
    q = initial_partition(instance, x, config.aggregation_level, seed=(config.seed, 13))
    box = estimate_dual_bounds(instance, x, q)
    cols = [make_column(instance, m) for m in x.clusters() if len(m)]
    return NodeRecord(0, 0, BranchState(), q, box, cols, -np.inf), x


def test_root_bound_below_exact_and_tight_when_integral(rng):
    for trial in range(8):
        n = int(rng.integers(6, 11))
        k = int(rng.integers(2, 4))
        inst = random_instance(rng, n, name=f"r{trial}")
        opt = exact_mssc(inst.points, k)
        cfg = RunConfig(k=k, seed=trial, restarts=20, aggregation_level="k")
        res, x = solve_root(inst, k, cfg)
        assert res.converged and res.certified
        assert res.lower_bound <= opt + 1e-6 * max(1.0, opt)
        z = res.master.z
        integral = not np.any((z > 1e-6) & (z < 1 - 1e-6))
        if integral and res.master.artificial_usage < 1e-9:
            assert res.lower_bound == pytest.approx(opt, rel=1e-6)


def test_bound_equal_across_aggregation_levels(rng):
    inst = blob_instance(rng, 24, 3, name="lvl")
    bounds = {}
    for level in ("n", "n_half", "n_quarter", "k"):
        cfg = RunConfig(k=3, seed=0, restarts=30, aggregation_level=level)
        res, _ = solve_root(inst, 3, cfg)
        assert res.converged
        bounds[level] = res.lower_bound
    ref = bounds["n"]
    for level, lb in bounds.items():
        assert lb == pytest.approx(ref, rel=1e-6), bounds


def test_branch_and_price_matches_enumeration(rng):
    for trial in range(6):
        n = int(rng.integers(6, 10))
        k = int(rng.integers(2, 4))
        inst = random_instance(rng, n, name=f"bp{trial}")
        opt = exact_mssc(inst.points, k)
        cfg = RunConfig(k=k, epsilon=0.0, seed=trial, restarts=25)
        res = branch_and_price(inst, k, cfg)
        assert res.certified
        assert res.objective == pytest.approx(opt, rel=1e-6)
        # incumbent is a real partition with independently recomputed cost
        again = clustering_from_labels(inst, res.clustering.assignment)
        assert again.cost == pytest.approx(res.objective, rel=1e-9)
        assert again.k <= k


def test_k_equals_one_no_branching(rng):
    inst = random_instance(rng, 9)
    cfg = RunConfig(k=1, seed=0, restarts=2)
    res = branch_and_price(inst, 1, cfg)
    total, _ = cluster_cost(inst, range(9))
    assert res.objective == pytest.approx(total, rel=1e-9)
    assert res.nodes_explored == 1
    assert res.certified


def test_determinism_same_seed(rng):
    inst = blob_instance(rng, 20, 3, name="det")
    cfg = RunConfig(k=3, seed=7, restarts=15)
    a = branch_and_price(inst, 3, cfg)
    b = branch_and_price(inst, 3, cfg)
    assert a.objective == b.objective
    assert np.array_equal(a.clustering.assignment, b.clustering.assignment)
    sa, sb = a.stats.as_dict(), b.stats.as_dict()
    for key in ("cg_iterations", "m_start", "m_end", "q_updates", "nodes_explored"):
        assert sa[key] == sb[key]
    assert sa["m_avg"] == sb["m_avg"]
    assert sa["u_avg"] == sb["u_avg"]


def test_stats_fields_populated(rng):
    inst = blob_instance(rng, 18, 3, name="stats")
    cfg = RunConfig(k=3, seed=1, restarts=10, aggregation_level="n_quarter", columns_per_iter=1)
    res = branch_and_price(inst, 3, cfg)
    s = res.stats
    assert s.m_start <= s.m_end <= inst.n
    assert s.cg_iterations >= 1
    assert s.q_updates >= 0
    assert s.total_time > 0
    assert np.isfinite(s.root_gap_percent)
    assert 0 <= s.root_gap_percent < 100


def test_child_nodes_inherit_and_bound_dominates_parent(rng):
    # construct branch children by hand and check the invariants directly
    for trial in range(6):
        n = int(rng.integers(7, 11))
        k = 2
        inst = random_instance(rng, n, name=f"ch{trial}")
        cfg = RunConfig(k=k, seed=trial, restarts=15, aggregation_level="k")
        node, x = _root_node(inst, k, cfg)
        root = column_generation(inst, k, node, cfg, upper_bound=x.cost)
        assert root.converged
        i1, i2 = 0, 1
        for state in (BranchState().with_must(i1, i2), BranchState().with_cannot(i1, i2)):
            cols = [c for c in root.pool if state.column_ok(c.members)]
            child = NodeRecord(1, 1, state, root.partition, root.box, cols, root.lower_bound)
            res = column_generation(inst, k, child, cfg, upper_bound=x.cost)
            assert res.converged and res.certified
            assert res.lower_bound >= root.lower_bound - 1e-6 * max(1.0, abs(root.lower_bound))
            # node bound never exceeds the best constrained partition
            best = _constrained_exact(inst.points, k, state)
            assert res.lower_bound <= best + 1e-6 * max(1.0, best)


def _constrained_exact(points, k, state):
    n = len(points)
    best = np.inf

    def rec(i, labels, used):
        nonlocal best
        if i == n:
            for a, b in state.must_link:
                if labels[a] != labels[b]:
                    return
            for a, b in state.cannot_link:
                if labels[a] == labels[b]:
                    return
            cost = 0.0
            for c in range(used):
                mem = [j for j in range(n) if labels[j] == c]
                pts = points[mem]
                cost += ((pts - pts.mean(axis=0)) ** 2).sum()
            best = min(best, cost)
            return
        for c in range(min(used + 1, k)):
            labels[i] = c
            rec(i + 1, labels, max(used, c + 1))

    rec(0, [0] * n, 0)
    return float(best)


def test_constrained_nodes_respect_constraints(rng):
    # integral constrained master solutions obey the pair constraints
    for trial in range(4):
        n = 8
        inst = random_instance(rng, n, name=f"cn{trial}")
        cfg = RunConfig(k=2, seed=trial, restarts=10)
        node, x = _root_node(inst, 2, cfg)
        state = BranchState().with_cannot(0, 1).with_must(2, 3)
        cols = [c for c in node.columns if state.column_ok(c.members)]
        child = NodeRecord(1, 1, state, node.partition, node.box, cols, -np.inf)
        res = column_generation(inst, 2, child, cfg, upper_bound=x.cost)
        assert res.converged
        z = res.master.z
        for t in np.flatnonzero(z > 1e-6):
            assert state.column_ok(res.pool[t].members)
        best = _constrained_exact(inst.points, 2, state)
        assert res.lower_bound <= best + 1e-6 * max(1.0, best)


def test_time_limit_returns_flagged(rng):
    inst = blob_instance(rng, 40, 4, name="tl")
    cfg = RunConfig(k=4, seed=0, restarts=2, time_limit_seconds=1e-6)
    res = branch_and_price(inst, 4, cfg)
    assert res.status == "time_limit"
    assert not res.certified
    assert np.isfinite(res.objective)  # incumbent still reported


def test_sparse_disaggregation_full_run(rng):
    inst = blob_instance(rng, 16, 2, name="sp")
    opt = None
    for dis in ("average", "sparse"):
        cfg = RunConfig(k=2, seed=3, restarts=15, disaggregation=dis)
        res = branch_and_price(inst, 2, cfg)
        assert res.certified
        if opt is None:
            opt = res.objective
        else:
            assert res.objective == pytest.approx(opt, rel=1e-9)
