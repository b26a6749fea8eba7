import itertools

import numpy as np
import pytest

from conftest import blob_instance, random_instance
from mssc import lp
from mssc.aggregation import AggregationPartition
from mssc.instance import Instance, cluster_cost
from mssc.kmeans import multi_start
from mssc.master import (ColumnPool, ComponentSpansClusters, IncompatibleColumnInPool,
                         StabilizationBox, add_pool_columns, build_agrmp, estimate_dual_bounds,
                         make_column, solve_master, update_box)
from oracles import exact_mssc, tableau_simplex


def _full_enumeration_pool(instance):
    pool = ColumnPool(instance.n)
    for r in range(1, instance.n + 1):
        for members in itertools.combinations(range(instance.n), r):
            pool.add(make_column(instance, members))
    return pool


def _unbounded_box(partition):
    return StabilizationBox.unbounded(partition)


def test_column_invariants(rng):
    inst = random_instance(rng, 6)
    col = make_column(inst, [0, 3, 5])
    cost, cen = cluster_cost(inst, [0, 3, 5])
    assert col.cost == pytest.approx(cost, rel=1e-12)
    assert np.allclose(col.centroid, cen)
    assert col.members == (0, 3, 5)


def test_pool_deduplicates(rng):
    inst = random_instance(rng, 5)
    pool = ColumnPool(5)
    c = make_column(inst, [1, 2])
    t1, new1 = pool.add(c)
    t2, new2 = pool.add(make_column(inst, [2, 1]))
    assert t1 == t2 and new1 and not new2
    assert len(pool) == 1
    assert pool.mask_matrix[0, 1] and pool.mask_matrix[0, 2]


def test_full_pool_singleton_partition_equals_exact_optimum(rng):
    inst = random_instance(rng, 4, name="tiny4")
    k = 2
    pool = _full_enumeration_pool(inst)
    q = AggregationPartition.singletons(4)
    prog = build_agrmp(pool, q, k, _unbounded_box(q))
    sol = solve_master(prog)
    assert sol.objective == pytest.approx(exact_mssc(inst.points, k), rel=1e-9)
    assert sol.sigma >= 0.0
    assert np.all(sol.lam_bar >= 0.0)
    assert float(sol.z.sum()) <= k + 1e-7


def test_agrmp_against_tableau_oracle(rng):
    # full column enumeration on a 4-point toy, stabilization switched off
    inst = random_instance(rng, 4, name="t4")
    pool = _full_enumeration_pool(inst)
    q = AggregationPartition.singletons(4)
    prog = build_agrmp(pool, q, 2, None)
    sol = solve_master(prog)
    costs = [c.cost for c in pool]
    A = np.zeros((5, len(pool)))
    for t, col in enumerate(pool):
        for i in col.members:
            A[i, t] = 1.0
        A[4, t] = 1.0
    status, obj, _ = tableau_simplex(costs, A, [">="] * 4 + ["<="], np.array([1.0] * 4 + [2.0]))
    assert status == "Optimal"
    assert sol.objective == pytest.approx(obj, rel=1e-9)


def test_agrmp_single_combination(rng):
    # aggregated toy where only the incumbent columns fit the aggregation
    inst = blob_instance(rng, 6, 2, name="six")
    x = multi_start(inst, 2, restarts=30, seed=0)
    q = AggregationPartition.from_components([m.tolist() for m in x.clusters()], 6)
    pool = ColumnPool(6)
    for m in x.clusters():
        pool.add(make_column(inst, m))
    prog = build_agrmp(pool, q, 2, _unbounded_box(q))
    sol = solve_master(prog)
    assert sol.objective == pytest.approx(x.cost, rel=1e-9)


def test_build_agrmp_rejects_incompatible_pool(rng):
    inst = random_instance(rng, 4)
    q = AggregationPartition.from_components([[0, 1], [2, 3]], 4)
    pool = ColumnPool(4)
    pool.add(make_column(inst, [0, 2]))
    with pytest.raises(IncompatibleColumnInPool):
        build_agrmp(pool, q, 2, _unbounded_box(q))


def test_stabilization_neutral_with_unbounded_box(rng):
    for trial in range(10):
        inst = random_instance(rng, 6, name=f"s{trial}")
        pool = _full_enumeration_pool(inst)
        q = AggregationPartition.singletons(6)
        k = int(rng.integers(1, 4))
        plain = solve_master(build_agrmp(pool, q, k, None))
        stab = solve_master(build_agrmp(pool, q, k, _unbounded_box(q)))
        assert stab.objective == pytest.approx(plain.objective, rel=1e-6)
        assert not stab.active_bounds


def test_tight_box_detected_active_then_widened(rng):
    inst = random_instance(rng, 5)
    pool = _full_enumeration_pool(inst)
    q = AggregationPartition.singletons(5)
    ref = solve_master(build_agrmp(pool, q, 2, None))
    # squeeze all duals into a tiny wrong box around zero
    tight = StabilizationBox({cid: 0.0 for cid in q.ids}, {cid: 1e-6 for cid in q.ids})
    sol = solve_master(build_agrmp(pool, q, 2, tight))
    assert sol.active_bounds  # the squeeze must be visible
    box = tight
    for _ in range(200):
        box = update_box(box, sol.active_bounds)
        prev = sol.objective
        sol = solve_master(build_agrmp(pool, q, 2, box))
        # widening relaxes the penalty structure toward the plain problem:
        # the optimum climbs monotonically and never passes it
        assert sol.objective >= prev - 1e-9 * max(1.0, abs(prev))
        assert sol.objective <= ref.objective + 1e-6 * max(1.0, ref.objective)
        if not sol.active_bounds:
            break
    assert not sol.active_bounds
    assert sol.objective == pytest.approx(ref.objective, rel=1e-6)


def test_update_box_arithmetic():
    box = StabilizationBox({0: 2.0, 1: 0.0, 2: 5.0}, {0: 6.0, 1: 4.0, 2: 5.0})
    out = update_box(box, {0: "upper", 1: "lower", 2: "upper"})
    assert out.lower[0] == 0.0 and out.upper[0] == 8.0
    assert out.lower[1] == 0.0 and out.upper[1] == 6.0
    # degenerate width widens by max(1, 0.05*upper)
    assert out.lower[2] == 4.0 and out.upper[2] == 6.0
    # untouched rows stay put
    out2 = update_box(box, {0: "upper"})
    assert out2.lower[1] == 0.0 and out2.upper[1] == 4.0


def test_estimate_dual_bounds_formulas(rng):
    inst = blob_instance(rng, 12, 3, name="b12")
    x = multi_start(inst, 3, restarts=40, seed=2)
    clusters = [set(m.tolist()) for m in x.clusters()]
    q = AggregationPartition.from_components([sorted(c) for c in clusters], 12)
    box = estimate_dual_bounds(inst, x, q)
    for row, cid in enumerate(q.ids):
        members = set(q.components[row])
        s = next(i for i, c in enumerate(clusters) if members <= c)
        c_s = cluster_cost(inst, clusters[s])[0]
        rest = clusters[s] - members
        c_without = cluster_cost(inst, rest)[0] if rest else 0.0
        expected_lo = c_s - c_without
        ups = []
        for s2 in range(3):
            if s2 == s:
                continue
            ups.append(cluster_cost(inst, clusters[s2] | members)[0] - cluster_cost(inst, clusters[s2])[0])
        expected_up = min(ups)
        assert box.upper[cid] == pytest.approx(expected_up, rel=1e-9)
        assert box.lower[cid] == pytest.approx(max(0.0, min(expected_lo, expected_up)), rel=1e-9)
        # component equals the whole cluster: removal empties it
        if members == clusters[s]:
            assert box.lower[cid] == pytest.approx(max(0.0, min(c_s, expected_up)), rel=1e-9)


def test_estimate_dual_bounds_k1(rng):
    inst = random_instance(rng, 6)
    x = multi_start(inst, 1, restarts=1, seed=0)
    q = AggregationPartition.from_components([list(range(6))], 6)
    box = estimate_dual_bounds(inst, x, q)
    assert box.upper[q.ids[0]] == np.inf
    assert box.lower[q.ids[0]] == pytest.approx(x.cost, rel=1e-9)


def test_estimate_dual_bounds_spanning_component(rng):
    inst = random_instance(rng, 6)
    x = multi_start(inst, 2, restarts=20, seed=1)
    a = int(np.flatnonzero(x.assignment == 0)[0])
    b = int(np.flatnonzero(x.assignment == 1)[0])
    rest = [i for i in range(6) if i not in (a, b)]
    q = AggregationPartition.from_components([[a, b]] + [[i] for i in rest], 6)
    with pytest.raises(ComponentSpansClusters):
        estimate_dual_bounds(inst, x, q)


def test_add_pool_columns_keeps_master_consistent(rng):
    inst = random_instance(rng, 6)
    q = AggregationPartition.singletons(6)
    pool = ColumnPool(6)
    pool.add(make_column(inst, range(6)))
    prog = build_agrmp(pool, q, 2, _unbounded_box(q))
    first = solve_master(prog)
    x = multi_start(inst, 2, restarts=20, seed=0)
    added = []
    for m in x.clusters():
        t, new = pool.add(make_column(inst, m))
        if new:
            added.append(t)
    add_pool_columns(prog, pool, q, added)
    second = solve_master(prog, warm=first.basis)
    assert second.objective <= first.objective + 1e-9
    cold = solve_master(prog)
    assert second.objective == pytest.approx(cold.objective, rel=1e-9)
    assert len(second.z) == len(pool)


def test_duplicate_columns_never_change_optimum(rng):
    inst = random_instance(rng, 5)
    q = AggregationPartition.singletons(5)
    pool = ColumnPool(5)
    x = multi_start(inst, 2, restarts=10, seed=3)
    for m in x.clusters():
        pool.add(make_column(inst, m))
    prog = build_agrmp(pool, q, 2, _unbounded_box(q))
    a = solve_master(prog)
    for m in x.clusters():
        pool.add(make_column(inst, m))  # ignored duplicates
    assert len(pool) == x.k
    b = solve_master(build_agrmp(pool, q, 2, _unbounded_box(q)))
    assert a.objective == pytest.approx(b.objective, rel=1e-12)
