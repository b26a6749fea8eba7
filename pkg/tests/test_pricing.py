import numpy as np
import pytest

from conftest import dual_scale, random_instance
from mssc.aggregation import AggregationPartition, count_incompatibilities
from mssc.instance import Instance, cluster_cost
from mssc.master import make_column
from mssc.pricing import (PricingInput, TooLarge, candidate_centers, oracle_price, price,
                          reduced_cost, refine_center)


def test_reduced_cost_formula(rng):
    inst = random_instance(rng, 8)
    col = make_column(inst, [1, 4, 6])
    lam = rng.uniform(0, 10, 8)
    sigma = 3.0
    rc = reduced_cost(col, lam, sigma)
    assert rc == pytest.approx(col.cost + sigma - lam[[1, 4, 6]].sum(), rel=1e-12)
    # zero duals: reduced cost is the (nonnegative) cluster cost
    assert reduced_cost(col, np.zeros(8), 0.0) == pytest.approx(col.cost)
    single = make_column(inst, [2])
    assert reduced_cost(single, lam, sigma) == pytest.approx(sigma - lam[2])


def test_candidate_centers_tangent_pair():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    lam = np.array([1.0, 1.0])  # unit discs touching at (1, 0)
    cands = candidate_centers(pts, lam)
    assert len(cands) == 3  # the two centers plus one tangency point
    assert any(np.allclose(c, [1.0, 0.0], atol=1e-9) for c in cands)


def test_candidate_centers_proper_intersection():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    lam = np.array([2.0, 2.0])
    cands = candidate_centers(pts, lam)
    assert len(cands) == 4
    found = {tuple(np.round(c, 9)) for c in map(tuple, cands)}
    assert (1.0, 1.0) in found and (1.0, -1.0) in found


def test_candidate_centers_count_bound(rng):
    n = 10
    pts = rng.uniform(0, 10, size=(n, 2))
    lam = rng.uniform(0, 40, size=n)
    cands = candidate_centers(pts, lam)
    assert len(cands) <= 2 * (n * (n - 1) // 2) + n


def test_candidate_centers_zero_radius(rng):
    pts = rng.uniform(0, 10, size=(5, 2))
    lam = np.zeros(5)
    cands = candidate_centers(pts, lam)
    assert np.array_equal(cands, pts)


def test_refine_center_singleton_attractor():
    pts = np.array([[0.0, 0.0], [10.0, 0.0]])
    lam = np.array([1.0, 0.5])
    y, members = refine_center(pts, lam, np.array([0.2, 0.0]))
    assert members == (0,)
    assert np.allclose(y, [0.0, 0.0])


def test_refine_center_symmetric_pair():
    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    lam = np.array([4.0, 4.0])  # both discs contain the midpoint
    y, members = refine_center(pts, lam, np.array([1.0, 0.1]))
    assert members == (0, 1)
    assert np.allclose(y, [1.0, 0.0])


def test_refine_center_objective_monotone(rng):
    # relaxed objective never increases along the refinement path
    for _ in range(40):
        n = int(rng.integers(3, 10))
        pts = rng.uniform(0, 20, size=(n, 2))
        scale = dual_scale(pts)
        lam = rng.uniform(0, scale, size=n)
        y = rng.uniform(-5, 25, size=2)

        def g(y):
            sq = ((pts - y) ** 2).sum(axis=1)
            return float(np.minimum(0.0, sq - lam).sum())

        prev = g(y)
        for _ in range(100):
            sq = ((pts - y) ** 2).sum(axis=1)
            members = np.flatnonzero(sq <= lam)
            if members.size == 0:
                break
            y2 = pts[members].mean(axis=0)
            cur = g(y2)
            assert cur <= prev + 1e-9 * max(1.0, abs(prev))
            if np.allclose(y2, y):
                break
            y, prev = y2, cur


def test_price_zero_duals_returns_nothing(rng):
    inst = random_instance(rng, 8)
    out = price(inst.points, PricingInput(np.zeros(8), 0.0, None, 10))
    assert out.columns == [] and out.compatible == []
    assert out.best_reduced_cost >= 0.0


def test_price_matches_oracle_on_random_duals(rng):
    for trial in range(40):
        n = int(rng.integers(4, 13))
        pts = rng.uniform(0, 100, size=(n, 2))
        scale = dual_scale(pts)
        lam = rng.uniform(0, 1.5 * scale, size=n) * (rng.random(n) < 0.85)
        sigma = float(rng.uniform(0, 0.3 * scale))
        out = price(pts, PricingInput(lam, sigma, None, 10))
        members, val = oracle_price(pts, lam, sigma)
        assert out.best_reduced_cost == pytest.approx(val, abs=1e-6), trial
        if val < -1e-6:
            top = out.columns[0]
            assert top[1] == pytest.approx(val, abs=1e-6)


def test_price_output_contracts(rng):
    n = 12
    pts = rng.uniform(0, 50, size=(n, 2))
    scale = dual_scale(pts)
    lam = rng.uniform(0, 2 * scale, size=n)
    q = AggregationPartition.from_components([[0, 1, 2], [3, 4], *[[i] for i in range(5, n)]], n)
    out = price(pts, PricingInput(lam, 0.0, q, max_columns=3))
    compat_members = {c.members for c, _ in out.compatible}
    all_members = {c.members for c, _ in out.columns}
    assert compat_members <= all_members  # compatible subset always represented
    assert len(out.compatible) <= 3
    for col, rc in out.columns:
        assert rc < -1e-6
        cost, cen = cluster_cost(Instance("chk", pts), col.members)
        assert col.cost == pytest.approx(cost, rel=1e-9, abs=1e-12)
        assert np.allclose(col.centroid, cen, atol=1e-9)
    for col, _ in out.compatible:
        assert count_incompatibilities(col.members, q) == 0
    rcs = [rc for _, rc in out.columns]
    assert rcs == sorted(rcs)


def test_price_deterministic(rng):
    n = 10
    pts = rng.uniform(0, 50, size=(n, 2))
    lam = rng.uniform(0, dual_scale(pts), size=n)
    a = price(pts, PricingInput(lam, 1.0, None, 5))
    b = price(pts, PricingInput(lam, 1.0, None, 5))
    assert [(c.members, rc) for c, rc in a.columns] == [(c.members, rc) for c, rc in b.columns]
    assert a.best_reduced_cost == b.best_reduced_cost


def test_oracle_price_tiny_cases():
    pts = np.array([[0.0, 0.0]])
    members, val = oracle_price(pts, np.array([3.0]), 1.0)
    assert members == (0,) and val == pytest.approx(1.0 - 3.0)

    pts = np.array([[0.0, 0.0], [2.0, 0.0]])
    lam = np.array([100.0, 100.0])
    members, val = oracle_price(pts, lam, 0.0)
    # both points: cost 2, duals dominate; beats either singleton
    assert members == (0, 1)
    assert val == pytest.approx(2.0 - 200.0)


def test_oracle_price_too_large():
    pts = np.zeros((21, 2))
    with pytest.raises(TooLarge):
        oracle_price(pts, np.zeros(21), 0.0)
