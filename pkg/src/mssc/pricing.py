"""Exact planar pricing via disc-intersection candidates.

A cluster prices negatively when its cost plus the cardinality dual falls
below the sum of its members' duals. Writing lam_i as a squared radius, the
point i wants to join a cluster centered at y exactly when y lies in the disc
of radius sqrt(lam_i) around p_i. The candidate optimal centers can therefore
be restricted to a quadratic-size set: all intersection points of the disc
boundaries plus the data points themselves. Each candidate is refined by
alternating "collect the discs containing y" / "move y to their barycenter",
which never increases the relaxed objective and reaches a fixed point after
finitely many set changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationPartition, count_incompatibilities
from .master import Column

NEG_RC_TOL = 1e-6

_TANGENT_RTOL = 1e-9
_ZERO_RADIUS = 1e-12


class TooLarge(ValueError):
    pass


@dataclass
class PricingInput:
    lam: np.ndarray
    sigma: float
    partition: AggregationPartition | None = None
    max_columns: int = 10


@dataclass
class PricingOutput:
    """Negative-reduced-cost columns found by one pricing round.

    ``columns`` holds (column, reduced_cost) pairs sorted by reduced cost;
    ``compatible`` is the subset compatible with the aggregation (always
    represented in ``columns`` even when incompatible candidates dominate).
    ``best_reduced_cost`` is the global minimum seen before any truncation.
    """

    columns: list = field(default_factory=list)
    compatible: list = field(default_factory=list)
    best_reduced_cost: float = np.inf


def reduced_cost(column: Column, lam: np.ndarray, sigma: float) -> float:
    """c_t + sigma - sum of member duals."""
    return column.cost + sigma - float(lam[list(column.members)].sum())


def candidate_centers(points: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Candidate centers: disc-boundary intersections plus all data points.

    Properly intersecting pairs contribute two points, tangent pairs (within a
    relative tolerance) one; discs with (numerically) zero radius contribute
    only their center. At most 2*C(n,2) + n candidates.
    """
    points = np.asarray(points, dtype=np.float64)
    lam = np.maximum(np.asarray(lam, dtype=np.float64), 0.0)
    n = points.shape[0]
    r = np.sqrt(np.where(lam < _ZERO_RADIUS, 0.0, lam))

    out = [points]
    live = np.flatnonzero(r > 0.0)
    if live.size >= 2:
        li, lj = np.triu_indices(live.size, k=1)
        i = live[li]
        j = live[lj]
        diff = points[j] - points[i]
        d = np.hypot(diff[:, 0], diff[:, 1])
        rsum = r[i] + r[j]
        rdif = np.abs(r[i] - r[j])
        band = _TANGENT_RTOL * np.maximum(1.0, rsum)
        tangent = (np.abs(d - rsum) <= band) | ((np.abs(d - rdif) <= band) & (d > band))
        proper = (d > rdif + band) & (d < rsum - band) & (d > 0)

        sel = proper | tangent
        if np.any(sel):
            i, j, d, diff = i[sel], j[sel], d[sel], diff[sel]
            tang = tangent[sel]
            a = (d * d + r[i] ** 2 - r[j] ** 2) / (2.0 * d)
            h2 = r[i] ** 2 - a * a
            h = np.sqrt(np.maximum(h2, 0.0))
            h[tang] = 0.0
            u = diff / d[:, None]
            mid = points[i] + a[:, None] * u
            perp = np.column_stack([-u[:, 1], u[:, 0]])
            plus = mid + h[:, None] * perp
            minus = mid - h[:, None] * perp
            out.append(plus)
            out.append(minus[~tang])
    return np.vstack(out)


def _membership_threshold(lam: np.ndarray) -> np.ndarray:
    # inclusive boundary: candidates sit exactly on circle boundaries, and the
    # marginal cost of a boundary disc is zero anyway
    return lam + 1e-9 * (1.0 + lam)


def refine_center(points: np.ndarray, lam: np.ndarray, y0) -> tuple[np.ndarray, tuple[int, ...]]:
    """Run the collect/barycenter fixed-point iteration from one start.

    Returns the final center and its member set. If the collected set goes
    empty the best singleton (largest dual) is returned instead.
    """
    points = np.asarray(points, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    thresh = _membership_threshold(lam)
    y = np.asarray(y0, dtype=np.float64)
    prev = None
    for _ in range(100):
        sq = ((points - y) ** 2).sum(axis=1)
        members = np.flatnonzero(sq <= thresh)
        if members.size == 0:
            best = int(np.argmax(lam))
            return points[best].copy(), (best,)
        key = members.tobytes()
        y = points[members].mean(axis=0)
        if key == prev:
            break
        prev = key
    return y, tuple(int(i) for i in members)


def _refine_batch(points, thresh, starts, max_rounds=100):
    """Vectorized refinement of many starts; returns membership matrix + centers."""
    n = points.shape[0]
    c = starts.shape[0]
    Y = starts.copy()
    M = np.zeros((c, n), dtype=bool)
    active = np.ones(c, dtype=bool)
    for it in range(max_rounds):
        idx = np.flatnonzero(active)
        sub_y = Y[idx]
        sq = ((sub_y[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        sub_m = sq <= thresh
        sizes = sub_m.sum(axis=1)
        nonempty = sizes > 0
        new_y = sub_y.copy()
        new_y[nonempty] = (sub_m[nonempty] @ points) / sizes[nonempty, None]
        unchanged = np.all(sub_m == M[idx], axis=1) if it > 0 else np.zeros(len(idx), dtype=bool)
        M[idx] = sub_m
        Y[idx] = new_y
        active[idx[unchanged | ~nonempty]] = False
        if not active.any():
            break
    return M, Y


def price(points: np.ndarray, inp: PricingInput, tol: float = NEG_RC_TOL,
          chunk: int = 4096) -> PricingOutput:
    """Refine every candidate center, score the induced clusters, and return
    the negative ones split into compatible / incompatible sets.

    Deterministic: candidates are generated in pair order, duplicates are
    merged by member set, and the output is sorted by (reduced cost, members).
    """
    points = np.asarray(points, dtype=np.float64)
    lam = np.asarray(inp.lam, dtype=np.float64)
    sigma = float(inp.sigma)
    n = points.shape[0]
    thresh = _membership_threshold(lam)

    starts = candidate_centers(points, lam)
    best_rc = np.inf
    found: dict[bytes, tuple[float, float, np.ndarray, np.ndarray]] = {}
    fallback = int(np.argmax(lam))

    for lo in range(0, starts.shape[0], chunk):
        block = starts[lo : lo + chunk]
        M, Y = _refine_batch(points, thresh, block)
        sizes = M.sum(axis=1)
        empty = sizes == 0
        if empty.any():
            M[empty] = False
            M[empty, fallback] = True
            Y[empty] = points[fallback]
            sizes = M.sum(axis=1)
        sq = ((Y[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        costs = np.where(M, sq, 0.0).sum(axis=1)
        rcs = costs + sigma - M @ lam
        best_rc = min(best_rc, float(rcs.min()))
        for row in np.flatnonzero(rcs < -tol):
            key = M[row].tobytes()
            if key not in found:
                found[key] = (float(rcs[row]), float(costs[row]), M[row].copy(), Y[row].copy())

    priced = []
    for rc, cost, mask, y in found.values():
        members = tuple(int(i) for i in np.flatnonzero(mask))
        priced.append((Column(members, cost, (float(y[0]), float(y[1]))), rc))
    return assemble_output(priced, inp.partition, inp.max_columns, best_rc)


def assemble_output(priced, partition, max_columns, best_rc=None) -> PricingOutput:
    """Sort, truncate and split priced columns into a PricingOutput.

    The returned ``columns`` list is the best ``max_columns`` candidates merged
    with the best compatible ones, so compatible columns are never crowded out
    by a flood of cheaper incompatible candidates.
    """
    priced = sorted(priced, key=lambda cr: (cr[1], cr[0].members))
    if best_rc is None:
        best_rc = priced[0][1] if priced else np.inf
    if partition is None:
        compat_all = priced
    else:
        compat_all = [cr for cr in priced if count_incompatibilities(cr[0].members, partition) == 0]
    cap = len(priced) if max_columns is None else max_columns
    compatible = compat_all[:cap]
    merged = {cr[0].members: cr for cr in priced[:cap]}
    for cr in compatible:
        merged.setdefault(cr[0].members, cr)
    columns = sorted(merged.values(), key=lambda cr: (cr[1], cr[0].members))
    return PricingOutput(columns=columns, compatible=compatible, best_reduced_cost=best_rc)


def oracle_price(points: np.ndarray, lam: np.ndarray, sigma: float,
                 chunk: int = 1 << 16) -> tuple[tuple[int, ...], float]:
    """Exhaustive pricing over every nonempty subset (n <= 20).

    Uses the pairwise-distance identity for the cluster cost, a different
    route than the barycenter evaluation used by price(), so the two act as
    independent cross-checks.
    """
    points = np.asarray(points, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    n = points.shape[0]
    if n > 20:
        raise TooLarge(f"subset enumeration capped at n=20, got {n}")
    diff = points[:, None, :] - points[None, :, :]
    D = (diff ** 2).sum(axis=2)
    best_val = np.inf
    best_mask = 1
    bits = np.arange(n, dtype=np.int64)
    for lo in range(1, (1 << n), chunk):
        masks = np.arange(lo, min(lo + chunk, 1 << n), dtype=np.int64)
        B = ((masks[:, None] >> bits) & 1).astype(bool)
        sz = B.sum(axis=1)
        pair_sum = np.einsum("si,ij,sj->s", B.astype(np.float64), D, B.astype(np.float64)) / 2.0
        vals = sigma + pair_sum / sz - B @ lam
        a = int(np.argmin(vals))
        if vals[a] < best_val:
            best_val = float(vals[a])
            best_mask = int(masks[a])
    members = tuple(int(i) for i in range(n) if (best_mask >> i) & 1)
    return members, best_val
