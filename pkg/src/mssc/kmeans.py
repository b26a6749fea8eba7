"""Multi-start k-means: incumbent upper bounds and the initial aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregationPartition
from .instance import Instance, cluster_cost


class InvalidK(ValueError):
    pass


class InvalidLevel(ValueError):
    pass


AGGREGATION_LEVELS = ("n", "n_half", "n_quarter", "k")


@dataclass
class Clustering:
    """A feasible MSSC solution: labels, centroids and objective value."""

    assignment: np.ndarray
    centroids: np.ndarray
    cost: float
    k: int

    def clusters(self) -> list[np.ndarray]:
        """Member indices per cluster, in label order."""
        return [np.flatnonzero(self.assignment == c) for c in range(self.k)]


def _assignment_cost(points: np.ndarray, labels: np.ndarray, k: int) -> tuple[float, np.ndarray]:
    centroids = np.zeros((k, 2))
    counts = np.bincount(labels, minlength=k)
    np.add.at(centroids, labels, points)
    centroids /= np.maximum(counts, 1)[:, None]
    diff = points - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff)), centroids


def lloyd(instance: Instance, k: int, seed, *, init: str = "random", max_iter: int = 1000) -> Clustering:
    """One run of Lloyd's algorithm from a seeded random initialization.

    Empty clusters are repaired by moving in the point currently farthest from
    its own centroid. Stops at a fixed point of assign/update or after
    ``max_iter`` rounds.
    """
    n = instance.n
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} not in [1, {n}]")
    points = instance.points
    rng = np.random.default_rng(seed)

    if init == "random":
        centroids = points[rng.choice(n, size=k, replace=False)].copy()
    elif init == "kmeans++":
        centroids = np.empty((k, 2))
        centroids[0] = points[rng.integers(n)]
        closest = ((points - centroids[0]) ** 2).sum(axis=1)
        for c in range(1, k):
            total = closest.sum()
            if total <= 0.0:
                centroids[c] = points[rng.integers(n)]
            else:
                r = rng.random() * total
                centroids[c] = points[min(int(np.searchsorted(np.cumsum(closest), r)), n - 1)]
            closest = np.minimum(closest, ((points - centroids[c]) ** 2).sum(axis=1))
    else:
        raise ValueError(f"unknown init scheme: {init!r}")

    labels = np.full(n, -1, dtype=np.intp)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)

        counts = np.bincount(new_labels, minlength=k)
        for c in np.flatnonzero(counts == 0):
            # donate the point farthest from its centroid, from a cluster of size >= 2
            own = d2[np.arange(n), new_labels].copy()
            own[counts[new_labels] < 2] = -np.inf
            pick = int(own.argmax())
            counts[new_labels[pick]] -= 1
            new_labels[pick] = c
            counts[c] += 1

        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        centroids = np.zeros((k, 2))
        np.add.at(centroids, labels, points)
        centroids /= counts[:, None]

    cost, centroids = _assignment_cost(points, labels, k)
    return Clustering(assignment=labels, centroids=centroids, cost=cost, k=k)


def multi_start(instance: Instance, k: int, restarts: int, seed, *, init: str = "random") -> Clustering:
    """Best clustering over independent Lloyd restarts.

    Per-restart seeds are derived from the master seed, so the result matches
    a sequential scan regardless of evaluation order; cost ties go to the
    lowest restart index.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        c = lloyd(instance, k, (seed, r), init=init)
        if best is None or c.cost < best.cost:
            best = c
    return best


def initial_partition(instance: Instance, x_bar: Clustering, level: str, seed) -> AggregationPartition:
    """Build the starting constraint aggregation from the incumbent clustering.

    level "n": all singleton components (no aggregation).
    level "k": components are exactly the incumbent clusters.
    level "n_half" / "n_quarter": run k-means again with n/2 (resp. n/4)
    clusters; points co-clustered in both solutions form a component, the
    rest are singletons. Equivalently the components are the nonempty
    pairwise intersections of the two clusterings.
    """
    n = instance.n
    if level == "n":
        return AggregationPartition.singletons(n)
    if level == "k":
        comps = [tuple(members) for members in x_bar.clusters() if members.size]
        return AggregationPartition.from_components(comps, n)
    if level in ("n_half", "n_quarter"):
        k_tilde = max(1, n // 2 if level == "n_half" else n // 4)
        aux = multi_start(instance, k_tilde, restarts=10, seed=(seed, 104729))
        return intersect_assignments(x_bar.assignment, aux.assignment)
    raise InvalidLevel(f"level must be one of {AGGREGATION_LEVELS}, got {level!r}")


def intersect_assignments(labels_a, labels_b) -> AggregationPartition:
    """Partition whose components are the nonempty intersections of two label
    vectors: points grouped together in both clusterings share a component."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    pair_to_comp: dict[tuple[int, int], list[int]] = {}
    for i in range(len(labels_a)):
        pair_to_comp.setdefault((int(labels_a[i]), int(labels_b[i])), []).append(i)
    comps = sorted(pair_to_comp.values())
    return AggregationPartition.from_components(comps, len(labels_a))


def clustering_from_labels(instance: Instance, labels) -> Clustering:
    """Re-derive centroids and cost from a label vector (independent recheck)."""
    labels = np.asarray(labels, dtype=np.intp)
    uniq = np.unique(labels)
    remap = {int(c): i for i, c in enumerate(uniq)}
    dense = np.array([remap[int(c)] for c in labels], dtype=np.intp)
    k = len(uniq)
    cost = 0.0
    centroids = np.zeros((k, 2))
    for c in range(k):
        cc, cen = cluster_cost(instance, np.flatnonzero(dense == c))
        cost += cc
        centroids[c] = cen
    return Clustering(assignment=dense, centroids=centroids, cost=cost, k=k)
