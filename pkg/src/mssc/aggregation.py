"""Aggregating partition of the covering constraints and its maintenance.

The master problem groups the n covering constraints into m components; a
column is *compatible* with the grouping when it covers each component fully
or not at all. Everything here is about counting violations of that rule,
splitting components so a selected column becomes compatible, and spreading
aggregated dual values back onto individual constraints.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoCandidates(ValueError):
    pass


class ColumnAlreadyCompatible(ValueError):
    pass


class InvalidPartition(ValueError):
    pass


class AggregationPartition:
    """A partition of point indices {0..n-1} into m disjoint components.

    Components carry stable integer ids so per-component data (dual boxes)
    survives splits: the intersection half of a split keeps the parent id and
    its row position, the remainder gets a fresh id appended at the end.
    """

    __slots__ = ("n", "ids", "components", "row_of_point", "sizes", "_next_id", "_row_of_id")

    def __init__(self, n: int, ids, components, next_id: int | None = None):
        self.n = n
        self.ids: tuple[int, ...] = tuple(ids)
        self.components: tuple[frozenset, ...] = tuple(frozenset(c) for c in components)
        if len(self.ids) != len(self.components):
            raise InvalidPartition("ids and components length mismatch")
        row_of_point = np.full(n, -1, dtype=np.intp)
        sizes = np.zeros(len(self.components), dtype=np.intp)
        for row, comp in enumerate(self.components):
            if not comp:
                raise InvalidPartition("empty component")
            for i in comp:
                if not (0 <= i < n):
                    raise InvalidPartition(f"point index {i} out of range")
                if row_of_point[i] != -1:
                    raise InvalidPartition(f"point {i} appears in two components")
                row_of_point[i] = row
            sizes[row] = len(comp)
        if np.any(row_of_point < 0):
            raise InvalidPartition("components do not cover all points")
        row_of_point.flags.writeable = False
        sizes.flags.writeable = False
        self.row_of_point = row_of_point
        self.sizes = sizes
        self._next_id = max(self.ids) + 1 if next_id is None else next_id
        self._row_of_id = {cid: row for row, cid in enumerate(self.ids)}

    @classmethod
    def from_components(cls, components, n: int) -> "AggregationPartition":
        return cls(n, range(len(tuple(components))), components)

    @classmethod
    def singletons(cls, n: int) -> "AggregationPartition":
        return cls(n, range(n), [(i,) for i in range(n)])

    @property
    def m(self) -> int:
        return len(self.components)

    def row_of(self, component_id: int) -> int:
        return self._row_of_id[component_id]

    def component_of_point(self, i: int) -> int:
        """Component id containing point i."""
        return self.ids[self.row_of_point[i]]

    def __eq__(self, other):
        return (
            isinstance(other, AggregationPartition)
            and self.n == other.n
            and self.ids == other.ids
            and self.components == other.components
        )

    def __repr__(self):
        return f"AggregationPartition(n={self.n}, m={self.m})"


@dataclass
class DisaggregatedDuals:
    """Per-point dual values recovered from the aggregated master duals."""

    lam: np.ndarray
    sigma: float


def count_incompatibilities(members, partition: AggregationPartition) -> int:
    """Number of components the member set intersects without covering.

    Zero means the set is compatible with the partition; each partially
    intersected component costs one split to repair.
    """
    idx = np.fromiter(members, dtype=np.intp)
    if idx.size == 0:
        return 0
    rows, counts = np.unique(partition.row_of_point[idx], return_counts=True)
    return int(np.count_nonzero(counts < partition.sizes[rows]))


def is_compatible(members, partition: AggregationPartition) -> bool:
    return count_incompatibilities(members, partition) == 0


def covered_rows(members, partition: AggregationPartition) -> np.ndarray:
    """Row indices of the components fully covered by the member set."""
    idx = np.fromiter(members, dtype=np.intp)
    rows, counts = np.unique(partition.row_of_point[idx], return_counts=True)
    return rows[counts == partition.sizes[rows]]


def disaggregate(
    lam_bar: np.ndarray,
    sigma: float,
    partition: AggregationPartition,
    strategy: str = "average",
    seed=0,
) -> DisaggregatedDuals:
    """Spread aggregated duals onto individual constraints.

    ``average`` divides each component's value equally among its members;
    ``sparse`` puts the whole value on one member drawn uniformly at random.
    Either way the per-component sums reproduce the aggregated values, which
    is the complementarity requirement the master relies on.
    """
    lam_bar = np.asarray(lam_bar, dtype=np.float64)
    if lam_bar.shape[0] != partition.m:
        raise ValueError("lam_bar must have one entry per component")
    lam = np.zeros(partition.n, dtype=np.float64)
    if strategy == "average":
        lam = (lam_bar / partition.sizes)[partition.row_of_point]
    elif strategy == "sparse":
        rng = np.random.default_rng(seed)
        for row, comp in enumerate(partition.components):
            members = sorted(comp)
            pick = members[rng.integers(0, len(members))]
            lam[pick] = lam_bar[row]
    else:
        raise ValueError(f"unknown disaggregation strategy: {strategy!r}")
    return DisaggregatedDuals(lam=lam, sigma=float(sigma))


def select_incompatible(candidates, partition: AggregationPartition, strategy: str = "min_inc"):
    """Pick the incompatible column used to refine the partition.

    ``candidates`` is a sequence of (column, reduced_cost) pairs, each with at
    least one incompatibility. ``min_rc`` takes the smallest reduced cost;
    ``min_inc`` takes the fewest incompatibilities, breaking ties by reduced
    cost and then by lexicographic member order.
    """
    cands = list(candidates)
    if not cands:
        raise NoCandidates("no incompatible candidates")
    if strategy == "min_rc":
        key = lambda cr: (cr[1], cr[0].members)
    elif strategy == "min_inc":
        key = lambda cr: (count_incompatibilities(cr[0].members, partition), cr[1], cr[0].members)
    else:
        raise ValueError(f"unknown selection strategy: {strategy!r}")
    return min(cands, key=key)


def update_partition(partition: AggregationPartition, members) -> AggregationPartition:
    """Refine the partition so the given member set becomes compatible.

    Every partially intersected component is replaced by its intersection with
    the set (keeps the old id and row slot) and the remainder (fresh id,
    appended). The new component count is m plus the incompatibility count.
    """
    mset = frozenset(members)
    new_ids = list(partition.ids)
    new_components = list(partition.components)
    appended_ids = []
    appended_comps = []
    next_id = partition._next_id
    splits = 0
    for row, comp in enumerate(partition.components):
        inside = comp & mset
        if not inside or inside == comp:
            continue
        outside = comp - inside
        new_components[row] = inside
        appended_ids.append(next_id)
        appended_comps.append(outside)
        next_id += 1
        splits += 1
    if splits == 0:
        raise ColumnAlreadyCompatible("column is already compatible with the partition")
    return AggregationPartition(
        partition.n,
        new_ids + appended_ids,
        new_components + appended_comps,
        next_id=next_id,
    )


def split_origin(new: AggregationPartition, old: AggregationPartition) -> dict[int, int]:
    """Map each component id of ``new`` to the id of the ``old`` component it
    came from (identity for untouched components). Used to carry per-component
    dual boxes across a partition update."""
    origin = {}
    for row, cid in enumerate(new.ids):
        any_point = next(iter(new.components[row]))
        origin[cid] = old.ids[old.row_of_point[any_point]]
    return origin
