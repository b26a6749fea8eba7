"""Planar point-set instances: TSPLIB parsing and exact geometric primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InstanceError(ValueError):
    """Base class for malformed or unsupported instance data."""


class UnsupportedEdgeWeightType(InstanceError):
    pass


class MalformedLine(InstanceError):
    pass


class DimensionMismatch(InstanceError):
    pass


class EmptyCluster(ValueError):
    pass


@dataclass(frozen=True)
class Instance:
    """An ordered set of 2D points. Point order defines the index space 0..n-1
    used by every constraint and column in the solver (1-based in file I/O)."""

    name: str
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InstanceError(f"points must be an (n, 2) array, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise InstanceError("instance needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise InstanceError("instance contains non-finite coordinates")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def squared_distance(a, b) -> float:
    """Exact squared Euclidean distance between two 2D points."""
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    return dx * dx + dy * dy


def cluster_cost(instance: Instance, members) -> tuple[float, np.ndarray]:
    """Cost and centroid of the cluster formed by ``members`` (point indices).

    Cost is the sum of squared distances from each member to the member
    barycenter, the per-cluster term of the MSSC objective.
    """
    idx = np.fromiter(members, dtype=np.intp)
    if idx.size == 0:
        raise EmptyCluster("cluster has no members")
    pts = instance.points[idx]
    centroid = pts.mean(axis=0)
    diff = pts - centroid
    cost = float(np.einsum("ij,ij->", diff, diff))
    return cost, centroid


def parse_tsplib(text: str) -> Instance:
    """Parse a TSPLIB-format instance with EUC_2D node coordinates.

    Only coordinate-based planar instances are accepted; distance-matrix and
    geographic formats raise UnsupportedEdgeWeightType.
    """
    name = "unnamed"
    dimension = None
    ew_type = None
    coords: list[tuple[float, float]] = []
    in_coords = False

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        upper = line.upper()
        if in_coords:
            if upper.startswith("EOF") or (upper.endswith("SECTION") and ":" not in line):
                in_coords = False
                continue
            parts = line.replace(":", " ").split()
            if len(parts) < 3:
                raise MalformedLine(f"bad coordinate line: {raw!r}")
            try:
                x, y = float(parts[-2]), float(parts[-1])
            except ValueError as exc:
                raise MalformedLine(f"bad coordinate line: {raw!r}") from exc
            coords.append((x, y))
            continue
        if upper.startswith("NODE_COORD_SECTION"):
            in_coords = True
        elif ":" in line or any(upper.startswith(h) for h in ("NAME", "TYPE", "DIMENSION", "EDGE_WEIGHT_TYPE")):
            key, _, value = line.partition(":")
            key = key.strip().upper()
            value = value.strip()
            if key == "NAME":
                name = value or name
            elif key == "DIMENSION":
                try:
                    dimension = int(value)
                except ValueError as exc:
                    raise MalformedLine(f"bad DIMENSION: {raw!r}") from exc
            elif key == "EDGE_WEIGHT_TYPE":
                ew_type = value.upper()

    if ew_type is not None and ew_type != "EUC_2D":
        raise UnsupportedEdgeWeightType(f"need EUC_2D coordinates, got {ew_type}")
    if not coords:
        raise MalformedLine("no NODE_COORD_SECTION found")
    if dimension is not None and dimension != len(coords):
        raise DimensionMismatch(f"DIMENSION says {dimension} points, file has {len(coords)}")
    return Instance(name=name, points=np.array(coords, dtype=np.float64))


def serialize_tsplib(instance: Instance) -> str:
    """Write an Instance back to TSPLIB text. Round-trips coordinates exactly."""
    lines = [
        f"NAME : {instance.name}",
        "TYPE : TSP",
        f"DIMENSION : {instance.n}",
        "EDGE_WEIGHT_TYPE : EUC_2D",
        "NODE_COORD_SECTION",
    ]
    for i, (x, y) in enumerate(instance.points, start=1):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def parse_points(text: str, name: str = "points") -> Instance:
    """Parse a minimal x-y listing: one point per line, comma or whitespace
    separated, '#' comments allowed. Used for synthetic test instances."""
    coords = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) == 3:  # allow an index column like TSPLIB
            parts = parts[1:]
        if len(parts) != 2:
            raise MalformedLine(f"expected 'x y' per line, got: {raw!r}")
        try:
            coords.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise MalformedLine(f"expected 'x y' per line, got: {raw!r}") from exc
    if not coords:
        raise MalformedLine("no points found")
    return Instance(name=name, points=np.array(coords, dtype=np.float64))


def load_instance(path) -> Instance:
    """Load an instance from a file path, dispatching on content."""
    import pathlib

    p = pathlib.Path(path)
    text = p.read_text()
    if "NODE_COORD_SECTION" in text.upper():
        inst = parse_tsplib(text)
        if inst.name == "unnamed":
            inst = Instance(name=p.stem, points=inst.points)
        return inst
    return parse_points(text, name=p.stem)


def total_sum_of_squares(instance: Instance) -> float:
    """Cost of the single-cluster solution; a crude global scale for the objective."""
    cost, _ = cluster_cost(instance, range(instance.n))
    return cost
