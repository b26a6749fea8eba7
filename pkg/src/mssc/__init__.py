"""Exact minimum sum-of-squares clustering for planar point sets.

Column generation over the set-partitioning formulation, with dynamic
aggregation of the covering constraints, dual-box stabilization, exact planar
pricing through disc intersections, and Ryan-Foster branch and price on top.
"""

from .aggregation import AggregationPartition, DisaggregatedDuals, count_incompatibilities, disaggregate
from .branching import BranchState
from .config import RunConfig
from .instance import Instance, cluster_cost, load_instance, parse_points, parse_tsplib, squared_distance
from .kmeans import Clustering, initial_partition, lloyd, multi_start
from .master import Column, ColumnPool, StabilizationBox, make_column
from .pricing import PricingInput, PricingOutput, oracle_price, price
from .solver import SolveResult, SolveStats, branch_and_price, column_generation, solve_root

__version__ = "0.1.0"

__all__ = [
    "AggregationPartition",
    "BranchState",
    "Clustering",
    "Column",
    "ColumnPool",
    "DisaggregatedDuals",
    "Instance",
    "PricingInput",
    "PricingOutput",
    "RunConfig",
    "SolveResult",
    "SolveStats",
    "StabilizationBox",
    "branch_and_price",
    "cluster_cost",
    "column_generation",
    "count_incompatibilities",
    "disaggregate",
    "initial_partition",
    "lloyd",
    "load_instance",
    "make_column",
    "multi_start",
    "oracle_price",
    "parse_points",
    "parse_tsplib",
    "price",
    "solve_root",
    "squared_distance",
]
