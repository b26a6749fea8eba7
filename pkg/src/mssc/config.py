"""Run configuration shared by the solver and the command line."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .kmeans import AGGREGATION_LEVELS


@dataclass
class RunConfig:
    k: int = 2
    aggregation_level: str = "k"
    disaggregation: str = "average"
    q_update: str = "min_inc"
    columns_per_iter: int = 10
    epsilon: float = 1e-4  # relative optimality gap; 1e-4 is 0.01%
    time_limit_seconds: float | None = None
    seed: int = 0
    restarts: int = 1000
    threads: int = 1
    lp_backend: str = "bundled"
    kmeans_init: str = "random"
    rc_tolerance: float = 1e-6
    max_cg_iterations: int = 1_000_000

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.columns_per_iter < 1:
            raise ValueError("columns_per_iter must be >= 1")
        if self.aggregation_level not in AGGREGATION_LEVELS:
            raise ValueError(f"aggregation_level must be one of {AGGREGATION_LEVELS}")
        if self.disaggregation not in ("average", "sparse"):
            raise ValueError("disaggregation must be 'average' or 'sparse'")
        if self.q_update not in ("min_rc", "min_inc"):
            raise ValueError("q_update must be 'min_rc' or 'min_inc'")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)
