"""Command-line entry point: solve instances and run ablation sweeps."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from .config import RunConfig
from .instance import InstanceError, load_instance
from .kmeans import AGGREGATION_LEVELS
from .solver import branch_and_price, solve_root

ABLATION_AXES = ("aggregation_level", "disaggregation", "q_update")
_AXIS_SETTINGS = {
    "aggregation_level": ("n", "n_half", "n_quarter", "k"),
    "disaggregation": ("average", "sparse"),
    "q_update": ("min_rc", "min_inc"),
}


class InvalidAxis(ValueError):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mssc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("instance", help="TSPLIB or x-y point file")
        p.add_argument("--k", type=int, required=True, help="number of clusters")
        p.add_argument("--agg", default="k", choices=AGGREGATION_LEVELS,
                       help="initial aggregation level (default: k)")
        p.add_argument("--disagg", default="average", choices=("average", "sparse"))
        p.add_argument("--qupdate", default="min_inc", choices=("min_rc", "min_inc"))
        p.add_argument("--cols-per-iter", type=int, default=10)
        p.add_argument("--eps", type=float, default=1e-4,
                       help="relative optimality gap (default 1e-4 = 0.01%%)")
        p.add_argument("--time-limit", type=float, default=None, help="seconds")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=1000,
                       help="k-means restarts for the initial upper bound")
        p.add_argument("--threads", type=int, default=1,
                       help="cap on within-run parallelism (currently single-process)")
        p.add_argument("--lp-backend", default=None, choices=("bundled", "external"),
                       help="LP solver; MSSC_LP_BACKEND overrides, default bundled")
        p.add_argument("--kmeans-init", default="random", choices=("random", "kmeans++"))
        p.add_argument("--output", default=None, help="output file (default: stdout)")
        p.add_argument("--plot", action="store_true", help="render figures next to the output")
        p.add_argument("--plot-dir", default=None, help="directory for figures")

    p_solve = sub.add_parser("solve", help="solve one instance to the target gap")
    common(p_solve)

    p_abl = sub.add_parser("ablation", help="sweep one design axis at the root node")
    common(p_abl)
    p_abl.add_argument("--axis", required=True,
                       help=f"one of {ABLATION_AXES}")
    return parser


def _config_from_args(args, **overrides) -> RunConfig:
    backend = args.lp_backend or os.environ.get("MSSC_LP_BACKEND", "bundled")
    values = dict(
        k=args.k,
        aggregation_level=args.agg,
        disaggregation=args.disagg,
        q_update=args.qupdate,
        columns_per_iter=args.cols_per_iter,
        epsilon=args.eps,
        time_limit_seconds=args.time_limit,
        seed=args.seed,
        restarts=args.restarts,
        threads=args.threads,
        lp_backend=backend,
        kmeans_init="kmeans++" if args.kmeans_init == "kmeans++" else "random",
    )
    values.update(overrides)
    return RunConfig(**values)


def _emit(text: str, output: str | None):
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    config = _config_from_args(args)
    result = branch_and_price(instance, config.k, config)

    stats = result.stats.as_dict()
    timing = {key: stats.pop(key) for key in ("master_time", "pricing_time", "total_time")}
    doc = {
        "instance": instance.name,
        "n": instance.n,
        "k": config.k,
        "f_opt": result.objective,
        "lower_bound": result.lower_bound,
        "gap": result.gap,
        "gap_percent": 100.0 * result.gap if np.isfinite(result.gap) else None,
        "certified": result.certified,
        "status": result.status,
        "nodes": result.nodes_explored,
        "assignment": [int(c) for c in result.clustering.assignment],
        "centroids": [[float(x), float(y)] for x, y in np.asarray(result.clustering.centroids)],
        "stats": stats,
        "config": config.as_dict(),
        "timing": timing,
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.output)

    if args.plot:
        from . import plots

        base = args.plot_dir or (os.path.dirname(args.output) if args.output else ".")
        os.makedirs(base, exist_ok=True)
        stem = os.path.splitext(os.path.basename(args.output or instance.name))[0] or instance.name
        fig_path = os.path.join(base, f"{stem}_clusters.png")
        plots.save_clustering_figure(instance, result.clustering, fig_path)
        print(f"figure: {fig_path}", file=sys.stderr)

    return 0 if result.certified else 2


_ABLATION_FIELDS = [
    "axis", "setting", "instance", "n", "k", "lower_bound", "converged",
    "cg_iterations", "m_start", "m_end", "m_avg", "q_updates", "u_avg",
    "master_time", "pricing_time", "master_time_fraction", "total_time",
]


def run_ablation(instance, k: int, axis: str, base_config: RunConfig) -> list[dict]:
    """Root-node sweep over one design axis; one result row per setting.

    Follows the root evaluation protocol: a single compatible column enters
    per iteration so the sweeps are comparable across settings.
    """
    if axis not in ABLATION_AXES:
        raise InvalidAxis(f"axis must be one of {ABLATION_AXES}, got {axis!r}")
    rows = []
    for setting in _AXIS_SETTINGS[axis]:
        overrides = {axis: setting}
        cfg_kwargs = base_config.as_dict()
        cfg_kwargs.update(overrides)
        cfg = RunConfig(**cfg_kwargs)
        t0 = time.monotonic()
        res, _ = solve_root(instance, k, cfg)
        total = time.monotonic() - t0
        s = res.stats
        rows.append({
            "axis": axis,
            "setting": setting,
            "instance": instance.name,
            "n": instance.n,
            "k": k,
            "lower_bound": res.lower_bound,
            "converged": res.converged,
            "cg_iterations": s.cg_iterations,
            "m_start": s.m_start,
            "m_end": s.m_end,
            "m_avg": s.m_avg,
            "q_updates": s.q_updates,
            "u_avg": s.u_avg,
            "master_time": s.master_time,
            "pricing_time": s.pricing_time,
            "master_time_fraction": (s.master_time / total) if total > 0 else 0.0,
            "total_time": total,
        })
    return rows


def cmd_ablation(args) -> int:
    instance = load_instance(args.instance)
    # root protocol default: one entering column per iteration unless overridden
    cols = 1 if args.cols_per_iter == 10 else args.cols_per_iter
    base = _config_from_args(args, columns_per_iter=cols)
    rows = run_ablation(instance, args.k, args.axis, base)

    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_ABLATION_FIELDS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    _emit(buf.getvalue(), args.output)

    if args.plot:
        from . import plots

        base_dir = args.plot_dir or (os.path.dirname(args.output) if args.output else ".")
        os.makedirs(base_dir, exist_ok=True)
        for path in plots.save_ablation_figures(rows, base_dir, args.axis):
            print(f"figure: {path}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "ablation":
            return cmd_ablation(args)
    except (OSError, InstanceError, InvalidAxis) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
