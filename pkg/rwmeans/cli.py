"""Command-line entry point: ``rwm <command> ...``.

Commands:
    generate    write a synthetic points CSV (two-moons, gaussian-mixture, bent-tube)
    vot         semi-discrete OT between a target CSV and a centroid CSV
    wm          Wasserstein means of a target CSV, starting from a source CSV
    rwm         regularized Wasserstein means (domain adaptation)
    skeleton    fit a curve skeleton with pinned nodes to a 3-D cloud
    experiment  run an angle x method grid from a JSON config

Usage:
    rwm generate two-moons --n 200 --noise 0.05 --seed 1 -o src.csv
    rwm rwm src.csv tgt.csv -o out/ --reg affine --lambda 1.0
    rwm skeleton cloud.csv configs/bent_tube_topology.json -o skel/
    rwm experiment configs/two_moons.json

Exit codes: 0 success (non-convergence included, flagged in metrics.json),
2 usage or validation error, 1 internal error.
"""

import argparse
import logging
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from rwmeans.config import load_config
from rwmeans.errors import ConfigError, InvalidArgumentError
from rwmeans.experiment import run_experiment, write_results
from rwmeans.io import (
    read_points_csv,
    read_topology_json,
    write_csv,
    write_json,
    write_measure_csv,
    write_points_csv,
)
from rwmeans.means import MeansOptions, accuracy, classify_targets, wasserstein_means
from rwmeans.measures import (
    CentroidSet,
    EmpiricalMeasure,
    RotationSpec,
    make_bent_tube,
    make_gaussian_mixture,
    make_two_moons,
    rotate,
    scale_tail_weights,
)
from rwmeans.regularizers import REGULARIZER_KINDS, CurveRegularizer, make_regularizer
from rwmeans.rwm import (
    DEFAULT_SKELETON_LAMBDA1,
    DEFAULT_SKELETON_LAMBDA2,
    RwmOptions,
    RwmResult,
    RwmTrace,
    regularized_wasserstein_means,
    skeleton_layout,
)
from rwmeans.vot import VotOptions, solve_vot

logger = logging.getLogger("rwmeans")

GENERATOR_KINDS = ("two-moons", "gaussian-mixture", "bent-tube")
DEFAULT_N = {"two-moons": 200, "gaussian-mixture": 5000, "bent-tube": 5000}
DEFAULT_NOISE = {"two-moons": 0.1, "gaussian-mixture": None, "bent-tube": 0.05}

TRACE_COLUMNS = [
    ("transport_cost", "transport_cost"),
    ("reg_loss", "regularizer_loss"),
    ("total_loss", "total_loss"),
    ("max_displacement", "max_displacement"),
    ("vot_residual", "vot_residual"),
    ("vot_converged", "vot_converged"),
    ("inner_start", "inner_start"),
    ("inner_end", "inner_end"),
    ("inner_converged", "inner_converged"),
]


# ---------------------------------------------------------------------------
# Shared writers
# ---------------------------------------------------------------------------


def _vot_options(args: argparse.Namespace, max_iterations: Optional[int] = None) -> VotOptions:
    if max_iterations is None:
        return VotOptions(mass_tolerance=args.mass_tol)
    return VotOptions(mass_tolerance=args.mass_tol, max_iterations=max_iterations)


def write_trace(path: str, trace: RwmTrace) -> None:
    with_accuracy = any(r.accuracy is not None for r in trace.records)
    header = ["iteration"] + [name for name, _ in TRACE_COLUMNS]
    if with_accuracy:
        header.append("accuracy")
    rows = []
    for record in trace.records:
        row = [record.iteration] + [getattr(record, attr) for _, attr in TRACE_COLUMNS]
        if with_accuracy:
            row.append(record.accuracy)
        rows.append(row)
    write_csv(path, header, rows)


def write_assignment(path: str, centroid_of: np.ndarray, labels: Optional[np.ndarray]) -> None:
    """sample_index, centroid_index, predicted_label (empty without centroid labels)."""
    rows = []
    for i, j in enumerate(centroid_of):
        predicted = None if labels is None else int(labels[j])
        rows.append([i, int(j), predicted])
    write_csv(path, ["sample_index", "centroid_index", "predicted_label"], rows)


def _adaptation_metrics(
    target: EmpiricalMeasure, result: RwmResult
) -> dict:
    metrics = {
        "ot_cost": result.assignment.transport_cost,
        "iterations": result.iterations,
        "converged": result.converged,
        "vot_converged": result.vot_converged,
        "monotone_blocks": result.trace.monotone_blocks(),
    }
    if target.labels is not None and result.centroids.labels is not None:
        predicted = classify_targets(target, result.centroids, result.assignment)
        metrics["accuracy"] = accuracy(predicted, target.labels)
    return metrics


def write_adaptation_outputs(out_dir: str, target: EmpiricalMeasure, result: RwmResult) -> dict:
    centroids = result.centroids
    write_assignment(
        os.path.join(out_dir, "assignment.csv"),
        result.assignment.centroid_of,
        centroids.labels,
    )
    write_points_csv(
        os.path.join(out_dir, "centroids_final.csv"),
        centroids.positions,
        centroids.labels,
        centroids.target_weights,
    )
    write_trace(os.path.join(out_dir, "trace.csv"), result.trace)
    metrics = _adaptation_metrics(target, result)
    write_json(os.path.join(out_dir, "metrics.json"), metrics)
    return metrics


def _summary(metrics: dict) -> str:
    parts = [f"iterations={metrics['iterations']}", f"converged={metrics['converged']}"]
    parts.append(f"ot_cost={metrics['ot_cost']:.6g}")
    if "accuracy" in metrics:
        parts.append(f"accuracy={metrics['accuracy']:.4f}")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    n = args.n if args.n is not None else DEFAULT_N[args.kind]
    noise = args.noise if args.noise is not None else DEFAULT_NOISE[args.kind]
    if noise is not None and noise < 0:
        raise InvalidArgumentError(f"--noise must be >= 0, got {noise}")
    if args.tail_weight != 1.0 and args.kind != "two-moons":
        raise InvalidArgumentError("--tail-weight applies to two-moons only")
    if args.kind == "two-moons":
        measure = make_two_moons(n, noise, args.seed)
    elif args.kind == "gaussian-mixture":
        sigmas = None if noise is None else [noise] * 3
        measure = make_gaussian_mixture(component_sigmas=sigmas, n=n, seed=args.seed)
    else:
        measure = make_bent_tube(n, noise, args.seed, bend=args.bend)
    if args.tail_weight != 1.0:
        measure = scale_tail_weights(measure, args.tail_fraction, args.tail_weight)
    if args.rotate:
        measure = rotate(measure, RotationSpec(args.rotate))
    write_measure_csv(args.output, measure)
    print(f"Wrote {measure.n} points (d={measure.dim}) to {args.output}", file=sys.stderr)
    return 0


def cmd_vot(args: argparse.Namespace) -> int:
    target = read_points_csv(args.target)
    centroids = CentroidSet.from_measure(read_points_csv(args.centroids))
    result = solve_vot(target, centroids, _vot_options(args, args.max_iter))
    write_assignment(
        os.path.join(args.output, "assignment.csv"),
        result.assignment.centroid_of,
        centroids.labels,
    )
    write_csv(
        os.path.join(args.output, "potentials.csv"),
        ["centroid_index", "potential", "target_weight", "cell_mass"],
        [
            [j, result.potentials[j], centroids.target_weights[j], result.assignment.cell_mass[j]]
            for j in range(centroids.k)
        ],
    )
    metrics = {
        "ot_cost": result.assignment.transport_cost,
        "mass_residual": result.mass_residual,
        "iterations": result.iterations_used,
        "converged": result.converged,
    }
    write_json(os.path.join(args.output, "metrics.json"), metrics)
    print(
        f"vot: iterations={result.iterations_used} residual={result.mass_residual:.3g} "
        f"converged={result.converged}",
        file=sys.stderr,
    )
    return 0


def cmd_wm(args: argparse.Namespace) -> int:
    source = read_points_csv(args.source)
    target = read_points_csv(args.target)
    opts = MeansOptions(
        max_outer_iterations=args.max_iter,
        vot_options=_vot_options(args),
        update_weights=not args.fixed_weights,
    )
    result = wasserstein_means(target, CentroidSet.from_measure(source), opts)
    write_assignment(
        os.path.join(args.output, "assignment.csv"),
        result.assignment.centroid_of,
        result.centroids.labels,
    )
    write_points_csv(
        os.path.join(args.output, "centroids_final.csv"),
        result.centroids.positions,
        result.centroids.labels,
        result.centroids.target_weights,
    )
    write_csv(
        os.path.join(args.output, "trace.csv"),
        ["iteration", "transport_cost", "reg_loss", "total_loss"],
        [[t + 1, cost, 0.0, cost] for t, cost in enumerate(result.cost_history)],
    )
    metrics = {
        "ot_cost": result.assignment.transport_cost,
        "iterations": result.iterations,
        "converged": result.converged,
        "vot_converged": result.vot_converged,
    }
    if target.labels is not None and result.centroids.labels is not None:
        predicted = classify_targets(target, result.centroids, result.assignment)
        metrics["accuracy"] = accuracy(predicted, target.labels)
    write_json(os.path.join(args.output, "metrics.json"), metrics)
    print(f"wm: {_summary(metrics)}", file=sys.stderr)
    return 0


def cmd_rwm(args: argparse.Namespace) -> int:
    source = read_points_csv(args.source)
    target = read_points_csv(args.target)
    topology = None
    if args.reg == "curve":
        if args.topology is None:
            raise InvalidArgumentError("--reg curve needs --topology")
        topology, _ = read_topology_json(args.topology)
    regularizer = make_regularizer(args.reg, args.lam, args.lam2, topology)
    opts = RwmOptions(
        regularizer=regularizer,
        max_outer_iterations=args.max_iter,
        vot_options=_vot_options(args),
        momentum_weight_update=args.momentum,
    )
    result = regularized_wasserstein_means(target, CentroidSet.from_measure(source), opts)
    metrics = write_adaptation_outputs(args.output, target, result)
    print(f"rwm ({args.reg}): {_summary(metrics)}", file=sys.stderr)
    return 0


def cmd_skeleton(args: argparse.Namespace) -> int:
    cloud = read_points_csv(args.cloud)
    topology, fixed_positions = read_topology_json(args.topology)
    initial = None
    if args.init is not None:
        initial = CentroidSet.uniform(read_points_csv(args.init).points)
    regularizer = CurveRegularizer(
        lambda1=DEFAULT_SKELETON_LAMBDA1 if args.lam is None else args.lam,
        lambda2=DEFAULT_SKELETON_LAMBDA2 if args.lam2 is None else args.lam2,
        topology=topology,
    )
    opts = RwmOptions(
        regularizer=regularizer,
        max_outer_iterations=args.max_iter,
        vot_options=_vot_options(args),
        momentum_weight_update=args.momentum,
    )
    started = time.perf_counter()
    result = skeleton_layout(cloud, initial, topology, fixed_positions, opts)
    runtime = time.perf_counter() - started

    positions = result.centroids.positions
    write_csv(
        os.path.join(args.output, "skeleton.csv"),
        ["node_index", "x", "y", "z", "branch_id"],
        [[j, *positions[j], topology.branch_of(j)] for j in range(result.centroids.k)],
    )
    write_assignment(
        os.path.join(args.output, "assignment.csv"), result.assignment.centroid_of, None
    )
    write_trace(os.path.join(args.output, "trace.csv"), result.trace)
    last = result.trace.records[-1]
    metrics = {
        "runtime_seconds": runtime,
        "transport_cost": result.assignment.transport_cost,
        "reg_loss": last.regularizer_loss,
        "total_loss": result.assignment.transport_cost + last.regularizer_loss,
        "iterations": result.iterations,
        "converged": result.converged,
        "vot_converged": result.vot_converged,
        "monotone_blocks": result.trace.monotone_blocks(),
    }
    write_json(os.path.join(args.output, "metrics.json"), metrics)
    print(
        f"skeleton: {result.centroids.k} nodes, iterations={result.iterations} "
        f"converged={result.converged} runtime={runtime:.2f}s",
        file=sys.stderr,
    )
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    output_dir = args.output_dir or config.output_dir
    results = run_experiment(config, threads=args.threads)
    write_results(output_dir, results)
    print(
        f"experiment {config.name}: {len(results)} runs written to {output_dir}",
        file=sys.stderr,
    )
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_solver_flags(parser: argparse.ArgumentParser, max_iter_default: int, max_iter_help: str) -> None:
    parser.add_argument(
        "--mass-tol",
        type=float,
        default=None,
        help="OT mass tolerance (default: largest sample weight)",
    )
    parser.add_argument(
        "--max-iter", type=int, default=max_iter_default, help=max_iter_help
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwm", description="Regularized Wasserstein means and semi-discrete OT."
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Log per-iteration detail"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Write a synthetic points CSV")
    p.add_argument("kind", choices=GENERATOR_KINDS)
    p.add_argument("--n", type=int, default=None, help="Number of points")
    p.add_argument(
        "--noise",
        type=float,
        default=None,
        help="Noise sigma (two-moons 0.1, bent-tube 0.05; mixture component sigma 0.3)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bend", type=float, default=1.0, help="Bent-tube amplitude")
    p.add_argument("--rotate", type=float, default=0.0, help="Rotation in degrees (2-D)")
    p.add_argument(
        "--tail-weight", type=float, default=1.0, help="Scale two-moons tail weights"
    )
    p.add_argument("--tail-fraction", type=float, default=0.25)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("vot", help="Semi-discrete OT to a fixed centroid set")
    p.add_argument("target")
    p.add_argument("centroids")
    p.add_argument("-o", "--output", required=True, help="Output directory")
    _add_solver_flags(p, 5000, "Dual ascent iterations (default: 5000)")
    p.set_defaults(func=cmd_vot)

    p = sub.add_parser("wm", help="Wasserstein means")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("-o", "--output", required=True, help="Output directory")
    p.add_argument(
        "--fixed-weights", action="store_true", help="Keep the source weights"
    )
    _add_solver_flags(p, 100, "Outer iterations (default: 100)")
    p.set_defaults(func=cmd_wm)

    p = sub.add_parser("rwm", help="Regularized Wasserstein means")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("-o", "--output", required=True, help="Output directory")
    p.add_argument("--reg", choices=REGULARIZER_KINDS, default="none")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument(
        "--lambda2", dest="lam2", type=float, default=0.0, help="Curvature weight (curve)"
    )
    p.add_argument("--topology", default=None, help="Topology JSON (curve)")
    p.add_argument("--momentum", type=float, default=None, help="Momentum weight update")
    _add_solver_flags(p, 100, "Outer iterations (default: 100)")
    p.set_defaults(func=cmd_rwm)

    p = sub.add_parser("skeleton", help="Curve skeleton of a 3-D point cloud")
    p.add_argument("cloud")
    p.add_argument("topology")
    p.add_argument("-o", "--output", required=True, help="Output directory")
    p.add_argument(
        "--lambda", dest="lam", type=float, default=None,
        help=f"Length weight (default: {DEFAULT_SKELETON_LAMBDA1})",
    )
    p.add_argument(
        "--lambda2", dest="lam2", type=float, default=None,
        help=f"Curvature weight (default: {DEFAULT_SKELETON_LAMBDA2})",
    )
    p.add_argument("--momentum", type=float, default=None, help="Default: 0.9")
    p.add_argument("--init", default=None, help="Initial node positions CSV")
    _add_solver_flags(p, 100, "Outer iterations (default: 100)")
    p.set_defaults(func=cmd_skeleton)

    p = sub.add_parser("experiment", help="Run an experiment grid from a config")
    p.add_argument("config")
    p.add_argument("--output-dir", default=None, help="Override the config's output_dir")
    p.add_argument(
        "--threads", type=int, default=None, help="Worker threads (default: RWM_THREADS)"
    )
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as e:
        print("Error: invalid config:", file=sys.stderr)
        for problem in e.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except InvalidArgumentError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        logger.exception("internal error")
        print(f"Error: {e}", file=sys.stderr)
        return 1
