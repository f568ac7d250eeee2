"""Angle x method x seed grids for the domain-adaptation experiments.

Every grid cell is an independent solve: the labeled source sample becomes
the centroid set, the rotated target sample is the measure, and accuracy is
measured by label propagation through the final transport map.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from rwmeans.config import DatasetSpec, ExperimentConfig, MethodSpec
from rwmeans.io import write_csv
from rwmeans.means import accuracy, classify_targets
from rwmeans.measures import (
    DEFAULT_MIXTURE_MEANS,
    CentroidSet,
    EmpiricalMeasure,
    RotationSpec,
    make_gaussian_mixture,
    make_two_moons,
    rotate,
    scale_tail_weights,
)
from rwmeans.regularizers import make_regularizer
from rwmeans.rwm import RwmOptions, regularized_wasserstein_means

logger = logging.getLogger(__name__)

THREADS_ENV = "RWM_THREADS"

RESULT_HEADER = [
    "angle",
    "method",
    "seed",
    "accuracy",
    "ot_cost",
    "iterations",
    "converged",
    "monotone_blocks",
]
SUMMARY_HEADER = [
    "angle",
    "method",
    "runs",
    "accuracy_mean",
    "accuracy_std",
    "ot_cost_mean",
    "ot_cost_std",
]


@dataclass(frozen=True)
class CellResult:
    angle: float
    method: str
    seed: int
    accuracy: float
    ot_cost: float
    iterations: int
    converged: bool
    monotone_blocks: bool

    def row(self) -> list:
        return [
            self.angle,
            self.method,
            self.seed,
            self.accuracy,
            self.ot_cost,
            self.iterations,
            self.converged,
            self.monotone_blocks,
        ]


def resolve_threads(cells: int, env: Optional[Dict[str, str]] = None) -> int:
    """Worker count: RWM_THREADS if set and valid, else the CPU count; never above ``cells``."""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV)
    threads = os.cpu_count() or 1
    if raw:
        try:
            threads = int(raw)
        except ValueError:
            logger.warning("ignoring %s=%r: not an integer", THREADS_ENV, raw)
        if threads < 1:
            logger.warning("ignoring %s=%r: must be >= 1", THREADS_ENV, raw)
            threads = 1
    return max(1, min(threads, cells))


def sample_dataset(spec: DatasetSpec, n: int, seed: int) -> EmpiricalMeasure:
    if spec.kind == "two-moons":
        return make_two_moons(n, spec.noise, seed)
    return make_gaussian_mixture(
        spec.component_means or DEFAULT_MIXTURE_MEANS,
        spec.component_sigmas,
        n=n,
        seed=seed,
    )


def make_domains(
    spec: DatasetSpec, angle: float, seed: int
) -> Tuple[EmpiricalMeasure, EmpiricalMeasure]:
    """Source drawn with ``seed``, target with ``seed + 1`` rotated about its mean."""
    source = sample_dataset(spec, spec.source_n, seed)
    target = rotate(sample_dataset(spec, spec.target_n, seed + 1), RotationSpec(angle))
    return source, target


def run_cell(
    config: ExperimentConfig, angle: float, method: MethodSpec, seed: int
) -> CellResult:
    source, target = make_domains(config.dataset, angle, seed)
    if method.tail_weight != 1.0:
        source = scale_tail_weights(source, method.tail_fraction, method.tail_weight)
    centroids = CentroidSet.from_measure(source)
    opts = RwmOptions(
        regularizer=make_regularizer(method.regularizer, method.lam),
        outer_tolerance=config.solver.outer_tolerance,
        max_outer_iterations=config.solver.max_outer_iterations,
        vot_options=config.solver.vot_options(),
    )
    result = regularized_wasserstein_means(target, centroids, opts)
    predicted = classify_targets(target, result.centroids, result.assignment)
    cell = CellResult(
        angle=angle,
        method=method.name,
        seed=seed,
        accuracy=accuracy(predicted, target.labels),
        ot_cost=result.assignment.transport_cost,
        iterations=result.iterations,
        converged=result.converged and result.vot_converged,
        monotone_blocks=result.trace.monotone_blocks(),
    )
    logger.info(
        "angle=%g method=%s seed=%d accuracy=%.4f iterations=%d",
        angle, method.name, seed, cell.accuracy, cell.iterations,
    )
    return cell


def grid(config: ExperimentConfig) -> List[Tuple[float, MethodSpec, int]]:
    """All (angle, method, seed) cells; repetition r uses seed ``seed + 2r``."""
    seeds = [config.seed + 2 * r for r in range(config.repetitions)]
    return [
        (angle, method, seed)
        for angle in config.angles
        for method in config.methods
        for seed in seeds
    ]


def run_experiment(
    config: ExperimentConfig, threads: Optional[int] = None
) -> List[CellResult]:
    """Run every cell, in parallel when allowed; rows come back sorted."""
    cells = grid(config)
    workers = threads if threads is not None else resolve_threads(len(cells))
    logger.info("running %d cells on %d worker(s)", len(cells), workers)
    if workers <= 1:
        results = [run_cell(config, *cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_cell, config, *cell) for cell in cells]
            results = [future.result() for future in futures]
    return sorted(results, key=lambda r: (r.angle, r.method, r.seed))


def summarize(results: List[CellResult]) -> List[list]:
    groups: Dict[Tuple[float, str], List[CellResult]] = {}
    for result in results:
        groups.setdefault((result.angle, result.method), []).append(result)
    rows = []
    for (angle, method), members in sorted(groups.items()):
        acc = np.array([m.accuracy for m in members])
        cost = np.array([m.ot_cost for m in members])
        rows.append(
            [
                angle,
                method,
                len(members),
                float(acc.mean()),
                float(acc.std()),
                float(cost.mean()),
                float(cost.std()),
            ]
        )
    return rows


def write_results(output_dir: str, results: List[CellResult]) -> None:
    write_csv(os.path.join(output_dir, "results.csv"), RESULT_HEADER, [r.row() for r in results])
    write_csv(os.path.join(output_dir, "summary.csv"), SUMMARY_HEADER, summarize(results))
