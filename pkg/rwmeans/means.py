"""Wasserstein means by block coordinate descent, and label propagation.

Each outer iteration of ``wasserstein_means`` performs, in order:

1. weight update: nu_j <- mass of the Voronoi cell of y_j (optional),
2. semi-discrete OT with y and nu fixed,
3. support update: y_j <- mass-weighted centroid of its power cell.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from rwmeans.errors import InvalidArgumentError
from rwmeans.measures import Assignment, CentroidSet, EmpiricalMeasure
from rwmeans.vot import VotOptions, cost_matrix, solve_vot

logger = logging.getLogger(__name__)

# Lower bound on a centroid weight before renormalization.
WEIGHT_FLOOR = 1e-6


@dataclass(frozen=True)
class MeansOptions:
    outer_tolerance: float = 1e-4
    max_outer_iterations: int = 100
    vot_options: VotOptions = field(default_factory=VotOptions)
    update_weights: bool = True

    def __post_init__(self) -> None:
        if not self.outer_tolerance > 0:
            raise InvalidArgumentError("outer_tolerance must be > 0")
        if self.max_outer_iterations < 1:
            raise InvalidArgumentError("max_outer_iterations must be >= 1")


@dataclass(frozen=True, eq=False)
class MeansResult:
    """Final centroids, the last transport map and the per-iteration costs.

    ``assignment`` is the last OT map with its cost evaluated at the final
    positions. ``cost_history[t]`` is the OT cost of iteration t.
    """

    centroids: CentroidSet
    assignment: Assignment
    cost_history: Tuple[float, ...]
    iterations: int
    converged: bool
    vot_converged: bool


# ---------------------------------------------------------------------------
# Block updates
# ---------------------------------------------------------------------------


def update_centroids(
    measure: EmpiricalMeasure,
    assignment: Assignment,
    previous_positions: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Mass-weighted centroid of every cell.

    Returns ``(positions, empty)``. Empty cells keep their previous position
    (required when any cell is empty) and are flagged in the boolean mask.
    """
    k = assignment.k
    idx = assignment.centroid_of
    mass = np.bincount(idx, weights=measure.weights, minlength=k)
    sums = np.column_stack(
        [
            np.bincount(idx, weights=measure.weights * measure.points[:, c], minlength=k)
            for c in range(measure.dim)
        ]
    )
    empty = mass <= 0
    positions = np.empty((k, measure.dim))
    filled = ~empty
    positions[filled] = sums[filled] / mass[filled][:, None]
    if np.any(empty):
        if previous_positions is None:
            raise InvalidArgumentError(
                "empty cells need previous positions to stay in place"
            )
        previous = np.asarray(previous_positions, dtype=float).reshape(k, -1)
        positions[empty] = previous[empty]
        logger.warning("%d empty cell(s) kept their previous position", empty.sum())
    return positions, empty


def voronoi_masses(measure: EmpiricalMeasure, positions: np.ndarray) -> np.ndarray:
    """Mass of each unweighted Voronoi cell (lowest index wins ties)."""
    nearest = np.argmin(cost_matrix(measure.points, positions), axis=1)
    return np.bincount(nearest, weights=measure.weights, minlength=len(positions))


def update_weights_lloyd(
    measure: EmpiricalMeasure, centroids: CentroidSet
) -> np.ndarray:
    """Lloyd weights: each sample's mass goes to its nearest centroid, h ignored."""
    if measure.dim != centroids.dim:
        raise InvalidArgumentError("dimension mismatch between measure and centroids")
    return voronoi_masses(measure, centroids.positions)


def floor_weights(weights: np.ndarray, floor: float = WEIGHT_FLOOR) -> np.ndarray:
    """Raise weights below ``floor`` to it and renormalize to sum 1."""
    floored = np.maximum(np.asarray(weights, dtype=float), floor)
    return floored / floored.sum()


# ---------------------------------------------------------------------------
# Block coordinate descent
# ---------------------------------------------------------------------------


def wasserstein_means(
    measure: EmpiricalMeasure,
    initial: CentroidSet,
    opts: Optional[MeansOptions] = None,
) -> MeansResult:
    """Fit the centroid set to the measure by alternating weight, OT and support.

    Stops once no centroid moves more than ``outer_tolerance`` in an
    iteration, or at the iteration cap. VOT non-convergence is reported
    through ``vot_converged`` and never raises.
    """
    opts = opts or MeansOptions()
    if measure.dim != initial.dim:
        raise InvalidArgumentError("dimension mismatch between measure and centroids")

    current = initial
    history: List[float] = []
    vot_converged = True
    converged = False
    last = None
    iterations = 0
    for iterations in range(1, opts.max_outer_iterations + 1):
        if opts.update_weights:
            nu = floor_weights(update_weights_lloyd(measure, current))
            current = current.replace(target_weights=nu)
        last = solve_vot(measure, current, opts.vot_options)
        vot_converged = vot_converged and last.converged
        history.append(last.assignment.transport_cost)
        positions, _ = update_centroids(measure, last.assignment, current.positions)
        displacement = float(
            np.max(np.linalg.norm(positions - current.positions, axis=1))
        )
        current = current.replace(positions=positions, potentials=last.potentials)
        logger.debug(
            "wm iteration %d: cost=%.6g displacement=%.3g",
            iterations, history[-1], displacement,
        )
        if displacement <= opts.outer_tolerance:
            converged = True
            break

    if not vot_converged:
        logger.warning("wasserstein means: at least one OT solve did not converge")
    assignment = Assignment.compute(
        measure, current.positions, last.assignment.centroid_of
    )
    return MeansResult(
        centroids=current,
        assignment=assignment,
        cost_history=tuple(history),
        iterations=iterations,
        converged=converged,
        vot_converged=vot_converged,
    )


# ---------------------------------------------------------------------------
# Label propagation
# ---------------------------------------------------------------------------


def classify_targets(
    measure: EmpiricalMeasure, centroids: CentroidSet, assignment: Assignment
) -> np.ndarray:
    """Each sample takes the class of the centroid it is transported to."""
    if centroids.labels is None:
        raise InvalidArgumentError("classify_targets needs labeled centroids")
    if assignment.centroid_of.shape != (measure.n,):
        raise InvalidArgumentError("assignment does not match the measure")
    if assignment.k != centroids.k:
        raise InvalidArgumentError("assignment does not match the centroid set")
    return centroids.labels[assignment.centroid_of]


def accuracy(predicted, truth) -> float:
    """Fraction of exact label matches."""
    predicted = np.asarray(predicted).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if predicted.shape != truth.shape:
        raise InvalidArgumentError(
            f"length mismatch: {predicted.size} predictions, {truth.size} labels"
        )
    if predicted.size == 0:
        raise InvalidArgumentError("accuracy of zero samples is undefined")
    return float(np.mean(predicted == truth))
