"""Regularized Wasserstein means and skeleton layout.

One outer iteration:

1. semi-discrete OT with the positions fixed (warm-started potentials),
2. target centroids t_j = mass-weighted centroid of each cell,
3. inner solve of sum ||y - t||^2 + lambda L_reg(y) for the regularizer,
4. optionally, momentum update of the target weights.

Target weights stay fixed unless ``momentum_weight_update`` is set.
"""

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from rwmeans.errors import InvalidArgumentError
from rwmeans.means import (
    accuracy,
    classify_targets,
    floor_weights,
    update_centroids,
    voronoi_masses,
)
from rwmeans.measures import Assignment, CentroidSet, EmpiricalMeasure, as_points
from rwmeans.regularizers import (
    CurveRegularizer,
    CurveTopology,
    NoRegularizer,
    Regularizer,
)
from rwmeans.vot import VotOptions, solve_vot

logger = logging.getLogger(__name__)

DEFAULT_MOMENTUM = 0.9
DEFAULT_SKELETON_LAMBDA1 = 0.01
DEFAULT_SKELETON_LAMBDA2 = 0.1


@dataclass(frozen=True)
class RwmOptions:
    regularizer: Regularizer = field(default_factory=NoRegularizer)
    outer_tolerance: float = 1e-4
    max_outer_iterations: int = 100
    vot_options: VotOptions = field(default_factory=VotOptions)
    momentum_weight_update: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.outer_tolerance > 0:
            raise InvalidArgumentError("outer_tolerance must be > 0")
        if self.max_outer_iterations < 1:
            raise InvalidArgumentError("max_outer_iterations must be >= 1")
        momentum = self.momentum_weight_update
        if momentum is not None and not 0.0 <= momentum < 1.0:
            raise InvalidArgumentError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics of one outer iteration.

    ``transport_cost`` is the cost of this iteration's map evaluated at the
    new positions, so ``total_loss = transport_cost + regularizer_loss``.
    ``vot_cost`` is the same map's cost at the positions OT was solved for.
    ``inner_start``/``inner_end`` bracket the inner objective.
    ``retained_cost`` is the previous map's cost at the positions OT was
    solved for, recorded only when both maps carry the same cell masses.
    """

    iteration: int
    transport_cost: float
    regularizer_loss: float
    total_loss: float
    max_displacement: float
    vot_residual: float
    vot_converged: bool
    vot_cost: float
    inner_start: float
    inner_end: float
    inner_converged: bool
    retained_cost: Optional[float] = None
    accuracy: Optional[float] = None


@dataclass
class RwmTrace:
    records: List[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(record, name) for record in self.records])

    def monotone_blocks(self, tolerance: float = 1e-9) -> bool:
        """True when neither block of any iteration raised its objective.

        The inner solve must end at or below its starting objective, and the
        new map must cost no more than the retained previous map at equal
        cell masses.
        """
        return all(
            record.inner_end <= record.inner_start + tolerance
            and (
                record.retained_cost is None
                or record.vot_cost <= record.retained_cost + tolerance
            )
            for record in self.records
        )

    @staticmethod
    def field_names() -> Sequence[str]:
        return [f.name for f in fields(IterationRecord)]


@dataclass(frozen=True, eq=False)
class RwmResult:
    """Final centroids, the last transport map (costed at them) and the trace."""

    centroids: CentroidSet
    assignment: Assignment
    trace: RwmTrace
    iterations: int
    converged: bool
    vot_converged: bool


def momentum_weights(
    weights: np.ndarray, voronoi: np.ndarray, momentum: float
) -> np.ndarray:
    """nu <- momentum * nu + (1 - momentum) * Voronoi masses, floored, renormalized."""
    blended = momentum * np.asarray(weights, dtype=float) + (1.0 - momentum) * voronoi
    return floor_weights(blended)


def regularized_wasserstein_means(
    measure: EmpiricalMeasure,
    initial: CentroidSet,
    opts: Optional[RwmOptions] = None,
) -> RwmResult:
    """Alternate OT and regularized support updates until the support settles."""
    opts = opts or RwmOptions()
    if measure.dim != initial.dim:
        raise InvalidArgumentError(
            f"dimension mismatch: measure d={measure.dim}, centroids d={initial.dim}"
        )
    regularizer = opts.regularizer
    regularizer.check(initial)
    track_accuracy = measure.labels is not None and initial.labels is not None

    current = initial
    trace = RwmTrace()
    vot_converged = True
    converged = False
    last = None
    iterations = 0
    for iterations in range(1, opts.max_outer_iterations + 1):
        previous = last
        last = solve_vot(measure, current, opts.vot_options)
        retained_cost = None
        if previous is not None and np.allclose(
            previous.assignment.cell_mass, last.assignment.cell_mass, rtol=0.0, atol=1e-12
        ):
            retained_cost = Assignment.compute(
                measure, current.positions, previous.assignment.centroid_of
            ).transport_cost
        vot_converged = vot_converged and last.converged
        targets, _ = update_centroids(measure, last.assignment, current.positions)
        inner = regularizer.update(targets, current.positions, current.labels)
        positions = inner.positions
        displacement = float(
            np.max(np.linalg.norm(positions - current.positions, axis=1))
        )
        moved = Assignment.compute(measure, positions, last.assignment.centroid_of)
        record = IterationRecord(
            iteration=iterations,
            transport_cost=moved.transport_cost,
            regularizer_loss=inner.reg_loss,
            total_loss=moved.transport_cost + inner.reg_loss,
            max_displacement=displacement,
            vot_residual=last.mass_residual,
            vot_converged=last.converged,
            vot_cost=last.assignment.transport_cost,
            inner_start=inner.objective_start,
            inner_end=inner.objective_end,
            inner_converged=inner.converged,
            retained_cost=retained_cost,
            accuracy=(
                accuracy(
                    classify_targets(measure, current, last.assignment),
                    measure.labels,
                )
                if track_accuracy
                else None
            ),
        )
        trace.records.append(record)
        logger.debug(
            "rwm iteration %d: cost=%.6g reg=%.6g displacement=%.3g",
            iterations, record.transport_cost, record.regularizer_loss, displacement,
        )

        current = current.replace(positions=positions, potentials=last.potentials)
        if opts.momentum_weight_update is not None:
            current = current.replace(
                target_weights=momentum_weights(
                    current.target_weights,
                    voronoi_masses(measure, current.positions),
                    opts.momentum_weight_update,
                )
            )
        if displacement <= opts.outer_tolerance:
            converged = True
            break

    if not vot_converged:
        logger.warning("rwm: at least one OT solve did not converge")
    assignment = Assignment.compute(
        measure, current.positions, last.assignment.centroid_of
    )
    return RwmResult(
        centroids=current,
        assignment=assignment,
        trace=trace,
        iterations=iterations,
        converged=converged,
        vot_converged=vot_converged,
    )


# ---------------------------------------------------------------------------
# Skeleton layout
# ---------------------------------------------------------------------------


def initial_layout(
    topology: CurveTopology, fixed_positions: Mapping[int, np.ndarray], k: int
) -> np.ndarray:
    """Spread free nodes evenly between already-positioned nodes of each branch.

    Repeats over the branches until nothing new can be placed, so a branch
    anchored on a junction is laid out once the junction is known.
    """
    placed: Dict[int, np.ndarray] = {
        int(i): np.asarray(p, dtype=float) for i, p in fixed_positions.items()
    }
    progress = True
    while progress:
        progress = False
        for branch in topology.branches:
            anchors = [p for p, node in enumerate(branch) if node in placed]
            for a, b in zip(anchors, anchors[1:]):
                start, end = placed[branch[a]], placed[branch[b]]
                span = b - a
                for offset in range(1, span):
                    node = branch[a + offset]
                    if node not in placed:
                        placed[node] = start + (end - start) * (offset / span)
                        progress = True
    unplaced = [i for i in range(k) if i not in placed]
    if unplaced:
        raise InvalidArgumentError(
            f"cannot place nodes {unplaced}: each free node needs positioned "
            "nodes on both sides along a branch"
        )
    return np.vstack([placed[i] for i in range(k)])


def skeleton_layout(
    cloud: EmpiricalMeasure,
    initial: Optional[CentroidSet],
    topology: CurveTopology,
    fixed_positions: Mapping[int, Sequence[float]],
    opts: Optional[RwmOptions] = None,
) -> RwmResult:
    """Fit a curve skeleton with pinned nodes to a 3-D point cloud.

    Runs the regularized means with the length + curvature term on
    ``topology`` and momentum weight updates (default 0.9). Without an
    initial centroid set, free nodes start evenly along their branches.
    """
    if cloud.dim != 3:
        raise InvalidArgumentError(f"skeleton layout needs 3-D points, got d={cloud.dim}")
    pinned = {int(i): as_points(p, "fixed position").reshape(-1) for i, p in fixed_positions.items()}
    missing = sorted(topology.fixed_nodes - set(pinned))
    if missing:
        raise InvalidArgumentError(f"fixed nodes {missing} have no position")
    for i, p in pinned.items():
        if p.shape != (3,):
            raise InvalidArgumentError(f"fixed position of node {i} must have 3 coordinates")

    k = initial.k if initial is not None else topology.max_index + 1
    topology.validate_for(k)
    if initial is None:
        initial = CentroidSet.uniform(initial_layout(topology, pinned, k))
    else:
        positions = np.array(initial.positions, dtype=float)
        for i in topology.fixed_nodes:
            positions[i] = pinned[i]
        initial = initial.replace(positions=positions)

    opts = opts or RwmOptions(
        regularizer=CurveRegularizer(
            lambda1=DEFAULT_SKELETON_LAMBDA1,
            lambda2=DEFAULT_SKELETON_LAMBDA2,
            topology=topology,
        )
    )
    if not isinstance(opts.regularizer, CurveRegularizer):
        raise InvalidArgumentError("skeleton layout needs the curve regularizer")
    momentum = opts.momentum_weight_update
    if momentum is None:
        momentum = DEFAULT_MOMENTUM
    opts = replace(
        opts,
        regularizer=replace(opts.regularizer, topology=topology),
        momentum_weight_update=momentum,
    )
    return regularized_wasserstein_means(cloud, initial, opts)
