"""Variational semi-discrete optimal transport on power diagrams.

Given fixed centroids y and target weights nu, find potentials h such that
the power cells

    S_j = {x : ||x - y_j||^2 - h_j <= ||x - y_i||^2 - h_i for all i}

carry mass nu_j. The potentials maximize the concave dual

    E(h) = sum_i mu_i min_j (||x_i - y_j||^2 - h_j) + sum_j nu_j h_j

whose supergradient is nu - cell_mass(h). Ties go to the lowest index.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse.csgraph import csgraph_from_dense, dijkstra
from scipy.spatial.distance import cdist

from rwmeans.errors import InvalidArgumentError
from rwmeans.measures import (
    WEIGHT_TOLERANCE,
    Assignment,
    CentroidSet,
    EmpiricalMeasure,
)

logger = logging.getLogger(__name__)

# Step growth after an accepted ascent step without a curvature estimate.
_STEP_GROWTH = 1.5
# Cap on how far one Barzilai-Borwein step may exceed the previous step.
_MAX_STEP_RATIO = 10.0
# Ascent iterations without a smaller total imbalance before path repair.
_STALL_PATIENCE = 10
# Imbalance, in samples, that path repair is always allowed to take on.
_REPAIR_MIN_MOVES = 64
# Relative slack below which two cells count as tied for a sample.
_TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class VotOptions:
    """Dual-ascent hyperparameters.

    ``mass_tolerance=None`` means the largest sample weight, the finest
    per-cell granularity a discrete measure can reach.
    """

    mass_tolerance: Optional[float] = None
    max_iterations: int = 5000
    initial_step: float = 0.1
    step_decay: float = 0.5

    def __post_init__(self) -> None:
        if self.mass_tolerance is not None and not self.mass_tolerance > 0:
            raise InvalidArgumentError("mass_tolerance must be > 0")
        if self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be >= 1")
        if not self.initial_step > 0:
            raise InvalidArgumentError("initial_step must be > 0")
        if not 0 < self.step_decay <= 1:
            raise InvalidArgumentError("step_decay must lie in (0, 1]")

    def tolerance_for(self, measure: EmpiricalMeasure) -> float:
        if self.mass_tolerance is not None:
            return self.mass_tolerance
        return float(measure.weights.max())


@dataclass(frozen=True, eq=False)
class VotResult:
    """Outcome of a dual ascent: the best-residual iterate seen.

    ``dual_history`` lists the dual value of every accepted ascent step and
    every path move, starting with the initial potentials; it is
    non-decreasing. The returned potentials are those of the best-residual
    iterate, with the ties left by path moves broken.
    """

    assignment: Assignment
    potentials: np.ndarray
    mass_residual: float
    iterations_used: int
    converged: bool
    dual_history: Tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# Power-diagram evaluation
# ---------------------------------------------------------------------------


def _check_dims(measure: EmpiricalMeasure, centroids: CentroidSet) -> None:
    if measure.dim != centroids.dim:
        raise InvalidArgumentError(
            f"dimension mismatch: measure d={measure.dim}, "
            f"centroids d={centroids.dim}"
        )


def cost_matrix(points: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Squared Euclidean costs, shape (n, k)."""
    return cdist(points, positions, metric="sqeuclidean")


def _evaluate(
    costs: np.ndarray, weights: np.ndarray, nu: np.ndarray, h: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Power assignment, cell masses and dual value at potentials h."""
    power = costs - h
    centroid_of = np.argmin(power, axis=1)
    best = power[np.arange(power.shape[0]), centroid_of]
    cell_mass = np.bincount(centroid_of, weights=weights, minlength=nu.shape[0])
    energy = float(np.dot(weights, best) + np.dot(nu, h))
    return centroid_of, cell_mass, energy


def assign(measure: EmpiricalMeasure, centroids: CentroidSet) -> Assignment:
    """Send every sample to the centroid minimizing ||x - y_j||^2 - h_j."""
    _check_dims(measure, centroids)
    costs = cost_matrix(measure.points, centroids.positions)
    centroid_of = np.argmin(costs - centroids.potentials, axis=1)
    return Assignment.compute(measure, centroids.positions, centroid_of)


def dual_energy(measure: EmpiricalMeasure, centroids: CentroidSet) -> float:
    """Concave dual value E(h) at the centroid set's current potentials."""
    _check_dims(measure, centroids)
    costs = cost_matrix(measure.points, centroids.positions)
    _, _, energy = _evaluate(
        costs, measure.weights, centroids.target_weights, centroids.potentials
    )
    return energy


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Iterate:
    residual: float
    potentials: np.ndarray
    centroid_of: np.ndarray


def _residual(cell_mass: np.ndarray, nu: np.ndarray) -> float:
    return float(np.max(np.abs(cell_mass - nu)))


def _next_step(step: float, moved: np.ndarray, change: np.ndarray) -> float:
    """Barzilai-Borwein step from the last accepted move, capped in growth."""
    curvature = -float(np.dot(moved, change))
    if curvature <= 0:
        return step * _STEP_GROWTH
    return min(float(np.dot(moved, moved)) / curvature, step * _MAX_STEP_RATIO)


def solve_vot(
    measure: EmpiricalMeasure,
    centroids: CentroidSet,
    opts: Optional[VotOptions] = None,
) -> VotResult:
    """Ascend the dual until every cell mass is within tolerance of nu.

    Steps are h <- h + eta * (nu - cell_mass), re-centered to sum 0. A step
    that lowers the dual value is rejected and eta is multiplied by
    ``step_decay``; after an accepted step eta is re-estimated from the last
    two gradients (Barzilai-Borwein). Once the total imbalance stops
    shrinking, the remaining samples are moved along cheapest cell paths
    (see ``_repair``); each move counts as one iteration. The centroid set's
    potentials are the starting point, so callers can warm-start.
    """
    opts = opts or VotOptions()
    _check_dims(measure, centroids)
    nu = np.asarray(centroids.target_weights, dtype=float)
    if abs(nu.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise InvalidArgumentError("target weights must sum to 1")
    if np.unique(centroids.positions, axis=0).shape[0] != centroids.k:
        raise InvalidArgumentError("centroid positions must be distinct")

    tolerance = opts.tolerance_for(measure)
    weights = measure.weights
    costs = cost_matrix(measure.points, centroids.positions)

    h = np.array(centroids.potentials, dtype=float)
    centroid_of, cell_mass, energy = _evaluate(costs, weights, nu, h)
    best = _Iterate(_residual(cell_mass, nu), h, centroid_of)
    history = [energy]
    step = opts.initial_step
    least_imbalance = float(np.abs(cell_mass - nu).sum())
    # Path repair moves about one sample per iteration, so it starts only
    # once the imbalance is down to a few samples per cell.
    repair_span = 2.0 * max(centroids.k, _REPAIR_MIN_MOVES) * float(weights.max())
    stalled = 0
    iterations = 0

    while iterations < opts.max_iterations and best.residual > tolerance:
        iterations += 1
        gradient = nu - cell_mass
        candidate = h + step * gradient
        candidate -= candidate.mean()
        c_of, c_mass, c_energy = _evaluate(costs, weights, nu, candidate)
        if c_energy < energy:
            step *= opts.step_decay
            continue
        moved = candidate - h
        change = (nu - c_mass) - gradient
        h, centroid_of, cell_mass, energy = candidate, c_of, c_mass, c_energy
        history.append(energy)
        residual = _residual(cell_mass, nu)
        if residual < best.residual:
            best = _Iterate(residual, h, centroid_of)
        imbalance = float(np.abs(cell_mass - nu).sum())
        if imbalance < least_imbalance:
            least_imbalance = imbalance
            stalled = 0
        else:
            stalled += 1
        step = _next_step(step, moved, change)
        if stalled >= _STALL_PATIENCE and least_imbalance <= repair_span:
            break

    ascent_iterations = iterations
    if best.residual > tolerance and iterations < opts.max_iterations:
        repaired, moves, gains = _repair(
            costs, weights, nu, h, centroid_of, tolerance,
            opts.max_iterations - iterations,
        )
        iterations += moves
        for gain in gains:
            energy += gain
            history.append(energy)
        if repaired is not None and repaired.residual < best.residual:
            best = repaired

    converged = best.residual <= tolerance
    if converged:
        logger.debug(
            "vot converged: k=%d iterations=%d (path moves %d) residual=%.3g",
            centroids.k, iterations, iterations - ascent_iterations, best.residual,
        )
    else:
        logger.warning(
            "vot did not converge: k=%d iterations=%d residual=%.3g > %.3g",
            centroids.k, iterations, best.residual, tolerance,
        )
    return VotResult(
        assignment=Assignment.compute(measure, centroids.positions, best.centroid_of),
        potentials=best.potentials,
        mass_residual=best.residual,
        iterations_used=iterations,
        converged=converged,
        dual_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# Path repair
# ---------------------------------------------------------------------------


def _reduced_costs(
    costs: np.ndarray, h: np.ndarray, centroid_of: np.ndarray
) -> np.ndarray:
    """Extra power cost of sending each sample to each cell, clipped at 0."""
    power = costs - h
    own = power[np.arange(power.shape[0]), centroid_of]
    return np.maximum(power - own[:, None], 0.0)


def _cell_slack(reduced: np.ndarray, centroid_of: np.ndarray, k: int) -> np.ndarray:
    """slack[a, b]: cheapest reduced cost of moving a sample of cell a to b."""
    slack = np.full((k, k), np.inf)
    order = np.argsort(centroid_of, kind="stable")
    cells, starts = np.unique(centroid_of[order], return_index=True)
    slack[cells] = np.minimum.reduceat(reduced[order], starts, axis=0)
    np.fill_diagonal(slack, np.inf)
    return slack


def _shortest_paths(edges: np.ndarray, root: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cell distances and predecessors from root; edges[u, v] is the length of u -> v."""
    # inf marks a missing edge so zero-slack ties stay in the graph
    graph = csgraph_from_dense(edges, null_value=np.inf)
    dist, pred = dijkstra(graph, directed=True, indices=root, return_predecessors=True)
    return dist, pred


def _repair(
    costs: np.ndarray,
    weights: np.ndarray,
    nu: np.ndarray,
    h: np.ndarray,
    centroid_of: np.ndarray,
    tolerance: float,
    budget: int,
) -> Tuple[Optional[_Iterate], int, List[float]]:
    """Shift samples along cheapest cell paths until masses are within tolerance.

    A short cell pulls one sample from its nearest over-full cell (or an
    over-full cell pushes one to its nearest short cell) along the shortest
    path of reduced costs. Potentials of the cells closer to the root than
    that end move by their remaining path length, so reduced costs stay
    non-negative and every path edge becomes a tie; the path's samples then
    change cells. Every cell that moves has excess of the root's sign, so
    each move changes the dual by a non-negative amount, returned in
    ``gains``.

    Returns the power assignment of the final state once ties are broken, or
    None if a cycle of ties leaves no strict power diagram.
    """
    k = nu.shape[0]
    h = h.copy()
    centroid_of = centroid_of.copy()
    gains: List[float] = []
    least_imbalance = np.inf
    stalled = 0
    moves = 0
    while moves < budget and stalled < 2 * _STALL_PATIENCE:
        mass = np.bincount(centroid_of, weights=weights, minlength=k)
        excess = mass - nu
        short, full = int(np.argmin(excess)), int(np.argmax(excess))
        if excess[short] < -tolerance:
            root, pull = short, True
        elif excess[full] > tolerance:
            root, pull = full, False
        else:
            break
        imbalance = float(np.abs(excess).sum())
        if imbalance < least_imbalance:
            least_imbalance = imbalance
            stalled = 0
        else:
            stalled += 1
        moves += 1

        reduced = _reduced_costs(costs, h, centroid_of)
        slack = _cell_slack(reduced, centroid_of, k)
        goals = excess > 0 if pull else excess < 0
        dist, pred = _shortest_paths(slack.T if pull else slack, root)
        ends = np.where(goals, dist, np.inf)
        end = int(np.argmin(ends))
        if not np.isfinite(ends[end]):
            break
        shift = np.maximum(ends[end] - dist, 0.0)
        if pull:
            h += shift
            gains.append(float(np.dot(shift, -excess)))
        else:
            h -= shift
            gains.append(float(np.dot(shift, excess)))
        h -= h.mean()

        chosen = []
        node = end
        while node != root:
            src, dst = (node, pred[node]) if pull else (pred[node], node)
            members = np.flatnonzero(centroid_of == src)
            chosen.append((members[np.argmin(reduced[members, dst])], dst))
            node = pred[node]
        for sample, dst in chosen:
            centroid_of[sample] = dst

    potentials = _strict_potentials(costs, h, centroid_of, k)
    if potentials is None:
        logger.debug("vot path repair: tie cycle, no strict power diagram")
        return None, moves, gains
    strict_of, strict_mass, _ = _evaluate(costs, weights, nu, potentials)
    return _Iterate(_residual(strict_mass, nu), potentials, strict_of), moves, gains


def _strict_potentials(
    costs: np.ndarray, h: np.ndarray, centroid_of: np.ndarray, k: int
) -> Optional[np.ndarray]:
    """Perturb h so that ``centroid_of`` is the unique power assignment.

    Ties (zero slack from cell a to b) must be resolved in favour of a, so a
    is raised by at least one more level than b; levels are longest paths in
    the graph of ties. The level step stays below half of every positive
    slack it could close.
    """
    slack = _cell_slack(_reduced_costs(costs, h, centroid_of), centroid_of, k)
    tied = slack <= _TIE_TOLERANCE * max(1.0, float(np.max(costs)))
    level = np.zeros(k)
    for _ in range(k + 1):
        raised = np.maximum(level, np.max(np.where(tied, level + 1.0, 0.0), axis=1))
        if np.array_equal(raised, level):
            break
        level = raised
    else:
        return None
    climb = level[None, :] - level[:, None]
    open_ = (climb > 0) & np.isfinite(slack)
    limits = slack[open_] / climb[open_]
    delta = 0.5 * float(limits.min()) if limits.size else 1.0
    potentials = h + delta * level
    return potentials - potentials.mean()
