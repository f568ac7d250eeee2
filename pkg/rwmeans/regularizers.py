"""Regularization terms on centroid positions and their inner minimizers.

Every inner problem has the form

    min_y  sum_j ||y_j - t_j||^2 + lambda * L_reg(y)

where t are the target centroids of the current transport map. Quadratic
terms (label potential, affine and rigid consistency) are solved exactly;
the length + curvature term is minimized by gradient descent with
backtracking.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar, FrozenSet, Optional, Tuple, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from rwmeans.errors import InvalidArgumentError
from rwmeans.measures import CentroidSet, as_labels, as_points

logger = logging.getLogger(__name__)

REGULARIZER_KINDS = ("none", "label", "affine", "rigid", "curve")

# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurveTopology:
    """Ordered branches over centroid indices plus the pinned node set."""

    branches: Tuple[Tuple[int, ...], ...]
    fixed_nodes: FrozenSet[int] = frozenset()

    def __post_init__(self) -> None:
        branches = tuple(tuple(int(i) for i in branch) for branch in self.branches)
        if not branches:
            raise InvalidArgumentError("topology needs at least one branch")
        for b, branch in enumerate(branches):
            if len(branch) < 2:
                raise InvalidArgumentError(f"branch {b} has fewer than 2 nodes")
            if min(branch) < 0:
                raise InvalidArgumentError(f"branch {b} has a negative index")
            if any(a == c for a, c in zip(branch, branch[1:])):
                raise InvalidArgumentError(
                    f"branch {b} repeats a node consecutively"
                )
        fixed = frozenset(int(i) for i in self.fixed_nodes)
        if fixed and min(fixed) < 0:
            raise InvalidArgumentError("fixed nodes must be nonnegative indices")
        object.__setattr__(self, "branches", branches)
        object.__setattr__(self, "fixed_nodes", fixed)

    @classmethod
    def chain(cls, k: int, fix_ends: bool = True) -> "CurveTopology":
        """A single branch 0..k-1, optionally pinning both ends."""
        fixed = frozenset({0, k - 1}) if fix_ends else frozenset()
        return cls(branches=(tuple(range(k)),), fixed_nodes=fixed)

    @property
    def max_index(self) -> int:
        indices = [i for branch in self.branches for i in branch]
        return max(indices + list(self.fixed_nodes))

    def validate_for(self, k: int) -> None:
        if self.max_index >= k:
            raise InvalidArgumentError(
                f"topology refers to node {self.max_index} but only {k} centroids exist"
            )

    def branch_of(self, node: int) -> int:
        """Index of the first branch containing ``node``, or -1."""
        for b, branch in enumerate(self.branches):
            if node in branch:
                return b
        return -1


@dataclass(frozen=True, eq=False)
class AffineMap:
    """y -> linear @ y + translation."""

    linear: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return as_points(points) @ self.linear.T + self.translation


@dataclass(frozen=True)
class CurveInnerOptions:
    tolerance: float = 1e-6
    max_iterations: int = 1000
    initial_step: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4

    def __post_init__(self) -> None:
        if not self.tolerance > 0:
            raise InvalidArgumentError("inner tolerance must be > 0")
        if self.max_iterations < 1:
            raise InvalidArgumentError("inner max_iterations must be >= 1")
        if not 0 < self.shrink < 1:
            raise InvalidArgumentError("shrink must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class InnerSolution:
    """Result of one inner solve.

    ``objective_start`` is the inner objective at y = targets (pinned nodes
    clamped); ``objective_end`` is its value at ``positions``.
    """

    positions: np.ndarray
    reg_loss: float
    objective_start: float
    objective_end: float
    converged: bool = True
    iterations: int = 0
    affine: Optional[AffineMap] = None


def _check_lambda(value: float, name: str = "lambda") -> None:
    if not np.isfinite(value) or value < 0:
        raise InvalidArgumentError(f"{name} must be a finite value >= 0")


def _required_labels(labels, k: int) -> np.ndarray:
    arr = as_labels(labels, k)
    if arr is None:
        raise InvalidArgumentError("label regularization needs centroid labels")
    return arr


def _squared_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    return float(np.sum(diff * diff))


# ---------------------------------------------------------------------------
# Label potential
# ---------------------------------------------------------------------------


def label_potential_loss(positions, labels, lam: float) -> float:
    """lam * sum of squared distances over unordered same-label pairs.

    Uses sum_{pairs} ||y_i - y_j||^2 = m * sum_i ||y_i - mean||^2 per group.
    """
    pos = as_points(positions, "positions")
    labels = _required_labels(labels, pos.shape[0])
    _check_lambda(lam)
    total = 0.0
    for label in np.unique(labels):
        group = pos[labels == label]
        if group.shape[0] < 2:
            continue
        centered = group - group.mean(axis=0)
        total += group.shape[0] * float(np.sum(centered * centered))
    return lam * total


def solve_label_update(targets, labels, lam: float) -> np.ndarray:
    """Exact minimizer of sum ||y - t||^2 + label_potential_loss(y).

    Per label group of size m this is the SPD system
    ((1 + lam m) I - lam 1 1^T) y = t, solved by Cholesky per group.
    """
    tgt = as_points(targets, "targets")
    labels = _required_labels(labels, tgt.shape[0])
    _check_lambda(lam)
    out = tgt.copy()
    if lam == 0:
        return out
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        m = members.size
        if m < 2:
            continue
        system = (1.0 + lam * m) * np.eye(m) - lam * np.ones((m, m))
        out[members] = cho_solve(cho_factor(system), tgt[members])
    return out


# ---------------------------------------------------------------------------
# Affine and rigid consistency
# ---------------------------------------------------------------------------


def fit_affine(source, targets) -> AffineMap:
    """Least-squares affine map sending ``source`` onto ``targets``.

    Solved on homogeneous coordinates with an SVD-based least-squares
    solve, which returns the minimum-norm solution when the points are
    not in general position.
    """
    src = as_points(source, "source")
    tgt = as_points(targets, "targets")
    if src.shape != tgt.shape:
        raise InvalidArgumentError(
            f"source {src.shape} and targets {tgt.shape} differ in shape"
        )
    k, d = src.shape
    homogeneous = np.hstack([src, np.ones((k, 1))])
    coeffs, _, rank, _ = np.linalg.lstsq(homogeneous, tgt, rcond=None)
    if rank < d + 1:
        logger.debug("affine fit is rank deficient (rank %d < %d)", rank, d + 1)
    return AffineMap(linear=coeffs[:d].T.copy(), translation=coeffs[d].copy())


def fit_rigid(source, targets) -> AffineMap:
    """Least-squares rotation + translation (Kabsch, reflections excluded)."""
    src = as_points(source, "source")
    tgt = as_points(targets, "targets")
    if src.shape != tgt.shape:
        raise InvalidArgumentError(
            f"source {src.shape} and targets {tgt.shape} differ in shape"
        )
    d = src.shape[1]
    src_mean = src.mean(axis=0)
    tgt_mean = tgt.mean(axis=0)
    covariance = (src - src_mean).T @ (tgt - tgt_mean)
    u, _, vt = np.linalg.svd(covariance)
    correction = np.eye(d)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    correction[-1, -1] = sign if sign != 0 else 1.0
    rotation = vt.T @ correction @ u.T
    return AffineMap(linear=rotation, translation=tgt_mean - rotation @ src_mean)


def solve_affine_update(targets, predictions, lam: float) -> np.ndarray:
    """Exact minimizer of sum ||y - t||^2 + lam sum ||y - p||^2: (t + lam p) / (1 + lam)."""
    tgt = as_points(targets, "targets")
    pred = as_points(predictions, "predictions")
    if tgt.shape != pred.shape:
        raise InvalidArgumentError("targets and predictions differ in shape")
    _check_lambda(lam)
    return (tgt + lam * pred) / (1.0 + lam)


# ---------------------------------------------------------------------------
# Length and curvature
# ---------------------------------------------------------------------------


def curve_terms(positions, topology: CurveTopology) -> Tuple[float, float]:
    """(total polyline length, total squared second difference) over branches."""
    pos = as_points(positions, "positions")
    topology.validate_for(pos.shape[0])
    length = 0.0
    curvature = 0.0
    for branch in topology.branches:
        nodes = pos[list(branch)]
        length += float(np.sum(np.linalg.norm(np.diff(nodes, axis=0), axis=1)))
        if len(branch) >= 3:
            second = nodes[:-2] - 2.0 * nodes[1:-1] + nodes[2:]
            curvature += float(np.sum(second * second))
    return length, curvature


def curve_loss(
    positions, topology: CurveTopology, lambda1: float, lambda2: float
) -> float:
    """lambda1 * length + lambda2 * squared second differences, per branch."""
    _check_lambda(lambda1, "lambda1")
    _check_lambda(lambda2, "lambda2")
    length, curvature = curve_terms(positions, topology)
    return lambda1 * length + lambda2 * curvature


def curve_gradient(
    positions: np.ndarray, topology: CurveTopology, lambda1: float, lambda2: float
) -> np.ndarray:
    """Gradient of ``curve_loss``; zero-length segments contribute 0."""
    grad = np.zeros_like(positions)
    for branch in topology.branches:
        idx = np.asarray(branch)
        nodes = positions[idx]
        if lambda1:
            seg = nodes[1:] - nodes[:-1]
            norms = np.linalg.norm(seg, axis=1)
            unit = np.zeros_like(seg)
            nonzero = norms > 0
            unit[nonzero] = seg[nonzero] / norms[nonzero][:, None]
            np.add.at(grad, idx[:-1], -lambda1 * unit)
            np.add.at(grad, idx[1:], lambda1 * unit)
        if lambda2 and idx.size >= 3:
            second = nodes[:-2] - 2.0 * nodes[1:-1] + nodes[2:]
            np.add.at(grad, idx[:-2], 2.0 * lambda2 * second)
            np.add.at(grad, idx[1:-1], -4.0 * lambda2 * second)
            np.add.at(grad, idx[2:], 2.0 * lambda2 * second)
    return grad


def solve_curve_update(
    targets,
    topology: CurveTopology,
    lambda1: float,
    lambda2: float,
    inner_opts: Optional[CurveInnerOptions] = None,
    fixed_positions=None,
) -> InnerSolution:
    """Minimize sum ||y - t||^2 + curve_loss(y) with pinned nodes held still.

    Gradient descent with Armijo backtracking, starting from the targets
    with pinned nodes clamped to ``fixed_positions`` (rows in ascending
    node order; defaults to the targets themselves). Stops when the
    max-norm of the free gradient is below the tolerance or at the
    iteration cap; on a stall the best iterate is returned unconverged.
    """
    opts = inner_opts or CurveInnerOptions()
    tgt = as_points(targets, "targets")
    k = tgt.shape[0]
    topology.validate_for(k)
    _check_lambda(lambda1, "lambda1")
    _check_lambda(lambda2, "lambda2")

    y = tgt.copy()
    fixed = sorted(topology.fixed_nodes)
    if fixed and fixed_positions is not None:
        pinned = as_points(fixed_positions, "fixed_positions")
        if pinned.shape != (len(fixed), tgt.shape[1]):
            raise InvalidArgumentError(
                f"expected {len(fixed)} fixed positions of dimension {tgt.shape[1]}"
            )
        y[fixed] = pinned
    free = np.ones(k, dtype=bool)
    free[fixed] = False

    def objective(z: np.ndarray) -> float:
        return _squared_distance(z, tgt) + curve_loss(z, topology, lambda1, lambda2)

    def gradient(z: np.ndarray) -> np.ndarray:
        g = 2.0 * (z - tgt) + curve_gradient(z, topology, lambda1, lambda2)
        g[~free] = 0.0
        return g

    value = objective(y)
    start = value
    step = opts.initial_step
    converged = False
    iterations = 0
    while iterations < opts.max_iterations:
        g = gradient(y)
        if float(np.max(np.abs(g))) <= opts.tolerance:
            converged = True
            break
        iterations += 1
        decrease = float(np.sum(g * g))
        t = step
        accepted = False
        while t > 1e-20:
            candidate = y - t * g
            c_value = objective(candidate)
            if c_value <= value - opts.armijo * t * decrease:
                accepted = True
                break
            t *= opts.shrink
        if not accepted:
            logger.debug("curve inner solve stalled after %d iterations", iterations)
            break
        y, value = candidate, c_value
        step = t / opts.shrink

    if not converged:
        logger.debug(
            "curve inner solve stopped unconverged at objective %.6g", value
        )
    return InnerSolution(
        positions=y,
        reg_loss=curve_loss(y, topology, lambda1, lambda2),
        objective_start=start,
        objective_end=value,
        converged=converged,
        iterations=iterations,
    )


# ---------------------------------------------------------------------------
# Regularizer variants
# ---------------------------------------------------------------------------


class Regularizer(ABC):
    """One variant of the regularization term, with its inner solver."""

    kind: ClassVar[str]

    def check(self, centroids: CentroidSet) -> None:
        """Raise InvalidArgumentError if the variant cannot act on ``centroids``."""

    @abstractmethod
    def update(self, targets, positions, labels=None) -> InnerSolution:
        """Solve the inner problem given targets and the current positions."""


@dataclass(frozen=True)
class NoRegularizer(Regularizer):
    kind: ClassVar[str] = "none"

    def update(self, targets, positions, labels=None) -> InnerSolution:
        tgt = as_points(targets, "targets")
        return InnerSolution(
            positions=tgt.copy(), reg_loss=0.0, objective_start=0.0, objective_end=0.0
        )


@dataclass(frozen=True)
class LabelPotential(Regularizer):
    lam: float = 1.0
    kind: ClassVar[str] = "label"

    def __post_init__(self) -> None:
        _check_lambda(self.lam)

    def check(self, centroids: CentroidSet) -> None:
        if centroids.labels is None:
            raise InvalidArgumentError("label regularization needs centroid labels")

    def update(self, targets, positions, labels=None) -> InnerSolution:
        tgt = as_points(targets, "targets")
        solution = solve_label_update(tgt, labels, self.lam)
        reg = label_potential_loss(solution, labels, self.lam)
        return InnerSolution(
            positions=solution,
            reg_loss=reg,
            objective_start=label_potential_loss(tgt, labels, self.lam),
            objective_end=_squared_distance(solution, tgt) + reg,
        )


@dataclass(frozen=True)
class AffineConsistency(Regularizer):
    """Pull centroids toward the best affine image of their previous positions."""

    lam: float = 1.0
    kind: ClassVar[str] = "affine"

    def __post_init__(self) -> None:
        _check_lambda(self.lam)

    def fit(self, source, targets) -> AffineMap:
        return fit_affine(source, targets)

    def update(self, targets, positions, labels=None) -> InnerSolution:
        tgt = as_points(targets, "targets")
        transform = self.fit(positions, tgt)
        predictions = transform.apply(positions)
        solution = solve_affine_update(tgt, predictions, self.lam)
        reg = self.lam * _squared_distance(solution, predictions)
        return InnerSolution(
            positions=solution,
            reg_loss=reg,
            objective_start=self.lam * _squared_distance(tgt, predictions),
            objective_end=_squared_distance(solution, tgt) + reg,
            affine=transform,
        )


@dataclass(frozen=True)
class RigidConsistency(AffineConsistency):
    """Like the affine variant, restricted to rotations and translations."""

    kind: ClassVar[str] = "rigid"

    def fit(self, source, targets) -> AffineMap:
        return fit_rigid(source, targets)


@dataclass(frozen=True)
class CurveRegularizer(Regularizer):
    """Length + curvature per branch; pinned nodes stay where they are."""

    lambda1: float = 0.0
    lambda2: float = 0.0
    topology: Optional[CurveTopology] = None
    inner: CurveInnerOptions = field(default_factory=CurveInnerOptions)
    kind: ClassVar[str] = "curve"

    def __post_init__(self) -> None:
        _check_lambda(self.lambda1, "lambda1")
        _check_lambda(self.lambda2, "lambda2")
        if self.topology is None:
            raise InvalidArgumentError("curve regularization needs a topology")

    def check(self, centroids: CentroidSet) -> None:
        self.topology.validate_for(centroids.k)

    def update(self, targets, positions, labels=None) -> InnerSolution:
        pos = as_points(positions, "positions")
        fixed = sorted(self.topology.fixed_nodes)
        return solve_curve_update(
            targets,
            self.topology,
            self.lambda1,
            self.lambda2,
            self.inner,
            fixed_positions=pos[fixed] if fixed else None,
        )


RegularizerSpec = Union[
    NoRegularizer, LabelPotential, AffineConsistency, RigidConsistency, CurveRegularizer
]


def make_regularizer(
    kind: str,
    lam: float = 1.0,
    lam2: float = 0.0,
    topology: Optional[CurveTopology] = None,
) -> RegularizerSpec:
    """Build a variant from its CLI/config name.

    For ``curve``, ``lam`` weighs length and ``lam2`` curvature.
    """
    if kind == "none":
        return NoRegularizer()
    if kind == "label":
        return LabelPotential(lam)
    if kind == "affine":
        return AffineConsistency(lam)
    if kind == "rigid":
        return RigidConsistency(lam)
    if kind == "curve":
        return CurveRegularizer(lambda1=lam, lambda2=lam2, topology=topology)
    raise InvalidArgumentError(
        f"unknown regularizer {kind!r}; expected one of {', '.join(REGULARIZER_KINDS)}"
    )
