"""Weighted point sets, centroid sets and the synthetic datasets built on them.

Every value in this module is immutable after construction: arrays are
copied and marked read-only, so measures and centroid sets can be shared
freely between threads.

One-dimensional inputs are read as n points in R^1.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from rwmeans.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-9

DEFAULT_MIXTURE_MEANS: Tuple[Tuple[float, float], ...] = (
    (-1.0, 0.0),
    (1.0, 0.0),
    (0.0, 1.5),
)
DEFAULT_MIXTURE_SIGMA = 0.3

# ---------------------------------------------------------------------------
# Array helpers
# ---------------------------------------------------------------------------


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


def as_points(points, name: str = "points") -> np.ndarray:
    """Coerce to a finite float array of shape (n, d) with n, d >= 1."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidArgumentError(
            f"{name} must be a non-empty (n, d) array, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return arr


def as_labels(labels, n: int, name: str = "labels") -> Optional[np.ndarray]:
    """Coerce optional class labels to an int64 array of length n."""
    if labels is None:
        return None
    arr = np.asarray(labels)
    if arr.shape != (n,):
        raise InvalidArgumentError(
            f"{name} must have shape ({n},), got {arr.shape}"
        )
    if not np.issubdtype(arr.dtype, np.integer):
        as_float = np.asarray(arr, dtype=float)
        if not np.all(np.isfinite(as_float)) or np.any(
            as_float != np.rint(as_float)
        ):
            raise InvalidArgumentError(f"{name} must be integer class ids")
        arr = np.rint(as_float)
    return arr.astype(np.int64)


def normalize_weights(weights, name: str = "weights") -> np.ndarray:
    """Return nonnegative finite weights scaled to sum to 1."""
    arr = np.asarray(weights, dtype=float).reshape(-1)
    if arr.size == 0:
        raise InvalidArgumentError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidArgumentError(f"{name} must be finite and nonnegative")
    total = arr.sum()
    if total <= 0:
        raise InvalidArgumentError(f"{name} must have a positive sum")
    if total != 1.0:
        arr = arr / total
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted samples in R^d, optionally carrying ground-truth labels.

    Weights are normalized to sum to 1 on construction.
    """

    points: np.ndarray
    weights: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        points = as_points(self.points)
        n = points.shape[0]
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if weights.shape != (n,):
            raise InvalidArgumentError(
                f"weights must have shape ({n},), got {weights.shape}"
            )
        weights = normalize_weights(weights)
        labels = as_labels(self.labels, n)
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(
            self, "labels", None if labels is None else _frozen(labels)
        )

    @classmethod
    def uniform(cls, points, labels=None) -> "EmpiricalMeasure":
        """Build a measure with equal weight on every sample."""
        pts = as_points(points)
        n = pts.shape[0]
        return cls(points=pts, weights=np.full(n, 1.0 / n), labels=labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        """Weighted mean of the samples."""
        return self.weights @ self.points

    def with_weights(self, weights) -> "EmpiricalMeasure":
        return replace(self, weights=weights)


@dataclass(frozen=True, eq=False)
class CentroidSet:
    """The sparse mean: support points, target weights, labels, potentials.

    Target weights must be positive and already sum to 1 (within 1e-9).
    Potentials default to zero and are re-centered to sum to 0.
    """

    positions: np.ndarray
    target_weights: np.ndarray
    labels: Optional[np.ndarray] = None
    potentials: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        positions = as_points(self.positions, "positions")
        k = positions.shape[0]
        nu = np.asarray(self.target_weights, dtype=float).reshape(-1)
        if nu.shape != (k,):
            raise InvalidArgumentError(
                f"target_weights must have shape ({k},), got {nu.shape}"
            )
        if not np.all(np.isfinite(nu)) or np.any(nu <= 0):
            raise InvalidArgumentError("target_weights must be positive")
        if abs(nu.sum() - 1.0) > WEIGHT_TOLERANCE:
            raise InvalidArgumentError(
                f"target_weights must sum to 1, got {nu.sum()!r}"
            )
        if self.potentials is None:
            h = np.zeros(k)
        else:
            h = np.asarray(self.potentials, dtype=float).reshape(-1)
            if h.shape != (k,) or not np.all(np.isfinite(h)):
                raise InvalidArgumentError(
                    f"potentials must be {k} finite values"
                )
            h = h - h.mean()
        labels = as_labels(self.labels, k)
        object.__setattr__(self, "positions", _frozen(positions))
        object.__setattr__(self, "target_weights", _frozen(nu))
        object.__setattr__(
            self, "labels", None if labels is None else _frozen(labels)
        )
        object.__setattr__(self, "potentials", _frozen(h))

    @classmethod
    def uniform(cls, positions, labels=None) -> "CentroidSet":
        pos = as_points(positions, "positions")
        k = pos.shape[0]
        return cls(positions=pos, target_weights=np.full(k, 1.0 / k), labels=labels)

    @classmethod
    def from_measure(cls, measure: EmpiricalMeasure) -> "CentroidSet":
        """Use the samples of a measure as Dirac supports (source-as-centroids).

        Zero-weight samples are rejected since every centroid needs mass.
        """
        return cls(
            positions=measure.points,
            target_weights=measure.weights,
            labels=measure.labels,
        )

    @property
    def k(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def replace(self, **changes) -> "CentroidSet":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Assignment:
    """Many-to-one map from samples to centroids, with cell masses and cost."""

    centroid_of: np.ndarray
    cell_mass: np.ndarray
    transport_cost: float

    @classmethod
    def compute(
        cls, measure: EmpiricalMeasure, positions, centroid_of
    ) -> "Assignment":
        """Derive cell masses and transport cost for a given sample map.

        Cell masses are accumulated in ascending sample order (bincount),
        so the result does not depend on how the map was produced.
        """
        pos = as_points(positions, "positions")
        idx = np.asarray(centroid_of, dtype=np.int64).reshape(-1)
        k = pos.shape[0]
        if idx.shape != (measure.n,):
            raise InvalidArgumentError(
                f"centroid_of must have shape ({measure.n},), got {idx.shape}"
            )
        if idx.size and (idx.min() < 0 or idx.max() >= k):
            raise InvalidArgumentError("centroid_of holds out-of-range indices")
        if pos.shape[1] != measure.dim:
            raise InvalidArgumentError(
                f"dimension mismatch: measure d={measure.dim}, "
                f"centroids d={pos.shape[1]}"
            )
        cell_mass = np.bincount(idx, weights=measure.weights, minlength=k)
        diff = measure.points - pos[idx]
        sq = np.einsum("ij,ij->i", diff, diff)
        cost = float(np.dot(measure.weights, sq))
        return cls(
            centroid_of=_frozen(idx),
            cell_mass=_frozen(cell_mass),
            transport_cost=cost,
        )

    @property
    def k(self) -> int:
        return self.cell_mass.shape[0]


@dataclass(frozen=True)
class RotationSpec:
    """Planar rotation; ``center=None`` rotates about the weighted data mean."""

    angle_degrees: float
    center: Optional[Tuple[float, float]] = None


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------
# All generators draw from numpy's PCG64 (np.random.default_rng(seed)).


def make_two_moons(n: int, noise_sigma: float, seed: int) -> EmpiricalMeasure:
    """Two interleaved half circles, labels 0 (upper) and 1 (lower).

    ceil(n/2) points on (cos t, sin t) and floor(n/2) on
    (1 - cos t, 0.5 - sin t), t uniform in [0, pi], plus isotropic
    Gaussian noise with standard deviation ``noise_sigma``.
    """
    if n < 2:
        raise InvalidArgumentError(f"two-moons needs n >= 2, got {n}")
    if noise_sigma < 0:
        raise InvalidArgumentError(f"noise must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    n_upper = (n + 1) // 2
    n_lower = n // 2
    t_upper = rng.uniform(0.0, math.pi, n_upper)
    t_lower = rng.uniform(0.0, math.pi, n_lower)
    upper = np.column_stack([np.cos(t_upper), np.sin(t_upper)])
    lower = np.column_stack([1.0 - np.cos(t_lower), 0.5 - np.sin(t_lower)])
    points = np.vstack([upper, lower])
    if noise_sigma > 0:
        points = points + rng.normal(0.0, noise_sigma, size=points.shape)
    labels = np.concatenate(
        [np.zeros(n_upper, dtype=np.int64), np.ones(n_lower, dtype=np.int64)]
    )
    return EmpiricalMeasure.uniform(points, labels)


def make_gaussian_mixture(
    component_means: Sequence[Sequence[float]] = DEFAULT_MIXTURE_MEANS,
    component_sigmas: Optional[Sequence[float]] = None,
    n: int = 5000,
    seed: int = 0,
) -> EmpiricalMeasure:
    """Isotropic Gaussian mixture, one class label per component.

    Each component gets n // k points; the remainder goes to the earliest
    components. Points are grouped by component in label order.
    """
    means = np.asarray(component_means, dtype=float)
    if means.ndim != 2 or means.shape[0] < 1:
        raise InvalidArgumentError("component_means must be k >= 1 vectors")
    k, d = means.shape
    if component_sigmas is None:
        sigmas = np.full(k, DEFAULT_MIXTURE_SIGMA)
    else:
        sigmas = np.asarray(component_sigmas, dtype=float).reshape(-1)
    if sigmas.shape != (k,):
        raise InvalidArgumentError(
            f"got {k} component means but {sigmas.size} sigmas"
        )
    if np.any(sigmas <= 0):
        raise InvalidArgumentError("component sigmas must be > 0")
    if n < k:
        raise InvalidArgumentError(f"need n >= k ({k}), got n={n}")
    counts = np.full(k, n // k)
    counts[: n % k] += 1
    rng = np.random.default_rng(seed)
    blocks = [
        rng.normal(loc=means[c], scale=sigmas[c], size=(counts[c], d))
        for c in range(k)
    ]
    labels = np.repeat(np.arange(k, dtype=np.int64), counts)
    return EmpiricalMeasure.uniform(np.vstack(blocks), labels)


def tube_centerline(t, bend: float = 1.0) -> np.ndarray:
    """Points (t, bend * sin t, 0) of the tube's parametric centerline."""
    t = np.asarray(t, dtype=float).reshape(-1)
    return np.column_stack([t, bend * np.sin(t), np.zeros_like(t)])


def make_bent_tube(
    n: int, radius_sigma: float, seed: int, bend: float = 1.0
) -> EmpiricalMeasure:
    """Noisy samples around the curve (t, bend * sin t, 0), t in [0, pi].

    ``bend=0`` gives a straight tube along the first axis.
    """
    if n < 1:
        raise InvalidArgumentError(f"bent-tube needs n >= 1, got {n}")
    if radius_sigma < 0:
        raise InvalidArgumentError(
            f"radius_sigma must be >= 0, got {radius_sigma}"
        )
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, math.pi, n)
    points = tube_centerline(t, bend)
    if radius_sigma > 0:
        points = points + rng.normal(0.0, radius_sigma, size=points.shape)
    return EmpiricalMeasure.uniform(points)


def centerline_distance(
    points, bend: float = 1.0, resolution: int = 4001
) -> np.ndarray:
    """Distance from each point to a dense polyline sampling of the centerline."""
    pts = as_points(points)
    curve = tube_centerline(np.linspace(0.0, math.pi, resolution), bend)
    distances, _ = cKDTree(curve).query(pts)
    return distances


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def rotate(measure: EmpiricalMeasure, spec: RotationSpec) -> EmpiricalMeasure:
    """Rotate a planar measure; weights and labels are carried unchanged."""
    if measure.dim != 2:
        raise InvalidArgumentError(
            f"rotate needs 2-D points, got d={measure.dim}"
        )
    if spec.angle_degrees == 0:
        return measure
    if not math.isfinite(spec.angle_degrees):
        raise InvalidArgumentError("rotation angle must be finite")
    if spec.center is None:
        center = measure.mean()
    else:
        center = np.asarray(spec.center, dtype=float).reshape(-1)
        if center.shape != (2,) or not np.all(np.isfinite(center)):
            raise InvalidArgumentError("rotation center must be a finite 2-vector")
    theta = math.radians(spec.angle_degrees)
    c, s = math.cos(theta), math.sin(theta)
    rotation = np.array([[c, -s], [s, c]])
    points = (measure.points - center) @ rotation.T + center
    return replace(measure, points=points)


def scale_tail_weights(
    measure: EmpiricalMeasure, tail_fraction: float = 0.25, factor: float = 0.5
) -> EmpiricalMeasure:
    """Scale the weights of two-moons samples near either end of their moon.

    A sample is in a tail when its arc parameter lies within
    ``tail_fraction * pi`` of 0 or pi. Weights are renormalized afterwards.
    """
    if measure.labels is None or measure.dim != 2:
        raise InvalidArgumentError("tail weights need labeled 2-D two-moons data")
    if not np.all(np.isin(measure.labels, (0, 1))):
        raise InvalidArgumentError("tail weights expect labels 0 and 1 only")
    if not 0.0 <= tail_fraction <= 0.5:
        raise InvalidArgumentError("tail_fraction must lie in [0, 0.5]")
    if factor <= 0:
        raise InvalidArgumentError("tail factor must be > 0")
    x, y = measure.points[:, 0], measure.points[:, 1]
    arc = np.where(
        measure.labels == 0, np.arctan2(y, x), np.arctan2(0.5 - y, 1.0 - x)
    )
    arc = np.mod(arc, 2.0 * math.pi)
    tail = (arc < tail_fraction * math.pi) | (arc > (1.0 - tail_fraction) * math.pi)
    logger.debug("scaling %d of %d tail weights by %g", tail.sum(), measure.n, factor)
    return measure.with_weights(measure.weights * np.where(tail, factor, 1.0))
