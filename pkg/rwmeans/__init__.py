"""Regularized Wasserstein means on top of a semi-discrete OT solver."""

from rwmeans.errors import ConfigError, InvalidArgumentError, RwmError
from rwmeans.means import MeansOptions, MeansResult, wasserstein_means
from rwmeans.measures import Assignment, CentroidSet, EmpiricalMeasure, RotationSpec
from rwmeans.regularizers import (
    AffineConsistency,
    CurveRegularizer,
    CurveTopology,
    LabelPotential,
    NoRegularizer,
    RigidConsistency,
    make_regularizer,
)
from rwmeans.rwm import RwmOptions, RwmResult, regularized_wasserstein_means, skeleton_layout
from rwmeans.vot import VotOptions, VotResult, solve_vot

__version__ = "0.1.0"

__all__ = [
    "AffineConsistency",
    "Assignment",
    "CentroidSet",
    "ConfigError",
    "CurveRegularizer",
    "CurveTopology",
    "EmpiricalMeasure",
    "InvalidArgumentError",
    "LabelPotential",
    "MeansOptions",
    "MeansResult",
    "NoRegularizer",
    "RigidConsistency",
    "RotationSpec",
    "RwmError",
    "RwmOptions",
    "RwmResult",
    "VotOptions",
    "VotResult",
    "make_regularizer",
    "regularized_wasserstein_means",
    "skeleton_layout",
    "solve_vot",
    "wasserstein_means",
]
