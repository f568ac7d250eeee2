"""Experiment configuration: JSON file -> validated ExperimentConfig.

Example::

    {
      "name": "two-moons",
      "dataset": {"kind": "two-moons", "source_n": 200, "target_n": 10000,
                  "noise": 0.1},
      "angles": [45.0],
      "methods": [
        {"name": "none", "regularizer": "none"},
        {"name": "affine", "regularizer": "affine", "lambda": 1.0}
      ],
      "solver": {"outer_tolerance": 1e-4, "max_outer_iterations": 50},
      "repetitions": 5,
      "seed": 0,
      "output_dir": "results/two_moons"
    }

Validation collects every problem before raising ConfigError.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from rwmeans.errors import ConfigError, InvalidArgumentError
from rwmeans.io import load_json
from rwmeans.regularizers import REGULARIZER_KINDS
from rwmeans.vot import VotOptions

DATASET_KINDS = ("two-moons", "gaussian-mixture")
EXPERIMENT_REGULARIZERS = tuple(k for k in REGULARIZER_KINDS if k != "curve")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    source_n: int
    target_n: int
    noise: float = 0.1
    component_means: Optional[Tuple[Tuple[float, ...], ...]] = None
    component_sigmas: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class MethodSpec:
    """One column of the grid: a regularizer and its weight.

    ``tail_weight`` below 1 scales the weights of source tails
    (two-moons only) before the source becomes the centroid set.
    """

    name: str
    regularizer: str
    lam: float = 0.0
    tail_weight: float = 1.0
    tail_fraction: float = 0.25


@dataclass(frozen=True)
class SolverSpec:
    outer_tolerance: float = 1e-4
    max_outer_iterations: int = 100
    mass_tolerance: Optional[float] = None
    vot_max_iterations: int = 5000
    vot_initial_step: float = 0.1

    def vot_options(self) -> VotOptions:
        return VotOptions(
            mass_tolerance=self.mass_tolerance,
            max_iterations=self.vot_max_iterations,
            initial_step=self.vot_initial_step,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    angles: Tuple[float, ...]
    methods: Tuple[MethodSpec, ...]
    solver: SolverSpec = field(default_factory=SolverSpec)
    repetitions: int = 1
    seed: int = 0
    output_dir: str = "results"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _parse_dataset(raw: Any, problems: List[str]) -> Optional[DatasetSpec]:
    if not isinstance(raw, dict):
        problems.append("dataset: expected an object")
        return None
    kind = raw.get("kind")
    if kind not in DATASET_KINDS:
        problems.append(f"dataset.kind: expected one of {', '.join(DATASET_KINDS)}, got {kind!r}")
    minimum = 2 if kind == "two-moons" else 1
    for key in ("source_n", "target_n"):
        value = raw.get(key)
        if not _is_int(value) or value < minimum:
            problems.append(f"dataset.{key}: expected an integer >= {minimum}, got {value!r}")
    noise = raw.get("noise", 0.1)
    if not _is_number(noise) or noise < 0:
        problems.append(f"dataset.noise: expected a number >= 0, got {noise!r}")
    means = raw.get("component_means")
    sigmas = raw.get("component_sigmas")
    if means is not None and (
        not isinstance(means, list)
        or not means
        or not all(isinstance(m, list) and all(_is_number(v) for v in m) for m in means)
    ):
        problems.append("dataset.component_means: expected a list of coordinate lists")
        means = None
    if sigmas is not None and (
        not isinstance(sigmas, list) or not all(_is_number(s) and s > 0 for s in sigmas)
    ):
        problems.append("dataset.component_sigmas: expected a list of positive numbers")
        sigmas = None
    if means is not None and sigmas is not None and len(means) != len(sigmas):
        problems.append("dataset: component_means and component_sigmas differ in length")
    if problems:
        return None
    return DatasetSpec(
        kind=kind,
        source_n=raw["source_n"],
        target_n=raw["target_n"],
        noise=float(noise),
        component_means=None if means is None else tuple(tuple(float(v) for v in m) for m in means),
        component_sigmas=None if sigmas is None else tuple(float(s) for s in sigmas),
    )


def _parse_methods(raw: Any, problems: List[str]) -> Tuple[MethodSpec, ...]:
    if not isinstance(raw, list) or not raw:
        problems.append("methods: expected a non-empty list")
        return ()
    methods = []
    seen = set()
    for i, entry in enumerate(raw):
        where = f"methods[{i}]"
        if not isinstance(entry, dict):
            problems.append(f"{where}: expected an object")
            continue
        name = entry.get("name")
        regularizer = entry.get("regularizer")
        lam = entry.get("lambda", 0.0)
        tail_weight = entry.get("tail_weight", 1.0)
        tail_fraction = entry.get("tail_fraction", 0.25)
        ok = True
        if not isinstance(name, str) or not name:
            problems.append(f"{where}.name: expected a non-empty string")
            ok = False
        elif name in seen:
            problems.append(f"{where}.name: duplicate method {name!r}")
            ok = False
        if regularizer not in EXPERIMENT_REGULARIZERS:
            problems.append(
                f"{where}.regularizer: expected one of "
                f"{', '.join(EXPERIMENT_REGULARIZERS)}, got {regularizer!r}"
            )
            ok = False
        if not _is_number(lam) or lam < 0:
            problems.append(f"{where}.lambda: expected a number >= 0, got {lam!r}")
            ok = False
        if not _is_number(tail_weight) or tail_weight <= 0:
            problems.append(f"{where}.tail_weight: expected a number > 0, got {tail_weight!r}")
            ok = False
        if not _is_number(tail_fraction) or not 0 <= tail_fraction <= 0.5:
            problems.append(f"{where}.tail_fraction: expected a number in [0, 0.5]")
            ok = False
        if ok:
            seen.add(name)
            methods.append(
                MethodSpec(
                    name=name,
                    regularizer=regularizer,
                    lam=float(lam),
                    tail_weight=float(tail_weight),
                    tail_fraction=float(tail_fraction),
                )
            )
    return tuple(methods)


def _parse_solver(raw: Any, problems: List[str]) -> SolverSpec:
    if raw is None:
        return SolverSpec()
    if not isinstance(raw, dict):
        problems.append("solver: expected an object")
        return SolverSpec()
    defaults = SolverSpec()
    values: Dict[str, Any] = {}
    checks = {
        "outer_tolerance": lambda v: _is_number(v) and v > 0,
        "max_outer_iterations": lambda v: _is_int(v) and v >= 1,
        "mass_tolerance": lambda v: v is None or (_is_number(v) and v > 0),
        "vot_max_iterations": lambda v: _is_int(v) and v >= 1,
        "vot_initial_step": lambda v: _is_number(v) and v > 0,
    }
    for key in raw:
        if key not in checks:
            problems.append(f"solver.{key}: unknown option")
    for key, check in checks.items():
        value = raw.get(key, getattr(defaults, key))
        if not check(value):
            problems.append(f"solver.{key}: invalid value {value!r}")
        else:
            values[key] = value
    if len(values) != len(checks):
        return defaults
    return SolverSpec(**values)


def parse_config(data: Any, base_dir: Optional[str] = None) -> ExperimentConfig:
    """Validate decoded JSON; raise ConfigError listing every problem."""
    problems: List[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["config: expected a JSON object"])

    dataset_problems: List[str] = []
    dataset = _parse_dataset(data.get("dataset"), dataset_problems)
    problems.extend(dataset_problems)

    angles = data.get("angles")
    if not isinstance(angles, list) or not angles or not all(_is_number(a) for a in angles):
        problems.append("angles: expected a non-empty list of degrees")
        angles = []
    methods = _parse_methods(data.get("methods"), problems)
    solver = _parse_solver(data.get("solver"), problems)

    repetitions = data.get("repetitions", 1)
    if not _is_int(repetitions) or repetitions < 1:
        problems.append(f"repetitions: expected an integer >= 1, got {repetitions!r}")
    seed = data.get("seed", 0)
    if not _is_int(seed) or seed < 0:
        problems.append(f"seed: expected an integer >= 0, got {seed!r}")
    output_dir = data.get("output_dir", "results")
    if not isinstance(output_dir, str) or not output_dir:
        problems.append("output_dir: expected a non-empty string")
    name = data.get("name", "experiment")
    if not isinstance(name, str):
        problems.append("name: expected a string")

    if dataset is not None and dataset.kind != "two-moons":
        for method in methods:
            if method.tail_weight != 1.0:
                problems.append(
                    f"method {method.name!r}: tail_weight needs the two-moons dataset"
                )
    if dataset is not None and dataset.kind == "gaussian-mixture":
        k = len(dataset.component_means) if dataset.component_means else 3
        if dataset.source_n < k or dataset.target_n < k:
            problems.append(f"dataset: gaussian-mixture needs at least {k} samples per domain")

    if problems:
        raise ConfigError(problems)

    if base_dir is not None and not os.path.isabs(output_dir):
        output_dir = os.path.join(base_dir, output_dir)
    return ExperimentConfig(
        name=name,
        dataset=dataset,
        angles=tuple(float(a) for a in angles),
        methods=methods,
        solver=solver,
        repetitions=repetitions,
        seed=seed,
        output_dir=output_dir,
    )


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a config; relative output_dir resolves next to it."""
    try:
        data = load_json(path)
    except InvalidArgumentError as e:
        raise ConfigError([str(e)]) from None
    return parse_config(data, base_dir=str(Path(path).resolve().parent))
