import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from rwmeans.errors import InvalidArgumentError
from rwmeans.means import (
    WEIGHT_FLOOR,
    MeansOptions,
    accuracy,
    classify_targets,
    floor_weights,
    update_centroids,
    update_weights_lloyd,
    wasserstein_means,
)
from rwmeans.measures import Assignment, CentroidSet, EmpiricalMeasure
from rwmeans.vot import VotOptions, solve_vot

EXACT = VotOptions(mass_tolerance=1e-9)


class TestUpdateCentroids:
    def test_unweighted_mean(self):
        m = EmpiricalMeasure.uniform([[0.0, 0.0], [2.0, 0.0]])
        a = Assignment.compute(m, [[5.0, 5.0]], [0, 0])
        positions, empty = update_centroids(m, a)
        assert_allclose(positions, [[1.0, 0.0]])
        assert not empty.any()

    def test_weighted_mean(self):
        m = EmpiricalMeasure(points=[[0.0, 0.0], [2.0, 0.0]], weights=[0.75, 0.25])
        a = Assignment.compute(m, [[5.0, 5.0]], [0, 0])
        positions, _ = update_centroids(m, a)
        assert_allclose(positions, [[0.5, 0.0]])

    def test_single_sample_cell(self):
        m = EmpiricalMeasure.uniform([[0.0, 0.0], [2.0, 3.0]])
        a = Assignment.compute(m, [[0.0, 0.0], [1.0, 1.0]], [0, 1])
        positions, _ = update_centroids(m, a)
        assert_array_equal(positions[1], [2.0, 3.0])

    def test_empty_cell_keeps_position(self):
        m = EmpiricalMeasure.uniform([[0.0], [1.0]])
        previous = np.array([[0.5], [9.0]])
        a = Assignment.compute(m, previous, [0, 0])
        positions, empty = update_centroids(m, a, previous)
        assert_array_equal(empty, [False, True])
        assert positions[1, 0] == 9.0

    def test_empty_cell_without_previous(self):
        m = EmpiricalMeasure.uniform([[0.0], [1.0]])
        a = Assignment.compute(m, [[0.5], [9.0]], [0, 0])
        with pytest.raises(InvalidArgumentError):
            update_centroids(m, a)

    @pytest.mark.parametrize("seed", range(5))
    def test_support_update_lowers_cost(self, seed):
        rng = np.random.default_rng(seed)
        m = EmpiricalMeasure.uniform(rng.normal(size=(300, 2)))
        c = CentroidSet(
            positions=rng.normal(size=(6, 2)) * 2, target_weights=rng.dirichlet(np.ones(6) * 5)
        )
        for _ in range(5):
            solved = solve_vot(m, c, EXACT)
            assignment = solved.assignment
            targets, _ = update_centroids(m, assignment, c.positions)
            moved = Assignment.compute(m, targets, assignment.centroid_of)
            assert moved.transport_cost <= assignment.transport_cost + 1e-9
            c = c.replace(positions=targets, potentials=solved.potentials)


class TestLloydWeights:
    def test_symmetric(self):
        m = EmpiricalMeasure.uniform([0.125, 0.375, 0.625, 0.875])
        nu = update_weights_lloyd(m, CentroidSet.uniform([[0.25], [0.75]]))
        assert_allclose(nu, [0.5, 0.5])

    def test_all_nearest_first(self):
        m = EmpiricalMeasure.uniform([0.0, 0.1, 0.2])
        nu = update_weights_lloyd(m, CentroidSet.uniform([[0.0], [5.0], [9.0]]))
        assert_allclose(nu, [1.0, 0.0, 0.0])

    def test_counts(self):
        m = EmpiricalMeasure.uniform([0.1, 0.2, 0.8, 0.9])
        nu = update_weights_lloyd(m, CentroidSet.uniform([[0.0], [1.0]]))
        assert_allclose(nu, [0.5, 0.5])

    def test_floor_keeps_weights_positive(self):
        nu = floor_weights(np.array([1.0, 0.0, 0.0]))
        assert np.all(nu >= WEIGHT_FLOOR / (1 + 2 * WEIGHT_FLOOR))
        assert nu.sum() == pytest.approx(1.0, abs=1e-12)


class TestWassersteinMeans:
    def test_fixed_point_when_centroids_are_samples(self):
        points = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]
        m = EmpiricalMeasure.uniform(points)
        result = wasserstein_means(m, CentroidSet.uniform(points), MeansOptions(vot_options=EXACT))
        assert result.converged
        assert result.iterations == 1
        assert result.assignment.transport_cost == pytest.approx(0.0)
        assert_allclose(result.centroids.positions, points)

    def test_single_centroid_goes_to_mean(self):
        rng = np.random.default_rng(3)
        m = EmpiricalMeasure(points=rng.normal(size=(50, 2)), weights=rng.uniform(size=50))
        result = wasserstein_means(m, CentroidSet.uniform([[5.0, 5.0]]))
        assert result.converged
        assert_allclose(result.centroids.positions[0], m.mean(), atol=1e-12)

    def test_recovers_separated_clusters(self):
        rng = np.random.default_rng(0)
        left = rng.normal(size=(100, 2)) * 0.1 + [-5.0, 0.0]
        right = rng.normal(size=(100, 2)) * 0.1 + [5.0, 0.0]
        m = EmpiricalMeasure.uniform(np.vstack([left, right]))
        start = CentroidSet.uniform([[-1.0, 1.0], [1.0, -1.0]])
        result = wasserstein_means(m, start, MeansOptions(vot_options=EXACT))
        assert result.converged
        found = result.centroids.positions[np.argsort(result.centroids.positions[:, 0])]
        assert_allclose(found[0], left.mean(axis=0), atol=1e-3)
        assert_allclose(found[1], right.mean(axis=0), atol=1e-3)

    def test_cost_history_length(self):
        m = EmpiricalMeasure.uniform([0.125, 0.375, 0.625, 0.875])
        result = wasserstein_means(
            m, CentroidSet.uniform([[0.0], [0.3]]), MeansOptions(max_outer_iterations=3)
        )
        assert len(result.cost_history) == result.iterations

    def test_dimension_mismatch(self):
        m = EmpiricalMeasure.uniform([[0.0, 0.0]])
        with pytest.raises(InvalidArgumentError):
            wasserstein_means(m, CentroidSet.uniform([[0.0]]))

    def test_weight_update_off_keeps_weights(self):
        m = EmpiricalMeasure.uniform([0.1, 0.2, 0.8, 0.9])
        start = CentroidSet(positions=[[0.0], [1.0]], target_weights=[0.25, 0.75])
        result = wasserstein_means(
            m, start, MeansOptions(update_weights=False, vot_options=EXACT)
        )
        assert_array_equal(result.centroids.target_weights, [0.25, 0.75])
        assert_allclose(result.assignment.cell_mass, [0.25, 0.75])


class TestLabels:
    def test_all_to_label_one(self):
        m = EmpiricalMeasure.uniform([[0.0], [1.0]])
        c = CentroidSet.uniform([[0.0], [1.0]], labels=[1, 1])
        a = solve_vot(m, c).assignment
        assert_array_equal(classify_targets(m, c, a), [1, 1])

    def test_single_centroid(self):
        m = EmpiricalMeasure.uniform([[0.0], [1.0], [2.0]])
        c = CentroidSet.uniform([[1.0]], labels=[0])
        a = solve_vot(m, c).assignment
        assert_array_equal(classify_targets(m, c, a), [0, 0, 0])

    def test_composition(self):
        m = EmpiricalMeasure.uniform([[0.0], [1.0], [2.0], [3.0]])
        c = CentroidSet.uniform([[0.0], [1.0], [2.0]], labels=[2, 0, 1])
        a = Assignment.compute(m, c.positions, [2, 0, 1, 1])
        assert_array_equal(classify_targets(m, c, a), [1, 2, 0, 0])

    def test_accuracy_invariant_under_relabeling(self):
        rng = np.random.default_rng(4)
        m = EmpiricalMeasure.uniform(rng.normal(size=(60, 2)))
        c = CentroidSet.uniform(rng.normal(size=(4, 2)), labels=[0, 1, 2, 1])
        truth = rng.integers(0, 3, size=60)
        a = solve_vot(m, c).assignment
        relabel = np.array([2, 0, 1])
        renamed = c.replace(labels=relabel[c.labels])
        before = accuracy(classify_targets(m, c, a), truth)
        after = accuracy(classify_targets(m, renamed, a), relabel[truth])
        assert after == before

    def test_needs_labels(self):
        m = EmpiricalMeasure.uniform([[0.0]])
        c = CentroidSet.uniform([[0.0]])
        with pytest.raises(InvalidArgumentError):
            classify_targets(m, c, Assignment.compute(m, c.positions, [0]))

    @pytest.mark.parametrize(
        "predicted, truth, expected",
        [
            ([0, 1, 2], [0, 1, 2], 1.0),
            ([0, 0], [1, 1], 0.0),
            ([0, 1, 1, 0], [0, 1, 1, 1], 0.75),
        ],
    )
    def test_accuracy(self, predicted, truth, expected):
        assert accuracy(predicted, truth) == expected

    def test_accuracy_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            accuracy([0, 1], [0])
