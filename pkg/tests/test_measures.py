import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from rwmeans.errors import InvalidArgumentError
from rwmeans.measures import (
    Assignment,
    CentroidSet,
    EmpiricalMeasure,
    RotationSpec,
    centerline_distance,
    make_bent_tube,
    make_gaussian_mixture,
    make_two_moons,
    rotate,
    scale_tail_weights,
)


class TestEmpiricalMeasure:
    def test_weights_normalized(self):
        m = EmpiricalMeasure(points=[[0.0], [1.0]], weights=[1.0, 3.0])
        assert_allclose(m.weights, [0.25, 0.75])

    def test_one_dimensional_input_is_column(self):
        m = EmpiricalMeasure.uniform([0.1, 0.2, 0.3])
        assert m.points.shape == (3, 1)
        assert m.dim == 1

    def test_arrays_are_read_only(self):
        m = EmpiricalMeasure.uniform([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ValueError):
            m.points[0, 0] = 5.0

    @pytest.mark.parametrize(
        "points, weights",
        [
            ([[0.0], [1.0]], [1.0, -1.0]),
            ([[0.0], [1.0]], [0.0, 0.0]),
            ([[0.0], [np.nan]], [1.0, 1.0]),
            ([[0.0], [1.0]], [1.0]),
        ],
    )
    def test_invalid(self, points, weights):
        with pytest.raises(InvalidArgumentError):
            EmpiricalMeasure(points=points, weights=weights)

    def test_mean(self):
        m = EmpiricalMeasure(points=[[0.0, 0.0], [2.0, 0.0]], weights=[0.75, 0.25])
        assert_allclose(m.mean(), [0.5, 0.0])


class TestCentroidSet:
    def test_uniform(self):
        c = CentroidSet.uniform([[0.0], [1.0], [2.0], [3.0]])
        assert c.k == 4
        assert_allclose(c.target_weights, 0.25)
        assert_array_equal(c.potentials, 0.0)

    def test_potentials_recentered(self):
        c = CentroidSet(
            positions=[[0.0], [1.0]], target_weights=[0.5, 0.5], potentials=[1.0, 3.0]
        )
        assert_allclose(c.potentials, [-1.0, 1.0])

    @pytest.mark.parametrize("weights", [[0.5, 0.4], [1.0, 0.0], [1.2, -0.2]])
    def test_rejects_bad_weights(self, weights):
        with pytest.raises(InvalidArgumentError):
            CentroidSet(positions=[[0.0], [1.0]], target_weights=weights)

    def test_from_measure_keeps_labels_and_weights(self):
        m = EmpiricalMeasure(points=[[0.0], [1.0]], weights=[1.0, 3.0], labels=[0, 1])
        c = CentroidSet.from_measure(m)
        assert_allclose(c.target_weights, [0.25, 0.75])
        assert_array_equal(c.labels, [0, 1])

    def test_replace_validates(self):
        c = CentroidSet.uniform([[0.0], [1.0]])
        with pytest.raises(InvalidArgumentError):
            c.replace(target_weights=[0.9, 0.9])


class TestAssignment:
    def test_cell_mass_and_cost(self):
        m = EmpiricalMeasure.uniform([[0.0], [1.0], [3.0], [4.0]])
        a = Assignment.compute(m, [[0.5], [3.5]], [0, 0, 1, 1])
        assert_allclose(a.cell_mass, [0.5, 0.5])
        assert a.transport_cost == pytest.approx(0.25)

    def test_out_of_range(self):
        m = EmpiricalMeasure.uniform([[0.0], [1.0]])
        with pytest.raises(InvalidArgumentError):
            Assignment.compute(m, [[0.0]], [0, 1])


class TestTwoMoons:
    def test_noise_free_geometry(self):
        m = make_two_moons(4, 0.0, seed=3)
        assert_array_equal(m.labels, [0, 0, 1, 1])
        upper = m.points[m.labels == 0]
        lower = m.points[m.labels == 1]
        assert_allclose(np.linalg.norm(upper, axis=1), 1.0, atol=1e-12)
        assert np.all(upper[:, 1] >= 0)
        assert np.all(lower[:, 1] <= 0.5)

    def test_seeded_determinism(self):
        a = make_two_moons(1000, 0.1, seed=7)
        b = make_two_moons(1000, 0.1, seed=7)
        assert_array_equal(a.points, b.points)
        assert_array_equal(a.labels, b.labels)

    def test_upper_moon_on_unit_circle(self):
        m = make_two_moons(1000, 0.0, seed=0)
        upper = m.points[m.labels == 0]
        assert np.max(np.abs(np.linalg.norm(upper, axis=1) - 1.0)) <= 1e-9

    def test_odd_count_split(self):
        m = make_two_moons(5, 0.0, seed=0)
        assert np.sum(m.labels == 0) == 3
        assert np.sum(m.labels == 1) == 2

    @pytest.mark.parametrize("n, noise", [(0, 0.1), (1, 0.1), (10, -0.1)])
    def test_invalid(self, n, noise):
        with pytest.raises(InvalidArgumentError):
            make_two_moons(n, noise, seed=0)


class TestGaussianMixture:
    def test_single_component_mean(self):
        m = make_gaussian_mixture([[0.0, 0.0]], [1.0], n=10000, seed=1)
        assert np.all(np.abs(m.mean()) < 0.05)

    def test_labels_grouped(self):
        m = make_gaussian_mixture(n=9, seed=0)
        assert_array_equal(m.labels, [0, 0, 0, 1, 1, 1, 2, 2, 2])

    def test_remainder_goes_first(self):
        m = make_gaussian_mixture(n=11, seed=0)
        assert_array_equal(np.bincount(m.labels), [4, 4, 3])

    def test_defaults_deterministic(self):
        a = make_gaussian_mixture(n=5000, seed=4)
        b = make_gaussian_mixture(n=5000, seed=4)
        assert_array_equal(a.points, b.points)

    @pytest.mark.parametrize(
        "means, sigmas, n",
        [
            ([[0.0, 0.0]], [0.0], 10),
            ([[0.0, 0.0], [1.0, 1.0]], [1.0], 10),
            ([[0.0, 0.0], [1.0, 1.0]], None, 1),
        ],
    )
    def test_invalid(self, means, sigmas, n):
        with pytest.raises(InvalidArgumentError):
            make_gaussian_mixture(means, sigmas, n=n, seed=0)


class TestBentTube:
    def test_noise_free_on_curve(self):
        m = make_bent_tube(100, 0.0, seed=2)
        assert m.dim == 3
        x = m.points[:, 0]
        assert_allclose(m.points[:, 1], np.sin(x), atol=1e-12)
        assert_array_equal(m.points[:, 2], 0.0)
        assert x.min() >= 0.0
        assert x.max() <= math.pi

    def test_straight_tube(self):
        m = make_bent_tube(50, 0.0, seed=2, bend=0.0)
        assert_array_equal(m.points[:, 1:], 0.0)

    def test_noisy_points_near_centerline(self):
        m = make_bent_tube(5000, 0.05, seed=0)
        distances = centerline_distance(m.points)
        assert np.mean(distances <= 0.2) >= 0.99

    def test_invalid(self):
        with pytest.raises(InvalidArgumentError):
            make_bent_tube(0, 0.1, seed=0)


class TestRotate:
    def test_zero_angle_identity(self):
        m = make_two_moons(20, 0.1, seed=0)
        assert_array_equal(rotate(m, RotationSpec(0.0)).points, m.points)

    def test_quarter_turn_about_origin(self):
        m = EmpiricalMeasure.uniform([[1.0, 0.0]])
        r = rotate(m, RotationSpec(90.0, center=(0.0, 0.0)))
        assert_allclose(r.points, [[0.0, 1.0]], atol=1e-12)

    def test_inverse_composition(self):
        m = make_two_moons(50, 0.1, seed=0)
        back = rotate(rotate(m, RotationSpec(45.0)), RotationSpec(-45.0))
        assert_allclose(back.points, m.points, atol=1e-9)

    def test_default_center_is_mean(self):
        m = make_two_moons(50, 0.1, seed=0)
        r = rotate(m, RotationSpec(30.0))
        assert_allclose(r.mean(), m.mean(), atol=1e-12)
        assert_array_equal(r.labels, m.labels)

    def test_requires_planar(self):
        with pytest.raises(InvalidArgumentError):
            rotate(make_bent_tube(10, 0.0, seed=0), RotationSpec(10.0))


class TestTailWeights:
    def test_tails_lighter(self):
        m = make_two_moons(400, 0.0, seed=0)
        scaled = scale_tail_weights(m, 0.25, 0.5)
        assert scaled.weights.sum() == pytest.approx(1.0)
        assert scaled.weights.min() == pytest.approx(scaled.weights.max() / 2)

    def test_factor_one_is_uniform(self):
        m = make_two_moons(100, 0.05, seed=0)
        assert_allclose(scale_tail_weights(m, 0.25, 1.0).weights, m.weights)

    def test_needs_labels(self):
        m = EmpiricalMeasure.uniform([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(InvalidArgumentError):
            scale_tail_weights(m)
