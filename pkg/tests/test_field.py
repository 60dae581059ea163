import math

import numpy as np
import pytest
from scipy import stats

from app.models import LatticePoint, diagonal
from app.services.field import MAX_COORD, ArrayField, FieldRangeError, WeightField, sample_field
from app.services.passage import diagonal_profile
from app.services.stats import MomentAccumulator, correlation


def grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return xs.ravel(), ys.ravel()


class TestWeight:
    def test_same_query_is_bit_identical(self):
        a = WeightField(7, 3, (10, 10)).weight(LatticePoint(4, 9))
        b = WeightField(7, 3, (10, 10)).weight(LatticePoint(4, 9))
        assert a == b

    def test_vectorised_matches_scalar(self, field: WeightField):
        xs, ys = grid(5)
        values = field.weights(xs, ys)
        for x, y, v in zip(xs, ys, values, strict=True):
            assert field.weight(LatticePoint(int(x), int(y))) == v

    def test_weights_are_positive_odd_dyadics(self, field: WeightField):
        values = field.weights(*grid(64))
        assert np.all(values > 0)
        assert np.all(np.mod(values * 2.0**31, 2) == 1)

    def test_mean_and_tail_match_exp1(self):
        values = sample_field(2024, 0, 999).weights(*grid(1000))
        assert len(values) == 10**6
        assert abs(values.mean() - 1.0) < 0.01
        assert abs(np.mean(values > 3) - math.exp(-3)) < 0.003

    def test_marginal_passes_ks_against_exp1(self):
        draws = np.arange(10**5)
        xs, ys = draws % 1000, draws // 1000
        accepted = 0
        for rep in range(100):
            values = WeightField(2718, rep, (999, 99)).weights(xs, ys)
            accepted += stats.kstest(values, "expon").pvalue > 0.01
        assert accepted >= 95

    def test_row_neighbours_uncorrelated(self):
        values = sample_field(777, 0, 999).weights(*grid(1000)).reshape(1000, 1000)
        # values[x, y]; lag 1 along x within each row
        rho = np.corrcoef(values[:-1, :].ravel(), values[1:, :].ravel())[0, 1]
        assert abs(rho) <= 3 / math.sqrt(10**6)

    def test_out_of_extent_raises(self):
        f = WeightField(1, 0, (10, 10))
        with pytest.raises(FieldRangeError):
            f.weight(LatticePoint(11, 0))
        with pytest.raises(FieldRangeError):
            f.weights(np.array([0, -1]), np.array([0, 0]))

    def test_range_error_is_index_error(self):
        with pytest.raises(IndexError):
            WeightField(1, 0, (3, 3)).weight(diagonal(4))

    def test_invalid_construction(self):
        with pytest.raises(ValueError):
            WeightField(-1, 0, (4, 4))
        with pytest.raises(ValueError):
            WeightField(2**64, 0, (4, 4))
        with pytest.raises(ValueError):
            WeightField(0, -1, (4, 4))
        with pytest.raises(ValueError):
            WeightField(0, 0, (MAX_COORD + 1, 4))

    def test_extent_does_not_change_values(self):
        small = WeightField(5, 1, (4, 4))
        large = small.with_extent(100, 100)
        xs, ys = grid(5)
        assert np.array_equal(small.weights(xs, ys), large.weights(xs, ys))

    def test_largest_seed_accepted(self):
        assert WeightField(2**64 - 1, 0, (2, 2)).weight(diagonal(1)) > 0


class TestForkSample:
    def test_fork_to_same_index_is_identical(self, field: WeightField):
        same = field.fork_sample(field.sample_index)
        assert same == field
        xs, ys = grid(8)
        assert np.array_equal(same.weights(xs, ys), field.weights(xs, ys))

    def test_forks_differ_everywhere(self):
        field = sample_field(12345, 0, 99)
        xs, ys = grid(100)
        a = field.fork_sample(1).weights(xs, ys)
        b = field.fork_sample(2).weights(xs, ys)
        assert np.all(a != b)

    def test_negative_index_rejected(self, field: WeightField):
        with pytest.raises(ValueError):
            field.fork_sample(-1)

    def test_seeds_give_distinct_environments(self):
        xs, ys = grid(10)
        a = WeightField(1, 0, (9, 9)).weights(xs, ys)
        b = WeightField(2, 0, (9, 9)).weights(xs, ys)
        assert np.all(a != b)

    def test_forked_passage_times_uncorrelated(self):
        base = sample_field(31337, 0, 16)
        acc = MomentAccumulator(2, batches=50)
        for i in range(2000):
            t_a = diagonal_profile(base.fork_sample(2 * i), 16)[16]
            t_b = diagonal_profile(base.fork_sample(2 * i + 1), 16)[16]
            acc.push([t_a, t_b])
        rho, stderr = correlation(acc, 0, 1)
        assert abs(rho) <= 4 * stderr


class TestArrayField:
    def test_indexing_is_x_then_y(self, example_field: ArrayField):
        assert example_field.weight(LatticePoint(1, 0)) == 3.0
        assert example_field.weight(LatticePoint(0, 1)) == 2.0
        assert example_field.extent == (1, 1)

    def test_out_of_extent_raises(self, example_field: ArrayField):
        with pytest.raises(FieldRangeError):
            example_field.weight(LatticePoint(2, 0))

    def test_requires_two_dimensions(self):
        with pytest.raises(ValueError):
            ArrayField(np.ones(4))
