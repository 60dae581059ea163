import numpy as np
import pytest

from app.models import ORIGIN, LatticePoint, diagonal
from app.services import oracles
from app.services.field import ArrayField, WeightField, sample_field
from app.services.passage import (
    AdmissibilityError,
    CapacityError,
    OrderError,
    ProfileRangeError,
    Storage,
    StripRegion,
    antidiagonal_profile,
    backward_surface,
    constrained_diag,
    constrained_surface,
    diagonal_profile,
    forward_surface,
    line_values,
    passage_constrained,
    passage_full,
    passage_time,
    point_to_segment,
)


class TestPassageFull:
    def test_single_vertex(self, field: WeightField):
        surface = passage_full(field, ORIGIN, ORIGIN)
        assert surface.value(ORIGIN) == field.weight(ORIGIN)

    def test_two_by_two_example(self, example_field: ArrayField):
        surface = passage_full(example_field, ORIGIN, diagonal(1))
        assert surface.value(diagonal(1)) == 8.0
        assert surface.value(LatticePoint(1, 0)) == 4.0
        assert surface.value(LatticePoint(0, 1)) == 3.0

    def test_matches_path_enumeration(self):
        result = oracles.path_enumeration(fields=1000, size=4)
        assert result.passed, result.detail

    def test_rectangular_box_matches_enumeration(self):
        weights = sample_field(77, 3, 6)
        corner = LatticePoint(5, 2)
        assert passage_full(weights, ORIGIN, corner).value(corner) == oracles.brute_force_passage(
            weights, ORIGIN, corner
        )

    def test_offset_source(self, field: WeightField):
        u, v = LatticePoint(3, 5), LatticePoint(9, 8)
        assert passage_full(field, u, v).value(v) == oracles.brute_force_passage(field, u, v)

    def test_capacity_error(self, field: WeightField):
        with pytest.raises(CapacityError):
            passage_full(field, ORIGIN, diagonal(10), max_cells=50)

    def test_order_error(self, field: WeightField):
        with pytest.raises(OrderError):
            passage_full(field, diagonal(2), LatticePoint(1, 3))

    def test_superadditivity_is_exact(self, field: WeightField):
        a, v = LatticePoint(7, 4), LatticePoint(20, 25)
        whole = passage_time(field, ORIGIN, v)
        split = passage_time(field, ORIGIN, a) + passage_time(field, a, v) - field.weight(a)
        assert split <= whole

    def test_superadditivity_along_the_diagonal(self, field: WeightField):
        n = 40
        profile = diagonal_profile(field, n)
        for k in range(1, n):
            split = profile[k] + passage_time(field, diagonal(k), diagonal(n)) - field.weight(diagonal(k))
            assert split <= profile[n], k

    def test_value_outside_scope_raises(self, field: WeightField):
        surface = passage_full(field, ORIGIN, diagonal(4))
        with pytest.raises(ProfileRangeError):
            surface.value(LatticePoint(5, 0))


class TestStorageModes:
    def test_wavefront_matches_full(self, field: WeightField):
        corner = LatticePoint(40, 31)
        full = passage_full(field, ORIGIN, corner)
        wavefront = forward_surface(field, ORIGIN, corner, storage=Storage.WAVEFRONT)
        assert wavefront.value(corner) == full.value(corner)
        assert passage_time(field, ORIGIN, corner) == full.value(corner)

    def test_checkpointed_levels_match_full(self, field: WeightField):
        corner = LatticePoint(20, 17)
        full = passage_full(field, ORIGIN, corner)
        checkpointed = forward_surface(field, ORIGIN, corner, storage=Storage.CHECKPOINTED, interval=5)
        for k in range(corner.level + 1):
            assert np.array_equal(checkpointed.level_buffer(k), full.level_buffer(k))
        assert checkpointed.value(LatticePoint(11, 3)) == full.value(LatticePoint(11, 3))

    def test_automatic_storage_follows_budget(self, field: WeightField):
        assert forward_surface(field, ORIGIN, diagonal(10)).storage is Storage.FULL
        assert forward_surface(field, ORIGIN, diagonal(10), max_cells=100).storage is Storage.CHECKPOINTED

    def test_wavefront_keeps_only_last_level(self, field: WeightField):
        surface = forward_surface(field, ORIGIN, diagonal(6), storage=Storage.WAVEFRONT)
        with pytest.raises(Exception, match="not retained"):
            surface.level_buffer(3)


class TestDiagonalProfile:
    def test_n_zero(self, field: WeightField):
        assert diagonal_profile(field, 0).tolist() == [field.weight(ORIGIN)]

    def test_matches_full_grid(self, field: WeightField):
        n = 30
        grid = passage_full(field, ORIGIN, diagonal(n)).grid
        profile = diagonal_profile(field, n)
        assert np.array_equal(profile, np.diagonal(grid))

    def test_nondecreasing(self, field: WeightField):
        assert np.all(np.diff(diagonal_profile(field, 40)) > 0)

    def test_negative_n_raises(self, field: WeightField):
        with pytest.raises(ProfileRangeError):
            diagonal_profile(field, -1)

    def test_mean_growth(self):
        values = [diagonal_profile(sample_field(4, i, 200), 200)[200] / 200 for i in range(50)]
        assert 3.6 < np.mean(values) < 4.0


class TestAntidiagonalProfile:
    def test_s_max_zero(self, field: WeightField):
        profile = antidiagonal_profile(field, 20, 0)
        assert profile.values.tolist() == [passage_time(field, ORIGIN, diagonal(20))]

    def test_matches_full_grid(self, field: WeightField):
        n, s_max = 25, 6
        grid = passage_full(field, ORIGIN, diagonal(n + s_max)).grid
        profile = antidiagonal_profile(field, n, s_max)
        for s in range(-s_max, s_max + 1):
            assert profile[s] == grid[n + s, n - s]

    def test_range_errors(self, field: WeightField):
        with pytest.raises(ProfileRangeError):
            antidiagonal_profile(field, 10, 10)
        profile = antidiagonal_profile(field, 10, 3)
        with pytest.raises(ProfileRangeError):
            profile[4]

    def test_sup_increments(self, field: WeightField):
        profile = antidiagonal_profile(field, 30, 8)
        sup = profile.sup_increments()
        assert sup[0] == 0.0
        assert np.all(sup >= 0)
        assert np.all(np.diff(sup) >= 0)
        expected = max(profile[s] - profile[0] for s in range(-4, 5))
        assert sup[4] == expected


class TestLineValues:
    def test_matches_full_grid(self, field: WeightField):
        r = 12
        grid = passage_full(field, ORIGIN, diagonal(2 * r)).grid
        values = line_values(field, r, -5, 7)
        assert values.tolist() == [grid[r + s, r - s] for s in range(-5, 8)]

    def test_range_error(self, field: WeightField):
        with pytest.raises(ProfileRangeError):
            line_values(field, 5, -6, 0)


class TestPointToSegment:
    def test_degenerate_segment(self, field: WeightField):
        value, endpoint = point_to_segment(field, 10, 0, 0)
        assert value == passage_time(field, ORIGIN, diagonal(10))
        assert endpoint == diagonal(10)

    def test_maximum_over_segment(self, field: WeightField):
        value, endpoint = point_to_segment(field, 10, -10, 10)
        values = line_values(field, 10, -10, 10)
        assert value == values.max()
        assert passage_time(field, ORIGIN, endpoint) == value

    def test_ties_prefer_center_then_positive(self):
        flat = ArrayField(np.ones((9, 9)))
        assert point_to_segment(flat, 4, -2, 2)[1] == diagonal(4)
        assert point_to_segment(flat, 4, -3, -1)[1] == LatticePoint(3, 5)
        assert point_to_segment(flat, 4, 1, 3)[1] == LatticePoint(5, 3)

    def test_empty_range_raises(self, field: WeightField):
        with pytest.raises(ProfileRangeError):
            point_to_segment(field, 5, 2, 1)


class TestBackwardSurface:
    def test_value_at_sink(self, field: WeightField):
        sink = LatticePoint(6, 9)
        assert backward_surface(field, sink, ORIGIN).value(sink) == field.weight(sink)

    def test_matches_forward_passage(self, field: WeightField):
        sink = LatticePoint(14, 11)
        surface = backward_surface(field, sink, LatticePoint(2, 1))
        for w in (LatticePoint(2, 1), LatticePoint(5, 7), LatticePoint(14, 3), sink):
            assert surface.value(w) == passage_time(field, w, sink)

    def test_wavefront_value_at_scope(self, field: WeightField):
        sink, scope = diagonal(20), diagonal(8)
        surface = backward_surface(field, sink, scope, storage=Storage.WAVEFRONT)
        assert surface.value(scope) == passage_time(field, scope, sink)

    def test_order_error(self, field: WeightField):
        with pytest.raises(OrderError):
            backward_surface(field, diagonal(3), LatticePoint(4, 0))


class TestConstrained:
    def test_single_vertex(self, field: WeightField):
        region = StripRegion(8, 1.0)
        p = LatticePoint(3, 4)
        assert passage_constrained(field, region, p, p) == field.weight(p)

    def test_vacuous_strip_equals_full(self):
        region = StripRegion(6, 4.0)
        assert region.width_w >= 6
        for i in range(100):
            weights = sample_field(555, i, 6)
            assert passage_constrained(weights, region, ORIGIN, diagonal(6)) == passage_time(weights, ORIGIN, diagonal(6))

    def test_matches_in_strip_enumeration(self):
        result = oracles.strip_enumeration(fields=200, r=8, theta=0.5)
        assert result.passed, result.detail

    def test_strip_width(self):
        assert StripRegion(8, 0.5).width_w == 2
        assert StripRegion(1000, 1.0).width_w == 100
        assert StripRegion(1000, 0.25).width_w == 25

    def test_admissibility_errors(self, field: WeightField):
        region = StripRegion(8, 0.5)
        with pytest.raises(AdmissibilityError):
            passage_constrained(field, region, ORIGIN, LatticePoint(6, 0))
        with pytest.raises(AdmissibilityError):
            passage_constrained(field, region, diagonal(3), diagonal(2))
        with pytest.raises(AdmissibilityError):
            constrained_surface(field, region, LatticePoint(5, 0), diagonal(8))

    def test_constrained_below_free(self, field: WeightField):
        region = StripRegion(20, 0.5)
        corner = diagonal(20)
        boxed = constrained_surface(field, region, ORIGIN, corner).grid
        free = passage_full(field, ORIGIN, corner).grid
        assert np.all(boxed <= free)
        assert np.isneginf(boxed[12, 0])
        assert boxed[20, 20] == passage_constrained(field, region, ORIGIN, corner)

    def test_constrained_diag_ordering(self, field: WeightField):
        x_theta, x_star2 = constrained_diag(field, 27, 0.5)
        assert x_theta <= x_star2 <= passage_time(field, ORIGIN, diagonal(27))

    def test_constrained_diag_wide_strip(self, field: WeightField):
        x_theta, x_star2 = constrained_diag(field, 8, 4.0)
        t_r = passage_time(field, ORIGIN, diagonal(8))
        assert x_theta == x_star2 == t_r
