import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.analysis.analysis_utils import (
    KelvinParams,
    half_strip_monotonicity,
    kelvin_decay_profile,
    kelvin_transform,
    monotonicity_check,
)
from src.utils.errors import InvalidParameterError, KelvinCenterError


def bump(points):
    points = np.atleast_2d(points)
    return np.exp(-np.sum(points ** 2, axis=1))


@pytest.fixture
def params():
    return KelvinParams(dim=2, s=0.75)


class TestKelvin:
    def test_involution(self, params):
        twice = kelvin_transform(kelvin_transform(bump, params), params)
        pts = np.random.default_rng(5).uniform(-2.0, 2.0, size=(20, 2))
        np.testing.assert_allclose(twice(pts), bump(pts), rtol=1e-12)

    def test_shifted_center(self):
        params = KelvinParams(dim=2, s=0.75, center=(0.5, 0.5))
        twice = kelvin_transform(kelvin_transform(bump, params), params)
        pts = np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, -1.0]])
        np.testing.assert_allclose(twice(pts), bump(pts), rtol=1e-12)

    def test_center_rejected(self, params):
        with pytest.raises(KelvinCenterError):
            kelvin_transform(bump, params)(np.zeros((1, 2)))

    def test_needs_dimension_above_2s(self):
        with pytest.raises(InvalidParameterError):
            KelvinParams(dim=1, s=0.75)

    def test_wrong_sample_dimension(self, params):
        with pytest.raises(InvalidParameterError):
            kelvin_transform(bump, params)(np.ones((3, 3)))

    def test_decay_profile_approaches_center_value(self, params):
        profile = kelvin_decay_profile(bump, params, (1.0, 1.0), [1.0, 10.0, 100.0, 1000.0])
        assert list(profile.columns) == ["radius", "scaled_value", "center_value", "deviation"]
        assert profile["center_value"].iloc[0] == pytest.approx(1.0)
        assert np.all(np.diff(profile["deviation"]) < 0)
        assert profile["deviation"].iloc[-1] < 1e-5


class TestMonotonicityCheck:
    def test_increasing_grid_passes(self):
        grid = np.tile(np.arange(10.0), (6, 1))
        report = monotonicity_check(grid, buffer=2)
        assert report.passed
        assert report.min_difference == pytest.approx(1.0)
        assert report.lines_checked == 4

    def test_dip_is_located(self):
        grid = np.tile(np.arange(10.0), (6, 1))
        grid[1, 5] = 3.0
        report = monotonicity_check(grid, buffer=2)
        assert not report.passed
        assert report.worst_location == (1, 4)
        assert report.min_difference == pytest.approx(-1.0)

    def test_x2_direction(self):
        grid = np.tile(np.arange(8.0)[:, None], (1, 8))
        assert monotonicity_check(grid, direction="x2", buffer=1).passed
        assert not monotonicity_check(-grid, direction="x2", buffer=1).passed

    def test_buffer_too_wide(self):
        with pytest.raises(InvalidParameterError):
            monotonicity_check(np.zeros((4, 4)), buffer=2)

    def test_unknown_direction(self):
        with pytest.raises(InvalidParameterError):
            monotonicity_check(np.zeros((6, 6)), direction="x3", buffer=1)

    def test_report_serializes(self):
        report = monotonicity_check(np.tile(np.arange(6.0), (6, 1)), tau=0.5, buffer=1)
        payload = report.to_dict()
        assert payload["tau"] == 0.5
        assert payload["worst_location"] is not None


class TestHalfStrip:
    @pytest.fixture(scope="class")
    def report(self):
        return half_strip_monotonicity()

    def test_minimal_solution_increases_along_strip(self, report):
        assert report.passed
        assert report.extra["residual"] <= 1e-8
        assert report.extra["sup_norm"] > 0

    def test_scan_stops_before_right_truncation_layer(self, report):
        assert report.extra["scan_end"] == pytest.approx(0.5 + 0.4 * 3.5)
        assert report.extra["alpha"] == pytest.approx(1.0 + 4.0 + 1.0 + 0.5)

    def test_full_neumann_stretch_sees_the_right_side(self):
        report = half_strip_monotonicity(scan_fraction=1.0, buffer=1)
        assert report.min_difference < 0

    def test_scan_fraction_range(self):
        with pytest.raises(InvalidParameterError):
            half_strip_monotonicity(scan_fraction=0.0)

    def test_tau_inside_strip(self):
        with pytest.raises(InvalidParameterError):
            half_strip_monotonicity(tau=4.5)
