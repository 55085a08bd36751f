import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.extension.extension_cylinder import (
    bessel_profile,
    build_cylinder,
    build_cylinder_for,
    calibrate_kappa,
    dtn_flux,
    export_slices,
    extension_vs_spectral_error,
    graded_y_nodes,
    kappa_refinement_study,
    mode_energy,
    mode_profile,
    perturbed_energy,
    reference_kappa,
    solve_extension,
    trace_inequality_constant,
    weighted_energy,
)
from src.mesh.mesh_domain import DomainSpec, build_mesh, build_partition
from src.spectral.spectral_core import assemble, eigendecompose
from src.utils.errors import DimensionMismatchError, GridResolutionError, InvalidParameterError
from src.utils.io import read_csv

S = 0.75


@pytest.fixture(scope="module")
def setup():
    mesh = build_mesh(DomainSpec("interval", (1.0,), (51,)))
    part = build_partition(mesh, 1.0, "grow-from-left")
    return mesh, part


@pytest.fixture(scope="module")
def grid(setup):
    return build_cylinder_for(*setup)


@pytest.fixture(scope="module")
def calibration(grid):
    return calibrate_kappa(grid, S)


class TestGrid:
    def test_graded_nodes(self):
        y = graded_y_nodes(1.0, 1e-3, 1.2, 0.1)
        assert y[0] == 0.0
        assert y[-1] == pytest.approx(1.0)
        steps = np.diff(y)
        assert steps[0] == pytest.approx(1e-3)
        assert np.all(steps[:-1] <= 0.1 + 1e-15)

    def test_bad_grid_rejected(self):
        with pytest.raises(InvalidParameterError):
            graded_y_nodes(1.0, 1e-3, 0.9, 0.1)

    def test_cap_follows_decay_length(self, grid):
        lam1 = grid.basis.lambdas[0]
        assert grid.y_max == pytest.approx(-np.log(1e-8) / np.sqrt(lam1), rel=0.05)
        assert grid.near_layers() >= 3

    def test_weights_integrate_exactly(self, grid):
        e = 2.0 - 2.0 * S
        assert grid.element_weights(S).sum() == pytest.approx(grid.y_max ** e / e)


class TestExtension:
    def test_first_mode_separates(self, grid):
        phi1 = grid.basis.phis[:, 0]
        field_ = solve_extension(phi1, grid, S)
        theta = mode_profile(grid.basis.lambdas[0], grid, S)
        np.testing.assert_allclose(field_.values, np.outer(theta, phi1), rtol=1e-7, atol=1e-10)

    def test_trace_is_kept(self, grid):
        u = grid.basis.phis[:, 0] + grid.basis.phis[:, 1]
        field_ = solve_extension(u, grid, S)
        np.testing.assert_array_equal(field_.trace, u)

    def test_profile_decays(self, grid):
        theta = mode_profile(grid.basis.lambdas[0], grid, S)
        assert theta[0] == 1.0
        assert np.all(np.diff(theta) <= 1e-14)
        assert abs(theta[-1]) < 1e-6

    def test_profile_close_to_bessel_form(self, grid):
        lam = grid.basis.lambdas[0]
        near = grid.y_nodes < 0.25 * grid.y_max
        theta = mode_profile(lam, grid, S)
        assert np.max(np.abs(theta[near] - bessel_profile(lam, grid.y_nodes[near], S))) < 5e-2

    def test_wrong_trace_shape(self, grid):
        with pytest.raises(DimensionMismatchError):
            solve_extension(np.ones(grid.n_base + 1), grid, S)

    def test_too_coarse_near_boundary(self, setup):
        coarse = build_cylinder_for(*setup, first_step=0.5, max_step=0.5)
        field_ = solve_extension(coarse.basis.phis[:, 0], coarse, S)
        with pytest.raises(GridResolutionError):
            dtn_flux(field_, 1.0)

    def test_slices_export(self, grid, tmp_path):
        field_ = solve_extension(grid.basis.phis[:, 0], grid, S)
        path = export_slices(field_, [0, 1], tmp_path / "slices.csv", {"config_hash": "x"})
        df = read_csv(path)
        assert set(df["layer"]) == {0, 1}
        assert len(df) == 2 * grid.n_base


class TestEquivalence:
    def test_kappa_calibration(self, calibration):
        assert calibration.kappa > 0
        assert calibration.calibration_error <= 1e-6

    def test_kappa_matches_closed_form(self, calibration):
        gap = abs(calibration.kappa - calibration.reference_kappa) / calibration.reference_kappa
        assert gap < 5e-2

    def test_first_mode_energy_identity(self, grid, calibration):
        lam1 = grid.basis.lambdas[0]
        assert calibration.kappa * mode_energy(lam1, grid, S) == pytest.approx(lam1 ** S, rel=1e-8)

    def test_flux_pairs_with_weighted_energy(self, grid):
        basis = grid.basis
        u = basis.phis[:, 0] + 0.4 * basis.phis[:, 1]
        field_ = solve_extension(u, grid, S)
        paired = float(np.sum(basis.mass * u * dtn_flux(field_, 1.0)))
        assert paired == pytest.approx(weighted_energy(field_), rel=1e-6)

    def test_second_mode_matches_spectral(self, calibration):
        assert calibration.cross_check_error <= 5e-2

    def test_reference_kappa(self):
        assert reference_kappa(0.5) == pytest.approx(1.0)
        assert reference_kappa(S) > 0

    def test_energy_identity(self, grid, calibration):
        basis = grid.basis
        u = basis.phis[:, 0] - 0.5 * basis.phis[:, 2]
        field_ = solve_extension(u, grid, S)
        form = float(np.sum(basis.mass * u * basis.synthesize(basis.lambdas ** S * basis.coefficients(u))))
        assert calibration.kappa * weighted_energy(field_) == pytest.approx(form, rel=5e-2)

    def test_extension_minimizes_energy(self, grid):
        field_ = solve_extension(grid.basis.phis[:, 0], grid, S)
        bump = np.random.default_rng(3).standard_normal(field_.values.shape) * 1e-3
        bump[0] = 0.0
        assert perturbed_energy(field_, bump) >= weighted_energy(field_)

    def test_competitor_must_share_trace(self, grid):
        field_ = solve_extension(grid.basis.phis[:, 0], grid, S)
        with pytest.raises(InvalidParameterError):
            perturbed_energy(field_, np.ones(field_.values.shape))

    def test_trace_constant_p2(self, grid, calibration):
        lam1s = grid.basis.lambdas[0] ** S
        constant = trace_inequality_constant(grid, S, 2.0)
        assert constant * calibration.kappa == pytest.approx(lam1s, rel=5e-2)

    def test_error_of_generic_trace(self, grid, calibration):
        u = grid.basis.phis[:, 1] + 0.3 * grid.basis.phis[:, 3]
        assert extension_vs_spectral_error(u, grid, S, calibration.kappa) <= 1e-1

    def test_refinement_reduces_mode_two_error(self, setup):
        mesh = build_mesh(DomainSpec("interval", (1.0,), (26,)))
        part = build_partition(mesh, 1.0, "grow-from-left")
        study = kappa_refinement_study(mesh, part, S, levels=2, modes=(2,))
        assert list(study["level"]) == [0, 1]
        assert study["error_mode_2"].iloc[1] < study["error_mode_2"].iloc[0]
        assert study["kappa_change"].iloc[1] < 0.1

    def test_build_from_laplacian(self, setup):
        lap = assemble(*setup)
        grid = build_cylinder(lap, eigendecompose(lap), decay_tol=1e-6)
        assert grid.y_max == pytest.approx(-np.log(1e-6) / np.sqrt(grid.basis.lambdas[0]))
