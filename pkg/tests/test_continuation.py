import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest
from unittest.mock import patch

from src.continuation.continuation import (
    LambdaStarEstimate,
    SweepProtocol,
    alpha_sweep,
    bifurcation_branch_q1,
    continue_minimal_branch,
    estimate_lambda_star,
    mountain_pass_branch,
    positive_solution_q1,
    solve_minimal,
)
from src.mesh.mesh_domain import DomainSpec, build_family, build_mesh, build_partition
from src.solvers.nonlinear_solvers import (
    ProblemParams,
    SolverSettings,
    lambda_upper_bound,
    make_record,
    one_mode_amplitude,
    supersolution_threshold,
)
from src.spectral.spectral_core import build_operator
from src.utils.errors import InvalidParameterError, IterationLimitError, NoSupersolutionError, TrivialSolutionError


@pytest.fixture(scope="module")
def op():
    mesh = build_mesh(DomainSpec("interval", (1.0,), (41,)))
    return build_operator(mesh, build_partition(mesh, 1.0, "grow-from-left"), 0.75)


@pytest.fixture(scope="module")
def template():
    return ProblemParams(lam=0.0, q=0.5, r=2.0, s=0.75)


@pytest.fixture(scope="module")
def q1_template():
    return ProblemParams(lam=0.0, q=1.0, r=2.0, s=0.75)


@pytest.fixture(scope="module")
def estimate(op, template):
    return estimate_lambda_star(op, template, 1e-3 * op.first_eigenvalue_s())


@pytest.fixture(scope="module")
def minimal_branch(op, template, estimate):
    lambdas = [f * estimate.lower for f in (0.25, 0.5, 0.75)]
    return continue_minimal_branch(op, template, lambdas)


class TestSolveMinimal:
    def test_supersolution_route(self, op, template):
        lam = 0.5 * supersolution_threshold(op, template.q, template.r)
        record, certificates = solve_minimal(op, template.with_lambda(lam))
        assert certificates["supersolution_feasible"] is True
        assert record.label == "monotone/supersolution"
        assert record.residual <= 1e-8

    def test_needs_previous_point_above_threshold(self, op, template, estimate):
        lam = 0.5 * (supersolution_threshold(op, template.q, template.r) + estimate.lower)
        with pytest.raises(NoSupersolutionError):
            solve_minimal(op, template.with_lambda(lam))


class TestMinimalBranch:
    def test_complete(self, minimal_branch):
        assert len(minimal_branch.points) == 3
        assert minimal_branch.truncated_at is None
        assert all(p.residual <= 1e-8 for p in minimal_branch.points)

    def test_pointwise_increasing(self, minimal_branch):
        pts = minimal_branch.points
        for a, b in zip(pts, pts[1:]):
            assert np.all(b.u >= a.u - 1e-8)

    def test_stable_and_negative_energy(self, minimal_branch):
        assert all(nu >= -1e-8 for nu in minimal_branch.nu1)
        assert all(p.energy < 0 for p in minimal_branch.points)

    def test_frame_columns(self, minimal_branch):
        frame = minimal_branch.to_frame()
        assert list(frame.columns) == ["lambda", "sup_norm", "hs_norm", "energy", "residual", "nu1"]
        assert frame["sup_norm"].is_monotonic_increasing

    def test_grid_must_increase(self, op, template):
        with pytest.raises(InvalidParameterError):
            continue_minimal_branch(op, template, [0.2, 0.1])

    def test_truncates_beyond_lambda_star(self, op, template, estimate):
        branch = continue_minimal_branch(op, template, [0.5 * estimate.lower, 2.0 * estimate.upper])
        assert len(branch.points) == 1
        assert branch.truncated_at == pytest.approx(2.0 * estimate.upper)
        assert branch.failures


class TestLambdaStar:
    def test_bracket(self, op, estimate):
        assert estimate.width <= 1e-3 * op.first_eigenvalue_s()
        assert not estimate.budget_exhausted
        assert estimate.lower_record.is_positive

    def test_above_supersolution_threshold(self, op, template, estimate):
        assert estimate.upper >= supersolution_threshold(op, template.q, template.r)

    def test_q1_contains_first_eigenvalue(self, op, q1_template):
        lam1s = op.first_eigenvalue_s()
        est = estimate_lambda_star(op, q1_template, 0.5e-3 * lam1s)
        assert est.contains(lam1s)
        assert est.width <= 0.5e-3 * lam1s

    def test_upper_end_moves_below_identity_bound(self, op, template, estimate):
        assert estimate.upper < lambda_upper_bound(op, template.q, template.r)
        certs = estimate.upper_certificates
        assert certs["supersolution_feasible"] is False
        assert certs["newton_converged"] is False

    def test_q1_lower_end_is_nontrivial(self, op, q1_template):
        est = estimate_lambda_star(op, q1_template, 0.5e-3 * op.first_eigenvalue_s())
        _, one_mode = one_mode_amplitude(op, est.lower_record.params)
        assert est.lower_record.sup_norm > 0.5 * np.max(one_mode)

    def test_other_solver_errors_propagate(self, op, template):
        threshold = supersolution_threshold(op, template.q, template.r)

        def flaky(op_, params, *args, **kwargs):
            if params.lam > threshold:
                raise IterationLimitError("stalled", iterations=10, last_increment=1.0)
            return solve_minimal(op_, params, *args, **kwargs)

        with patch("src.continuation.continuation.solve_minimal", side_effect=flaky):
            with pytest.raises(IterationLimitError):
                estimate_lambda_star(op, template, 1e-3 * op.first_eigenvalue_s())

    def test_rejects_bad_resolution(self, op, template):
        with pytest.raises(InvalidParameterError):
            estimate_lambda_star(op, template, 0.0)

    def test_serializes(self, estimate):
        payload = estimate.to_dict()
        assert payload["lower"] <= payload["upper"]
        assert "u" not in payload["nearest_converged"]

    def test_contains_is_inclusive(self):
        est = LambdaStarEstimate(lower=1.0, upper=2.0, resolution=1.0)
        assert est.contains(2.0)
        assert est.midpoint == 1.5


class TestBifurcationBranch:
    def test_branch_leaves_first_eigenvalue(self, op, q1_template):
        lam1s = op.first_eigenvalue_s()
        grid = [lam1s * f for f in (0.9, 0.95, 0.99)]
        branch = bifurcation_branch_q1(op, q1_template, grid)
        assert branch.lambdas == sorted(grid)
        norms = branch.sup_norms()
        assert np.all(np.diff(norms) < 0)
        assert not branch.folds

    def test_tail_follows_one_mode_amplitude(self, op, q1_template):
        lam1s = op.first_eigenvalue_s()
        branch = bifurcation_branch_q1(op, q1_template, [lam1s - 2e-3, lam1s - 1e-3])
        assert len(branch.points) == 2
        for point in branch.points:
            _, one_mode = one_mode_amplitude(op, point.params)
            predicted = np.max(one_mode)
            assert point.sup_norm == pytest.approx(predicted, rel=0.1)
        slope = np.log(branch.points[0].sup_norm / branch.points[1].sup_norm) / np.log(2.0)
        assert slope == pytest.approx(1.0, rel=0.1)

    def test_collapse_onto_zero_is_rejected(self, op, q1_template):
        params = q1_template.with_lambda(0.9 * op.first_eigenvalue_s())
        tiny = make_record(op, params, 1e-12 * op.basis.phis[:, 0], kind="bifurcation_q1")
        with patch("src.continuation.continuation.newton_solve", return_value=tiny):
            with pytest.raises(TrivialSolutionError):
                positive_solution_q1(op, params)

    def test_rejects_sublinear(self, op, template):
        with pytest.raises(InvalidParameterError):
            bifurcation_branch_q1(op, template, [0.1])

    def test_grid_must_sit_below_first_eigenvalue(self, op, q1_template):
        with pytest.raises(InvalidParameterError):
            bifurcation_branch_q1(op, q1_template, [1.1 * op.first_eigenvalue_s()])


class TestMountainPassBranch:
    def test_second_branch_above_minimal(self, op, template, minimal_branch):
        second = mountain_pass_branch(op, template, minimal_branch, SolverSettings())
        assert len(second.points) == len(minimal_branch.points)
        for low, high in zip(minimal_branch.points, second.points):
            assert high.energy > low.energy
            assert high.sup_norm > low.sup_norm


class TestAlphaSweep:
    def test_trends_on_interval_family(self, template):
        mesh = build_mesh(DomainSpec("interval", (1.0,), (31,)))
        family = build_family(mesh, [1.0, 2.0], "grow-from-left")
        result = alpha_sweep(family, template, SweepProtocol(resolution=5e-3, mountain_pass=False))
        assert not result.failures
        assert list(result.table["alpha"]) == [1.0, 2.0]
        assert result.trends["lambda1_s_decreasing"]
        assert result.trends["lambda_star_decreasing"]
        assert result.to_dict()["rows"] == 2
