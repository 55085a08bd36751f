"""Invariant suites run by the ``verify`` command.

Each suite returns a list of ``CheckResult`` rows. A suite that raises is
recorded as one failed row and the remaining suites still run.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.analysis.analysis_utils import KelvinParams, half_strip_monotonicity, kelvin_decay_profile, kelvin_transform
from src.continuation.continuation import (
    LambdaStarEstimate,
    SweepProtocol,
    alpha_sweep,
    bifurcation_branch_q1,
    continue_minimal_branch,
    estimate_lambda_star,
    solve_minimal,
    uniform_bound_study,
)
from src.experiments.context import RunContext, refined_contexts
from src.extension.extension_cylinder import (
    bessel_profile,
    build_cylinder,
    calibrate_kappa,
    kappa_refinement_study,
    mode_profile,
    perturbed_energy,
    solve_extension,
    trace_inequality_constant,
    weighted_energy,
)
from src.mesh.mesh_domain import DomainSpec, build_mesh, build_partition
from src.spectral.spectral_core import (
    assemble,
    eigendecompose,
    mass_inner,
    observed_convergence_order,
    reference_eigenvalues,
)
from src.solvers.nonlinear_solvers import (
    IterationTrace,
    ProblemParams,
    SolutionRecord,
    build_supersolution,
    check_uniqueness_below,
    energy,
    energy_derivative,
    initial_subsolution,
    lambda_upper_bound,
    monotone_iteration,
    mountain_pass_solve,
    one_mode_amplitude,
    ratio_exponent_fit,
    solve_sublinear,
    sublinear_coercivity,
    supersolution_threshold,
    uniqueness_radius,
)
from src.utils.errors import KelvinCenterError, SpectralSolverError

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-10
SPECTRUM_SIZES = (26, 51, 101, 201)
ORDER_RANGE = (1.8, 2.2)
GRADIENT_STEP = 1e-5
GRADIENT_TOL = 1e-6
EQUIVALENCE_TOL = 5e-2
STABILITY_TOL = 1e-6
TAIL_DISTANCE = 1e-3
TAIL_SUP_NORM = 1e-3
ONE_MODE_TOL = 0.1


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    margin: Optional[float] = None
    kind: str = "assert"
    detail: str = ""


def check_le(suite: str, name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    value = float(value)
    return CheckResult(suite, name, bool(value <= threshold), value, threshold, threshold - value, detail=detail)


def check_ge(suite: str, name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    value = float(value)
    return CheckResult(suite, name, bool(value >= threshold), value, threshold, value - threshold, detail=detail)


def check_true(suite: str, name: str, holds: bool, detail: str = "") -> CheckResult:
    return CheckResult(suite, name, bool(holds), detail=detail)


def report_value(suite: str, name: str, value: float, detail: str = "") -> CheckResult:
    return CheckResult(suite, name, True, float(value), kind="report", detail=detail)


@dataclass
class VerificationReport:
    checks: List[CheckResult] = field(default_factory=list)
    traces: Dict[str, IterationTrace] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_frame(self) -> pd.DataFrame:
        columns = ["suite", "name", "passed", "value", "threshold", "margin", "kind", "detail"]
        return pd.DataFrame([asdict(c) for c in self.checks], columns=columns)

    def to_dict(self) -> Dict[str, Any]:
        suites: Dict[str, Dict[str, int]] = {}
        for c in self.checks:
            entry = suites.setdefault(c.suite, {"checks": 0, "failed": 0})
            entry["checks"] += 1
            entry["failed"] += int(not c.passed)
        return {
            "passed": self.passed,
            "checks": len(self.checks),
            "failed": [f"{c.suite}.{c.name}" for c in self.failures],
            "suites": suites,
        }


class _Shared:
    """Results reused across suites within one verification run."""

    def __init__(self, ctx: RunContext):
        self.ctx = ctx
        self._estimate: Optional[LambdaStarEstimate] = None
        self.solutions: List[SolutionRecord] = []

    def lambda_star(self) -> LambdaStarEstimate:
        if self._estimate is None:
            op = self.ctx.operator
            self._estimate = estimate_lambda_star(
                op,
                self.ctx.template,
                self.ctx.config.lambda_star.relative_resolution * op.first_eigenvalue_s(),
                self.ctx.settings,
                max_bisections=self.ctx.config.lambda_star.max_bisections,
            )
        return self._estimate


def _relative(a: np.ndarray, b: np.ndarray, mass: np.ndarray) -> float:
    denom = np.sqrt(mass_inner(b, b, mass))
    return float(np.sqrt(mass_inner(a - b, a - b, mass)) / denom)


def _random_field(ctx: RunContext, stream: int) -> np.ndarray:
    return ctx.rng(stream).standard_normal(ctx.operator.n_dofs)


def suite_operator(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    op, basis, mass = ctx.operator, ctx.basis, ctx.basis.mass
    checks = []

    phi1 = basis.phis[:, 0]
    checks.append(check_le("operator", "eigen_scaling", _relative(op.apply(phi1), op.powers[0] * phi1, mass), IDENTITY_TOL))
    if basis.count >= 3:
        u = basis.phis[:, 0] + 2.0 * basis.phis[:, 2]
        expected = op.powers[0] * basis.phis[:, 0] + 2.0 * op.powers[2] * basis.phis[:, 2]
        checks.append(check_le("operator", "linearity", _relative(op.apply(u), expected, mass), IDENTITY_TOL))

    u = _random_field(ctx, 1)
    v = _random_field(ctx, 2)
    laplacian = assemble(ctx.mesh, ctx.partition)
    op_one = ctx.operator_for(1.0, allow_any_s=True)
    checks.append(check_le("operator", "s1_reduction", _relative(op_one.apply(u), laplacian.apply(u), mass), IDENTITY_TOL))

    composed = ctx.operator_for(0.3, allow_any_s=True).apply(ctx.operator_for(0.4, allow_any_s=True).apply(u))
    direct = ctx.operator_for(0.7, allow_any_s=True).apply(u)
    checks.append(check_le("operator", "semigroup", _relative(composed, direct, mass), IDENTITY_TOL))

    au, av = op.apply(u), op.apply(v)
    scale = np.sqrt(mass_inner(au, au, mass) * mass_inner(v, v, mass))
    asym = abs(mass_inner(au, v, mass) - mass_inner(u, av, mass)) / scale
    checks.append(check_le("operator", "self_adjoint", asym, IDENTITY_TOL))

    checks.append(check_le("operator", "orthonormality", basis.orthonormality_defect(), IDENTITY_TOL))

    poincare = mass_inner(au, u, mass) / (op.first_eigenvalue_s() * mass_inner(u, u, mass))
    checks.append(check_ge("operator", "poincare", poincare, 1.0 - IDENTITY_TOL))

    hs_sq = op.hs_norm(u) ** 2
    checks.append(check_le("operator", "hs_half_power", abs(hs_sq - mass_inner(au, u, mass)) / hs_sq, IDENTITY_TOL))
    return checks


def suite_spectrum(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    exact = reference_eigenvalues("mixed", 1)[0]
    errors, hs, at_101 = [], [], None
    for n in SPECTRUM_SIZES:
        mesh = build_mesh(DomainSpec("interval", (1.0,), (n,)))
        basis = eigendecompose(assemble(mesh, build_partition(mesh, 1.0, "grow-from-left")))
        lam1 = float(basis.lambdas[0])
        errors.append(abs(lam1 - exact))
        hs.append(1.0 / (n - 1))
        if n == 101:
            at_101 = lam1

    orders = observed_convergence_order(errors, hs)
    checks = [
        check_ge("spectrum", f"order_{SPECTRUM_SIZES[k]}_{SPECTRUM_SIZES[k + 1]}_low", order, ORDER_RANGE[0])
        for k, order in enumerate(orders)
    ]
    checks += [
        check_le("spectrum", f"order_{SPECTRUM_SIZES[k]}_{SPECTRUM_SIZES[k + 1]}_high", order, ORDER_RANGE[1])
        for k, order in enumerate(orders)
    ]
    if at_101 is not None:
        checks.append(check_le("spectrum", "lambda1_n101", abs(at_101 - exact) / exact, 1e-3))
    return checks


def suite_extension(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    s = ctx.config.problem.s
    ext = ctx.config.extension
    laplacian = assemble(ctx.mesh, ctx.partition)
    basis = eigendecompose(laplacian)
    grid = build_cylinder(laplacian, basis, decay_tol=ext.decay_tol, first_step=ext.first_step, ratio=ext.ratio)
    calibration = calibrate_kappa(grid, s)
    kappa = calibration.kappa

    checks = [
        check_le("extension", "kappa_calibration", calibration.calibration_error, 1e-6),
        report_value("extension", "kappa", kappa, detail=f"closed form {calibration.reference_kappa:.12g}"),
        check_le(
            "extension",
            "kappa_closed_form",
            abs(kappa - calibration.reference_kappa) / calibration.reference_kappa,
            EQUIVALENCE_TOL,
        ),
    ]
    if calibration.cross_check_error is not None:
        checks.append(check_le("extension", "mode2_equivalence", calibration.cross_check_error, EQUIVALENCE_TOL))

    study = kappa_refinement_study(
        ctx.mesh, ctx.partition, s, levels=2, first_step=ext.first_step, ratio=ext.ratio, modes=(2,)
    )
    if "error_mode_2" in study and study["error_mode_2"].notna().all():
        coarse, fine = study["error_mode_2"].iloc[0], study["error_mode_2"].iloc[1]
        checks.append(check_true(
            "extension", "mode2_refines", fine < coarse, detail=f"{coarse:.3e} -> {fine:.3e}"
        ))

    lam1s = basis.lambdas[0] ** s
    trace_const = trace_inequality_constant(grid, s, 2.0)
    checks.append(check_le("extension", "trace_constant_p2", abs(trace_const * kappa - lam1s) / lam1s, EQUIVALENCE_TOL))

    u = basis.phis[:, 0] + (basis.phis[:, 1] if basis.count > 1 else 0.0)
    field_ = solve_extension(u, grid, s)
    form = float(np.sum(basis.mass * u * basis.synthesize(basis.lambdas ** s * basis.coefficients(u))))
    checks.append(check_le("extension", "energy_identity", abs(kappa * weighted_energy(field_) - form) / form, EQUIVALENCE_TOL))

    bump = ctx.rng(3).standard_normal(field_.values.shape) * 1e-3
    bump[0] = 0.0
    checks.append(check_ge("extension", "dirichlet_principle", perturbed_energy(field_, bump) - weighted_energy(field_), 0.0))

    theta = mode_profile(basis.lambdas[0], grid, s)
    near = grid.y_nodes < 0.25 * grid.y_max
    gap = float(np.max(np.abs(theta[near] - bessel_profile(basis.lambdas[0], grid.y_nodes[near], s))))
    checks.append(report_value("extension", "bessel_profile_gap", gap))
    return checks


def suite_gradient(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    op = ctx.operator
    params = ctx.template.with_lambda(0.5 * op.first_eigenvalue_s())
    rng = ctx.rng(4)
    u = 0.5 + 0.1 * rng.random(op.n_dofs)
    worst = 0.0
    for _ in range(ctx.config.verify.random_directions):
        v = rng.standard_normal(op.n_dofs)
        fd = (energy(op, params, u + GRADIENT_STEP * v) - energy(op, params, u - GRADIENT_STEP * v)) / (2 * GRADIENT_STEP)
        exact = energy_derivative(op, params, u, v)
        worst = max(worst, abs(fd - exact) / max(abs(exact), 1e-300))
    return [check_le("gradient", "directional_derivatives", worst, GRADIENT_TOL,
                     detail=f"{ctx.config.verify.random_directions} directions")]


def _needs_sublinear(ctx: RunContext, suite: str) -> Optional[List[CheckResult]]:
    if ctx.template.q < 1.0:
        return None
    return [check_true(suite, "applicable", True, detail="skipped: needs 0 < q < 1")]


def suite_monotone(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    skipped = _needs_sublinear(ctx, "monotone")
    if skipped:
        return skipped
    op, settings = ctx.operator, ctx.settings
    lam = 0.5 * supersolution_threshold(op, ctx.template.q, ctx.template.r)
    params = ctx.template.with_lambda(lam)
    sup = build_supersolution(op, params).h
    sub = initial_subsolution(op, params, sup)
    record, trace = monotone_iteration(
        op, params, sub, sup, tol=settings.monotone_tol, max_iter=settings.max_monotone_iterations
    )
    report.traces["verify/monotone"] = trace

    increments = np.diff(np.asarray(trace.sup_norms))
    checks = [
        check_ge("monotone", "sup_norm_nondecreasing", float(increments.min()) if increments.size else 0.0, -1e-12),
        check_le("monotone", "limit_residual", record.residual, 1e-8),
    ]
    second = mountain_pass_solve(
        op, params, record.u, separation_tol=settings.separation_tol,
        newton_tol=settings.newton_tol, max_newton=settings.max_newton_iterations,
    )
    checks.append(check_ge("monotone", "below_newton_solution", float(np.min(second.u - record.u)), -1e-8))
    shared.solutions += [record, second]
    return checks


def suite_branch(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    skipped = _needs_sublinear(ctx, "branch")
    if skipped:
        return skipped
    estimate = shared.lambda_star()
    grid = [f * estimate.lower for f in ctx.config.branch.fractions]
    branch = continue_minimal_branch(ctx.operator, ctx.template, grid, ctx.settings)
    shared.solutions += branch.points

    checks = [check_true("branch", "complete", branch.truncated_at is None,
                         detail=f"{len(branch.points)}/{len(grid)} points")]
    if len(branch.points) > 1:
        drops = [float(np.min(b.u - a.u)) for a, b in zip(branch.points, branch.points[1:])]
        checks.append(check_ge("branch", "pointwise_increasing", min(drops), -1e-8))
    if branch.nu1:
        checks.append(check_ge("branch", "nu1_nonnegative", min(branch.nu1), -STABILITY_TOL))
        checks.append(check_le("branch", "energy_negative", max(p.energy for p in branch.points), 0.0))
    return checks


def suite_q1_threshold(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    op, settings = ctx.operator, ctx.settings
    template = ProblemParams(lam=0.0, q=1.0, r=ctx.template.r, s=ctx.template.s, dim=ctx.template.dim)
    lam1s = op.first_eigenvalue_s()

    estimate = estimate_lambda_star(op, template, 0.5e-3 * lam1s, settings)
    checks = [
        check_true("q1_threshold", "bracket_contains_lambda1s", estimate.contains(lam1s),
                   detail=f"[{estimate.lower:.10g}, {estimate.upper:.10g}] vs {lam1s:.10g}"),
        check_le("q1_threshold", "bracket_width", estimate.width, 1e-3 * lam1s),
    ]

    distances = [TAIL_DISTANCE, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2, 1e-1]
    grid = sorted(lam1s - d for d in distances)
    branch = bifurcation_branch_q1(op, template, grid, settings)
    if not branch.points:
        checks.append(check_true("q1_threshold", "branch_nonempty", False))
        return checks

    tail = branch.points[-1]
    _, one_mode = one_mode_amplitude(op, tail.params)
    predicted = float(np.max(one_mode))
    # the amplitude at distance d is about d^{1/(r-1)} times a shape constant, which can exceed 1e-3
    tail_threshold = max(TAIL_SUP_NORM, (1.0 + ONE_MODE_TOL) * predicted)
    checks.append(check_le("q1_threshold", "tail_sup_norm", tail.sup_norm, tail_threshold,
                           detail=f"lambda_1^s - lambda = {lam1s - tail.params.lam:.2e}, one-mode {predicted:.3e}"))
    checks.append(check_le("q1_threshold", "one_mode_agreement", abs(tail.sup_norm - predicted) / predicted, ONE_MODE_TOL))
    sups = branch.sup_norms()
    gaps = np.array([lam1s - lam for lam in branch.lambdas])
    near = gaps <= 2e-3 * (1.0 + 1e-9)
    if np.count_nonzero(near) >= 2:
        slope = float(np.polyfit(np.log(gaps[near]), np.log(sups[near]), 1)[0])
        expected = 1.0 / (template.r - 1.0)
        checks.append(check_le("q1_threshold", "amplitude_exponent", abs(slope - expected) / expected, ONE_MODE_TOL,
                               detail=f"fitted {slope:.4f}, 1/(r-1) = {expected:.4f}"))
    checks.append(check_true("q1_threshold", "amplitude_vanishes_toward_lambda1s", bool(np.all(np.diff(sups) < 0))))
    return checks


def suite_two_solutions(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    skipped = _needs_sublinear(ctx, "two_solutions")
    if skipped:
        return skipped
    op, settings = ctx.operator, ctx.settings
    estimate = shared.lambda_star()
    checks = []
    for fraction in (0.25, 0.5, 0.75):
        params = ctx.template.with_lambda(fraction * estimate.lower)
        u_min, _ = solve_minimal(op, params, settings=settings)
        u_mp = mountain_pass_solve(
            op, params, u_min.u, separation_tol=settings.separation_tol,
            newton_tol=settings.newton_tol, max_newton=settings.max_newton_iterations,
        )
        tag = f"f{fraction:g}"
        checks.append(check_ge("two_solutions", f"energy_gap_{tag}", u_mp.energy - u_min.energy, 0.0))
        checks.append(check_ge("two_solutions", f"separation_{tag}", float(np.max(np.abs(u_mp.u - u_min.u))), 1e-3))
        shared.solutions += [u_min, u_mp]

    certs = estimate.upper_certificates
    bound = lambda_upper_bound(op, ctx.template.q, ctx.template.r)
    checks.append(check_true("two_solutions", "upper_below_identity_bound", estimate.upper < bound,
                             detail=f"upper {estimate.upper:.8g}, bound {bound:.8g}"))
    certified = certs.get("supersolution_feasible") is False and certs.get("newton_converged") is False
    checks.append(check_true("two_solutions", "upper_certified", certified, detail=str(sorted(certs))))
    return checks


def suite_sublinear(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    skipped = _needs_sublinear(ctx, "sublinear")
    if skipped:
        return skipped
    op, q, r = ctx.operator, ctx.template.q, ctx.template.r
    v1 = solve_sublinear(op, q).u
    mu1 = sublinear_coercivity(op, q, v1)
    checks = [check_ge("sublinear", "coercivity_positive", mu1, np.finfo(float).tiny)]
    if mu1 > 0:
        radius = uniqueness_radius(mu1, r)
        violations = check_uniqueness_below(shared.solutions, radius)
        checks.append(check_true("sublinear", "unique_below_radius", not violations,
                                 detail=f"A={radius:.6g}, {len(shared.solutions)} solutions"))

    lam = 0.3
    v_lam = solve_sublinear(op, q, lam).u
    scaled = lam ** (1.0 / (1.0 - q)) * v1
    checks.append(check_le("sublinear", "scaling_law", float(np.max(np.abs(v_lam - scaled)) / np.max(scaled)), 1e-8))

    fit = ratio_exponent_fit(q, r, np.geomspace(1e-4, 1e-1, 7))
    checks.append(report_value("sublinear", "ratio_exponent_fit", fit["fitted_exponent"],
                               detail=f"(r-1)/(r-q)={fit['scaling_exponent']:.6g}"))
    return checks


def suite_kelvin(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    params = KelvinParams(dim=2, s=ctx.config.problem.s)

    def u(points):
        return np.exp(-np.sum((points - np.array([0.3, -0.2])) ** 2, axis=1))

    rng = ctx.rng(5)
    radii = 0.5 + 1.5 * rng.random(64)
    angles = 2.0 * np.pi * rng.random(64)
    points = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])

    twice = kelvin_transform(kelvin_transform(u, params), params)(points)
    involution = float(np.max(np.abs(twice - u(points)) / np.abs(u(points))))
    checks = [check_le("kelvin", "involution", involution, IDENTITY_TOL)]

    try:
        kelvin_transform(u, params)(np.zeros((1, 2)))
        checks.append(check_true("kelvin", "center_rejected", False))
    except KelvinCenterError:
        checks.append(check_true("kelvin", "center_rejected", True))

    profile = kelvin_decay_profile(u, params, (1.0, 1.0), np.geomspace(10.0, 1e4, 4))
    checks.append(report_value("kelvin", "decay_deviation", profile["deviation"].iloc[-1]))
    return checks


def suite_half_strip(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    result = half_strip_monotonicity(s=ctx.config.problem.s)
    return [check_ge("half_strip", "monotone_in_x1", result.min_difference, -result.tol,
                     detail=f"buffer {result.buffer}, {result.lines_checked} lines")]


def suite_uniform_bound(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    skipped = _needs_sublinear(ctx, "uniform_bound")
    if skipped:
        return skipped
    study = uniform_bound_study(
        refined_contexts(ctx.config, levels=2), ctx.template,
        resolution=ctx.config.lambda_star.relative_resolution, settings=ctx.settings,
    )
    return [check_le("uniform_bound", "sup_norm_change", study["relative_changes"][0], 0.1)]


def suite_alpha_sweep(ctx: RunContext, shared: _Shared, report: VerificationReport) -> List[CheckResult]:
    family_config = ctx.config.verify.family
    problem = ctx.config.problem
    dim = family_config.domain.dim
    if dim > 2 * problem.s and problem.r >= (dim + 2 * problem.s) / (dim - 2 * problem.s):
        return [check_true("alpha_sweep", "applicable", True, detail=f"skipped: r={problem.r} is critical for N={dim}")]

    template = ProblemParams(lam=0.0, q=problem.q, r=problem.r, s=problem.s, dim=dim)
    protocol = SweepProtocol(
        lambda_fraction=family_config.lambda_fraction,
        resolution=ctx.config.lambda_star.relative_resolution,
        quotient_p=ctx.config.sweep.quotient_p,
        mountain_pass=family_config.mountain_pass,
    )
    family = ctx.verification_family()
    result = alpha_sweep(family, template, protocol, ctx.settings, jobs=ctx.config.jobs)
    checks = [
        check_true("alpha_sweep", "no_failures", not result.failures, detail=str(result.failures)),
        check_ge("alpha_sweep", "members", len(result.table), 5),
    ]
    checks += [check_true("alpha_sweep", name, holds) for name, holds in sorted(result.trends.items())]
    ok = result.table[result.table["error"] == ""]
    smallest = ok["min_sup_norm"].iloc[0] if not ok.empty and "min_sup_norm" in ok else np.inf
    checks.append(check_le("alpha_sweep", "smallest_alpha_sup_norm", smallest, family_config.max_smallest_sup_norm,
                           detail=f"alpha={family.alphas[0]:g}, lambda = {family_config.lambda_fraction:g} x lambda*"))
    return checks


SUITES: Dict[str, Callable[[RunContext, _Shared, VerificationReport], List[CheckResult]]] = {
    "operator": suite_operator,
    "spectrum": suite_spectrum,
    "extension": suite_extension,
    "gradient": suite_gradient,
    "monotone": suite_monotone,
    "branch": suite_branch,
    "q1_threshold": suite_q1_threshold,
    "two_solutions": suite_two_solutions,
    "sublinear": suite_sublinear,
    "kelvin": suite_kelvin,
    "half_strip": suite_half_strip,
    "uniform_bound": suite_uniform_bound,
    "alpha_sweep": suite_alpha_sweep,
}


def run_verification(ctx: RunContext, suites: Optional[List[str]] = None) -> VerificationReport:
    suites = suites if suites is not None else ctx.config.verify.suites
    report = VerificationReport()
    shared = _Shared(ctx)
    for name in suites:
        runner = SUITES.get(name)
        if runner is None:
            report.checks.append(check_true(name, "known_suite", False, detail="no such suite"))
            continue
        logger.info(f"Running suite '{name}'")
        try:
            checks = runner(ctx, shared, report)
        except SpectralSolverError as exc:
            logger.error(f"Suite '{name}' raised {type(exc).__name__}: {exc}")
            checks = [check_true(name, "completed", False, detail=f"{type(exc).__name__}: {exc}")]
        report.checks.extend(checks)
        failed = [c.name for c in checks if not c.passed]
        if failed:
            logger.warning(f"Suite '{name}': {len(failed)} failed check(s): {failed}")
    logger.info(f"Verification: {len(report.checks)} checks, {len(report.failures)} failed")
    return report
