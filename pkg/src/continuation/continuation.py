import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.mesh.mesh_domain import BoundaryPartition, MeshedDomain, PartitionFamily
from src.spectral.spectral_core import FractionalOperator, build_operator, linearized_first_eigenvalue, sobolev_quotient
from src.solvers.nonlinear_solvers import (
    ProblemParams,
    SolutionRecord,
    SolverSettings,
    build_supersolution,
    initial_subsolution,
    jacobian_potential,
    lambda_upper_bound,
    make_record,
    monotone_iteration,
    mountain_pass_solve,
    newton_solve,
    one_mode_amplitude,
    solve_torsion,
)
from src.utils.errors import (
    InvalidParameterError,
    IterationBlowUpError,
    IterationLimitError,
    MountainPassError,
    NewtonDivergenceError,
    NoSupersolutionError,
    OrderingViolationError,
    PositivityLossError,
    SingularJacobianError,
    SpectralSolverError,
    TrivialSolutionError,
)

logger = logging.getLogger(__name__)

BRANCH_SLACK = 1e-8
TRIVIAL_FRACTION = 1e-3
NONEXISTENCE_ERRORS = (
    NoSupersolutionError,
    NewtonDivergenceError,
    PositivityLossError,
    SingularJacobianError,
    TrivialSolutionError,
)


@dataclass
class Branch:
    template: ProblemParams
    kind: str
    alpha: Optional[float] = None
    points: List[SolutionRecord] = field(default_factory=list)
    nu1: List[float] = field(default_factory=list)
    truncated_at: Optional[float] = None
    failures: List[Dict[str, Any]] = field(default_factory=list)
    folds: List[float] = field(default_factory=list)

    @property
    def lambdas(self) -> List[float]:
        return [p.params.lam for p in self.points]

    def sup_norms(self) -> np.ndarray:
        return np.array([p.sup_norm for p in self.points])

    def to_frame(self) -> pd.DataFrame:
        nu1 = self.nu1 if len(self.nu1) == len(self.points) else [np.nan] * len(self.points)
        return pd.DataFrame({
            "lambda": self.lambdas,
            "sup_norm": [p.sup_norm for p in self.points],
            "hs_norm": [p.hs_norm for p in self.points],
            "energy": [p.energy for p in self.points],
            "residual": [p.residual for p in self.points],
            "nu1": nu1,
        })


@dataclass
class LambdaStarEstimate:
    lower: float
    upper: float
    resolution: float
    lower_record: Optional[SolutionRecord] = None
    upper_certificates: Dict[str, Any] = field(default_factory=dict)
    bisections: int = 0
    budget_exhausted: bool = False

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "width": self.width,
            "resolution": self.resolution,
            "bisections": self.bisections,
            "budget_exhausted": self.budget_exhausted,
            "upper_certificates": self.upper_certificates,
            "nearest_converged": self.lower_record.to_dict(include_field=False) if self.lower_record else None,
        }


def _check_grid(lambda_grid: Sequence[float]) -> List[float]:
    grid = [float(x) for x in lambda_grid]
    if not grid:
        raise InvalidParameterError("Lambda grid is empty")
    if any(x <= 0 for x in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidParameterError(f"Lambda grid must be positive and strictly increasing, got {grid}")
    return grid


def _secant(points: List[SolutionRecord], lam: float) -> np.ndarray:
    if len(points) < 2:
        return points[-1].u.copy()
    a, b = points[-2], points[-1]
    ratio = (lam - b.params.lam) / (b.params.lam - a.params.lam)
    guess = b.u + ratio * (b.u - a.u)
    return np.where(guess > 0, guess, b.u)


def solve_minimal(
    op: FractionalOperator,
    params: ProblemParams,
    previous: Optional[List[SolutionRecord]] = None,
    g: Optional[np.ndarray] = None,
    settings: Optional[SolverSettings] = None,
) -> Tuple[SolutionRecord, Dict[str, Any]]:
    """Minimal solution at one λ, trying the certified routes in turn.

    1. monotone iteration under the supersolution M g;
    2. monotone iteration from the previous branch point, bounded only by blow-up;
    3. Newton from the secant prediction off the previous points.
    The certificates of every attempt are returned next to the record; if all
    fail the last exception is re-raised with the certificates attached.
    """
    settings = settings or SolverSettings()
    previous = previous or []
    g = solve_torsion(op).u if g is None else g
    certificates: Dict[str, Any] = {
        "supersolution_feasible": None,
        "monotone_blowup": None,
        "newton_converged": None,
    }

    sup = None
    try:
        sup = build_supersolution(op, params, g).h
        certificates["supersolution_feasible"] = True
    except NoSupersolutionError as exc:
        certificates["supersolution_feasible"] = False
        certificates["supersolution_margin"] = exc.margin

    if sup is not None:
        sub = previous[-1].u if previous else initial_subsolution(op, params, sup)
        if not np.all(sub <= sup + BRANCH_SLACK):
            sub = initial_subsolution(op, params, sup)
        record, _ = monotone_iteration(
            op, params, sub, sup,
            tol=settings.monotone_tol, max_iter=settings.max_monotone_iterations,
        )
        record.label = "monotone/supersolution"
        return record, certificates

    if not previous:
        raise NoSupersolutionError(
            f"No supersolution and no previous branch point at lambda={params.lam:.6g}",
            lam=params.lam, margin=certificates.get("supersolution_margin", float("nan")),
        )

    try:
        record, _ = monotone_iteration(
            op, params, previous[-1].u, None,
            tol=settings.monotone_tol, max_iter=settings.max_monotone_iterations,
        )
        certificates["monotone_blowup"] = False
        record.label = "monotone/continued"
        return record, certificates
    except (IterationBlowUpError, IterationLimitError, OrderingViolationError) as exc:
        certificates["monotone_blowup"] = isinstance(exc, IterationBlowUpError)
        logger.debug(f"Unbounded monotone iteration failed at lambda={params.lam:.6g}: {exc}")

    try:
        record = newton_solve(
            op, params, _secant(previous, params.lam),
            tol=settings.newton_tol, max_iter=settings.max_newton_iterations, kind="minimal",
        )
        certificates["newton_converged"] = True
        record.label = "newton/continued"
        return record, certificates
    except SpectralSolverError as exc:
        certificates["newton_converged"] = False
        exc.certificates = certificates
        raise


def continue_minimal_branch(
    op: FractionalOperator,
    template: ProblemParams,
    lambda_grid: Sequence[float],
    settings: Optional[SolverSettings] = None,
) -> Branch:
    """Minimal solutions along an increasing λ grid, each seeded from the previous one."""
    grid = _check_grid(lambda_grid)
    branch = Branch(template=template, kind="minimal", alpha=op.basis.alpha)
    g = solve_torsion(op).u

    for lam in grid:
        params = template.with_lambda(lam)
        try:
            record, _ = solve_minimal(op, params, branch.points, g, settings)
        except SpectralSolverError as exc:
            branch.truncated_at = lam
            branch.failures.append({"lambda": lam, "error": type(exc).__name__, "message": str(exc)})
            logger.warning(f"Minimal branch truncated at lambda={lam:.6g}: {exc}")
            break

        if branch.points:
            drop = float(np.max(branch.points[-1].u - record.u))
            if drop > BRANCH_SLACK:
                raise OrderingViolationError(
                    f"Minimal branch not increasing between lambda={branch.points[-1].params.lam:.6g} "
                    f"and {lam:.6g} (drop {drop:.3e})",
                    iteration=len(branch.points), violation=drop,
                )
        nu1, _ = linearized_first_eigenvalue(op, jacobian_potential(params, record.u))
        branch.points.append(record)
        branch.nu1.append(nu1)

    logger.info(
        f"Minimal branch: {len(branch.points)}/{len(grid)} points"
        + (f", truncated at lambda={branch.truncated_at:.6g}" if branch.truncated_at is not None else "")
    )
    return branch


def positive_solution_q1(
    op: FractionalOperator,
    params: ProblemParams,
    nearest: Optional[SolutionRecord] = None,
    settings: Optional[SolverSettings] = None,
) -> SolutionRecord:
    """Positive solution for q = 1 and λ < λ₁^s.

    Newton starts from the one-mode profile, or from ``nearest`` rescaled to
    the one-mode amplitude at this λ, and runs on the residual relative to
    ||u||. A converged field far below the one-mode amplitude is rejected.
    """
    settings = settings or SolverSettings()
    c_here, seed = one_mode_amplitude(op, params)
    if nearest is not None:
        c_near, _ = one_mode_amplitude(op, nearest.params)
        seed = nearest.u * (c_here / c_near)
    record = newton_solve(
        op, params, seed, tol=settings.newton_tol, max_iter=settings.max_newton_iterations,
        kind="bifurcation_q1", relative=True,
    )
    predicted = float(np.max(c_here * op.basis.phis[:, 0]))
    if record.sup_norm < TRIVIAL_FRACTION * predicted:
        raise TrivialSolutionError(
            f"Newton collapsed toward u = 0 at lambda={params.lam:.6g}: "
            f"sup norm {record.sup_norm:.3e} against one-mode amplitude {predicted:.3e}",
            sup_norm=record.sup_norm, predicted=predicted,
        )
    return record


def estimate_lambda_star(
    op: FractionalOperator,
    template: ProblemParams,
    resolution: float,
    settings: Optional[SolverSettings] = None,
    lower_start: Optional[float] = None,
    max_bisections: int = 60,
) -> LambdaStarEstimate:
    """Bracket Λ = sup{λ : a positive solution exists} by bisection.

    The upper end starts at the bound forced by testing the equation against
    φ₁ (exactly λ₁^s when q = 1). It only moves to a λ where the supersolution
    is infeasible and Newton fails (q < 1), or where Newton fails or collapses
    onto u = 0 (q = 1). Any other solver error propagates.
    """
    if resolution <= 0:
        raise InvalidParameterError(f"Resolution must be positive, got {resolution}")
    settings = settings or SolverSettings()
    q1 = template.q >= 1.0
    upper = lambda_upper_bound(op, template.q, template.r)
    certificates: Dict[str, Any] = {"phi1_identity_bound": upper}
    g = None if q1 else solve_torsion(op).u

    def attempt(lam: float, nearest: Optional[SolutionRecord]):
        params = template.with_lambda(lam)
        if q1:
            return positive_solution_q1(op, params, nearest, settings), {}
        return solve_minimal(op, params, [nearest] if nearest is not None else [], g, settings)

    if lower_start is not None:
        lower = lower_start
    else:
        # q = 1 solutions are seeded from the bifurcation point, so start near it
        lower = (0.5 if q1 else 1e-3) * upper
    nearest: Optional[SolutionRecord] = None
    for _ in range(40):
        try:
            nearest, _ = attempt(lower, None)
            break
        except NONEXISTENCE_ERRORS as exc:
            logger.debug(f"No solution found at starting lambda={lower:.6g}: {exc}")
            lower *= 0.5
    else:
        raise InvalidParameterError("Could not find any lambda with a converged solve")

    bisections = 0
    while upper - lower > resolution and bisections < max_bisections:
        mid = 0.5 * (lower + upper)
        bisections += 1
        try:
            record, _ = attempt(mid, nearest)
            if not record.is_positive:
                raise PositivityLossError(f"Converged solve at lambda={mid:.8g} is not positive")
            lower, nearest = mid, record
            logger.debug(f"Bisection {bisections}: solved at lambda={mid:.8g}")
        except NONEXISTENCE_ERRORS as exc:
            found = getattr(exc, "certificates", {"newton_converged": False})
            if not q1 and found.get("supersolution_feasible") is not False:
                raise
            upper = mid
            certificates = {"lambda": mid, "error": type(exc).__name__, **found}
            if isinstance(exc, TrivialSolutionError):
                certificates["nontrivial"] = False
            logger.debug(f"Bisection {bisections}: no solution at lambda={mid:.8g} ({type(exc).__name__})")

    estimate = LambdaStarEstimate(
        lower=lower,
        upper=upper,
        resolution=resolution,
        lower_record=nearest,
        upper_certificates=certificates,
        bisections=bisections,
        budget_exhausted=upper - lower > resolution,
    )
    if estimate.budget_exhausted:
        logger.warning(f"Lambda* budget exhausted: bracket [{lower:.6g}, {upper:.6g}] wider than {resolution:.2e}")
    logger.info(f"Lambda* in [{lower:.8g}, {upper:.8g}] after {bisections} bisections")
    return estimate


def bifurcation_branch_q1(
    op: FractionalOperator,
    template: ProblemParams,
    lambda_grid: Sequence[float],
    settings: Optional[SolverSettings] = None,
    max_refinements: int = 6,
) -> Branch:
    """Positive branch for q = 1, continued down from λ₁^s.

    Each step starts from the previous profile rescaled to the one-mode
    amplitude at the new λ, and iterates collapsing onto u = 0 are rejected.

    Steps that fail are split in half up to ``max_refinements`` times. The
    branch is returned sorted by increasing λ.
    """
    if template.q != 1.0:
        raise InvalidParameterError("The bifurcation branch is defined for q = 1")
    settings = settings or SolverSettings()
    lam1s = op.first_eigenvalue_s()
    grid = sorted((float(x) for x in lambda_grid), reverse=True)
    if not grid or grid[0] >= lam1s or grid[-1] <= 0:
        raise InvalidParameterError(f"Grid must lie in (0, lambda_1^s={lam1s:.6g})")

    branch = Branch(template=template, kind="bifurcation_q1", alpha=op.basis.alpha)
    done: List[SolutionRecord] = []

    def solve_at(lam: float) -> SolutionRecord:
        params = template.with_lambda(lam)
        return positive_solution_q1(op, params, done[-1] if done else None, settings)

    for target in grid:
        pending = [target]
        refinements = 0
        while pending:
            lam = pending[-1]
            try:
                record = solve_at(lam)
            except SpectralSolverError as exc:
                if refinements >= max_refinements or not done:
                    branch.truncated_at = target
                    branch.failures.append({"lambda": lam, "error": type(exc).__name__, "message": str(exc)})
                    logger.warning(f"Bifurcation branch stopped at lambda={lam:.6g}: {exc}")
                    pending = []
                    break
                refinements += 1
                pending.append(0.5 * (done[-1].params.lam + lam))
                continue
            pending.pop()
            if done and record.sup_norm < done[-1].sup_norm:
                branch.folds.append(lam)
                logger.warning(f"Amplitude decreased while moving away from lambda_1^s at lambda={lam:.6g}")
            done.append(record)
        if branch.truncated_at is not None:
            break

    kept = [r for r in done if r.params.lam in set(grid)]
    kept.sort(key=lambda r: r.params.lam)
    for record in kept:
        nu1, _ = linearized_first_eigenvalue(op, jacobian_potential(record.params, record.u))
        branch.points.append(record)
        branch.nu1.append(nu1)
    logger.info(f"Bifurcation branch: {len(kept)} points down to lambda={kept[0].params.lam if kept else float('nan'):.6g}")
    return branch


def mountain_pass_branch(
    op: FractionalOperator,
    template: ProblemParams,
    minimal: Branch,
    settings: Optional[SolverSettings] = None,
) -> Branch:
    """Second solutions computed independently at each minimal-branch λ."""
    settings = settings or SolverSettings()
    branch = Branch(template=template, kind="mountain_pass", alpha=op.basis.alpha)
    for point in minimal.points:
        try:
            record = mountain_pass_solve(
                op, point.params, point.u,
                separation_tol=settings.separation_tol,
                newton_tol=settings.newton_tol,
                max_newton=settings.max_newton_iterations,
            )
        except MountainPassError as exc:
            branch.failures.append({"lambda": point.params.lam, "reason": exc.reason, "message": str(exc)})
            logger.warning(f"Mountain pass failed at lambda={point.params.lam:.6g} ({exc.reason})")
            continue
        nu1, _ = linearized_first_eigenvalue(op, jacobian_potential(record.params, record.u))
        branch.points.append(record)
        branch.nu1.append(nu1)
    return branch


@dataclass
class SweepProtocol:
    lambda_fraction: float = 0.5
    resolution: float = 1e-3
    quotient_p: float = 2.0
    mountain_pass: bool = True


@dataclass
class SweepResult:
    table: pd.DataFrame
    trends: Dict[str, bool]
    failures: List[Dict[str, Any]]

    def to_dict(self) -> Dict[str, Any]:
        return {"trends": self.trends, "failures": self.failures, "rows": len(self.table)}


def _sweep_member(
    mesh: MeshedDomain,
    partition: BoundaryPartition,
    template: ProblemParams,
    protocol: SweepProtocol,
    settings: SolverSettings,
) -> Dict[str, Any]:
    row: Dict[str, Any] = {"alpha": partition.alpha, "dirichlet_measure": partition.dirichlet_measure, "error": ""}
    try:
        op = build_operator(mesh, partition, template.s)
        row["lambda1_s"] = op.first_eigenvalue_s()
        row["sobolev_quotient"] = sobolev_quotient(op, protocol.quotient_p).value

        estimate = estimate_lambda_star(op, template, protocol.resolution * row["lambda1_s"], settings)
        row["lambda_star_lower"] = estimate.lower
        row["lambda_star_upper"] = estimate.upper

        lam = protocol.lambda_fraction * estimate.lower
        row["lambda"] = lam
        params = template.with_lambda(lam)
        if template.q < 1.0:
            u_min, _ = solve_minimal(op, params, settings=settings)
        else:
            u_min = make_record(op, params, np.zeros(op.n_dofs), kind="minimal")
        row.update({"min_sup_norm": u_min.sup_norm, "min_hs_norm": u_min.hs_norm, "min_energy": u_min.energy})

        if protocol.mountain_pass:
            u_mp = mountain_pass_solve(
                op, params, u_min.u,
                separation_tol=settings.separation_tol, newton_tol=settings.newton_tol,
            )
            row.update({"mp_sup_norm": u_mp.sup_norm, "mp_hs_norm": u_mp.hs_norm, "mp_energy": u_mp.energy})
    except SpectralSolverError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        logger.error(f"alpha={partition.alpha:.4g} failed: {exc}")
    return row


def _shrinks_with_alpha(values: pd.Series, strict: bool = False) -> bool:
    values = values.dropna().to_numpy()
    if values.size < 2:
        return True
    diffs = np.diff(values)
    return bool(np.all(diffs > 0) if strict else np.all(diffs >= -1e-12 * np.max(np.abs(values))))


def alpha_sweep(
    family: PartitionFamily,
    template: ProblemParams,
    protocol: Optional[SweepProtocol] = None,
    settings: Optional[SolverSettings] = None,
    jobs: int = 1,
) -> SweepResult:
    """Per-α spectra, constants and solutions along a nested family.

    Rows come back in increasing α, so "decreasing as α shrinks" shows up
    as increasing columns.
    """
    protocol = protocol or SweepProtocol()
    settings = settings or SolverSettings()
    rows = Parallel(n_jobs=jobs)(
        delayed(_sweep_member)(family.mesh, member, template, protocol, settings) for member in family.members
    )
    table = pd.DataFrame(rows)

    ok = table[table["error"] == ""]
    trends = {
        "lambda1_s_decreasing": _shrinks_with_alpha(ok.get("lambda1_s", pd.Series(dtype=float)), strict=True),
        "sobolev_quotient_decreasing": _shrinks_with_alpha(ok.get("sobolev_quotient", pd.Series(dtype=float))),
        "lambda_star_decreasing": _shrinks_with_alpha(ok.get("lambda_star_lower", pd.Series(dtype=float))),
        "min_sup_norm_decreasing": _shrinks_with_alpha(ok.get("min_sup_norm", pd.Series(dtype=float))),
        "min_hs_norm_decreasing": _shrinks_with_alpha(ok.get("min_hs_norm", pd.Series(dtype=float))),
    }
    if protocol.mountain_pass:
        trends["mp_hs_norm_decreasing"] = _shrinks_with_alpha(ok.get("mp_hs_norm", pd.Series(dtype=float)))

    failures = [{"alpha": r["alpha"], "error": r["error"]} for r in rows if r["error"]]
    for name, holds in trends.items():
        if not holds:
            logger.warning(f"Sweep trend '{name}' does not hold")
    logger.info(f"Alpha sweep over {len(rows)} members: {len(failures)} failures, trends {trends}")
    return SweepResult(table=table, trends=trends, failures=failures)


def uniform_bound_study(
    operators: Sequence[FractionalOperator],
    template: ProblemParams,
    fractions: Sequence[float] = (0.25, 0.5, 0.75),
    resolution: float = 1e-3,
    settings: Optional[SolverSettings] = None,
) -> Dict[str, Any]:
    """sup of ||u||_inf over the minimal and mountain-pass solutions on each mesh level."""
    settings = settings or SolverSettings()
    levels = []
    for op in operators:
        estimate = estimate_lambda_star(op, template, resolution * op.first_eigenvalue_s(), settings)
        lambdas = [f * estimate.lower for f in fractions]
        minimal = continue_minimal_branch(op, template, lambdas, settings)
        second = mountain_pass_branch(op, template, minimal, settings)
        sup = max([p.sup_norm for p in minimal.points] + [p.sup_norm for p in second.points])
        levels.append({"n_dofs": op.n_dofs, "lambda_star_lower": estimate.lower, "sup_norm": sup})

    changes = [abs(b["sup_norm"] - a["sup_norm"]) / a["sup_norm"] for a, b in zip(levels, levels[1:])]
    return {"levels": levels, "relative_changes": changes}
