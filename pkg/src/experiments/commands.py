import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from src.continuation.continuation import (
    SweepProtocol,
    alpha_sweep,
    bifurcation_branch_q1,
    continue_minimal_branch,
    estimate_lambda_star,
    mountain_pass_branch,
    positive_solution_q1,
    solve_minimal,
)
from src.experiments.config_schema import ExperimentConfig
from src.experiments.context import RunContext, build_context
from src.experiments.verify import VerificationReport, run_verification
from src.experiments.writer import ResultWriter
from src.mesh.mesh_domain import describe, validate_family
from src.solvers.nonlinear_solvers import (
    SolutionRecord,
    make_record,
    mountain_pass_solve,
)
from src.spectral.spectral_core import export_eigenvalues
from src.utils.errors import ConfigValidationError, MountainPassError, SpectralSolverError

logger = logging.getLogger(__name__)


def run_dir(config: ExperimentConfig, command: str) -> Path:
    return Path(config.output_dir) / config.name / command


def _writer(ctx: RunContext, command: str) -> ResultWriter:
    return ResultWriter(run_dir(ctx.config, command), ctx.config_hash, command)


def _field_frame(ctx: RunContext, columns: Dict[str, np.ndarray]) -> pd.DataFrame:
    nodes = ctx.basis.dof_nodes
    coords = ctx.mesh.coords[nodes]
    frame = {"node": nodes}
    for axis in range(coords.shape[1]):
        frame[f"x{axis + 1}"] = coords[:, axis]
    frame.update(columns)
    return pd.DataFrame(frame)


def _lambda_star(ctx: RunContext):
    op = ctx.operator
    return estimate_lambda_star(
        op,
        ctx.template,
        ctx.config.lambda_star.relative_resolution * op.first_eigenvalue_s(),
        ctx.settings,
        max_bisections=ctx.config.lambda_star.max_bisections,
    )


def _minimal_or_positive(ctx: RunContext, lam: float) -> tuple:
    """Minimal solution for q < 1; for q = 1 the minimal one is u = 0 and the positive one is returned too."""
    op, params = ctx.operator, ctx.template.with_lambda(lam)
    if ctx.template.q < 1.0:
        record, certificates = solve_minimal(op, params, settings=ctx.settings)
        return record, None, certificates
    zero = make_record(op, params, np.zeros(op.n_dofs), kind="minimal", label="trivial")
    if lam >= op.first_eigenvalue_s():
        return zero, None, {"positive_solution": "none for lambda >= lambda_1^s"}
    positive = positive_solution_q1(op, params, settings=ctx.settings)
    return zero, positive, {}


def cmd_solve(config: ExperimentConfig) -> Dict[str, Any]:
    """One (λ, α) solve: minimal solution plus a mountain-pass attempt."""
    if config.problem.lam is None:
        raise ConfigValidationError("Invalid experiment config: problem.lambda: required by solve",
                                    field_paths=["problem.lambda"])
    ctx = build_context(config)
    writer = _writer(ctx, "solve")
    lam = config.problem.lam
    params = ctx.template.with_lambda(lam)

    u_min, positive, certificates = _minimal_or_positive(ctx, lam)
    writer.trace("minimal", u_min.trace, **{"lambda": lam})
    records: Dict[str, Optional[SolutionRecord]] = {"minimal": u_min, "positive_q1": positive}

    mp_status: Dict[str, Any] = {"found": False}
    try:
        u_mp = mountain_pass_solve(
            ctx.operator, params, u_min.u,
            separation_tol=ctx.settings.separation_tol,
            newton_tol=ctx.settings.newton_tol,
            max_newton=ctx.settings.max_newton_iterations,
        )
        records["mountain_pass"] = u_mp
        mp_status = {"found": True}
    except MountainPassError as exc:
        mp_status = {"found": False, "reason": exc.reason, "message": str(exc)}
        logger.warning(f"Mountain pass at lambda={lam:.6g}: {exc.reason}")

    for name, record in records.items():
        if record is not None:
            writer.document(f"solution_{name}", record.to_dict(include_field=True))
    writer.table("solutions", _field_frame(ctx, {
        f"u_{name}": record.u for name, record in records.items() if record is not None
    }))
    summary = {
        "lambda": lam,
        "lambda1_s": ctx.operator.first_eigenvalue_s(),
        "certificates": certificates,
        "mountain_pass": mp_status,
        "records": {name: r.to_dict(include_field=False) for name, r in records.items() if r is not None},
        "domain": describe(ctx.mesh, ctx.partition)["partition"],
    }
    writer.document("summary", summary)
    writer.manifest()
    return summary


def _lambda_grid(ctx: RunContext) -> List[float]:
    branch = ctx.config.branch
    if branch.lambdas is not None:
        return list(branch.lambdas)
    if ctx.template.q >= 1.0:
        scale = ctx.operator.first_eigenvalue_s()
    else:
        scale = _lambda_star(ctx).lower
    return [f * scale for f in branch.fractions]


def cmd_branch(config: ExperimentConfig) -> Dict[str, Any]:
    """Minimal and mountain-pass branches for q < 1; the bifurcation branch for q = 1."""
    ctx = build_context(config)
    writer = _writer(ctx, "branch")
    grid = _lambda_grid(ctx)
    summary: Dict[str, Any] = {"lambda_grid": grid, "lambda1_s": ctx.operator.first_eigenvalue_s()}

    if ctx.template.q >= 1.0:
        branch = bifurcation_branch_q1(ctx.operator, ctx.template, grid, ctx.settings)
        writer.table("branch_q1", branch.to_frame())
        summary["q1"] = {"points": len(branch.points), "truncated_at": branch.truncated_at,
                         "folds": branch.folds, "failures": branch.failures}
    else:
        minimal = continue_minimal_branch(ctx.operator, ctx.template, grid, ctx.settings)
        for point in minimal.points:
            writer.trace(f"minimal/{point.params.lam!r}", point.trace, **{"lambda": point.params.lam})
        writer.table("branch_minimal", minimal.to_frame())
        second = mountain_pass_branch(ctx.operator, ctx.template, minimal, ctx.settings)
        writer.table("branch_mountain_pass", second.to_frame())
        summary["minimal"] = {"points": len(minimal.points), "truncated_at": minimal.truncated_at,
                              "failures": minimal.failures}
        summary["mountain_pass"] = {"points": len(second.points), "failures": second.failures}
        if minimal.truncated_at is not None:
            logger.warning(f"Minimal branch truncated at lambda={minimal.truncated_at:.6g}")

    writer.document("branch_summary", summary)
    writer.manifest()
    return summary


def cmd_lambda_star(config: ExperimentConfig) -> Dict[str, Any]:
    ctx = build_context(config)
    writer = _writer(ctx, "lambda-star")
    estimate = _lambda_star(ctx)
    export_eigenvalues(ctx.basis, writer.out_dir / "eigenvalues.csv", writer.meta)
    payload = {
        **estimate.to_dict(),
        "lambda1_s": ctx.operator.first_eigenvalue_s(),
        "params": ctx.template.to_dict(),
        "alpha": ctx.partition.alpha,
    }
    writer.document("lambda_star", payload)
    writer.manifest()
    return payload


def cmd_alpha_sweep(config: ExperimentConfig) -> Dict[str, Any]:
    ctx = build_context(config, alpha=config.partition.alphas[-1])
    writer = _writer(ctx, "alpha-sweep")
    family = ctx.family()
    family_report = validate_family(family)
    if not family_report.passed:
        raise SpectralSolverError(f"Partition family is invalid: {family_report.failures}")

    sweep = config.sweep
    protocol = SweepProtocol(
        lambda_fraction=sweep.lambda_fraction,
        resolution=config.lambda_star.relative_resolution,
        quotient_p=sweep.quotient_p,
        mountain_pass=sweep.mountain_pass,
    )
    result = alpha_sweep(family, ctx.template, protocol, ctx.settings, jobs=config.jobs)
    writer.table("alpha_sweep", result.table)
    payload = {**result.to_dict(), "family": family_report.to_dict()}
    writer.document("alpha_sweep", payload)
    writer.manifest()
    return payload


def cmd_verify(config: ExperimentConfig) -> VerificationReport:
    ctx = build_context(config)
    writer = _writer(ctx, "verify")
    report = run_verification(ctx)
    for label, trace in sorted(report.traces.items()):
        writer.trace(label, trace)
    writer.table("verify", report.to_frame())
    writer.document("verify", {**report.to_dict(), "inject_fault": ctx.fault})
    writer.manifest()
    return report


COMMANDS = {
    "solve": cmd_solve,
    "branch": cmd_branch,
    "lambda-star": cmd_lambda_star,
    "alpha-sweep": cmd_alpha_sweep,
    "verify": cmd_verify,
}
