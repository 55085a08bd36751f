import dataclasses
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.experiments.config_schema import ExperimentConfig
from src.mesh.mesh_domain import (
    BoundaryPartition,
    DomainSpec,
    MeshedDomain,
    PartitionFamily,
    build_family,
    build_mesh,
    build_partition,
)
from src.spectral.spectral_core import EigenBasis, FractionalOperator, assemble, eigendecompose
from src.solvers.nonlinear_solvers import ProblemParams, SolverSettings

logger = logging.getLogger(__name__)

FAULT_FACTOR = 1.001


@dataclass
class RunContext:
    """Everything a command needs, built once from a validated config."""

    config: ExperimentConfig
    mesh: MeshedDomain
    partition: BoundaryPartition
    basis: EigenBasis
    operator: FractionalOperator
    template: ProblemParams
    settings: SolverSettings
    fault: str = "none"

    @property
    def config_hash(self) -> str:
        return self.config.hash()

    def operator_for(self, s: float, allow_any_s: bool = False) -> FractionalOperator:
        return FractionalOperator(self.basis, s, allow_any_s=allow_any_s)

    def family(self) -> PartitionFamily:
        return build_family(self.mesh, self.config.partition.alphas, self.config.partition.rule)

    def verification_family(self) -> PartitionFamily:
        family = self.config.verify.family
        mesh = build_mesh(DomainSpec(family.domain.kind, tuple(family.domain.extents), tuple(family.domain.n)))
        return build_family(mesh, family.partition.alphas, family.partition.rule)

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, stream])


def domain_spec(config: ExperimentConfig) -> DomainSpec:
    return DomainSpec(config.domain.kind, tuple(config.domain.extents), tuple(config.domain.n))


def solver_settings(config: ExperimentConfig) -> SolverSettings:
    return SolverSettings(**config.solver.model_dump())


def template_params(config: ExperimentConfig) -> ProblemParams:
    problem = config.problem
    lam = problem.lam if problem.lam is not None else 0.0
    return ProblemParams(lam=lam, q=problem.q, r=problem.r, s=problem.s, dim=config.domain.dim)


def perturb_basis(basis: EigenBasis) -> EigenBasis:
    """Negative control: scale λ₂ without touching its eigenvector."""
    lambdas = basis.lambdas.copy()
    if lambdas.size > 1:
        lambdas[1] *= FAULT_FACTOR
    return dataclasses.replace(basis, lambdas=lambdas)


def build_context(
    config: ExperimentConfig,
    alpha: Optional[float] = None,
    fault: Optional[str] = None,
) -> RunContext:
    """Mesh, partition and operator for ``alpha`` (default: the last, largest family member)."""
    fault = fault or config.verify.inject_fault
    mesh = build_mesh(domain_spec(config))
    alpha = config.partition.alphas[-1] if alpha is None else alpha
    partition = build_partition(mesh, alpha, config.partition.rule)

    basis = eigendecompose(assemble(mesh, partition))
    if fault == "perturb_eigenvalue":
        logger.warning(f"Injecting fault: lambda_2 scaled by {FAULT_FACTOR}")
        basis = perturb_basis(basis)

    operator = FractionalOperator(basis, config.problem.s)
    logger.info(
        f"Context {config.name}: {mesh.spec.kind} n={list(mesh.spec.n)}, alpha={alpha:.4g}, "
        f"{operator.n_dofs} dofs, lambda_1^s={operator.first_eigenvalue_s():.6g}"
    )
    return RunContext(
        config=config,
        mesh=mesh,
        partition=partition,
        basis=basis,
        operator=operator,
        template=template_params(config),
        settings=solver_settings(config),
        fault=fault,
    )


def refined_contexts(config: ExperimentConfig, levels: int = 2) -> List[FractionalOperator]:
    """Operators on successively refined meshes for the same partition rule and α."""
    spec = domain_spec(config)
    alpha = config.partition.alphas[-1]
    operators = []
    for _ in range(levels):
        mesh = build_mesh(spec)
        partition = build_partition(mesh, alpha, config.partition.rule)
        operators.append(FractionalOperator(eigendecompose(assemble(mesh, partition)), config.problem.s))
        spec = spec.refined(2)
    return operators
