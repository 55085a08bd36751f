from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.mesh.mesh_domain import PARTITION_RULES
from src.utils.errors import ConfigValidationError
from src.utils.io import config_hash


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class DomainConfig(_Section):
    kind: Literal["interval", "rectangle"] = "interval"
    extents: List[float] = Field(default_factory=lambda: [1.0])
    n: List[int] = Field(default_factory=lambda: [101])

    @field_validator("extents")
    @classmethod
    def _positive_extents(cls, v):
        if any(e <= 0 for e in v):
            raise ValueError("every extent must be > 0")
        return v

    @field_validator("n")
    @classmethod
    def _enough_nodes(cls, v):
        if any(k < 3 for k in v):
            raise ValueError("every axis needs at least 3 nodes")
        return v

    @property
    def dim(self) -> int:
        return 1 if self.kind == "interval" else 2

    @property
    def boundary_measure(self) -> float:
        return 2.0 if self.kind == "interval" else 2.0 * sum(self.extents)


class PartitionConfig(_Section):
    rule: str = "grow-from-left"
    alphas: List[float] = Field(default_factory=lambda: [1.0], min_length=1)

    @field_validator("rule")
    @classmethod
    def _known_rule(cls, v):
        if v not in PARTITION_RULES:
            raise ValueError(f"unknown rule '{v}', expected one of {sorted(PARTITION_RULES)}")
        return v

    @field_validator("alphas")
    @classmethod
    def _nested(cls, v):
        for a in v:
            if not a > 0:
                raise ValueError(f"alpha={a} rejected: the Dirichlet part needs |Σ_D| > 0")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"alphas {v} are not strictly increasing, so the family is not nested")
        return v


class ProblemConfig(_Section):
    lam: Optional[float] = Field(None, ge=0, alias="lambda")
    q: float = Field(0.5, gt=0, le=1)
    r: float = Field(2.0, gt=1)
    s: float = Field(0.75, gt=0.5, lt=1)


class BranchConfig(_Section):
    lambdas: Optional[List[float]] = None
    fractions: List[float] = Field(default_factory=lambda: [0.1 * k for k in range(1, 10)] + [0.95])

    @field_validator("lambdas", "fractions")
    @classmethod
    def _grid(cls, v):
        if v is None:
            return v
        if len(v) == 0:
            raise ValueError("lambda grid is empty")
        if any(x <= 0 for x in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("lambda grid must be positive and strictly increasing")
        return v


class LambdaStarConfig(_Section):
    relative_resolution: float = Field(1e-3, gt=0, lt=1)
    max_bisections: int = Field(60, ge=1)


class SweepConfig(_Section):
    lambda_fraction: float = Field(0.5, gt=0, lt=1)
    quotient_p: float = Field(2.0, ge=1)
    mountain_pass: bool = True


class SolverConfig(_Section):
    monotone_tol: float = Field(1e-10, gt=0)
    newton_tol: float = Field(1e-10, gt=0)
    max_monotone_iterations: int = Field(50000, ge=1)
    max_newton_iterations: int = Field(60, ge=1)
    separation_tol: float = Field(1e-3, gt=0)


class ExtensionConfig(_Section):
    ratio: float = Field(1.15, ge=1)
    first_step: float = Field(1e-4, gt=0)
    decay_tol: float = Field(1e-8, gt=0, lt=1)


class SweepFamilyConfig(_Section):
    """Nested 2D family checked by the ``alpha_sweep`` verification suite."""

    domain: DomainConfig = Field(
        default_factory=lambda: DomainConfig(kind="rectangle", extents=[1.0, 1.0], n=[17, 17])
    )
    partition: PartitionConfig = Field(
        default_factory=lambda: PartitionConfig(rule="grow-from-corner", alphas=[0.125, 0.25, 0.5, 1.0, 2.0])
    )
    lambda_fraction: float = Field(0.2, gt=0, lt=1)
    mountain_pass: bool = True
    max_smallest_sup_norm: float = Field(1e-2, gt=0)


class VerifyConfig(_Section):
    inject_fault: Literal["none", "perturb_eigenvalue"] = "none"
    random_directions: int = Field(20, ge=1)
    suites: List[str] = Field(default_factory=lambda: [
        "operator", "spectrum", "extension", "gradient", "monotone", "branch",
        "q1_threshold", "two_solutions", "sublinear", "kelvin", "half_strip",
        "uniform_bound", "alpha_sweep",
    ])
    family: SweepFamilyConfig = Field(default_factory=SweepFamilyConfig)


class ExperimentConfig(_Section):
    name: str = "experiment"
    domain: DomainConfig = Field(default_factory=DomainConfig)
    partition: PartitionConfig = Field(default_factory=PartitionConfig)
    problem: ProblemConfig = Field(default_factory=ProblemConfig)
    branch: BranchConfig = Field(default_factory=BranchConfig)
    lambda_star: LambdaStarConfig = Field(default_factory=LambdaStarConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    extension: ExtensionConfig = Field(default_factory=ExtensionConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    output_dir: str = "runs"
    seed: int = Field(20240601, ge=0, lt=2 ** 64)
    jobs: int = Field(1, ge=1)

    def canonical(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)

    def hash(self) -> str:
        return config_hash(self.canonical())


def _geometry_errors(
    domain: DomainConfig, partition: PartitionConfig, problem: Optional[ProblemConfig], prefix: str = ""
) -> Dict[str, str]:
    errors: Dict[str, str] = {}
    expected = domain.dim
    if len(domain.extents) != expected:
        errors[f"{prefix}domain.extents"] = f"{domain.kind} needs {expected} extent(s)"
    if len(domain.n) != expected:
        errors[f"{prefix}domain.n"] = f"{domain.kind} needs {expected} node count(s)"

    rule_kind = PARTITION_RULES[partition.rule][0]
    if rule_kind != domain.kind:
        errors[f"{prefix}partition.rule"] = f"rule '{partition.rule}' applies to {rule_kind} domains"
    for i, alpha in enumerate(partition.alphas):
        if alpha > domain.boundary_measure:
            errors[f"{prefix}partition.alphas.{i}"] = f"alpha={alpha} exceeds |∂Ω|={domain.boundary_measure}"

    if problem is None:
        return errors
    n_dim, s = domain.dim, problem.s
    if n_dim > 2 * s:
        bound = (n_dim + 2 * s) / (n_dim - 2 * s)
        if problem.r >= bound:
            errors["problem.r"] = f"r={problem.r} must be below (N+2s)/(N-2s)={bound:.6g} for N={n_dim}"
    return errors


def _cross_field_errors(config: ExperimentConfig) -> Dict[str, str]:
    errors = _geometry_errors(config.domain, config.partition, config.problem)
    if "alpha_sweep" in config.verify.suites:
        family = config.verify.family
        errors.update(_geometry_errors(family.domain, family.partition, None, "verify.family."))
    return errors


def load_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping; every failure becomes a ``ConfigValidationError`` with dotted paths."""
    try:
        config = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        paths = [".".join(str(p) for p in err["loc"]) for err in exc.errors()]
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigValidationError(f"Invalid experiment config: {details}", field_paths=paths) from exc

    errors = _cross_field_errors(config)
    if errors:
        details = "; ".join(f"{path}: {msg}" for path, msg in errors.items())
        raise ConfigValidationError(f"Invalid experiment config: {details}", field_paths=list(errors))
    return config


def apply_overrides(config: ExperimentConfig, **overrides: Any) -> ExperimentConfig:
    """CLI flags on top of a validated config; ``tol`` sets both solver tolerances."""
    data = config.canonical()
    if overrides.get("out") is not None:
        data["output_dir"] = str(overrides["out"])
    if overrides.get("jobs") is not None:
        data["jobs"] = overrides["jobs"]
    if overrides.get("seed") is not None:
        data["seed"] = overrides["seed"]
    if overrides.get("tol") is not None:
        data["solver"]["monotone_tol"] = overrides["tol"]
        data["solver"]["newton_tol"] = overrides["tol"]
    return load_experiment_config(data)
