import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.continuation.continuation import solve_minimal
from src.mesh.mesh_domain import DomainSpec, build_mesh, build_partition
from src.spectral.spectral_core import build_operator
from src.solvers.nonlinear_solvers import ProblemParams, build_supersolution, lambda_upper_bound
from src.utils.errors import InvalidParameterError, KelvinCenterError, NoSupersolutionError

logger = logging.getLogger(__name__)

SampledFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class KelvinParams:
    dim: int
    s: float
    center: Tuple[float, ...] = ()
    min_radius: float = 1e-12

    def __post_init__(self):
        if self.dim <= 2 * self.s:
            raise InvalidParameterError(f"Kelvin transform needs N > 2s, got N={self.dim}, s={self.s}")
        center = tuple(float(c) for c in self.center) or (0.0,) * self.dim
        if len(center) != self.dim:
            raise InvalidParameterError(f"Center {center} does not live in R^{self.dim}")
        object.__setattr__(self, "center", center)

    @property
    def exponent(self) -> float:
        """2s - N, the power of |x| in front of the inverted argument."""
        return 2.0 * self.s - self.dim


def _relative(points: np.ndarray, params: KelvinParams) -> Tuple[np.ndarray, np.ndarray]:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != params.dim:
        raise InvalidParameterError(f"Sample points have dimension {points.shape[1]}, expected {params.dim}")
    y = points - np.asarray(params.center)
    radius = np.linalg.norm(y, axis=1)
    if np.any(radius < params.min_radius):
        raise KelvinCenterError(
            f"{int(np.sum(radius < params.min_radius))} sample(s) at the inversion center {params.center}"
        )
    return y, radius


def kelvin_transform(u: SampledFunction, params: KelvinParams) -> SampledFunction:
    """v(x) = |x|^{2s-N} u(x/|x|²), with x measured from ``params.center``."""
    center = np.asarray(params.center)

    def transformed(points: np.ndarray) -> np.ndarray:
        y, radius = _relative(points, params)
        inverted = center + y / radius[:, None] ** 2
        return radius ** params.exponent * np.asarray(u(inverted), dtype=float)

    return transformed


def kelvin_decay_profile(
    u: SampledFunction,
    params: KelvinParams,
    direction: Sequence[float],
    radii: Sequence[float],
) -> pd.DataFrame:
    """|x|^{N-2s} K_s(u)(x) along a ray, which should approach u(center) as |x| grows."""
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    radii = np.asarray(radii, dtype=float)
    points = np.asarray(params.center) + radii[:, None] * direction[None, :]
    v = kelvin_transform(u, params)(points)
    at_center = float(np.asarray(u(np.asarray(params.center)[None, :]))[0])
    scaled = radii ** (-params.exponent) * v
    return pd.DataFrame({
        "radius": radii,
        "scaled_value": scaled,
        "center_value": at_center,
        "deviation": np.abs(scaled - at_center),
    })


@dataclass
class MonotonicityReport:
    passed: bool
    min_difference: float
    worst_location: Optional[Tuple[int, int]]
    lines_checked: int
    buffer: int
    tol: float
    tau: Optional[float] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "min_difference": self.min_difference,
            "worst_location": list(self.worst_location) if self.worst_location else None,
            "lines_checked": self.lines_checked,
            "buffer": self.buffer,
            "tol": self.tol,
            "tau": self.tau,
            **self.extra,
        }


def monotonicity_check(
    u_grid: np.ndarray,
    tau: Optional[float] = None,
    direction: str = "x1",
    buffer: int = 3,
    tol: float = 1e-8,
) -> MonotonicityReport:
    """Scan forward differences of a (ny, nx) grid function.

    ``x1`` differences run along rows, ``x2`` along columns. ``buffer`` cells
    are dropped next to the truncation sides (left, right and top); the
    bottom row carries the boundary data and is kept.
    """
    u_grid = np.asarray(u_grid, dtype=float)
    if u_grid.ndim != 2:
        raise InvalidParameterError(f"Expected a 2D grid, got shape {u_grid.shape}")
    ny, nx = u_grid.shape
    core = u_grid[: ny - buffer if buffer else ny, buffer: nx - buffer if buffer else nx]
    if core.shape[0] < 1 or core.shape[1] < 2:
        raise InvalidParameterError(f"Buffer {buffer} leaves nothing to scan on a {ny}x{nx} grid")

    if direction == "x1":
        diffs = np.diff(core, axis=1)
        lines = core.shape[0]
    elif direction == "x2":
        diffs = np.diff(core, axis=0)
        lines = core.shape[1]
    else:
        raise InvalidParameterError(f"Unknown direction '{direction}'")

    worst = np.unravel_index(int(np.argmin(diffs)), diffs.shape)
    min_diff = float(diffs[worst])
    location = (int(worst[0]), int(worst[1]) + buffer)
    report = MonotonicityReport(
        passed=min_diff >= -tol,
        min_difference=min_diff,
        worst_location=location,
        lines_checked=lines,
        buffer=buffer,
        tol=tol,
        tau=tau,
    )
    if not report.passed:
        logger.info(f"Monotonicity in {direction} fails: min difference {min_diff:.3e} at row/col {location}")
    return report


def half_strip_monotonicity(
    extents: Tuple[float, float] = (4.0, 1.0),
    n: Tuple[int, int] = (41, 11),
    tau: float = 0.5,
    q: float = 0.5,
    r: float = 2.0,
    s: float = 0.75,
    lam: Optional[float] = None,
    buffer: int = 3,
    tol: float = 1e-8,
    scan_fraction: float = 0.4,
) -> MonotonicityReport:
    """Solve the minimal solution on the truncated half-strip and scan it in x₁.

    The bottom is Dirichlet up to x₁ = τ and Neumann beyond; the left, top
    and right truncation sides are Dirichlet. The scan covers x₁ up to
    τ + scan_fraction·(L₁ - τ): the rest of the Neumann stretch is the
    layer where the right truncation side pulls the solution down.
    """
    lx, ly = extents
    if not 0.0 < tau < lx:
        raise InvalidParameterError(f"tau={tau} must lie inside (0, {lx})")
    if not 0.0 < scan_fraction <= 1.0:
        raise InvalidParameterError(f"scan_fraction={scan_fraction} must lie in (0, 1]")
    mesh = build_mesh(DomainSpec("rectangle", extents, n))
    partition = build_partition(mesh, ly + lx + ly + tau, "half-strip")
    op = build_operator(mesh, partition, s)

    template = ProblemParams(lam=0.0, q=q, r=r, s=s, dim=2)
    if lam is None:
        lam = 0.1 * lambda_upper_bound(op, q, r)
        for _ in range(60):
            try:
                build_supersolution(op, template.with_lambda(lam))
                break
            except NoSupersolutionError:
                lam *= 0.5
    record, _ = solve_minimal(op, template.with_lambda(lam))

    grid = mesh.to_grid(record.u, op.basis.dof_nodes)
    scan_end = tau + scan_fraction * (lx - tau)
    columns = int(np.searchsorted(np.linspace(0.0, lx, n[0]), scan_end, side="right"))
    # the right buffer of monotonicity_check falls inside the excluded stretch
    report = monotonicity_check(grid[:, : columns + buffer], tau=tau, direction="x1", buffer=buffer, tol=tol)
    report.extra = {
        "lambda": lam,
        "alpha": partition.alpha,
        "sup_norm": record.sup_norm,
        "residual": record.residual,
        "scan_end": float(scan_end),
    }
    logger.info(f"Half-strip monotonicity at lambda={lam:.4g}: passed={report.passed}, min diff {report.min_difference:.2e}")
    return report
