"""Solvers for (-Δ)^s u = λ u^q + u^r and its auxiliary problems.

Every solve happens in the spectral basis of a ``FractionalOperator``, so
((-Δ)^s)^{-1} is a diagonal scaling of eigen-coefficients. Powers of u are
evaluated through the odd extension sign(u)|u|^p.
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq, minimize_scalar

from src.spectral.spectral_core import FractionalOperator, linearized_first_eigenvalue
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
)

logger = logging.getLogger(__name__)

JACOBIAN_FLOOR = 1e-12
MAX_HALVINGS = 30


class ProblemParams(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(..., ge=0, alias="lambda")
    q: float = Field(..., gt=0, le=1)
    r: float = Field(..., gt=1)
    s: float = Field(..., gt=0.5, lt=1)
    dim: int = Field(1, ge=1, le=2)

    @model_validator(mode="after")
    def _subcritical(self):
        if self.dim > 2 * self.s:
            bound = (self.dim + 2 * self.s) / (self.dim - 2 * self.s)
            if self.r >= bound:
                raise ValueError(f"r={self.r} must stay below (N+2s)/(N-2s)={bound:.6g} for N={self.dim}")
        return self

    def with_lambda(self, lam: float) -> "ProblemParams":
        return ProblemParams(lam=lam, q=self.q, r=self.r, s=self.s, dim=self.dim)

    def to_dict(self) -> Dict[str, float]:
        return {"lambda": self.lam, "q": self.q, "r": self.r, "s": self.s, "dim": self.dim}


@dataclass
class IterationTrace:
    method: str
    sup_norms: List[float] = field(default_factory=list)
    increments: List[float] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    energies: List[float] = field(default_factory=list)
    termination: str = "running"

    def append(self, sup_norm: float, increment: float, residual: float, energy: float):
        self.sup_norms.append(float(sup_norm))
        self.increments.append(float(increment))
        self.residuals.append(float(residual))
        self.energies.append(float(energy))

    @property
    def iterations(self) -> int:
        return len(self.sup_norms)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iteration": np.arange(1, self.iterations + 1),
            "sup_norm": self.sup_norms,
            "increment": self.increments,
            "residual": self.residuals,
            "energy": self.energies,
        })


@dataclass
class SolutionRecord:
    u: np.ndarray
    params: Optional[ProblemParams]
    alpha: Optional[float]
    residual: float
    energy: float
    sup_norm: float
    hs_norm: float
    kind: str
    iterations: int = 0
    label: str = ""
    trace: Optional[IterationTrace] = field(default=None, repr=False)

    @property
    def is_positive(self) -> bool:
        return bool(np.all(self.u > 0))

    def to_dict(self, include_field: bool = True) -> Dict[str, Any]:
        payload = {
            "kind": self.kind,
            "label": self.label,
            "params": self.params.to_dict() if self.params is not None else None,
            "alpha": self.alpha,
            "residual": self.residual,
            "energy": self.energy,
            "sup_norm": self.sup_norm,
            "hs_norm": self.hs_norm,
            "iterations": self.iterations,
        }
        if include_field:
            payload["u"] = self.u.tolist()
        return payload


@dataclass
class Residual:
    vector: np.ndarray
    norm: float
    negative_entries: bool


@dataclass
class Supersolution:
    h: np.ndarray
    M: float
    margin: float
    g_sup: float


def _odd_power(u: np.ndarray, p: float) -> np.ndarray:
    return np.sign(u) * np.abs(u) ** p


def nonlinearity(params: ProblemParams, u: np.ndarray) -> np.ndarray:
    return params.lam * _odd_power(u, params.q) + _odd_power(u, params.r)


def jacobian_potential(params: ProblemParams, u: np.ndarray) -> np.ndarray:
    """f'(u) = λ q |u|^{q-1} + r |u|^{r-1}, with |u| floored for q < 1."""
    a = np.abs(u)
    potential = params.r * a ** (params.r - 1.0)
    if params.q < 1.0:
        potential = potential + params.lam * params.q * np.maximum(a, JACOBIAN_FLOOR) ** (params.q - 1.0)
    else:
        potential = potential + params.lam
    return potential


def _mass_norm(op: FractionalOperator, v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(op.mass * v ** 2)))


def residual(op: FractionalOperator, params: ProblemParams, u: np.ndarray) -> Residual:
    u = op._check(u)
    vector = op.apply(u) - nonlinearity(params, u)
    negative = bool(np.any(u < 0))
    if negative:
        logger.debug(f"Residual evaluated at {int(np.sum(u < 0))} negative entries through the odd extension")
    return Residual(vector=vector, norm=_mass_norm(op, vector), negative_entries=negative)


def energy(op: FractionalOperator, params: ProblemParams, u: np.ndarray) -> float:
    u = op._check(u)
    m = op.mass
    a = np.abs(u)
    return float(
        0.5 * op.hs_norm(u) ** 2
        - params.lam / (params.q + 1.0) * np.sum(m * a ** (params.q + 1.0))
        - 1.0 / (params.r + 1.0) * np.sum(m * a ** (params.r + 1.0))
    )


def energy_derivative(op: FractionalOperator, params: ProblemParams, u: np.ndarray, v: np.ndarray) -> float:
    """dI(u)[v] = <(-Δ)^s u - f(u), v>."""
    return float(np.sum(op.mass * residual(op, params, u).vector * v))


def make_record(
    op: FractionalOperator,
    params: Optional[ProblemParams],
    u: np.ndarray,
    kind: str,
    res: Optional[float] = None,
    iterations: int = 0,
    trace: Optional[IterationTrace] = None,
    label: str = "",
) -> SolutionRecord:
    if res is None and params is not None:
        res = residual(op, params, u).norm
    return SolutionRecord(
        u=np.asarray(u, dtype=float),
        params=params,
        alpha=op.basis.alpha,
        residual=float(res) if res is not None else float("nan"),
        energy=energy(op, params, u) if params is not None else float("nan"),
        sup_norm=float(np.max(np.abs(u))),
        hs_norm=op.hs_norm(u),
        kind=kind,
        iterations=iterations,
        label=label,
        trace=trace,
    )


def solve_torsion(op: FractionalOperator) -> SolutionRecord:
    """(-Δ)^s g = 1 with the mixed conditions."""
    ones = np.ones(op.n_dofs)
    g = op.apply_inverse(ones)
    res = _mass_norm(op, op.apply(g) - ones)
    if np.any(g <= 0):
        logger.warning(f"Torsion function has {int(np.sum(g <= 0))} non-positive dofs")
    record = make_record(op, None, g, kind="torsion", res=res)
    logger.debug(f"Torsion function: ||g||_inf={record.sup_norm:.6g}")
    return record


def solve_sublinear(
    op: FractionalOperator,
    q: float,
    lam: float = 1.0,
    start: Optional[np.ndarray] = None,
    tol: float = 1e-13,
    max_iter: int = 50000,
) -> SolutionRecord:
    """Positive solution of (-Δ)^s v = λ v^q, 0 < q < 1, by fixed-point iteration.

    The default start ε φ₁ is a subsolution; any positive start converges to
    the same v since t^q/t is decreasing.
    """
    if not 0.0 < q < 1.0:
        raise InvalidParameterError(f"Sublinear problem needs 0 < q < 1, got q={q}")
    if not lam > 0:
        raise InvalidParameterError(f"Sublinear problem needs lambda > 0, got {lam}")

    if start is None:
        phi1 = op.basis.phis[:, 0]
        eps = (0.5 * lam / op.first_eigenvalue_s()) ** (1.0 / (1.0 - q)) / np.max(phi1)
        v = eps * phi1
    else:
        v = np.asarray(start, dtype=float)
        if np.any(v <= 0):
            raise InvalidParameterError("Sublinear iteration needs a positive start")

    trace = IterationTrace(method="sublinear")
    for it in range(1, max_iter + 1):
        rhs = lam * v ** q
        v_next = op.apply_inverse(rhs)
        increment = float(np.max(np.abs(v_next - v)))
        scale = max(1.0, float(np.max(v_next)))
        res = _mass_norm(op, rhs - lam * np.abs(v_next) ** q)
        trace.append(np.max(v_next), increment, res, float("nan"))
        v = v_next
        if increment <= tol * scale:
            trace.termination = "converged"
            break
    else:
        trace.termination = "iteration_limit"
        raise IterationLimitError(
            f"Sublinear iteration did not converge in {max_iter} iterations", max_iter, increment
        )

    record = make_record(op, None, v, kind="sublinear", iterations=trace.iterations, trace=trace)
    record.residual = _mass_norm(op, op.apply(v) - lam * np.abs(v) ** q)
    logger.debug(f"Sublinear solve lambda={lam}: ||v||_inf={record.sup_norm:.6g} after {trace.iterations} iterations")
    return record


def _feasibility(lam: float, q: float, r: float, g_sup: float) -> Callable[[float], float]:
    """χ(M) = 1 - λ G^q M^{q-1} - G^r M^{r-1}; M g is a supersolution iff χ(M) >= 0."""
    def chi(M: float) -> float:
        return 1.0 - lam * g_sup ** q * M ** (q - 1.0) - g_sup ** r * M ** (r - 1.0)
    return chi


def build_supersolution(
    op: FractionalOperator,
    params: ProblemParams,
    g: Optional[np.ndarray] = None,
) -> Supersolution:
    """Supersolution h = M g with g the torsion function.

    For q < 1 and λ > 0 the smallest feasible M is returned. When q = 1 or
    λ = 0, χ is decreasing and the largest feasible M is returned instead.
    """
    g = solve_torsion(op).u if g is None else g
    g_sup = float(np.max(g))
    lam, q, r = params.lam, params.q, params.r
    chi = _feasibility(lam, q, r, g_sup)

    if q < 1.0 and lam > 0:
        m_star = (lam * (1.0 - q) * g_sup ** (q - r) / (r - 1.0)) ** (1.0 / (r - q))
        margin = chi(m_star)
        if margin < 0:
            raise NoSupersolutionError(
                f"No M solves M >= lambda M^q |g|^q + M^r |g|^r at lambda={lam:.6g} (best margin {margin:.3e})",
                lam=lam,
                margin=margin,
            )
        lo = 0.5 * m_star
        while chi(lo) >= 0:
            lo *= 0.5
        M = m_star if margin == 0 else brentq(chi, lo, m_star, xtol=1e-15 * m_star, rtol=1e-14)
    else:
        margin = 1.0 - lam * g_sup ** q
        if margin <= 0:
            raise NoSupersolutionError(
                f"lambda={lam:.6g} >= 1/|g|_inf={1.0 / g_sup:.6g}: no multiple of g is a supersolution",
                lam=lam,
                margin=margin,
            )
        # root of χ, which is decreasing here
        M = (margin / g_sup ** r) ** (1.0 / (r - 1.0))

    logger.debug(f"Supersolution at lambda={lam:.6g}: M={M:.6g}, margin={margin:.3e}")
    return Supersolution(h=M * g, M=float(M), margin=float(margin), g_sup=g_sup)


def power_supersolution(
    op: FractionalOperator,
    params: ProblemParams,
    eta: float,
    g: Optional[np.ndarray] = None,
) -> Supersolution:
    """h = λ^η g, which is a supersolution for λ small enough when 0 < η < 1/(1-q)."""
    if params.q >= 1.0 or not 0.0 < eta < 1.0 / (1.0 - params.q):
        raise InvalidParameterError(f"eta={eta} outside (0, 1/(1-q)) for q={params.q}")
    g = solve_torsion(op).u if g is None else g
    g_sup = float(np.max(g))
    M = params.lam ** eta
    margin = _feasibility(params.lam, params.q, params.r, g_sup)(M)
    if margin < 0:
        raise NoSupersolutionError(f"M=lambda^{eta} is not a supersolution at lambda={params.lam}", params.lam, margin)
    return Supersolution(h=M * g, M=float(M), margin=float(margin), g_sup=g_sup)


def _slack(*arrays: np.ndarray) -> float:
    return 1e-12 * max([1.0] + [float(np.max(np.abs(a))) for a in arrays if a is not None])


def monotone_iteration(
    op: FractionalOperator,
    params: ProblemParams,
    sub: np.ndarray,
    sup: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 50000,
    blowup: Optional[float] = None,
    residual_slack: float = 1e-8,
) -> Tuple[SolutionRecord, IterationTrace]:
    """u_{n+1} = ((-Δ)^s)^{-1}(λ u_n^q + u_n^r) from a subsolution.

    Iterates are checked to be pointwise nondecreasing and below ``sup``.
    Without ``sup`` the iteration is bounded by ``blowup`` instead and a
    growing sequence raises ``IterationBlowUpError``.
    """
    u = op._check(sub).copy()
    f_sub = nonlinearity(params, u)
    sub_res = op.apply(u) - f_sub
    if np.max(sub_res) > residual_slack * (1.0 + np.max(np.abs(f_sub))):
        raise OrderingViolationError(
            f"Start is not a subsolution: max residual {np.max(sub_res):.3e} > 0", iteration=0,
            violation=float(np.max(sub_res)),
        )
    if sup is not None:
        sup = op._check(sup)
        f_sup = nonlinearity(params, sup)
        sup_res = op.apply(sup) - f_sup
        if np.min(sup_res) < -residual_slack * (1.0 + np.max(np.abs(f_sup))):
            raise OrderingViolationError(
                f"Upper barrier is not a supersolution: min residual {np.min(sup_res):.3e} < 0",
                iteration=0, violation=float(-np.min(sup_res)),
            )
        gap = float(np.max(u - sup))
        if gap > _slack(u, sup):
            raise OrderingViolationError(f"Subsolution exceeds supersolution by {gap:.3e}", iteration=0, violation=gap)
    if blowup is None:
        blowup = 1e6 * max(1.0, float(np.max(np.abs(u))))

    trace = IterationTrace(method="monotone")
    f_u = f_sub
    increment = float("inf")
    for it in range(1, max_iter + 1):
        u_next = op.apply_inverse(f_u)
        f_next = nonlinearity(params, u_next)
        slack = _slack(u_next, sup)

        drop = float(np.max(u - u_next))
        if drop > slack:
            trace.termination = "ordering_violation"
            raise OrderingViolationError(f"Iterate {it} decreased by {drop:.3e}", iteration=it, violation=drop)
        if sup is not None:
            excess = float(np.max(u_next - sup))
            if excess > slack:
                trace.termination = "ordering_violation"
                raise OrderingViolationError(
                    f"Iterate {it} exceeds the supersolution by {excess:.3e}", iteration=it, violation=excess
                )

        increment = float(np.max(np.abs(u_next - u)))
        sup_norm = float(np.max(np.abs(u_next)))
        # (-Δ)^s u_next = f(u_n), so the residual and energy come for free
        res = _mass_norm(op, f_u - f_next)
        en = float(
            0.5 * np.sum(op.mass * f_u * u_next)
            - params.lam / (params.q + 1.0) * np.sum(op.mass * np.abs(u_next) ** (params.q + 1.0))
            - 1.0 / (params.r + 1.0) * np.sum(op.mass * np.abs(u_next) ** (params.r + 1.0))
        )
        trace.append(sup_norm, increment, res, en)
        u, f_u = u_next, f_next

        if not np.isfinite(sup_norm) or sup_norm > blowup:
            trace.termination = "blowup"
            raise IterationBlowUpError(
                f"Monotone iteration exceeded {blowup:.3e} at iteration {it}", iteration=it, sup_norm=sup_norm
            )
        if increment <= tol:
            trace.termination = "converged"
            break
    else:
        trace.termination = "iteration_limit"
        raise IterationLimitError(
            f"Monotone iteration hit {max_iter} iterations (last increment {increment:.3e})", max_iter, increment
        )

    record = make_record(op, params, u, kind="minimal", iterations=trace.iterations, trace=trace)
    logger.debug(
        f"Monotone iteration lambda={params.lam:.6g}: {trace.iterations} iterations, "
        f"residual {record.residual:.2e}, ||u||_inf={record.sup_norm:.6g}"
    )
    return record, trace


def newton_solve(
    op: FractionalOperator,
    params: ProblemParams,
    u_init: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 60,
    kind: str = "other",
    relative: bool = False,
) -> SolutionRecord:
    """Damped Newton on F(u) = (-Δ)^s u - λ u^q - u^r keeping u > 0.

    With ``relative`` the stopping test and the line search use ||F(u)|| / ||u||,
    so iterates cannot converge by collapsing onto u = 0.
    """
    u = op._check(u_init).copy()
    if np.any(u <= 0):
        raise PositivityLossError("Newton needs a start that is positive on every dof")

    def merit(res: Residual, v: np.ndarray) -> float:
        return res.norm / _mass_norm(op, v) if relative else res.norm

    trace = IterationTrace(method="newton")
    current = residual(op, params, u)
    current_merit = merit(current, u)
    residuals = [current_merit]
    trace.append(np.max(u), 0.0, current.norm, energy(op, params, u))

    for it in range(1, max_iter + 1):
        if current_merit <= tol:
            break
        jac = op.stiffness - np.diag(op.mass * jacobian_potential(params, u))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                step = scipy.linalg.solve(jac, -op.mass * current.vector, assume_a="sym")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            condition = float(np.linalg.cond(jac))
            trace.termination = "singular_jacobian"
            raise SingularJacobianError(
                f"Newton Jacobian is singular at iteration {it} (cond ~ {condition:.3e}): {exc}", condition=condition
            ) from exc

        t = 1.0
        lost_positivity = False
        for _ in range(MAX_HALVINGS):
            trial = u + t * step
            if np.all(trial > 0):
                trial_res = residual(op, params, trial)
                trial_merit = merit(trial_res, trial)
                if trial_merit < current_merit:
                    break
            else:
                lost_positivity = True
            t *= 0.5
        else:
            trace.termination = "positivity_loss" if lost_positivity else "divergence"
            if lost_positivity:
                raise PositivityLossError(
                    f"Newton step {it} could not keep u > 0 after {MAX_HALVINGS} halvings"
                )
            raise NewtonDivergenceError(
                f"Newton step {it} found no residual decrease after {MAX_HALVINGS} halvings", residuals
            )

        increment = float(np.max(np.abs(trial - u)))
        u, current, current_merit = trial, trial_res, trial_merit
        residuals.append(current_merit)
        trace.append(np.max(u), increment, current.norm, energy(op, params, u))
        logger.debug(f"Newton {it}: residual {current_merit:.3e}, damping {t:.3g}")

    if current_merit > tol:
        trace.termination = "iteration_limit"
        raise NewtonDivergenceError(
            f"Newton residual {current_merit:.3e} above {tol:.1e} after {max_iter} iterations", residuals
        )
    trace.termination = "converged"
    return make_record(op, params, u, kind=kind, res=current.norm, iterations=trace.iterations - 1, trace=trace)


def hs_inner(op: FractionalOperator, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(op.powers * op.basis.coefficients(a) * op.basis.coefficients(b)))


def _reparametrize(images: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Redistribute images at equal L² arclength along the piecewise linear string."""
    seg = np.sqrt(np.sum(mass * np.diff(images, axis=0) ** 2, axis=1))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0:
        return images
    target = np.linspace(0.0, arc[-1], images.shape[0])
    out = np.empty_like(images)
    for j in range(images.shape[1]):
        out[:, j] = np.interp(target, arc, images[:, j])
    return out


def _path_point(images: np.ndarray, t: float) -> np.ndarray:
    k = int(np.clip(np.floor(t), 0, images.shape[0] - 2))
    w = t - k
    return (1.0 - w) * images[k] + w * images[k + 1]


def mountain_pass_solve(
    op: FractionalOperator,
    params: ProblemParams,
    u_min: Optional[np.ndarray] = None,
    n_images: int = 16,
    string_iterations: int = 400,
    step: float = 0.2,
    separation_tol: float = 1e-3,
    newton_tol: float = 1e-10,
    max_newton: int = 60,
) -> SolutionRecord:
    """Second critical point above ``u_min`` by a string descent plus Newton polish.

    The path joins u_min to u_min + t φ₁ with t doubled until the energy
    drops below I(u_min). Images descend along the H^s gradient
    u - ((-Δ)^s)^{-1} f(u), stay above u_min and are kept at equal spacing.
    The highest point of the relaxed path seeds Newton; the maximizer of the
    energy along the φ₁ ray is the fallback seed.
    """
    u_min = np.zeros(op.n_dofs) if u_min is None else op._check(u_min)
    base_energy = energy(op, params, u_min)
    phi1 = op.basis.phis[:, 0]

    t_end = 1.0
    while energy(op, params, u_min + t_end * phi1) >= base_energy:
        t_end *= 2.0
        if t_end > 1e8:
            raise MountainPassError("Energy does not drop along u_min + t phi_1", MountainPassError.NUMERICAL_FAILURE)
    end = u_min + t_end * phi1

    weights = np.linspace(0.0, 1.0, n_images)[:, None]
    images = (1.0 - weights) * u_min[None, :] + weights * end[None, :]

    for _ in range(string_iterations):
        spacing = np.sqrt(np.sum(op.mass * np.diff(images, axis=0) ** 2, axis=1)).mean()
        for k in range(1, n_images - 1):
            move = step * (images[k] - op.apply_inverse(nonlinearity(params, images[k])))
            length = np.sqrt(np.sum(op.mass * move ** 2))
            if length > 0.5 * spacing:
                move *= 0.5 * spacing / length
            images[k] = np.maximum(images[k] - move, u_min)
        images = _reparametrize(images, op.mass)
        images[0], images[-1] = u_min, end

    energies = np.array([energy(op, params, img) for img in images])
    top = int(np.argmax(energies))
    lo, hi = max(top - 1, 0), min(top + 1, n_images - 1)
    best = minimize_scalar(lambda t: -energy(op, params, _path_point(images, t)), bounds=(lo, hi), method="bounded")
    seeds = [_path_point(images, best.x)]

    ray = minimize_scalar(lambda t: -energy(op, params, u_min + t * phi1), bounds=(0.0, t_end), method="bounded")
    seeds.append(u_min + ray.x * phi1)

    candidate = None
    failures = []
    for seed in seeds:
        seed = np.maximum(seed, u_min + 1e-14)
        seed = np.where(seed > 0, seed, 1e-14)
        try:
            record = newton_solve(op, params, seed, tol=newton_tol, max_iter=max_newton, kind="mountain_pass")
        except SpectralSolverError as exc:
            failures.append(str(exc))
            continue
        separation = float(np.max(np.abs(record.u - u_min)))
        if separation > separation_tol and record.energy > base_energy:
            candidate = record
            break
        failures.append(f"Newton returned to u_min (separation {separation:.2e})")

    if candidate is None:
        converged_to_min = failures and all(f.startswith("Newton returned") for f in failures)
        reason = MountainPassError.NONE_FOUND if converged_to_min else MountainPassError.NUMERICAL_FAILURE
        raise MountainPassError(f"No separated second solution: {failures}", reason=reason)

    logger.debug(
        f"Mountain pass lambda={params.lam:.6g}: I={candidate.energy:.6g} vs I(u_min)={base_energy:.6g}, "
        f"||u_mp||_inf={candidate.sup_norm:.6g}"
    )
    return candidate


def comparison_check(
    op: FractionalOperator,
    u1: np.ndarray,
    u2: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    tol: float = 1e-10,
    residual_tol: float = 1e-8,
) -> bool:
    """True iff u1 <= u2 + tol, after checking the comparison hypotheses.

    u1 should be a subsolution and u2 a supersolution of (-Δ)^s w = f(w),
    with f(t)/t decreasing; violations are logged, not raised.
    """
    u1, u2 = op._check(u1), op._check(u2)
    if np.max(op.apply(u1) - f(u1)) > residual_tol:
        logger.warning("comparison_check: first argument is not a subsolution")
    if np.min(op.apply(u2) - f(u2)) < -residual_tol:
        logger.warning("comparison_check: second argument is not a supersolution")
    lo = max(min(np.min(u1), np.min(u2)), 1e-12)
    hi = max(np.max(u1), np.max(u2), 2 * lo)
    t = np.geomspace(lo, hi, 64)
    if np.any(np.diff(f(t) / t) > 1e-12):
        logger.warning("comparison_check: f(t)/t is not decreasing on the sampled range")
    return bool(np.all(u1 <= u2 + tol))


def sublinear_coercivity(op: FractionalOperator, q: float, v: Optional[np.ndarray] = None) -> float:
    """First eigenvalue of (-Δ)^s - q v^{q-1} at the unit-λ sublinear solution."""
    v = solve_sublinear(op, q).u if v is None else v
    mu1, _ = linearized_first_eigenvalue(op, q * np.maximum(v, JACOBIAN_FLOOR) ** (q - 1.0))
    return mu1


def uniqueness_radius(beta: float, r: float) -> float:
    if beta <= 0:
        raise InvalidParameterError(f"Coercivity constant must be positive, got {beta}")
    return float((beta / r) ** (1.0 / (r - 1.0)))


def check_uniqueness_below(records: Sequence[SolutionRecord], radius: float, tol: float = 1e-8) -> List[Tuple[int, int]]:
    """Pairs of distinct solutions at the same λ that both sit below the uniqueness radius."""
    violations = []
    for i, a in enumerate(records):
        for j in range(i + 1, len(records)):
            b = records[j]
            if a.params is None or b.params is None or a.params.lam != b.params.lam:
                continue
            if a.sup_norm < radius and b.sup_norm < radius and np.max(np.abs(a.u - b.u)) > tol:
                violations.append((i, j))
    return violations


def phi1_identity_defect(op: FractionalOperator, params: ProblemParams, u: np.ndarray) -> float:
    """|<f(u), φ₁> - λ₁^s <u, φ₁>|, the weak form tested against φ₁."""
    phi1 = op.basis.phis[:, 0]
    lhs = float(np.sum(op.mass * nonlinearity(params, u) * phi1))
    rhs = op.first_eigenvalue_s() * float(np.sum(op.mass * u * phi1))
    return abs(lhs - rhs)


def _ratio_constant(q: float, r: float) -> float:
    """c₀ with min_t (λ t^q + t^r)/t = c₀ λ^{(r-1)/(r-q)} for q < 1."""
    a = (1.0 - q) / (r - 1.0)
    return a ** ((q - 1.0) / (r - q)) + a ** ((r - 1.0) / (r - q))


def lambda_upper_bound(op: FractionalOperator, q: float, r: float) -> float:
    """Λ_up such that a positive solution forces min_t (λ t^q + t^r)/t <= λ₁^s."""
    lam1s = op.first_eigenvalue_s()
    if q >= 1.0:
        return lam1s
    return float((lam1s / _ratio_constant(q, r)) ** ((r - q) / (r - 1.0)))


def ratio_exponent_fit(q: float, r: float, lambdas: Sequence[float]) -> Dict[str, Any]:
    """Brute-force min_t (λ t^q + t^r)/t over log t and the fitted exponent in λ."""
    minima = []
    for lam in lambdas:
        res = minimize_scalar(
            lambda x: lam * np.exp((q - 1.0) * x) + np.exp((r - 1.0) * x),
            bounds=(-60.0, 20.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        minima.append(float(res.fun))
    slope, _ = np.polyfit(np.log(lambdas), np.log(minima), 1)
    return {
        "lambdas": [float(x) for x in lambdas],
        "minima": minima,
        "fitted_exponent": float(slope),
        "scaling_exponent": (r - 1.0) / (r - q),
        "alternative_exponent": r / (r - q),
    }


def one_mode_amplitude(op: FractionalOperator, params: ProblemParams) -> Tuple[float, np.ndarray]:
    """Galerkin amplitude c = ((λ₁^s - λ)/∫φ₁^{r+1})^{1/(r-1)} for q = 1."""
    if params.q != 1.0:
        raise InvalidParameterError("The one-mode amplitude is defined for q = 1")
    gap = op.first_eigenvalue_s() - params.lam
    if gap <= 0:
        raise InvalidParameterError(f"lambda={params.lam} is not below lambda_1^s={op.first_eigenvalue_s()}")
    phi1 = op.basis.phis[:, 0]
    c = (gap / float(np.sum(op.mass * phi1 ** (params.r + 1.0)))) ** (1.0 / (params.r - 1.0))
    return float(c), c * phi1


class SolverSettings(BaseModel):
    """Tolerances and budgets shared by the drivers."""

    model_config = ConfigDict(frozen=True)

    monotone_tol: float = Field(1e-10, gt=0)
    newton_tol: float = Field(1e-10, gt=0)
    max_monotone_iterations: int = Field(50000, ge=1)
    max_newton_iterations: int = Field(60, ge=1)
    separation_tol: float = Field(1e-3, gt=0)


def initial_subsolution(
    op: FractionalOperator,
    params: ProblemParams,
    sup: Optional[np.ndarray] = None,
    kind: str = "sublinear",
) -> np.ndarray:
    """A positive subsolution lying below ``sup``.

    ``sublinear`` returns v_λ, which lies below every supersolution;
    ``phi1`` returns ε φ₁ with ε shrunk until it fits under ``sup``.
    """
    if params.q >= 1.0 or params.lam <= 0:
        raise InvalidParameterError("Positive subsolutions are built for 0 < q < 1 and lambda > 0")
    if kind == "sublinear":
        return solve_sublinear(op, params.q, params.lam).u
    if kind != "phi1":
        raise InvalidParameterError(f"Unknown subsolution kind '{kind}'")
    phi1 = op.basis.phis[:, 0]
    eps = (0.5 * params.lam / op.first_eigenvalue_s()) ** (1.0 / (1.0 - params.q)) / np.max(phi1)
    if sup is not None:
        while np.any(eps * phi1 > sup):
            eps *= 0.5
    return eps * phi1


def supersolution_threshold(op: FractionalOperator, q: float, r: float, g: Optional[np.ndarray] = None) -> float:
    """Largest λ for which some multiple of the torsion function is a supersolution (q < 1)."""
    g_sup = float(np.max(solve_torsion(op).u if g is None else g))
    if q >= 1.0:
        return 1.0 / g_sup

    def best_margin(lam: float) -> float:
        m_star = (lam * (1.0 - q) * g_sup ** (q - r) / (r - 1.0)) ** (1.0 / (r - q))
        return _feasibility(lam, q, r, g_sup)(m_star)

    hi = 1.0
    while best_margin(hi) > 0:
        hi *= 2.0
    lo = hi / 2.0
    while best_margin(lo) <= 0:
        lo /= 2.0
    return float(brentq(best_margin, lo, hi, xtol=1e-14 * hi))
