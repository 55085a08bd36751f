"""Mixed Dirichlet-Neumann Laplacian and the spectral fractional Laplacian built on it.

Every fractional quantity goes through the full eigendecomposition of the
discrete Laplacian: with ``L phi_j = lam_j phi_j`` and mass-orthonormal
``phi_j``, the operator is ``(-Δ)^s u = sum_j lam_j^s <u, phi_j> phi_j``.
All inner products are mass weighted, ``<u, v> = sum_i m_i u_i v_i``.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import minimize

from src.mesh.mesh_domain import BoundaryPartition, MeshedDomain
from src.utils.errors import (
    DimensionMismatchError,
    EigenDecompositionError,
    InvalidParameterError,
    InvalidPartitionError,
    QuotientMinimizationError,
)
from src.utils.io import write_csv

logger = logging.getLogger(__name__)

S_MIN, S_MAX = 0.5, 1.0


def mass_inner(u: np.ndarray, v: np.ndarray, mass: np.ndarray) -> float:
    return float(np.dot(mass * u, v))


def lp_norm(u: np.ndarray, mass: np.ndarray, p: float) -> float:
    return float(np.sum(mass * np.abs(u) ** p) ** (1.0 / p))


def critical_exponent(dim: int, s: float) -> float:
    """2N/(N-2s); infinite when N <= 2s (the 1D case)."""
    if dim <= 2 * s:
        return np.inf
    return 2.0 * dim / (dim - 2.0 * s)


@dataclass(frozen=True)
class MixedLaplacian:
    stiffness: np.ndarray
    mass: np.ndarray
    dof_nodes: np.ndarray
    dim: int
    alpha: float

    @property
    def n_dofs(self) -> int:
        return self.mass.size

    @property
    def matrix(self) -> np.ndarray:
        """Non-symmetric form L = M^{-1} K acting on nodal values."""
        return self.stiffness / self.mass[:, None]

    def apply(self, u: np.ndarray) -> np.ndarray:
        return (self.stiffness @ u) / self.mass


@dataclass(frozen=True)
class EigenBasis:
    lambdas: np.ndarray
    phis: np.ndarray
    mass: np.ndarray
    dim: int = 1
    dof_nodes: Optional[np.ndarray] = None
    alpha: Optional[float] = None

    @property
    def count(self) -> int:
        return self.lambdas.size

    def coefficients(self, u: np.ndarray) -> np.ndarray:
        return self.phis.T @ (self.mass * u)

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.phis @ coeffs

    def orthonormality_defect(self) -> float:
        gram = self.phis.T @ (self.mass[:, None] * self.phis)
        return float(np.max(np.abs(gram - np.eye(self.count))))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"j": np.arange(1, self.count + 1), "lambda": self.lambdas})


def _stiffness_1d(n: int, h: float) -> Tuple[sp.csr_matrix, np.ndarray]:
    main = np.full(n, 2.0)
    main[[0, -1]] = 1.0
    off = -np.ones(n - 1)
    k = sp.diags([off, main, off], [-1, 0, 1], format="csr") / h
    m = np.full(n, h)
    m[[0, -1]] = 0.5 * h
    return k, m


def assemble(mesh: MeshedDomain, partition: BoundaryPartition) -> MixedLaplacian:
    """Second-order finite differences with Dirichlet nodes eliminated.

    The all-Neumann stiffness (ghost-point reflection, half-cell masses on the
    boundary) is assembled on every node and then restricted to non-Dirichlet
    nodes, which is the same as imposing u = 0 on Σ_D.
    """
    if not partition.dirichlet_nodes:
        raise InvalidPartitionError("Empty Dirichlet set: the mixed Laplacian would be singular")
    if not partition.dirichlet_nodes <= mesh.boundary_nodes:
        raise InvalidPartitionError("Partition was not built on this mesh")

    spec = mesh.spec
    if spec.dim == 1:
        stiffness, mass = _stiffness_1d(spec.n[0], spec.h[0])
    else:
        (nx, ny), (hx, hy) = spec.n, spec.h
        kx, mx = _stiffness_1d(nx, hx)
        ky, my = _stiffness_1d(ny, hy)
        # node id = j*nx + i  ->  kron(y-factor, x-factor)
        stiffness = sp.kron(ky, sp.diags(mx)) + sp.kron(sp.diags(my), kx)
        mass = np.kron(my, mx)

    dirichlet = np.array(sorted(partition.dirichlet_nodes))
    keep = np.ones(mesh.n_nodes, dtype=bool)
    keep[dirichlet] = False
    dof_nodes = np.flatnonzero(keep)

    k_dofs = sp.csr_matrix(stiffness)[dof_nodes][:, dof_nodes].toarray()
    laplacian = MixedLaplacian(
        stiffness=0.5 * (k_dofs + k_dofs.T),
        mass=mass[dof_nodes].copy(),
        dof_nodes=dof_nodes,
        dim=spec.dim,
        alpha=partition.alpha,
    )
    logger.debug(f"Assembled mixed Laplacian: {laplacian.n_dofs} dofs, {dirichlet.size} Dirichlet nodes eliminated")
    return laplacian


def eigendecompose(laplacian: MixedLaplacian) -> EigenBasis:
    """Full ascending eigendecomposition, mass-orthonormal eigenvectors."""
    inv_sqrt_m = 1.0 / np.sqrt(laplacian.mass)
    scaled = inv_sqrt_m[:, None] * laplacian.stiffness * inv_sqrt_m[None, :]
    scaled = 0.5 * (scaled + scaled.T)

    try:
        lambdas, vecs = scipy.linalg.eigh(scaled, driver="evd", check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenDecompositionError(f"Dense symmetric eigensolver failed: {exc}") from exc

    phis = inv_sqrt_m[:, None] * vecs

    # deterministic signs: phi_1 positive, otherwise largest entry positive
    for j in range(phis.shape[1]):
        col = phis[:, j]
        sign = np.sign(col.sum()) if j == 0 else np.sign(col[np.argmax(np.abs(col))])
        if sign < 0:
            phis[:, j] = -col

    if lambdas[0] <= 0:
        raise EigenDecompositionError(f"First eigenvalue {lambdas[0]:.3e} is not positive")

    residual = laplacian.stiffness @ phis - (laplacian.mass[:, None] * phis) * lambdas[None, :]
    res_norms = np.linalg.norm(inv_sqrt_m[:, None] * residual, axis=0)
    allowed = 1e-9 * lambdas + 64 * np.finfo(float).eps * lambdas[-1]
    if np.any(res_norms > allowed):
        worst = int(np.argmax(res_norms / allowed))
        raise EigenDecompositionError(
            f"Eigenpair {worst + 1} residual {res_norms[worst]:.3e} exceeds {allowed[worst]:.3e}"
        )

    basis = EigenBasis(
        lambdas=lambdas,
        phis=phis,
        mass=laplacian.mass.copy(),
        dim=laplacian.dim,
        dof_nodes=laplacian.dof_nodes,
        alpha=laplacian.alpha,
    )
    logger.debug(f"Eigendecomposition: {basis.count} modes, lambda_1={lambdas[0]:.6g}, lambda_max={lambdas[-1]:.6g}")
    return basis


class FractionalOperator:
    """Spectral (-Δ)^s on a fixed mixed-BC basis.

    ``s`` must lie in (1/2, 1); ``allow_any_s`` widens this to (0, 1] for
    operator identity checks (s = 1 reduction, semigroup composition).
    """

    def __init__(self, basis: EigenBasis, s: float, allow_any_s: bool = False):
        if allow_any_s:
            if not 0.0 < s <= 1.0:
                raise InvalidParameterError(f"s={s} outside (0, 1]")
        elif not S_MIN < s < S_MAX:
            raise InvalidParameterError(f"s={s} outside (1/2, 1)")
        self.basis = basis
        self.s = float(s)
        self.allow_any_s = allow_any_s
        self.powers = basis.lambdas ** self.s

    @property
    def mass(self) -> np.ndarray:
        return self.basis.mass

    @property
    def n_dofs(self) -> int:
        return self.basis.mass.size

    @property
    def dim(self) -> int:
        return self.basis.dim

    def _check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_dofs,):
            raise DimensionMismatchError(f"Expected a grid function of shape ({self.n_dofs},), got {u.shape}")
        return u

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = self._check(u)
        return self.basis.synthesize(self.powers * self.basis.coefficients(u))

    def apply_inverse(self, f: np.ndarray) -> np.ndarray:
        f = self._check(f)
        return self.basis.synthesize(self.basis.coefficients(f) / self.powers)

    def hs_norm(self, u: np.ndarray) -> float:
        u = self._check(u)
        coeffs = self.basis.coefficients(u)
        return float(np.sqrt(np.sum(self.powers * coeffs ** 2)))

    def first_eigenvalue_s(self) -> float:
        return float(self.powers[0])

    def with_order(self, s: float) -> "FractionalOperator":
        return FractionalOperator(self.basis, s, allow_any_s=self.allow_any_s)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense action matrix A with A u = (-Δ)^s u."""
        phis = self.basis.phis
        return (phis * self.powers[None, :]) @ (phis.T * self.mass[None, :])

    @cached_property
    def stiffness(self) -> np.ndarray:
        """Symmetric form M A, so that u^T (M A) v = <(-Δ)^s u, v>."""
        weighted = self.mass[:, None] * self.basis.phis
        k = (weighted * self.powers[None, :]) @ weighted.T
        return 0.5 * (k + k.T)

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        phis = self.basis.phis
        return (phis / self.powers[None, :]) @ (phis.T * self.mass[None, :])


def build_operator(
    mesh: MeshedDomain,
    partition: BoundaryPartition,
    s: float,
    allow_any_s: bool = False,
) -> FractionalOperator:
    return FractionalOperator(eigendecompose(assemble(mesh, partition)), s, allow_any_s=allow_any_s)


def apply_fractional(op: FractionalOperator, u: np.ndarray) -> np.ndarray:
    return op.apply(u)


def hs_norm(op: FractionalOperator, u: np.ndarray) -> float:
    return op.hs_norm(u)


def first_eigenvalue_s(op: FractionalOperator) -> float:
    return op.first_eigenvalue_s()


@dataclass
class QuotientResult:
    value: float
    minimizer: np.ndarray
    coefficients: np.ndarray
    iterations: int
    converged: bool
    trace: List[float] = field(default_factory=list)


def minimize_quotient(
    weights: np.ndarray,
    basis: EigenBasis,
    p: float,
    max_iter: int = 5000,
    gtol: float = 1e-10,
) -> QuotientResult:
    """Minimize sum_j w_j c_j^2 / ||sum_j c_j phi_j||_{L^p}^2 over coefficient vectors.

    Started from phi_1, which is the exact minimizer when p = 2 and the
    weights increase.
    """
    phis, mass = basis.phis, basis.mass
    trace: List[float] = []

    def objective(c):
        u = phis @ c
        a = float(np.sum(weights * c ** 2))
        integral = float(np.sum(mass * np.abs(u) ** p))
        b = integral ** (2.0 / p)
        d_a = 2.0 * weights * c
        d_b_du = 2.0 * integral ** (2.0 / p - 1.0) * mass * np.sign(u) * np.abs(u) ** (p - 1.0)
        d_b = phis.T @ d_b_du
        return a / b, (d_a * b - a * d_b) / b ** 2

    c0 = np.zeros(basis.count)
    c0[0] = 1.0
    result = minimize(
        objective,
        c0,
        jac=True,
        method="L-BFGS-B",
        callback=lambda c: trace.append(objective(c)[0]),
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15},
    )

    value, grad = objective(result.x)
    grad_rel = float(np.linalg.norm(grad) / max(abs(value), 1e-300) / max(np.linalg.norm(result.x), 1e-300))
    converged = bool(result.success) or grad_rel < 1e-6
    if not converged:
        raise QuotientMinimizationError(
            f"Quotient minimization (p={p}) did not converge: {result.message}", trace=trace
        )
    if not result.success:
        logger.warning(f"L-BFGS-B stopped with '{result.message}' at relative gradient {grad_rel:.2e}; accepted")

    u = phis @ result.x
    norm = lp_norm(u, mass, p)
    u = u / norm
    if u.sum() < 0:
        u = -u
    return QuotientResult(
        value=float(value),
        minimizer=u,
        coefficients=result.x / norm,
        iterations=int(result.nit),
        converged=True,
        trace=trace,
    )


def sobolev_quotient(op: FractionalOperator, p: float) -> QuotientResult:
    """inf ||u||_{H^s}^2 / ||u||_{L^p}^2 over the discrete space."""
    upper = critical_exponent(op.dim, op.s)
    if not 1.0 <= p <= upper:
        raise InvalidParameterError(f"p={p} outside [1, {upper}] for N={op.dim}, s={op.s}")
    result = minimize_quotient(op.powers, op.basis, p)
    logger.debug(f"Sobolev quotient p={p}: {result.value:.6g} after {result.iterations} iterations")
    return result


def linearized_first_eigenvalue(op: FractionalOperator, a: np.ndarray) -> Tuple[float, np.ndarray]:
    """Smallest eigenvalue of (-Δ)^s - diag(a) in the mass inner product.

    Solved in the eigen-coefficient space, where the problem becomes the
    standard symmetric one diag(lam^s) - Phi^T M diag(a) Phi.
    """
    a = op._check(a)
    if not np.all(np.isfinite(a)):
        raise InvalidParameterError("Potential must be finite on every dof")
    phis = op.basis.phis
    coupling = phis.T @ ((op.mass * a)[:, None] * phis)
    pencil = np.diag(op.powers) - coupling
    pencil = 0.5 * (pencil + pencil.T)
    values, vectors = scipy.linalg.eigh(pencil, subset_by_index=[0, 0])
    eigfun = phis @ vectors[:, 0]
    if eigfun.sum() < 0:
        eigfun = -eigfun
    return float(values[0]), eigfun


def reference_eigenvalues(kind: str, count: int, length: float = 1.0) -> np.ndarray:
    """Continuum eigenvalues of -u'' on [0, length]: 'dirichlet' or 'mixed' (Dirichlet/Neumann)."""
    j = np.arange(1, count + 1, dtype=float)
    if kind == "dirichlet":
        return (j * np.pi / length) ** 2
    if kind == "mixed":
        return ((j - 0.5) * np.pi / length) ** 2
    raise InvalidParameterError(f"Unknown reference kind '{kind}'")


def observed_convergence_order(errors: Sequence[float], hs: Sequence[float]) -> List[float]:
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


def export_eigenvalues(basis: EigenBasis, path, meta: Optional[Dict] = None) -> Path:
    return write_csv(basis.to_frame(), path, meta)


def export_eigenvectors(basis: EigenBasis, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, lambdas=basis.lambdas, phis=basis.phis, mass=basis.mass)
    return path


if __name__ == "__main__":
    from src.mesh.mesh_domain import DomainSpec, build_mesh, build_partition
    from src.utils.logging_config import setup_logging

    setup_logging()
    logger.info("=" * 70)
    logger.info("FRACTIONAL OPERATOR DEMO")
    logger.info("=" * 70)

    demo_mesh = build_mesh(DomainSpec("interval", (1.0,), (101,)))
    demo_op = build_operator(demo_mesh, build_partition(demo_mesh, 1.0, "grow-from-left"), 0.75)
    print(demo_op.basis.to_frame().head())
    exact = reference_eigenvalues("mixed", 3)
    logger.info(f"First eigenvalues: {demo_op.basis.lambdas[:3]} vs {exact}")
    logger.info(f"lambda_1^s = {first_eigenvalue_s(demo_op):.6f}")
