import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.mesh.mesh_domain import BoundaryPartition, DomainSpec, build_mesh, build_partition
from src.spectral.spectral_core import (
    FractionalOperator,
    MixedLaplacian,
    apply_fractional,
    assemble,
    build_operator,
    critical_exponent,
    eigendecompose,
    export_eigenvalues,
    first_eigenvalue_s,
    hs_norm,
    linearized_first_eigenvalue,
    mass_inner,
    observed_convergence_order,
    reference_eigenvalues,
    sobolev_quotient,
)
from src.utils.errors import (
    DimensionMismatchError,
    EigenDecompositionError,
    InvalidParameterError,
    InvalidPartitionError,
)
from src.utils.io import read_csv


def interval_setup(n=101, alpha=1.0, rule="grow-from-left"):
    mesh = build_mesh(DomainSpec("interval", (1.0,), (n,)))
    return mesh, build_partition(mesh, alpha, rule)


@pytest.fixture(scope="module")
def mixed_1d():
    mesh, part = interval_setup()
    return build_operator(mesh, part, 0.75)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def rel(a, b, mass):
    return np.sqrt(mass_inner(a - b, a - b, mass) / mass_inner(b, b, mass))


class TestAssemble:
    def test_full_dirichlet_interval_tends_to_pi_squared(self):
        mesh, part = interval_setup(alpha=2.0)
        basis = eigendecompose(assemble(mesh, part))
        assert basis.lambdas[0] == pytest.approx(np.pi ** 2, rel=1e-3)

    def test_mixed_interval_matches_closed_form(self):
        mesh, part = interval_setup()
        basis = eigendecompose(assemble(mesh, part))
        np.testing.assert_allclose(basis.lambdas[:3], reference_eigenvalues("mixed", 3), rtol=1e-2)
        assert basis.lambdas[0] == pytest.approx(2.4674, rel=1e-3)

    def test_mixed_interval_matches_brute_force(self):
        mesh, part = interval_setup(n=21)
        lap = assemble(mesh, part)
        brute = np.sort(np.linalg.eigvals(lap.matrix).real)
        np.testing.assert_allclose(eigendecompose(lap).lambdas, brute, rtol=1e-9)

    def test_two_by_two_interior_square(self):
        mesh = build_mesh(DomainSpec("rectangle", (1.0, 1.0), (4, 4)))
        part = build_partition(mesh, 4.0, "grow-from-corner")
        lap = assemble(mesh, part)
        h = 1.0 / 3.0
        assert lap.n_dofs == 4
        np.testing.assert_allclose(np.diag(lap.matrix), 4.0 / h ** 2)
        assert eigendecompose(lap).lambdas[0] == pytest.approx(2.0 / h ** 2, rel=1e-12)

    def test_three_by_three_interior_square(self):
        mesh = build_mesh(DomainSpec("rectangle", (1.0, 1.0), (5, 5)))
        part = build_partition(mesh, 4.0, "grow-from-corner")
        h = 0.25
        lam1 = eigendecompose(assemble(mesh, part)).lambdas[0]
        assert lam1 == pytest.approx((2.0 - np.sqrt(2.0)) * 2.0 / h ** 2, rel=1e-12)

    def test_self_adjoint_in_mass_inner_product(self, rng):
        mesh, part = interval_setup(n=31)
        lap = assemble(mesh, part)
        u, v = rng.standard_normal((2, lap.n_dofs))
        assert mass_inner(lap.apply(u), v, lap.mass) == pytest.approx(mass_inner(u, lap.apply(v), lap.mass))

    def test_empty_dirichlet_set_rejected(self):
        mesh, _ = interval_setup(n=11)
        empty = BoundaryPartition(alpha=1.0, dirichlet_nodes=frozenset(), neumann_nodes=frozenset({0, 10}),
                                  layout="grow-from-left", dirichlet_measure=0.0)
        with pytest.raises(InvalidPartitionError):
            assemble(mesh, empty)

    def test_foreign_partition_rejected(self):
        mesh, _ = interval_setup(n=11)
        _, other = interval_setup(n=21, alpha=2.0)
        with pytest.raises(InvalidPartitionError):
            assemble(mesh, other)


class TestEigendecompose:
    def test_diagonal_matrix(self):
        lap = MixedLaplacian(stiffness=np.diag([3.0, 1.0, 2.0]), mass=np.ones(3),
                             dof_nodes=np.arange(3), dim=1, alpha=1.0)
        basis = eigendecompose(lap)
        np.testing.assert_allclose(basis.lambdas, [1.0, 2.0, 3.0])
        np.testing.assert_allclose(np.abs(basis.phis), np.eye(3)[:, [1, 2, 0]])

    def test_orthonormal_and_ascending(self, mixed_1d):
        basis = mixed_1d.basis
        assert basis.orthonormality_defect() <= 1e-10
        assert np.all(np.diff(basis.lambdas) >= 0)

    def test_first_mode_positive(self, mixed_1d):
        assert np.all(mixed_1d.basis.phis[:, 0] > 0)

    def test_indefinite_matrix_rejected(self):
        lap = MixedLaplacian(stiffness=np.diag([-1.0, 2.0]), mass=np.ones(2),
                             dof_nodes=np.arange(2), dim=1, alpha=1.0)
        with pytest.raises(EigenDecompositionError):
            eigendecompose(lap)

    def test_convergence_order_is_two(self):
        exact = reference_eigenvalues("mixed", 1)[0]
        errors, hs = [], []
        for n in (26, 51, 101):
            mesh, part = interval_setup(n=n)
            errors.append(abs(eigendecompose(assemble(mesh, part)).lambdas[0] - exact))
            hs.append(1.0 / (n - 1))
        for order in observed_convergence_order(errors, hs):
            assert 1.8 <= order <= 2.2

    def test_export_eigenvalues(self, mixed_1d, tmp_path):
        path = export_eigenvalues(mixed_1d.basis, tmp_path / "eig.csv", {"config_hash": "abc"})
        assert path.read_text().startswith("# config_hash=abc")
        df = read_csv(path)
        assert list(df.columns) == ["j", "lambda"]
        assert len(df) == mixed_1d.basis.count


class TestFractionalOperator:
    def test_eigen_scaling(self, mixed_1d):
        phi1 = mixed_1d.basis.phis[:, 0]
        lam1s = mixed_1d.basis.lambdas[0] ** 0.75
        assert rel(apply_fractional(mixed_1d, phi1), lam1s * phi1, mixed_1d.mass) <= 1e-10

    def test_linearity(self, mixed_1d):
        phis, powers = mixed_1d.basis.phis, mixed_1d.powers
        u = phis[:, 0] + 2.0 * phis[:, 2]
        expected = powers[0] * phis[:, 0] + 2.0 * powers[2] * phis[:, 2]
        assert rel(mixed_1d.apply(u), expected, mixed_1d.mass) <= 1e-10

    def test_s_one_reduces_to_laplacian(self, rng):
        mesh, part = interval_setup()
        lap = assemble(mesh, part)
        op = FractionalOperator(eigendecompose(lap), 1.0, allow_any_s=True)
        u = rng.standard_normal(lap.n_dofs)
        assert rel(op.apply(u), lap.apply(u), lap.mass) <= 1e-10

    def test_semigroup(self, mixed_1d, rng):
        basis = mixed_1d.basis
        u = rng.standard_normal(basis.count)
        a = FractionalOperator(basis, 0.3, allow_any_s=True)
        b = FractionalOperator(basis, 0.4, allow_any_s=True)
        c = FractionalOperator(basis, 0.7, allow_any_s=True)
        assert rel(a.apply(b.apply(u)), c.apply(u), basis.mass) <= 1e-10

    def test_inverse(self, mixed_1d, rng):
        u = rng.standard_normal(mixed_1d.n_dofs)
        assert rel(mixed_1d.apply_inverse(mixed_1d.apply(u)), u, mixed_1d.mass) <= 1e-10

    def test_dense_matrix_matches_apply(self, mixed_1d, rng):
        u = rng.standard_normal(mixed_1d.n_dofs)
        np.testing.assert_allclose(mixed_1d.matrix @ u, mixed_1d.apply(u), rtol=1e-9, atol=1e-9)

    def test_poincare(self, mixed_1d, rng):
        u = rng.standard_normal(mixed_1d.n_dofs)
        form = mass_inner(mixed_1d.apply(u), u, mixed_1d.mass)
        assert form >= mixed_1d.first_eigenvalue_s() * mass_inner(u, u, mixed_1d.mass)

    @pytest.mark.parametrize("s", [0.4, 1.0, 0.5])
    def test_order_outside_default_range_rejected(self, mixed_1d, s):
        with pytest.raises(InvalidParameterError):
            FractionalOperator(mixed_1d.basis, s)

    def test_dimension_mismatch(self, mixed_1d):
        with pytest.raises(DimensionMismatchError):
            mixed_1d.apply(np.ones(mixed_1d.n_dofs + 1))


class TestNormsAndEigenvalues:
    def test_hs_norm_of_first_mode(self, mixed_1d):
        phi1 = mixed_1d.basis.phis[:, 0]
        assert hs_norm(mixed_1d, phi1) == pytest.approx(np.sqrt(mixed_1d.first_eigenvalue_s()))

    def test_hs_norm_of_zero(self, mixed_1d):
        assert hs_norm(mixed_1d, np.zeros(mixed_1d.n_dofs)) == 0.0

    def test_half_power_identity(self, mixed_1d, rng):
        u = rng.standard_normal(mixed_1d.n_dofs)
        form = mass_inner(mixed_1d.apply(u), u, mixed_1d.mass)
        assert mixed_1d.hs_norm(u) ** 2 == pytest.approx(form, rel=1e-10)

    def test_first_eigenvalue_s(self, mixed_1d):
        assert first_eigenvalue_s(mixed_1d) == pytest.approx(((np.pi / 2) ** 2) ** 0.75, rel=1e-3)
        assert first_eigenvalue_s(mixed_1d) == pytest.approx(1.9687, rel=1e-3)

    def test_first_eigenvalue_decreases_with_alpha(self):
        mesh = build_mesh(DomainSpec("rectangle", (1.0, 1.0), (9, 9)))
        values = [build_operator(mesh, build_partition(mesh, a, "grow-from-corner"), 0.75).first_eigenvalue_s()
                  for a in (0.5, 1.0, 2.0)]
        assert values[0] < values[1] < values[2]

    def test_critical_exponent(self):
        assert critical_exponent(1, 0.75) == np.inf
        assert critical_exponent(2, 0.75) == pytest.approx(8.0)


class TestSobolevQuotient:
    def test_p2_is_first_eigenvalue(self, mixed_1d):
        result = sobolev_quotient(mixed_1d, 2.0)
        assert result.value == pytest.approx(mixed_1d.first_eigenvalue_s(), rel=1e-8)

    def test_minimizer_normalized(self, mixed_1d):
        result = sobolev_quotient(mixed_1d, 3.0)
        mass = mixed_1d.mass
        assert np.sum(mass * np.abs(result.minimizer) ** 3) == pytest.approx(1.0)
        assert mixed_1d.hs_norm(result.minimizer) ** 2 == pytest.approx(result.value, rel=1e-6)

    def test_exponent_range(self, mixed_1d):
        with pytest.raises(InvalidParameterError):
            sobolev_quotient(mixed_1d, 0.5)

    def test_monotone_in_dirichlet_set(self):
        mesh, small = interval_setup(n=51, alpha=1.0)
        _, large = interval_setup(n=51, alpha=2.0)
        q_small = sobolev_quotient(build_operator(mesh, small, 0.75), 4.0).value
        q_large = sobolev_quotient(build_operator(mesh, large, 0.75), 4.0).value
        assert q_small <= q_large


class TestLinearizedEigenvalue:
    def test_zero_potential(self, mixed_1d):
        nu1, _ = linearized_first_eigenvalue(mixed_1d, np.zeros(mixed_1d.n_dofs))
        assert nu1 == pytest.approx(mixed_1d.first_eigenvalue_s(), rel=1e-12)

    def test_constant_shift(self, mixed_1d):
        a = np.full(mixed_1d.n_dofs, mixed_1d.first_eigenvalue_s())
        nu1, eigfun = linearized_first_eigenvalue(mixed_1d, a)
        assert abs(nu1) <= 1e-10
        assert np.all(eigfun > 0)

    def test_nonfinite_potential_rejected(self, mixed_1d):
        a = np.zeros(mixed_1d.n_dofs)
        a[3] = np.inf
        with pytest.raises(InvalidParameterError):
            linearized_first_eigenvalue(mixed_1d, a)
