import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import json

import numpy as np
import pytest

from src.mesh.mesh_domain import (
    BoundaryPartition,
    DomainSpec,
    PartitionFamily,
    build_family,
    build_mesh,
    build_partition,
    describe,
    load_mesh_and_partition,
    validate_family,
)
from src.utils.errors import InvalidDomainError, InvalidPartitionError


@pytest.fixture
def unit_square():
    return build_mesh(DomainSpec("rectangle", (1.0, 1.0), (11, 11)))


class TestBuildMesh:
    def test_interval_nodes(self):
        mesh = build_mesh(DomainSpec("interval", (1.0,), (5,)))
        np.testing.assert_allclose(mesh.coords[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
        assert mesh.boundary_nodes == frozenset({0, 4})

    def test_square_counts(self):
        mesh = build_mesh(DomainSpec("rectangle", (1.0, 1.0), (3, 3)))
        assert mesh.n_nodes == 9
        assert len(mesh.boundary_nodes) == 8
        assert list(mesh.interior_nodes) == [4]

    def test_rectangle_perimeter(self):
        spec = DomainSpec("rectangle", (2.0, 1.0), (5, 3))
        assert spec.boundary_measure == pytest.approx(6.0)
        mesh = build_mesh(spec)
        assert mesh.arc_measure.sum() == pytest.approx(6.0)

    def test_spacing(self):
        spec = DomainSpec("rectangle", (2.0, 1.0), (5, 3))
        assert spec.h == pytest.approx((0.5, 0.5))

    @pytest.mark.parametrize("extents", [(0.0,), (-1.0,)])
    def test_degenerate_extent_rejected(self, extents):
        with pytest.raises(InvalidDomainError):
            DomainSpec("interval", extents, (5,))

    def test_too_few_nodes_rejected(self):
        with pytest.raises(InvalidDomainError):
            DomainSpec("rectangle", (1.0, 1.0), (2, 5))

    def test_refined_halves_spacing(self):
        spec = DomainSpec("interval", (1.0,), (11,))
        assert spec.refined(2).h[0] == pytest.approx(spec.h[0] / 2)


class TestBuildPartition:
    def test_full_measure_is_pure_dirichlet(self):
        mesh = build_mesh(DomainSpec("interval", (1.0,), (11,)))
        part = build_partition(mesh, 2.0, "grow-from-left")
        assert part.dirichlet_nodes == frozenset({0, 10})
        assert part.neumann_nodes == frozenset()

    def test_half_measure_interval(self):
        mesh = build_mesh(DomainSpec("interval", (1.0,), (11,)))
        part = build_partition(mesh, 1.0, "grow-from-left")
        assert part.dirichlet_nodes == frozenset({0})
        assert part.neumann_nodes == frozenset({10})

    def test_grow_from_right(self):
        mesh = build_mesh(DomainSpec("interval", (1.0,), (11,)))
        part = build_partition(mesh, 1.0, "grow-from-right")
        assert part.dirichlet_nodes == frozenset({10})

    def test_corner_rule_measure_within_one_cell(self, unit_square):
        part = build_partition(unit_square, 1.5, "grow-from-corner")
        assert abs(part.dirichlet_measure - 1.5) <= 0.1 + 1e-12
        assert 0 in part.dirichlet_nodes

    def test_corner_rule_follows_bottom_then_right(self, unit_square):
        part = build_partition(unit_square, 1.5, "grow-from-corner")
        bottom = set(range(11))
        right_lower = {j * 11 + 10 for j in range(5)}
        assert bottom | right_lower <= part.dirichlet_nodes
        assert (10 * 11 + 10) not in part.dirichlet_nodes

    def test_tags_partition_the_boundary(self, unit_square):
        part = build_partition(unit_square, 2.3, "grow-from-corner")
        assert not part.dirichlet_nodes & part.neumann_nodes
        assert part.dirichlet_nodes | part.neumann_nodes == unit_square.boundary_nodes
        total = unit_square.measure(part.dirichlet_nodes) + unit_square.measure(part.neumann_nodes)
        assert total == pytest.approx(4.0)

    @pytest.mark.parametrize("alpha", [0.0, -0.5])
    def test_nonpositive_alpha_rejected(self, unit_square, alpha):
        with pytest.raises(InvalidPartitionError, match=r"\|Σ_D\| > 0"):
            build_partition(unit_square, alpha, "grow-from-corner")

    def test_alpha_above_boundary_measure_rejected(self, unit_square):
        with pytest.raises(InvalidPartitionError):
            build_partition(unit_square, 4.5, "grow-from-corner")

    def test_rule_must_match_domain(self, unit_square):
        with pytest.raises(InvalidPartitionError):
            build_partition(unit_square, 1.0, "grow-from-left")

    def test_tiny_alpha_snaps_to_one_node(self, unit_square):
        part = build_partition(unit_square, 1e-3, "grow-from-corner")
        assert part.snapped
        assert part.dirichlet_nodes == frozenset({0})

    def test_half_strip_layout(self):
        mesh = build_mesh(DomainSpec("rectangle", (2.0, 1.0), (21, 11)))
        part = build_partition(mesh, 1.0 + 2.0 + 1.0 + 0.5, "half-strip")
        nx = 21
        top = {10 * nx + i for i in range(nx)}
        left = {j * nx for j in range(11)}
        right = {j * nx + 20 for j in range(11)}
        assert top | left | right <= part.dirichlet_nodes
        assert {1, 2, 3, 4} <= part.dirichlet_nodes
        assert set(range(5, 20)) == part.neumann_nodes

    def test_deterministic(self, unit_square):
        a = build_partition(unit_square, 1.7, "grow-from-corner")
        b = build_partition(unit_square, 1.7, "grow-from-corner")
        assert a == b


class TestFamily:
    def test_nested_family_passes(self, unit_square):
        family = build_family(unit_square, [0.5, 1.0, 1.5], "grow-from-corner")
        report = validate_family(family)
        assert report.nested
        assert report.passed
        assert all(c == 1 for c in report.component_counts)

    def test_out_of_order_alphas_rejected(self, unit_square):
        with pytest.raises(InvalidPartitionError):
            build_family(unit_square, [1.0, 0.5], "grow-from-corner")

    def test_swapped_tag_reported(self, unit_square):
        family = build_family(unit_square, [0.5, 1.0], "grow-from-corner")
        small, large = family.members
        moved = min(small.dirichlet_nodes)
        broken = BoundaryPartition(
            alpha=large.alpha,
            dirichlet_nodes=large.dirichlet_nodes - {moved},
            neumann_nodes=large.neumann_nodes | {moved},
            layout=large.layout,
            dirichlet_measure=large.dirichlet_measure,
        )
        tampered = PartitionFamily(mesh=unit_square, alphas=[0.5, 1.0], rule="grow-from-corner",
                                   members=[small, broken])
        report = validate_family(tampered)
        assert not report.nested
        assert not report.passed


class TestSerialization:
    def test_json_rebuild_is_identical(self, unit_square):
        part = build_partition(unit_square, 1.5, "grow-from-corner")
        payload = json.loads(json.dumps(describe(unit_square, part)))
        mesh2, part2 = load_mesh_and_partition(payload)
        assert part2 == part
        np.testing.assert_array_equal(mesh2.coords, unit_square.coords)
