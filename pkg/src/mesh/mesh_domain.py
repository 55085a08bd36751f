import logging
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from src.utils.errors import InvalidDomainError, InvalidPartitionError

logger = logging.getLogger(__name__)

DOMAIN_KINDS = ("interval", "rectangle")

# rule name -> (domain kind, starting corner of the arc ordering)
PARTITION_RULES = {
    "grow-from-left": ("interval", "left"),
    "grow-from-right": ("interval", "right"),
    "grow-from-corner": ("rectangle", "origin"),
    "half-strip": ("rectangle", "bottom-right"),
}

_ARC_EPS = 1e-9


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    extents: Tuple[float, ...]
    n: Tuple[int, ...]

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise InvalidDomainError(f"Unknown domain kind '{self.kind}', expected one of {DOMAIN_KINDS}")

        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))

        expected = 1 if self.kind == "interval" else 2
        if len(self.extents) != expected or len(self.n) != expected:
            raise InvalidDomainError(
                f"{self.kind} needs {expected} extent(s) and node count(s), "
                f"got extents={self.extents}, n={self.n}"
            )
        if any(e <= 0 or not np.isfinite(e) for e in self.extents):
            raise InvalidDomainError(f"Degenerate extents {self.extents}: every length must be > 0")
        if any(k < 3 for k in self.n):
            raise InvalidDomainError(f"Node counts {self.n} must be >= 3 on every axis")

    @property
    def dim(self) -> int:
        return len(self.extents)

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(length / (k - 1) for length, k in zip(self.extents, self.n))

    @property
    def boundary_measure(self) -> float:
        # The boundary of an interval is two points carrying counting measure.
        if self.kind == "interval":
            return 2.0
        return 2.0 * (self.extents[0] + self.extents[1])

    def refined(self, factor: int = 2) -> "DomainSpec":
        return DomainSpec(
            kind=self.kind,
            extents=self.extents,
            n=tuple(factor * (k - 1) + 1 for k in self.n),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "extents": list(self.extents), "n": list(self.n)}


@dataclass(frozen=True)
class MeshedDomain:
    spec: DomainSpec
    coords: np.ndarray
    grid_shape: Tuple[int, ...]
    boundary_order: np.ndarray
    arc_position: np.ndarray
    arc_measure: np.ndarray
    is_boundary: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def boundary_nodes(self) -> FrozenSet[int]:
        return frozenset(int(k) for k in self.boundary_order)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    def node_measure(self, node: int) -> float:
        idx = np.flatnonzero(self.boundary_order == node)
        if idx.size == 0:
            raise InvalidPartitionError(f"Node {node} is not a boundary node")
        return float(self.arc_measure[idx[0]])

    def measure(self, nodes) -> float:
        nodes = set(int(k) for k in nodes)
        mask = np.array([int(k) in nodes for k in self.boundary_order], dtype=bool)
        return float(self.arc_measure[mask].sum())

    def to_grid(self, dof_values: np.ndarray, dof_nodes: np.ndarray) -> np.ndarray:
        """Scatter values defined on dofs back onto the tensor grid (zero elsewhere)."""
        full = np.zeros(self.n_nodes)
        full[np.asarray(dof_nodes)] = dof_values
        return full.reshape(self.grid_shape)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec.to_dict(),
            "coords": self.coords.tolist(),
            "boundary_order": self.boundary_order.tolist(),
            "arc_measure": self.arc_measure.tolist(),
        }


@dataclass(frozen=True)
class BoundaryPartition:
    alpha: float
    dirichlet_nodes: FrozenSet[int]
    neumann_nodes: FrozenSet[int]
    layout: str
    dirichlet_measure: float
    snapped: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "layout": self.layout,
            "dirichlet_nodes": sorted(self.dirichlet_nodes),
            "neumann_nodes": sorted(self.neumann_nodes),
            "dirichlet_measure": self.dirichlet_measure,
            "snapped": self.snapped,
        }


@dataclass
class PartitionFamily:
    mesh: MeshedDomain
    alphas: List[float]
    rule: str
    members: List[BoundaryPartition] = field(default_factory=list)

    def __post_init__(self):
        if len(self.alphas) == 0:
            raise InvalidPartitionError("A partition family needs at least one alpha")
        if any(b <= a for a, b in zip(self.alphas, self.alphas[1:])):
            raise InvalidPartitionError(f"Family alphas must be strictly increasing, got {self.alphas}")
        if not self.members:
            self.members = [build_partition(self.mesh, a, self.rule) for a in self.alphas]
        if len(self.members) != len(self.alphas):
            raise InvalidPartitionError("One partition per alpha is required")


def build_mesh(spec: DomainSpec) -> MeshedDomain:
    if spec.kind == "interval":
        (length,), (n,) = spec.extents, spec.n
        x = np.linspace(0.0, length, n)
        coords = x[:, None]
        is_boundary = np.zeros(n, dtype=bool)
        is_boundary[[0, n - 1]] = True
        boundary_order = np.array([0, n - 1])
        arc_position = np.array([0.0, 1.0])
        arc_measure = np.array([1.0, 1.0])
        mesh = MeshedDomain(spec, coords, (n,), boundary_order, arc_position, arc_measure, is_boundary)
        logger.debug(f"Built interval mesh: {n} nodes, h={spec.h[0]:.4g}")
        return mesh

    (lx, ly), (nx, ny) = spec.extents, spec.n
    x = np.linspace(0.0, lx, nx)
    y = np.linspace(0.0, ly, ny)
    xx, yy = np.meshgrid(x, y)  # row j = fixed y, node id = j*nx + i
    coords = np.column_stack([xx.ravel(), yy.ravel()])

    def node(i, j):
        return j * nx + i

    order = [node(i, 0) for i in range(nx)]
    order += [node(nx - 1, j) for j in range(1, ny)]
    order += [node(i, ny - 1) for i in range(nx - 2, -1, -1)]
    order += [node(0, j) for j in range(ny - 2, 0, -1)]
    boundary_order = np.array(order)

    pts = coords[boundary_order]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    arc_position = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    arc_measure = 0.5 * (seg + np.roll(seg, 1))

    is_boundary = np.zeros(nx * ny, dtype=bool)
    is_boundary[boundary_order] = True

    logger.debug(f"Built rectangle mesh: {nx}x{ny} nodes, {len(order)} on the boundary")
    return MeshedDomain(spec, coords, (ny, nx), boundary_order, arc_position, arc_measure, is_boundary)


def _rule_ordering(mesh: MeshedDomain, rule: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if rule not in PARTITION_RULES:
        raise InvalidPartitionError(f"Unknown partition rule '{rule}', expected one of {sorted(PARTITION_RULES)}")
    kind, start = PARTITION_RULES[rule]
    if kind != mesh.spec.kind:
        raise InvalidPartitionError(f"Rule '{rule}' applies to {kind} domains, not {mesh.spec.kind}")

    if kind == "interval":
        order = mesh.boundary_order if start == "left" else mesh.boundary_order[::-1]
        measures = mesh.arc_measure if start == "left" else mesh.arc_measure[::-1]
        return order, np.array([0.0, 1.0]), measures

    shift = 0
    if start == "bottom-right":
        bottom_right = mesh.grid_shape[1] - 1
        shift = int(np.flatnonzero(mesh.boundary_order == bottom_right)[0])

    order = np.roll(mesh.boundary_order, -shift)
    measures = np.roll(mesh.arc_measure, -shift)
    pts = mesh.coords[order]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    positions = np.concatenate([[0.0], np.cumsum(seg)])
    return order, positions, measures


def build_partition(mesh: MeshedDomain, alpha: float, rule: str) -> BoundaryPartition:
    total = mesh.spec.boundary_measure
    if not alpha > 0:
        raise InvalidPartitionError(f"alpha={alpha} rejected: the Dirichlet part needs |Σ_D| > 0")
    if alpha > total * (1 + 1e-12):
        raise InvalidPartitionError(f"alpha={alpha} exceeds the boundary measure |∂Ω|={total}")

    order, positions, measures = _rule_ordering(mesh, rule)

    # A node is Dirichlet iff its arc position lies before alpha; the first
    # node always qualifies, so the Dirichlet set is never empty.
    is_dirichlet = positions < alpha - _ARC_EPS * total
    is_dirichlet[0] = True

    snapped = alpha < measures[0] - _ARC_EPS * total
    if snapped:
        logger.warning(
            f"alpha={alpha:.4g} is below one boundary cell ({measures[0]:.4g}); "
            f"snapping to a single Dirichlet node"
        )

    dirichlet = frozenset(int(k) for k in order[is_dirichlet])
    neumann = frozenset(int(k) for k in order[~is_dirichlet])
    partition = BoundaryPartition(
        alpha=float(alpha),
        dirichlet_nodes=dirichlet,
        neumann_nodes=neumann,
        layout=rule,
        dirichlet_measure=float(measures[is_dirichlet].sum()),
        snapped=bool(snapped),
    )
    logger.debug(
        f"Partition {rule} alpha={alpha:.4g}: {len(dirichlet)} Dirichlet / {len(neumann)} Neumann nodes, "
        f"|Σ_D|={partition.dirichlet_measure:.4g}"
    )
    return partition


def build_family(mesh: MeshedDomain, alphas: Sequence[float], rule: str) -> PartitionFamily:
    return PartitionFamily(mesh=mesh, alphas=[float(a) for a in alphas], rule=rule)


def count_components(mesh: MeshedDomain, dirichlet_nodes: FrozenSet[int]) -> int:
    flags = np.array([int(k) in dirichlet_nodes for k in mesh.boundary_order], dtype=bool)
    if mesh.spec.kind == "interval":
        return int(flags.sum())
    if flags.all():
        return 1
    # runs on the closed boundary curve: count False->True transitions
    return int(np.sum(flags & ~np.roll(flags, 1)))


@dataclass
class FamilyReport:
    nested: bool
    partition_exact: bool
    measure_errors: List[float]
    component_counts: List[int]
    failures: List[str]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "nested": self.nested,
            "partition_exact": self.partition_exact,
            "measure_errors": self.measure_errors,
            "component_counts": self.component_counts,
            "failures": self.failures,
        }


def validate_family(family: PartitionFamily, max_components: int = 4) -> FamilyReport:
    mesh = family.mesh
    total = mesh.spec.boundary_measure
    cell = float(mesh.arc_measure.max())
    failures: List[str] = []

    nested = True
    for k, (small, large) in enumerate(zip(family.members, family.members[1:])):
        if not small.dirichlet_nodes <= large.dirichlet_nodes:
            nested = False
            failures.append(
                f"members {k} and {k + 1} are not nested: "
                f"{sorted(small.dirichlet_nodes - large.dirichlet_nodes)} left the Dirichlet set"
            )

    partition_exact = True
    measure_errors: List[float] = []
    component_counts: List[int] = []
    for member in family.members:
        d_measure = mesh.measure(member.dirichlet_nodes)
        n_measure = mesh.measure(member.neumann_nodes)
        if member.dirichlet_nodes & member.neumann_nodes:
            partition_exact = False
            failures.append(f"alpha={member.alpha}: Dirichlet and Neumann sets overlap")
        if member.dirichlet_nodes | member.neumann_nodes != mesh.boundary_nodes:
            partition_exact = False
            failures.append(f"alpha={member.alpha}: tags do not cover the boundary")
        if abs(d_measure + n_measure - total) > 1e-9 * total:
            partition_exact = False
            failures.append(f"alpha={member.alpha}: |Σ_D|+|Σ_N|={d_measure + n_measure} != |∂Ω|={total}")

        error = abs(d_measure - member.alpha)
        measure_errors.append(error)
        if error > cell + 1e-12:
            failures.append(f"alpha={member.alpha}: |Σ_D|={d_measure} misses alpha by more than one cell ({cell})")

        components = count_components(mesh, member.dirichlet_nodes)
        component_counts.append(components)
        if components > max_components:
            failures.append(f"alpha={member.alpha}: {components} Dirichlet components exceed {max_components}")

    report = FamilyReport(nested, partition_exact, measure_errors, component_counts, failures)
    if failures:
        logger.warning(f"Partition family check failed: {failures}")
    else:
        logger.info(f"Partition family of {len(family.members)} members is nested and measure-accurate")
    return report


def load_mesh_and_partition(data: Dict[str, Any]) -> Tuple[MeshedDomain, BoundaryPartition]:
    """Rebuild a mesh/partition pair from its JSON form (rebuild is deterministic)."""
    spec = DomainSpec(**data["mesh"]["spec"])
    mesh = build_mesh(spec)
    part = data["partition"]
    return mesh, build_partition(mesh, part["alpha"], part["layout"])


def describe(mesh: MeshedDomain, partition: Optional[BoundaryPartition] = None) -> Dict[str, Any]:
    payload: Dict[str, Any] = {"mesh": mesh.to_dict()}
    if partition is not None:
        payload["partition"] = partition.to_dict()
    return payload


if __name__ == "__main__":
    from src.utils.logging_config import setup_logging

    setup_logging()
    logger.info("=" * 70)
    logger.info("MESH AND PARTITION DEMO")
    logger.info("=" * 70)

    demo = build_mesh(DomainSpec("rectangle", (1.0, 1.0), (17, 17)))
    family = build_family(demo, [0.25, 0.5, 1.0, 2.0], "grow-from-corner")
    for member in family.members:
        logger.info(f"alpha={member.alpha}: {len(member.dirichlet_nodes)} Dirichlet nodes")
    logger.info(f"Family report: {validate_family(family).to_dict()}")
