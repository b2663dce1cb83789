"""Projective partitions, partition states and classical states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    DEFAULT_TOL,
    DimensionError,
    adjoint,
    as_matrix,
    haar_random_unitary,
    hs_norm,
    identity,
    is_projector,
    matrix_from_json,
    matrix_to_json,
)


class PartitionError(ValueError):
    """A list of matrices is not a projective partition."""


class NotAProjector(PartitionError):
    def __init__(self, mu: int):
        self.mu = mu
        super().__init__(f"matrix {mu} is not an orthogonal projector")


class NotOrthogonal(PartitionError):
    def __init__(self, mu: int, nu: int, residual: float):
        self.mu, self.nu, self.residual = mu, nu, residual
        super().__init__(
            f"projectors {mu} and {nu} are not orthogonal (||P_{mu} P_{nu}|| = {residual:.3g})"
        )


class NotComplete(PartitionError):
    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"projectors do not sum to identity (residual norm {residual:.3g})")


class NotADensity(ValueError):
    """Matrix fails one of the density operator conditions."""


@dataclass(frozen=True, eq=False)
class ProjectivePartition:
    """A validated, ordered list of orthogonal projectors summing to identity.

    Build instances through :func:`validate_partition` or
    :func:`partition_from_basis_groups`; the raw constructor trusts its input.
    """

    projectors: tuple[np.ndarray, ...]
    ranks: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def m(self) -> int:
        return len(self.projectors)

    def __len__(self) -> int:
        return len(self.projectors)

    def __getitem__(self, mu: int) -> np.ndarray:
        return self.projectors[mu]

    def stacked(self) -> np.ndarray:
        """Projectors as one ``(m, d, d)`` array."""
        return np.stack(self.projectors)

    def to_json(self) -> dict:
        return {"dim": self.dim, "projectors": [matrix_to_json(p) for p in self.projectors]}


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def validated(cls, a, tol: float = DEFAULT_TOL) -> "DensityOperator":
        """Check Hermiticity, unit trace and positivity before wrapping."""
        m = as_matrix(a)
        if hs_norm(m - adjoint(m)) > tol:
            raise NotADensity("matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > tol:
            raise NotADensity(f"trace is {tr.real:.6g}, expected 1")
        lo = float(np.linalg.eigvalsh((m + adjoint(m)) / 2)[0])
        if lo < -tol:
            raise NotADensity(f"smallest eigenvalue {lo:.3g} is negative")
        return cls(m)

    def to_json(self) -> dict:
        return {"type": "density", **matrix_to_json(self.matrix)}


def density_matrix(rho) -> np.ndarray:
    """Underlying matrix of a :class:`DensityOperator` or array-like."""
    if isinstance(rho, DensityOperator):
        return rho.matrix
    return as_matrix(rho)


def validate_partition(projectors, tol: float = DEFAULT_TOL) -> ProjectivePartition:
    """Validate a list of matrices as a projective partition.

    Raises the first violated condition, checked in the order: projector
    property per index, pairwise orthogonality per (mu, nu), completeness,
    integral traces.
    """
    mats = [as_matrix(p) for p in projectors]
    if not mats:
        raise PartitionError("a partition needs at least one projector")
    d = mats[0].shape[0]
    for mu, p in enumerate(mats):
        if p.shape[0] != d:
            raise DimensionError(f"projector {mu} has dim {p.shape[0]}, expected {d}")
    for mu, p in enumerate(mats):
        if not is_projector(p, tol):
            raise NotAProjector(mu)
    for mu in range(len(mats)):
        for nu in range(mu + 1, len(mats)):
            r = hs_norm(mats[mu] @ mats[nu])
            if r > tol:
                raise NotOrthogonal(mu, nu, r)
    total = sum(mats[1:], mats[0].copy())
    r = hs_norm(total - identity(d))
    if r > tol:
        raise NotComplete(r)
    ranks = []
    for mu, p in enumerate(mats):
        tr = float(np.trace(p).real)
        rank = int(round(tr))
        if abs(tr - rank) > tol or rank < 1:
            raise NotAProjector(mu)
        ranks.append(rank)
    if sum(ranks) != d:
        raise NotComplete(abs(sum(ranks) - d))
    return ProjectivePartition(tuple(mats), tuple(ranks))


def partition_from_basis_groups(d: int, groups) -> ProjectivePartition:
    """Partition whose projectors are sums of computational basis projectors."""
    seen: set[int] = set()
    norm_groups = []
    for g in groups:
        g = [int(i) for i in g]
        if not g:
            raise PartitionError("empty basis group")
        for i in g:
            if not 0 <= i < d:
                raise PartitionError(f"basis index {i} out of range for d={d}")
            if i in seen:
                raise PartitionError(f"basis index {i} appears in more than one group")
            seen.add(i)
        norm_groups.append(g)
    if len(seen) != d:
        missing = sorted(set(range(d)) - seen)
        raise PartitionError(f"basis groups do not cover indices {missing}")
    projs = []
    for g in norm_groups:
        p = np.zeros((d, d), dtype=np.complex128)
        p[g, g] = 1.0
        projs.append(p)
    return validate_partition(projs, tol=0.0)


def fine_grained_partition(d: int) -> ProjectivePartition:
    return partition_from_basis_groups(d, [[i] for i in range(d)])


def rotate_partition(p: ProjectivePartition, v) -> ProjectivePartition:
    """Conjugate every projector by the unitary ``v``."""
    v = as_matrix(v)
    vd = adjoint(v)
    return validate_partition([v @ q @ vd for q in p.projectors], tol=1e-9)


def random_partition(d: int, seed=None, m: int | None = None, rotate: bool = True) -> ProjectivePartition:
    """Random partition into ``m`` blocks (random if None), optionally rotated by a Haar unitary."""
    rng = np.random.default_rng(seed)
    if m is None:
        m = int(rng.integers(1, d + 1))
    if not 1 <= m <= d:
        raise ValueError(f"need 1 <= m <= d, got m={m}, d={d}")
    perm = rng.permutation(d)
    cuts = np.sort(rng.choice(np.arange(1, d), size=m - 1, replace=False)) if m > 1 else []
    groups = [g.tolist() for g in np.split(perm, cuts)]
    p = partition_from_basis_groups(d, groups)
    if rotate:
        p = rotate_partition(p, haar_random_unitary(d, rng))
    return p


def is_fine_grained(p: ProjectivePartition) -> bool:
    return all(r == 1 for r in p.ranks)


def partition_states(p: ProjectivePartition) -> list[DensityOperator]:
    return [DensityOperator(q / r) for q, r in zip(p.projectors, p.ranks)]


def project_classical(rho, p: ProjectivePartition) -> DensityOperator:
    """Block-diagonal part sum_mu P_mu rho P_mu."""
    r = density_matrix(rho)
    if r.shape[0] != p.dim:
        raise DimensionError(f"state has dim {r.shape[0]}, partition has dim {p.dim}")
    return DensityOperator(sum(q @ r @ q for q in p.projectors))


def is_classical(rho, p: ProjectivePartition, tol: float = DEFAULT_TOL) -> bool:
    r = density_matrix(rho)
    return hs_norm(r - project_classical(r, p).matrix) <= tol


def random_density(d: int, seed=None) -> DensityOperator:
    """Sample from the Hilbert-Schmidt measure as G G^dagger / Tr(G G^dagger)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    w = g @ adjoint(g)
    w = (w + adjoint(w)) / 2
    return DensityOperator(w / np.trace(w).real)


def random_classical_density(p: ProjectivePartition, seed=None) -> DensityOperator:
    return project_classical(random_density(p.dim, seed), p)


def partition_from_json(obj, tol: float = DEFAULT_TOL) -> ProjectivePartition:
    if not isinstance(obj, dict):
        raise ValueError("partition JSON must be an object")
    if "basis_groups" in obj:
        if "dim" not in obj:
            raise ValueError("'basis_groups' partitions need a 'dim' field")
        return partition_from_basis_groups(int(obj["dim"]), obj["basis_groups"])
    if "projectors" in obj:
        mats = [matrix_from_json(m) for m in obj["projectors"]]
        if "dim" in obj and any(m.shape[0] != obj["dim"] for m in mats):
            raise DimensionError("projector dimension disagrees with 'dim'")
        return validate_partition(mats, tol)
    raise ValueError("partition JSON needs 'projectors' or 'basis_groups'")


def density_from_json(obj, tol: float = DEFAULT_TOL) -> DensityOperator:
    return DensityOperator.validated(matrix_from_json(obj), tol)
