"""Histories, class and branch operators, and the decoherence functional.

A history of length k is a tuple ``(a_1, ..., a_k)`` of partition indices,
``a_1`` being the earliest time. Histories are ordered lexicographically and
carry an integer code: the base-m number with ``a_1`` as the most significant
digit.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, adjoint, as_matrix
from .partition import ProjectivePartition, density_matrix

DEFAULT_BUDGET = 2**20
BUDGET_ENV = "HISTCHECK_BUDGET"
PRUNE_NORM = 1e-14
P_NULL = 1e-12

History = tuple[int, ...]


class BudgetExceeded(RuntimeError):
    def __init__(self, count: int, budget: int):
        self.count, self.budget = count, budget
        super().__init__(f"{count} histories exceed the enumeration budget of {budget}")


def history_budget(budget: int | None = None) -> int:
    """Explicit budget, else $HISTCHECK_BUDGET, else 2**20."""
    if budget is not None:
        return int(budget)
    env = os.environ.get(BUDGET_ENV)
    return int(env) if env else DEFAULT_BUDGET


def check_budget(m: int, k: int, budget: int | None = None) -> int:
    n = m**k
    cap = history_budget(budget)
    if n > cap:
        raise BudgetExceeded(n, cap)
    return n


def enumerate_histories(m: int, k: int, budget: int | None = None):
    if m < 1 or k < 1:
        raise ValueError("m and k must be positive")
    check_budget(m, k, budget)
    return itertools.product(range(m), repeat=k)


def history_code(h, m: int) -> int:
    code = 0
    for a in h:
        code = code * m + int(a)
    return code


def history_from_code(code: int, m: int, k: int) -> History:
    out = []
    for _ in range(k):
        code, a = divmod(code, m)
        out.append(a)
    return tuple(reversed(out))


def _check_history(h, p: ProjectivePartition) -> History:
    h = tuple(int(a) for a in h)
    if not h:
        raise ValueError("a history needs at least one time step")
    for a in h:
        if not 0 <= a < p.m:
            raise ValueError(f"history index {a} out of range for m={p.m}")
    return h


def _check_dims(u, p: ProjectivePartition) -> np.ndarray:
    u = as_matrix(u)
    if u.shape[0] != p.dim:
        raise DimensionError(f"unitary has dim {u.shape[0]}, partition has dim {p.dim}")
    return u


def branch_operator(h, u, p: ProjectivePartition) -> np.ndarray:
    """P_{a_k} U ... P_{a_2} U P_{a_1} U."""
    h = _check_history(h, p)
    u = _check_dims(u, p)
    b = np.eye(p.dim, dtype=np.complex128)
    for a in h:
        b = p[a] @ u @ b
    return b


def class_operator(h, u, p: ProjectivePartition) -> np.ndarray:
    """Heisenberg-picture class operator (U^dagger)^k times the branch operator."""
    h = _check_history(h, p)
    u = _check_dims(u, p)
    ud_k = np.linalg.matrix_power(adjoint(u), len(h))
    return ud_k @ branch_operator(h, u, p)


def decoherence_functional(h_a, h_b, u, p: ProjectivePartition, rho) -> complex:
    """Tr[C_a rho C_b^dagger], evaluated through branch operators."""
    if len(h_a) != len(h_b):
        raise ValueError("histories must have equal length")
    r = density_matrix(rho)
    if r.shape[0] != p.dim:
        raise DimensionError(f"state has dim {r.shape[0]}, partition has dim {p.dim}")
    ba = branch_operator(h_a, u, p)
    bb = branch_operator(h_b, u, p)
    return complex(np.trace(ba @ r @ adjoint(bb)))


def branch_operators(u, p: ProjectivePartition, k: int, budget: int | None = None) -> np.ndarray:
    """All m**k branch operators, shape ``(m**k, d, d)``, in code order.

    Built level by level along the prefix tree, so every length-j prefix
    product is formed once. A prefix with norm <= 1e-14 is kept as an exact
    zero and its subtree is never multiplied out.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    u = _check_dims(u, p)
    check_budget(p.m, k, budget)
    d, m = p.dim, p.m
    step = p.stacked() @ u  # (m, d, d): P_a U
    level = step.copy()
    for _ in range(k - 1):
        alive = np.sqrt(np.sum(np.abs(level) ** 2, axis=(1, 2))) > PRUNE_NORM
        nxt = np.zeros((len(level), m, d, d), dtype=np.complex128)
        if alive.any():
            nxt[alive] = np.matmul(step[np.newaxis], level[alive][:, np.newaxis])
        level = nxt.reshape(len(level) * m, d, d)
    return level


@dataclass(frozen=True, eq=False)
class DecoherenceGram:
    """Decoherence functional over all pairs of length-k histories.

    ``entries[a, b]`` is D[h_a, h_b] with a, b history codes.
    """

    k: int
    m: int
    entries: np.ndarray

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def history(self, code: int) -> History:
        return history_from_code(code, self.m, self.k)

    def code(self, h) -> int:
        return history_code(h, self.m)

    def __getitem__(self, pair) -> complex:
        a, b = pair
        if isinstance(a, tuple):
            a = self.code(a)
        if isinstance(b, tuple):
            b = self.code(b)
        return complex(self.entries[a, b])

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.entries))

    def invariant_report(self) -> dict:
        """Deviations from the structural identities every Gram must satisfy."""
        e = self.entries
        diag = np.diag(e)
        off = e - np.diag(diag)
        dg = np.real(diag)
        geo = np.sqrt(np.clip(np.outer(dg, dg), 0.0, None))
        ari = 0.5 * (dg[:, None] + dg[None, :])
        return {
            "hermiticity": float(np.max(np.abs(e - np.conj(e.T)))),
            "min_diagonal": float(np.min(dg)),
            "diagonal_imag": float(np.max(np.abs(np.imag(diag)))),
            "total_sum_error": float(abs(np.sum(e) - 1.0)),
            "max_offdiagonal": float(np.max(np.abs(off))) if e.shape[0] > 1 else 0.0,
            "am_gm_excess": float(np.max(geo - ari)),
        }

    def to_json(self, export_threshold: float = 1e-14) -> dict:
        a, b = np.nonzero(np.abs(self.entries) > export_threshold)
        return {
            "k": self.k,
            "m": self.m,
            "entries": [
                [int(i), int(j), float(self.entries[i, j].real), float(self.entries[i, j].imag)]
                for i, j in zip(a, b)
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "DecoherenceGram":
        k, m = int(obj["k"]), int(obj["m"])
        n = m**k
        e = np.zeros((n, n), dtype=np.complex128)
        for i, j, re, im in obj["entries"]:
            e[int(i), int(j)] = complex(re, im)
        return cls(k, m, e)


def full_gram(u, p: ProjectivePartition, rho, k: int, budget: int | None = None) -> DecoherenceGram:
    r = density_matrix(rho)
    if r.shape[0] != p.dim:
        raise DimensionError(f"state has dim {r.shape[0]}, partition has dim {p.dim}")
    b = branch_operators(u, p, k, budget)
    n, d = b.shape[0], p.dim
    # D[a, b] = Tr[B_a rho B_b^dagger] = sum_ij (B_a rho)_ij conj(B_b)_ij
    left = (b @ r).reshape(n, d * d)
    right = b.reshape(n, d * d)
    return DecoherenceGram(k, p.m, left @ np.conj(right).T)


def probabilities(g: DecoherenceGram) -> np.ndarray:
    """Diagonal of the Gram; tiny negative rounding is clamped to zero."""
    p = g.diagonal.copy()
    if p.size and p.min() < -1e-9:
        raise ValueError(f"diagonal entry {p.min():.3g} is negative; the Gram is corrupted")
    return np.clip(p, 0.0, None)


@dataclass
class CoarseGrainResult:
    max_violation: float
    worst_group: int
    violations: list[float]


def coarse_grain_check(g: DecoherenceGram, grouping) -> CoarseGrainResult:
    """Interference term of each coarse-grained history.

    For every group G of history codes (or history tuples) this is
    |sum_{a,b in G} D[a,b] - sum_{a in G} D[a,a]|, i.e. the amount by which the
    probability of the union differs from the sum of its members.
    """
    n = g.size
    groups = []
    seen = np.zeros(n, dtype=bool)
    for grp in grouping:
        codes = [g.code(h) if isinstance(h, (tuple, list)) else int(h) for h in grp]
        if not codes:
            raise ValueError("empty group")
        for c in codes:
            if not 0 <= c < n:
                raise ValueError(f"history code {c} out of range")
            if seen[c]:
                raise ValueError(f"history code {c} appears in more than one group")
            seen[c] = True
        groups.append(codes)
    if not seen.all():
        raise ValueError("grouping does not cover every history")
    vio = []
    for codes in groups:
        block = g.entries[np.ix_(codes, codes)]
        vio.append(float(abs(block.sum() - np.trace(block))))
    worst = int(np.argmax(vio))
    return CoarseGrainResult(vio[worst], worst, vio)
