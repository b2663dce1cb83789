"""Decoherence criteria for histories over a fixed partition.

Every check returns a :class:`CheckReport`. Conditions quantified over all
times n are only checked up to a finite horizon ``n_max``; reports say so in
``horizon_note``. Strict inequalities are kept strict: equality at the
threshold is a failure.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .histories import P_NULL, DecoherenceGram, full_gram, history_from_code
from .linalg import DEFAULT_TOL, adjoint, as_matrix, hs_norm
from .partition import (
    ProjectivePartition,
    partition_states,
    random_classical_density,
    random_density,
)

DEFAULT_N_MAX = 64
_TIE_RTOL = 1e-12


class InternalInconsistency(RuntimeError):
    """Two algebraically identical evaluations disagreed."""


@dataclass(frozen=True)
class Epsilon:
    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (0.0 < v < 1.0) or math.isnan(v):
            raise ValueError(f"epsilon must lie in (0, 1), got {self.value}")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


def _eps(eps) -> float:
    return eps.value if isinstance(eps, Epsilon) else Epsilon(eps).value


@dataclass
class CheckReport:
    check: str
    verdict: str
    worst_value: float
    witness: dict | None = None
    params: dict = field(default_factory=dict)
    horizon_note: str = ""
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == "fail" and self.witness is None:
            raise ValueError("a failing report needs a witness")
        self.worst_value = max(0.0, float(self.worst_value))

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def __bool__(self) -> bool:
        return self.passed

    def to_dict(self, include_data: bool = True) -> dict:
        d = asdict(self)
        if not include_data:
            d.pop("data")
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "CheckReport":
        return cls(
            check=d["check"],
            verdict=d["verdict"],
            worst_value=d["worst_value"],
            witness=d.get("witness"),
            params=d.get("params", {}),
            horizon_note=d.get("horizon_note", ""),
            data=d.get("data", {}),
        )


def _first_max(values: np.ndarray) -> tuple[int, float]:
    """Flat index of the first entry that ties the maximum, and the maximum.

    Ties are judged up to a relative 1e-12 so the witness does not depend on
    last-bit rounding.
    """
    flat = values.ravel()
    top = float(flat.max())
    idx = int(np.flatnonzero(flat >= top - _TIE_RTOL * max(1.0, abs(top)))[0])
    return idx, top


def _pair_witness(g: DecoherenceGram, a: int, b: int) -> dict:
    return {
        "alpha": list(history_from_code(a, g.m, g.k)),
        "beta": list(history_from_code(b, g.m, g.k)),
        "alpha_code": a,
        "beta_code": b,
        "value": [float(g.entries[a, b].real), float(g.entries[a, b].imag)],
    }


def _horizon(n_max: int) -> str:
    return f"pass up to horizon n_max={n_max}; larger n are not checked"


def _k_horizon(k_max: int) -> str:
    return f"histories checked for k <= {k_max} only"


# -- exact decoherence ----------------------------------------------------


def exact_report_from_gram(g: DecoherenceGram, tol: float, params: dict | None = None) -> CheckReport:
    off = np.abs(g.entries)
    np.fill_diagonal(off, -1.0)
    params = {"k": g.k, "tol": tol, **(params or {})}
    if g.size == 1:
        return CheckReport("exact", "pass", 0.0, None, params)
    idx, top = _first_max(off)
    a, b = divmod(idx, g.size)
    ok = top <= tol
    return CheckReport("exact", "pass" if ok else "fail", top, _pair_witness(g, a, b), params)


def check_exact(u, p: ProjectivePartition, rho, k: int, tol: float = DEFAULT_TOL, budget=None) -> CheckReport:
    """Medium decoherence: every off-diagonal |D[a, b]| <= tol."""
    return exact_report_from_gram(full_gram(u, p, rho, k, budget), tol)


def _exact_over_states(name, u, p, states, k_max, tol, budget, labels) -> CheckReport:
    worst, witness, failed = 0.0, None, None
    for label, rho in zip(labels, states):
        for k in range(1, k_max + 1):
            r = check_exact(u, p, rho, k, tol, budget)
            if r.worst_value > worst or witness is None:
                worst, witness = r.worst_value, {"state": label, "k": k, **(r.witness or {})}
            if not r.passed and failed is None:
                failed = {"state": label, "k": k, **r.witness}
    params = {"k_max": k_max, "tol": tol, "states": len(labels)}
    if failed is not None:
        return CheckReport(name, "fail", worst, failed, params, _k_horizon(k_max))
    return CheckReport(name, "pass", worst, witness, params, _k_horizon(k_max))


def check_exact_all_partition_states(u, p: ProjectivePartition, k_max: int, tol: float = DEFAULT_TOL, budget=None) -> CheckReport:
    """Exact decoherence for every partition state and every k <= k_max.

    The witness of a failure is the first (state, k, pair) found; worst_value
    is the largest off-diagonal modulus over the whole sweep.
    """
    states = partition_states(p)
    return _exact_over_states(
        "exact_all_partition_states", u, p, states, k_max, tol, budget,
        [{"kind": "partition", "nu": nu} for nu in range(p.m)],
    )


def check_exact_all_states(u, p: ProjectivePartition, k_max: int, trials: int = 50, tol: float = DEFAULT_TOL, seed=None, budget=None) -> CheckReport:
    """Sampled version of exact decoherence for arbitrary initial states.

    Runs over all partition states, ``trials`` Hilbert-Schmidt random
    densities and ``trials`` random classical (block-diagonal) states.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    states = list(partition_states(p))
    labels = [{"kind": "partition", "nu": nu} for nu in range(p.m)]
    for t in range(trials):
        states.append(random_density(p.dim, rng))
        labels.append({"kind": "random", "trial": t})
    for t in range(trials):
        states.append(random_classical_density(p, rng))
        labels.append({"kind": "classical", "trial": t})
    r = _exact_over_states("exact_all_states", u, p, states, k_max, tol, budget, labels)
    r.params["trials"] = trials
    r.horizon_note += "; arbitrary states are sampled, not exhausted"
    return r


# -- commutator conditions ------------------------------------------------


def evolved_projectors(u, p: ProjectivePartition, n_max: int) -> np.ndarray:
    """``out[n-1, mu] = U^n P_mu (U^dagger)^n`` for 1 <= n <= n_max."""
    u = as_matrix(u)
    ud = adjoint(u)
    projs = p.stacked()
    out = np.empty((n_max, p.m, p.dim, p.dim), dtype=np.complex128)
    un = np.eye(p.dim, dtype=np.complex128)
    und = un.copy()
    for n in range(n_max):
        un = u @ un
        und = und @ ud
        out[n] = un[np.newaxis] @ projs @ und[np.newaxis]
    return out


def commutator_table(u, p: ProjectivePartition, n_max: int) -> np.ndarray:
    """``c[n-1, mu1, mu2] = ||[U^n P_mu1 U^dagger^n, P_mu2]||_2``."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    q = evolved_projectors(u, p, n_max)[:, :, np.newaxis]  # (n, mu1, 1, d, d)
    projs = p.stacked()[np.newaxis, np.newaxis]  # (1, 1, mu2, d, d)
    comm = q @ projs - projs @ q
    return np.sqrt(np.sum(np.abs(comm) ** 2, axis=(-2, -1)))


def _triple_witness(idx: int, shape) -> dict:
    n, a, b = np.unravel_index(idx, shape)
    return {"n": int(n) + 1, "mu1": int(a), "mu2": int(b)}


def check_commutators(u, p: ProjectivePartition, n_max: int = DEFAULT_N_MAX, tol: float = DEFAULT_TOL) -> CheckReport:
    """[U^n P_mu1 U^dagger^n, P_mu2] = 0 for all pairs and 1 <= n <= n_max.

    n_max=1 is the single-iteration necessary condition. The full table of
    norms is returned in ``data["table"]`` indexed [n-1][mu1][mu2].
    """
    c = commutator_table(u, p, n_max)
    idx, top = _first_max(c)
    ok = top <= tol
    return CheckReport(
        "commutators",
        "pass" if ok else "fail",
        top,
        _triple_witness(idx, c.shape),
        {"n_max": n_max, "tol": tol},
        _horizon(n_max),
        {"table": c.tolist()},
    )


def _block_frame(q: np.ndarray, rank: int) -> np.ndarray:
    # eigenvectors of a projector with eigenvalue ~1 span its range
    _, vecs = np.linalg.eigh((q + adjoint(q)) / 2)
    return vecs[:, -rank:]


def check_classicality_preservation(u, p: ProjectivePartition, tol: float = DEFAULT_TOL) -> CheckReport:
    """Does U map every block-diagonal state to a block-diagonal state?

    The condition is linear in the state, so it suffices to check the matrix
    units |e_i><e_j| of every block: each image U |e_i><e_j| U^dagger must
    have no weight outside the diagonal blocks.
    """
    u = as_matrix(u)
    ud = adjoint(u)
    projs = p.stacked()
    worst, wit = -1.0, None
    for mu, (q, rank) in enumerate(zip(p.projectors, p.ranks)):
        frame = u @ _block_frame(q, rank)
        for i in range(rank):
            for j in range(rank):
                x = np.outer(frame[:, i], np.conj(frame[:, j]))
                resid = hs_norm(x - np.sum(projs @ x @ projs, axis=0))
                if resid > worst + _TIE_RTOL * max(1.0, worst):
                    worst, wit = resid, {"mu": mu, "i": i, "j": j}
    ok = worst <= tol
    return CheckReport("classicality_preservation", "pass" if ok else "fail", worst, wit, {"tol": tol})


# -- approximate decoherence ----------------------------------------------


def approx_report_from_gram(
    g: DecoherenceGram,
    eps,
    *,
    divisor: float = 1.0,
    real_part_only: bool = False,
    p_null: float = P_NULL,
    name: str = "approx_dh",
) -> CheckReport:
    """|D[a,b]| < eps * sqrt(D[a,a] D[b,b]) / divisor for all a != b.

    Pairs where either diagonal is <= p_null are excluded from the ratio and
    must instead satisfy |D[a,b]| <= eps * p_null.
    """
    e = _eps(eps)
    n = g.size
    diag = g.diagonal
    lhs = np.abs(g.entries.real) if real_part_only else np.abs(g.entries)
    rhs = e * np.sqrt(np.clip(np.outer(diag, diag), 0.0, None)) / divisor
    live = diag > p_null
    ratio_mask = np.outer(live, live)
    np.fill_diagonal(ratio_mask, False)
    null_mask = ~np.outer(live, live)
    np.fill_diagonal(null_mask, False)

    params = {"k": g.k, "eps": e, "divisor": divisor, "real_part_only": real_part_only, "p_null": p_null}
    data = {"skipped_pairs": int(null_mask.sum())}

    ratio = np.zeros_like(lhs)
    ratio[ratio_mask] = lhs[ratio_mask] / rhs[ratio_mask]
    bad_ratio = ratio_mask & ~(lhs < rhs)
    bad_null = null_mask & (lhs > e * p_null)
    data["null_fallback_worst"] = float(lhs[null_mask].max()) if null_mask.any() else 0.0

    if n == 1:
        return CheckReport(name, "pass", 0.0, None, params, data=data)
    if bad_ratio.any():
        idx, top = _first_max(np.where(bad_ratio, ratio, -np.inf))
        a, b = divmod(idx, n)
        w = _pair_witness(g, a, b)
        w["ratio"] = float(ratio[a, b])
        return CheckReport(name, "fail", float(ratio.max()), w, params, data=data)
    if bad_null.any():
        idx, _ = _first_max(np.where(bad_null, lhs, -np.inf))
        a, b = divmod(idx, n)
        w = _pair_witness(g, a, b)
        w["null_pair"] = True
        return CheckReport(name, "fail", float(ratio.max()), w, params, data=data)
    wit = None
    if ratio_mask.any():
        idx, _ = _first_max(ratio)
        a, b = divmod(idx, n)
        wit = _pair_witness(g, a, b)
        wit["ratio"] = float(ratio[a, b])
    return CheckReport(name, "pass", float(ratio.max()), wit, params, data=data)


def check_approx_dh(u, p: ProjectivePartition, rho, k: int, eps, real_part_only: bool = False, p_null: float = P_NULL, budget=None) -> CheckReport:
    """Approximate decoherence |D[a,b]| < eps * sqrt(D[a,a] D[b,b]).

    With ``real_part_only`` the weaker variant bounding |Re D[a,b]| is used.
    worst_value is the largest ratio lhs / rhs over non-null pairs.
    """
    g = full_gram(u, p, rho, k, budget)
    name = "approx_dh_re" if real_part_only else "approx_dh"
    return approx_report_from_gram(g, eps, real_part_only=real_part_only, p_null=p_null, name=name)


def check_approx_strong(u, p: ProjectivePartition, rho, k: int, eps, p_null: float = P_NULL, budget=None) -> CheckReport:
    """Like :func:`check_approx_dh` with the bound divided by the history count m**k."""
    g = full_gram(u, p, rho, k, budget)
    return approx_report_from_gram(g, eps, divisor=float(g.size), p_null=p_null, name="approx_strong")


def loop_terms(u, p: ProjectivePartition, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Trace and norm forms of the loop condition.

    Returns ``(trace, norm)`` with shape (n_max, m, m, m) indexed
    [n-1, mu0, mu1, mu2]:
    trace = |Tr[P2 Q P1 Q P2]|, norm = ||P1 Q P2||_2, Q = U^n P_mu0 U^dagger^n.
    """
    q = evolved_projectors(u, p, n_max)[:, :, None, None]  # (n, mu0, 1, 1, d, d)
    projs = p.stacked()
    p1 = projs[None, None, :, None]
    p2 = projs[None, None, None, :]
    sandwich = p1 @ q @ p2  # P1 Q P2
    norm = np.sqrt(np.sum(np.abs(sandwich) ** 2, axis=(-2, -1)))
    loop = p2 @ q @ p1 @ q @ p2
    trace = np.abs(np.trace(loop, axis1=-2, axis2=-1))
    return trace, norm


def check_loop_condition(u, p: ProjectivePartition, n_max: int, eps) -> CheckReport:
    """|Tr[P2 Q P1 Q P2]| < d eps for mu1 != mu2, with Q = U^n P_mu0 U^dagger^n.

    The equivalent form ||P1 Q P2||_2 < sqrt(d eps) is evaluated alongside;
    the trace is the squared norm, so disagreement means a bug.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    e = _eps(eps)
    d, m = p.dim, p.m
    params = {"n_max": n_max, "eps": e, "threshold": d * e, "norm_threshold": math.sqrt(d * e)}
    if m < 2:
        return CheckReport("loop_condition", "pass", 0.0, None, params, _horizon(n_max))
    trace, norm = loop_terms(u, p, n_max)
    gap = float(np.max(np.abs(trace - norm**2)))
    if gap > 1e-9:
        raise InternalInconsistency(f"trace and squared-norm forms differ by {gap:.3g}")
    offdiag = ~np.eye(m, dtype=bool)[None, None]
    masked = np.where(np.broadcast_to(offdiag, trace.shape), trace, -np.inf)
    idx, top = _first_max(masked)
    n, mu0, mu1, mu2 = np.unravel_index(idx, trace.shape)
    wit = {"n": int(n) + 1, "mu0": int(mu0), "mu1": int(mu1), "mu2": int(mu2),
           "norm": float(norm[n, mu0, mu1, mu2])}
    norm_top = float(np.max(np.where(np.broadcast_to(offdiag, norm.shape), norm, 0.0)))
    ok = top < d * e and norm_top < math.sqrt(d * e)
    return CheckReport(
        "loop_condition", "pass" if ok else "fail", top, wit, params, _horizon(n_max),
        {"form_gap": gap, "worst_norm": norm_top},
    )


def theorem2_threshold(d: int, eps) -> float:
    return 2.0 * d**1.5 * math.sqrt(_eps(eps))


def check_theorem2_bound(u, p: ProjectivePartition, n_max: int, eps) -> CheckReport:
    """Commutator norms against the approximate-decoherence bound 2 d^{3/2} sqrt(eps).

    Also reports the intermediate bound 2 (m-1) sqrt(d eps), where m-1 counts
    the blocks mu1 != mu2 summed over when bounding the commutator.
    """
    e = _eps(eps)
    d, m = p.dim, p.m
    c = commutator_table(u, p, n_max)
    idx, top = _first_max(c)
    thr = theorem2_threshold(d, e)
    ok = top < thr
    return CheckReport(
        "commutator_bound", "pass" if ok else "fail", top, _triple_witness(idx, c.shape),
        {"n_max": n_max, "eps": e, "threshold": thr, "pair_sum_bound": 2.0 * (m - 1) * math.sqrt(d * e)},
        _horizon(n_max),
        {"table": c.tolist()},
    )
