"""Ensemble experiments relating decoherence of histories to commutation of projectors.

Each trial draws a unitary (and possibly a rotated partition) from an
:class:`Ensemble`, runs the finite-horizon versions of the relevant
conditions, and records whether the implications between them held. A trial
seed is derived from ``(master_seed, trial_index)`` only, so any trial can be
replayed on its own and the trial set does not depend on execution order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import criteria
from .histories import check_budget, full_gram, history_from_code
from .linalg import haar_random_unitary, hs_norm, matrix_to_json
from .partition import (
    ProjectivePartition,
    fine_grained_partition,
    partition_from_basis_groups,
    partition_states,
    rotate_partition,
)

ENSEMBLE_KINDS = ("haar", "permutation", "block_diagonal", "diagonal_phase")


@dataclass(frozen=True)
class Ensemble:
    """A menu of random unitaries over a basis-group partition.

    ``groups=None`` means the fine-grained computational partition. With
    ``rotate`` both U and the partition are conjugated by one Haar unitary,
    which preserves every commutation relation between them.
    """

    kind: str
    d: int
    trials: int = 100
    seed: int = 0
    groups: tuple[tuple[int, ...], ...] | None = None
    rotate: bool = False

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble {self.kind!r}; choose from {ENSEMBLE_KINDS}")
        if self.d < 1 or self.trials < 1:
            raise ValueError("d and trials must be positive")
        if self.groups is not None:
            object.__setattr__(self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups))

    def base_partition(self) -> ProjectivePartition:
        if self.groups is None:
            return fine_grained_partition(self.d)
        return partition_from_basis_groups(self.d, self.groups)

    @property
    def m(self) -> int:
        return self.d if self.groups is None else len(self.groups)

    def trial_rng(self, trial: int, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, trial, stream]))

    def sample(self, trial: int) -> tuple[np.ndarray, ProjectivePartition]:
        rng = self.trial_rng(trial)
        p = self.base_partition()
        d = self.d
        if self.kind == "haar":
            u = haar_random_unitary(d, rng)
        elif self.kind == "permutation":
            u = np.zeros((d, d), dtype=np.complex128)
            u[rng.permutation(d), np.arange(d)] = 1.0
        elif self.kind == "diagonal_phase":
            u = np.diag(np.exp(2j * np.pi * rng.random(d)))
        else:
            u = np.zeros((d, d), dtype=np.complex128)
            for q in p.projectors:
                idx = np.flatnonzero(np.abs(np.diag(q)) > 0.5)
                u[np.ix_(idx, idx)] = haar_random_unitary(len(idx), rng)
        if self.rotate:
            v = haar_random_unitary(d, rng)
            u = v @ u @ np.conj(v).T
            p = rotate_partition(p, v)
        return u, p

    def to_dict(self) -> dict:
        d = asdict(self)
        d["groups"] = None if self.groups is None else [list(g) for g in self.groups]
        return d


def _instance(ens: Ensemble, trial: int, u, p: ProjectivePartition) -> dict:
    return {
        "ensemble": ens.to_dict(),
        "trial": trial,
        "unitary": matrix_to_json(u),
        "partition": p.to_json(),
    }


def _brief(r: criteria.CheckReport) -> dict:
    return r.to_dict(include_data=False)


@dataclass
class ExperimentResult:
    experiment: str
    ensemble: Ensemble
    params: dict
    trials: list[dict] = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    violations: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "record": "summary",
            "experiment": self.experiment,
            "ensemble": self.ensemble.to_dict(),
            "params": self.params,
            "counts": self.counts,
            "violations": len(self.violations),
            "violation_instances": self.violations,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(t, sort_keys=True) for t in self.trials]
        lines.append(json.dumps(self.summary(), sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "ExperimentResult":
        recs = [json.loads(line) for line in text.splitlines() if line.strip()]
        summ = recs[-1]
        ens = dict(summ["ensemble"])
        return cls(
            experiment=summ["experiment"],
            ensemble=Ensemble(**ens),
            params=summ["params"],
            trials=recs[:-1],
            counts=summ["counts"],
            violations=summ["violation_instances"],
        )


def check_experiment_budget(ens: Ensemble, k_max: int, budget=None) -> None:
    check_budget(ens.m, k_max, budget)


def run_theorem1_experiment(
    ens: Ensemble,
    k_max: int = 3,
    n_max: int = 4,
    tol: float = 1e-9,
    state_trials: int = 10,
    budget=None,
) -> ExperimentResult:
    """Finite-horizon truth table of the three equivalent exact-decoherence statements.

    (a) exact decoherence for every partition state, k <= k_max;
    (b) vanishing commutators for n <= n_max;
    (c) exact decoherence for sampled arbitrary states, k <= k_max.

    (b) at horizon n_max forces (a) and (c) for every k <= n_max + 1, so with
    k_max <= n_max + 1 a trial where (b) passes and (a) or (c) fails is
    recorded as a violation.
    """
    check_experiment_budget(ens, k_max, budget)
    res = ExperimentResult(
        "exact", ens,
        {"k_max": k_max, "n_max": n_max, "tol": tol, "state_trials": state_trials},
    )
    counts = {"trials": 0, "a_pass": 0, "b_pass": 0, "c_pass": 0, "classicality_pass": 0, "all_pass": 0}
    table: dict[str, int] = {}
    implied = k_max <= n_max + 1
    for t in range(ens.trials):
        u, p = ens.sample(t)
        ra = criteria.check_exact_all_partition_states(u, p, k_max, tol, budget)
        rb = criteria.check_commutators(u, p, n_max, tol)
        rc = criteria.check_exact_all_states(
            u, p, k_max, state_trials, tol, seed=ens.trial_rng(t, stream=1), budget=budget
        )
        r4 = criteria.check_classicality_preservation(u, p, tol)
        a, b, c = ra.passed, rb.passed, rc.passed
        key = "".join("P" if x else "F" for x in (a, b, c))
        table[key] = table.get(key, 0) + 1
        counts["trials"] += 1
        counts["a_pass"] += a
        counts["b_pass"] += b
        counts["c_pass"] += c
        counts["classicality_pass"] += r4.passed
        counts["all_pass"] += a and b and c
        violation = implied and b and not (a and c)
        rec = {
            "record": "trial",
            "trial": t,
            "seed": ens.seed,
            "a": _brief(ra),
            "b": _brief(rb),
            "c": _brief(rc),
            "classicality": _brief(r4),
            "violation": violation,
        }
        res.trials.append(rec)
        if violation:
            res.violations.append({**_instance(ens, t, u, p), "reason": "(b) passed but (a) or (c) failed"})
    counts["truth_table"] = dict(sorted(table.items()))
    res.counts = counts
    return res


def premise_strong_all_partition_states(u, p, eps, k_max, p_null=criteria.P_NULL, budget=None) -> criteria.CheckReport:
    """Strong approximate decoherence for every partition state and k <= k_max."""
    worst, first_fail, wit = 0.0, None, None
    for nu, rho in enumerate(partition_states(p)):
        for k in range(1, k_max + 1):
            r = criteria.check_approx_strong(u, p, rho, k, eps, p_null, budget)
            if r.worst_value >= worst:
                worst = r.worst_value
                wit = {"nu": nu, "k": k, **(r.witness or {})}
            if not r.passed and first_fail is None:
                first_fail = {"nu": nu, "k": k, **r.witness}
    params = {"k_max": k_max, "eps": float(criteria._eps(eps)), "p_null": p_null}
    if first_fail is not None:
        return criteria.CheckReport("strong_premise", "fail", worst, first_fail, params)
    return criteria.CheckReport("strong_premise", "pass", worst, wit, params)


def run_theorem2_experiment(
    ens: Ensemble,
    eps,
    k_max: int = 3,
    n_max: int = 4,
    p_null: float = criteria.P_NULL,
    budget=None,
) -> ExperimentResult:
    """Approximate-decoherence premise versus the commutator-norm conclusion.

    The premise is only checked for k <= k_max, so the conclusion is asserted
    for n <= k_max - 1 only; larger n up to n_max are evaluated and tallied as
    out-of-horizon without counting as violations. When the conclusion fails,
    a violating history pair is searched for on the worst triple.
    """
    if k_max < 2:
        raise ValueError("k_max must be >= 2 so that at least n = 1 is within the premise's reach")
    check_experiment_budget(ens, k_max, budget)
    e = criteria._eps(eps)
    n_conc = k_max - 1
    res = ExperimentResult("approx", ens, {"eps": e, "k_max": k_max, "n_max": n_max, "p_null": p_null})
    counts = {
        "trials": 0, "premise_pass": 0, "premise_fail": 0, "conclusion_pass": 0,
        "conclusion_fail": 0, "witness_found": 0, "out_of_horizon_fail": 0,
        "loop_pass": 0,
    }
    for t in range(ens.trials):
        u, p = ens.sample(t)
        prem = premise_strong_all_partition_states(u, p, e, k_max, p_null, budget)
        conc = criteria.check_theorem2_bound(u, p, n_conc, e)
        loop = criteria.check_loop_condition(u, p, n_conc, e)
        counts["trials"] += 1
        counts["premise_pass" if prem.passed else "premise_fail"] += 1
        counts["conclusion_pass" if conc.passed else "conclusion_fail"] += 1
        counts["loop_pass"] += loop.passed
        rec = {
            "record": "trial",
            "trial": t,
            "seed": ens.seed,
            "premise": _brief(prem),
            "conclusion": _brief(conc),
            "loop": _brief(loop),
        }
        if n_max > n_conc:
            far = criteria.check_theorem2_bound(u, p, n_max, e)
            rec["out_of_horizon"] = {"n_max": n_max, "verdict": far.verdict, "worst_value": far.worst_value}
            if prem.passed and not far.passed and far.witness["n"] > n_conc:
                counts["out_of_horizon_fail"] += 1
        if not conc.passed:
            w = conc.witness
            q = criteria.evolved_projectors(u, p, w["n"])[w["n"] - 1, w["mu1"]]
            side = [hs_norm(p[mu] @ q @ p[w["mu2"]]) if mu != w["mu2"] else -1.0 for mu in range(p.m)]
            mu1 = int(np.argmax(side))
            found = find_violation_witness(
                u, p, w["n"], w["mu1"], mu1, w["mu2"], k_cap=w["n"] + 1, eps=e, p_null=p_null, budget=budget
            )
            rec["contrapositive_witness"] = None if found is None else found.to_dict()
            counts["witness_found"] += found is not None
        violation = prem.passed and not conc.passed
        rec["violation"] = violation
        res.trials.append(rec)
        if violation:
            res.violations.append({**_instance(ens, t, u, p), "reason": "premise passed but bound failed"})
    res.counts = counts
    return res


@dataclass
class ViolationWitness:
    nu: int
    rho: np.ndarray
    k: int
    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    value: complex
    ratio: float

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "k": self.k,
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "abs_value": abs(self.value),
            "ratio": self.ratio,
        }


def _visits(h, n: int, mu0: int, targets) -> bool:
    """True if the history sits in mu0 at some time j and in a target block at j + n."""
    return any(h[j] == mu0 and h[j + n] in targets for j in range(len(h) - n))


def find_violation_witness(
    u,
    p: ProjectivePartition,
    n: int,
    mu0: int,
    mu1: int,
    mu2: int,
    k_cap: int,
    eps,
    p_null: float = criteria.P_NULL,
    budget=None,
) -> ViolationWitness | None:
    """Search for a partition state and history pair breaking the strong condition.

    Only runs when ``||[U^n P_mu0 U^dagger^n, P_mu2]||_2`` reaches the bound
    2 d^{3/2} sqrt(eps) and mu1 != mu2. Lengths k <= n + 1 are tried first,
    then up to ``k_cap``. Within one Gram, pairs are visited with histories
    that pass through mu0 and then mu1 or mu2 n steps later first, and
    lexicographically after that.
    """
    e = criteria._eps(eps)
    if p.m < 2 or mu1 == mu2:
        return None
    c = criteria.commutator_table(u, p, n)[n - 1, mu0, mu2]
    if c < criteria.theorem2_threshold(p.dim, e):
        return None
    ks = list(range(2, min(n + 1, k_cap) + 1)) + list(range(n + 2, k_cap + 1))
    targets = {mu1, mu2}
    for k in ks:
        for nu, rho in enumerate(partition_states(p)):
            g = full_gram(u, p, rho, k, budget)
            r = criteria.approx_report_from_gram(g, e, divisor=float(g.size), p_null=p_null)
            if r.passed:
                continue
            diag = g.diagonal
            rhs = e * np.sqrt(np.clip(np.outer(diag, diag), 0.0, None)) / g.size
            live = diag > p_null
            lhs = np.abs(g.entries)
            bad = np.where(
                np.outer(live, live), ~(lhs < rhs), lhs > e * p_null
            )
            a_idx, b_idx = np.nonzero(np.triu(bad, 1))
            cands = []
            for a, b in zip(a_idx, b_idx):
                ha, hb = history_from_code(int(a), p.m, k), history_from_code(int(b), p.m, k)
                score = _visits(ha, n, mu0, targets) + _visits(hb, n, mu0, targets)
                cands.append((-score, ha, hb, int(a), int(b)))
            if not cands:
                continue
            _, ha, hb, a, b = min(cands)
            ratio = float(lhs[a, b] / rhs[a, b]) if rhs[a, b] > 0 else math.inf
            return ViolationWitness(nu, rho.matrix, k, ha, hb, complex(g.entries[a, b]), ratio)
    return None
