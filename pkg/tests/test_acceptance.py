"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also collected in the terminal summary of every run.
"""

import itertools
import time

import numpy as np
import pytest

from histcheck.cli import main
from histcheck.criteria import (
    check_approx_strong,
    check_classicality_preservation,
    check_commutators,
    loop_terms,
)
from histcheck.histories import BUDGET_ENV, enumerate_histories, full_gram, probabilities
from histcheck.linalg import haar_random_unitary
from histcheck.partition import (
    fine_grained_partition,
    partition_from_basis_groups,
    random_density,
    random_partition,
)
from histcheck.search import Ensemble, run_theorem1_experiment, run_theorem2_experiment
from oracles import HADAMARD, P0, P1, brute_commutator_norm, brute_gram

GROUPS = {2: ((0, 1),), 3: ((0,), (1, 2)), 4: ((0,), (1, 2), (3,))}
KINDS = ("haar", "permutation", "block_diagonal", "diagonal_phase")


def ensembles(trials: int, seed: int):
    for kind, d in itertools.product(KINDS, (2, 3, 4)):
        groups = GROUPS[d] if kind == "block_diagonal" else None
        yield Ensemble(kind, d, trials=trials, seed=seed + d, groups=groups)


def gram_invariants_ok(g) -> bool:
    r = g.invariant_report()
    return (
        r["hermiticity"] <= 1e-12
        and r["min_diagonal"] >= -1e-12
        and r["total_sum_error"] <= 1e-10
        and (g.k > 1 or r["max_offdiagonal"] <= 1e-12)
    )


def test_01_oracle_equivalence(acceptance):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(2, 5))
        p = random_partition(d, rng)
        u = haar_random_unitary(d, rng)
        rho = random_density(d, rng).matrix
        k = int(rng.integers(1, 4))
        g = full_gram(u, p, rho, k)
        worst = max(worst, float(np.max(np.abs(g.entries - brute_gram(u, p.projectors, rho, k)))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 30
    acceptance("1 oracle equivalence", ok, f"200 instances, max |diff|={worst:.2e} (<=1e-12), {dt:.2f}s (<30s)")
    assert ok


def test_02_structural_invariants(acceptance):
    # local sweep here; every Gram built by the suite is also tallied in conftest
    rng = np.random.default_rng(2)
    bad, n = 0, 0
    for _ in range(300):
        d = int(rng.integers(2, 5))
        p = random_partition(d, rng)
        u = haar_random_unitary(d, rng)
        for k in (1, 2, 3):
            n += 1
            bad += not gram_invariants_ok(full_gram(u, p, random_density(d, rng), k))
    acceptance("2 structural invariants", bad == 0, f"{n} Grams, {bad} outside limits; suite-wide tally in summary")
    assert bad == 0


def test_03_hadamard_benchmark(acceptance):
    p = fine_grained_partition(2)
    rho = np.diag([1.0, 0.0])
    g = full_gram(HADAMARD, p, rho, 2)
    probs = probabilities(g)
    interf = abs(g[(0, 0), (1, 0)])
    comm = check_commutators(HADAMARD, p, 1).data["table"][0][0][1]
    strong = check_approx_strong(HADAMARD, p, rho, 2, 0.5)
    oracle = brute_gram(HADAMARD, [P0, P1], rho, 2)
    ok = (
        np.allclose(probs, 0.25, rtol=0, atol=1e-12)
        and abs(interf - 0.25) <= 1e-12
        and abs(comm - 2**-0.5) <= 1e-12
        and abs(brute_commutator_norm(HADAMARD, P0, P1, 1) - 2**-0.5) <= 1e-12
        and not strong.passed
        and abs(strong.worst_value - 8.0) <= 1e-9
        and np.max(np.abs(oracle - g.entries)) <= 1e-12
    )
    acceptance(
        "3 hadamard benchmark", ok,
        f"p={np.round(probs, 12).tolist()} |D|={interf:.12f} comm={comm:.12f} strong ratio={strong.worst_value:.9f}",
    )
    assert ok


@pytest.mark.slow
def test_04_exact_equivalence(acceptance):
    t0 = time.perf_counter()
    trials = viol = 0
    structured_ok = True
    for ens in ensembles(84, seed=400):
        res = run_theorem1_experiment(ens, k_max=3, n_max=4, tol=1e-9)
        trials += res.counts["trials"]
        viol += len(res.violations)
        if ens.kind in ("permutation", "block_diagonal"):
            structured_ok &= res.counts["all_pass"] == res.counts["trials"]
    dt = time.perf_counter() - t0
    ok = trials >= 1000 and viol == 0 and structured_ok and dt < 300
    acceptance(
        "4 exact-decoherence equivalence", ok,
        f"{trials} trials, {viol} violations, structured all-pass={structured_ok}, {dt:.1f}s (<300s)",
    )
    assert ok


@pytest.mark.slow
def test_05_approx_implication(acceptance):
    trials = viol = premise = 0
    gap = 0.0
    for eps in (1e-2, 1e-4):
        for ens in ensembles(42, seed=500):
            res = run_theorem2_experiment(ens, eps, k_max=3, n_max=4)
            trials += res.counts["trials"]
            viol += len(res.violations)
            premise += res.counts["premise_pass"]
            for t in range(ens.trials):
                trace, norm = loop_terms(*ens.sample(t), 2)
                gap = max(gap, float(np.max(np.abs(trace - norm**2))))
    ok = viol == 0 and premise > 0 and gap <= 1e-9
    acceptance(
        "5 approximate-decoherence bound", ok,
        f"{trials} trials, {premise} premise passes, {viol} violations (n<=2), loop form gap={gap:.2e} (<=1e-9)",
    )
    assert ok


def test_06_am_gm(acceptance):
    rng = np.random.default_rng(6)
    worst = -np.inf
    for _ in range(200):
        d = int(rng.integers(2, 5))
        p = random_partition(d, rng)
        g = full_gram(haar_random_unitary(d, rng), p, random_density(d, rng), int(rng.integers(1, 4)))
        worst = max(worst, g.invariant_report()["am_gm_excess"])
    ok = worst <= 1e-15
    acceptance("6 am-gm on diagonals", ok, f"max sqrt(pa pb) - (pa+pb)/2 = {worst:.2e} (<=1e-15)")
    assert ok


def test_07_fine_grained_equivalence(acceptance):
    rng = np.random.default_rng(7)
    p = fine_grained_partition(3)
    agree, kinds = 0, {"pass": 0, "fail": 0}
    for i in range(200):
        kind = i % 4
        if kind == 0:
            u = haar_random_unitary(3, rng)
        else:
            u = np.eye(3)[rng.permutation(3)].astype(complex)
            if kind >= 2:
                u = u @ np.diag(np.exp(2j * np.pi * rng.random(3)))
            if kind == 3:
                # a small rotation inside one pair of basis vectors breaks both
                th = 10 ** rng.uniform(-6, -1)
                r = np.eye(3, dtype=complex)
                r[:2, :2] = [[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]]
                u = u @ r
        a = check_classicality_preservation(u, p, 1e-9).passed
        b = check_commutators(u, p, 1, 1e-9).passed
        agree += a == b
        kinds["pass" if b else "fail"] += 1
    ok = agree == 200
    acceptance("7 fine-grained equivalence", ok, f"{agree}/200 verdicts agree ({kinds['pass']} pass, {kinds['fail']} fail)")
    assert ok


def test_08_cardinality(acceptance):
    rng = np.random.default_rng(8)
    ok = True
    checked = 0
    for d in (1, 2, 3, 4):
        for _ in range(10):
            p = random_partition(d, rng)
            for k in (1, 2, 3, 4):
                n = sum(1 for _ in enumerate_histories(p.m, k))
                ok &= n == p.m**k and p.m**k <= d**k
                checked += 1
    p = partition_from_basis_groups(5, [[0, 1], [2, 3, 4]])
    ok &= sum(1 for _ in enumerate_histories(p.m, 6)) == 64
    acceptance("8 cardinality", ok, f"{checked} (partition, k) cases, count == m^k <= d^k")
    assert ok


def test_09_cli_determinism(acceptance, tmp_path, capsys, monkeypatch):
    outs = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.jsonl"
        main(["scan", "--ensemble", "haar", "--d", "3", "--trials", "25", "--seed", "9",
              "--format", "json", "--out", str(path)])
        outs.append(path.read_bytes())
    identical = outs[0] == outs[1] and len(outs[0]) > 0
    codes = {
        0: main(["decohere", "identity_k3.json"]),
        1: main(["decohere", str(tmp_path / "missing.json")]),
        2: main(["decohere", "hadamard_k2.json"]),
    }
    monkeypatch.setenv(BUDGET_ENV, "10")
    codes[3] = main(["decohere", "identity_k3.json", "--k", "4"])
    with pytest.raises(SystemExit) as exc:
        main(["approx", "hadamard_k2.json", "--eps", "1.5"])
    codes[64] = exc.value.code
    capsys.readouterr()
    contract = all(k == v for k, v in codes.items())
    ok = identical and contract
    acceptance("9 cli determinism", ok, f"scan byte-identical={identical}, exit codes {codes}")
    assert ok
