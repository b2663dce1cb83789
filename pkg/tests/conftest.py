import numpy as np
import pytest

import histcheck.cli
import histcheck.criteria
import histcheck.histories
import histcheck.search

# Structural invariants are tallied over every Gram built anywhere in the run.
GRAM_LIMITS = {
    "hermiticity": 1e-12,
    "min_diagonal": -1e-12,
    "total_sum_error": 1e-10,
    "k1_offdiagonal": 1e-12,
    "am_gm_excess": 1e-15,
}
GRAM_TALLY = {"grams": 0, "hermiticity": 0.0, "min_diagonal": np.inf,
              "total_sum_error": 0.0, "k1_offdiagonal": 0.0, "am_gm_excess": -np.inf}
ACCEPTANCE: dict[str, tuple[bool, str]] = {}

_orig_full_gram = histcheck.histories.full_gram


def _recording_full_gram(*args, **kwargs):
    g = _orig_full_gram(*args, **kwargs)
    r = g.invariant_report()
    t = GRAM_TALLY
    t["grams"] += 1
    t["hermiticity"] = max(t["hermiticity"], r["hermiticity"])
    t["min_diagonal"] = min(t["min_diagonal"], r["min_diagonal"])
    t["total_sum_error"] = max(t["total_sum_error"], r["total_sum_error"])
    t["am_gm_excess"] = max(t["am_gm_excess"], r["am_gm_excess"])
    if g.k == 1:
        t["k1_offdiagonal"] = max(t["k1_offdiagonal"], r["max_offdiagonal"])
    return g


def gram_tally_violations() -> list[str]:
    t = GRAM_TALLY
    bad = []
    if t["hermiticity"] > GRAM_LIMITS["hermiticity"]:
        bad.append(f"hermiticity {t['hermiticity']:.3g}")
    if t["min_diagonal"] < GRAM_LIMITS["min_diagonal"]:
        bad.append(f"min diagonal {t['min_diagonal']:.3g}")
    if t["total_sum_error"] > GRAM_LIMITS["total_sum_error"]:
        bad.append(f"total sum error {t['total_sum_error']:.3g}")
    if t["k1_offdiagonal"] > GRAM_LIMITS["k1_offdiagonal"]:
        bad.append(f"k=1 off-diagonal {t['k1_offdiagonal']:.3g}")
    if t["am_gm_excess"] > GRAM_LIMITS["am_gm_excess"]:
        bad.append(f"AM-GM excess {t['am_gm_excess']:.3g}")
    return bad


def pytest_configure(config):
    for mod in (histcheck.histories, histcheck.criteria, histcheck.search, histcheck.cli):
        mod.full_gram = _recording_full_gram


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    if ACCEPTANCE:
        tr.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0])):
            ok, detail = ACCEPTANCE[key]
            tr.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
    t = GRAM_TALLY
    if t["grams"]:
        tr.section("gram invariants over the whole run")
        tr.write_line(
            f"grams={t['grams']} hermiticity={t['hermiticity']:.2e} min_diag={t['min_diagonal']:.2e} "
            f"sum_err={t['total_sum_error']:.2e} k1_offdiag={t['k1_offdiagonal']:.2e} "
            f"am_gm_excess={t['am_gm_excess']:.2e}"
        )
        bad = gram_tally_violations()
        tr.write_line("FAIL " + "; ".join(bad) if bad else "PASS all structural Gram invariants")


def pytest_sessionfinish(session, exitstatus):
    if GRAM_TALLY["grams"] and gram_tally_violations() and session.exitstatus == 0:
        session.exitstatus = 1


@pytest.fixture
def acceptance():
    def record(key: str, ok: bool, detail: str):
        ACCEPTANCE[key] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)
