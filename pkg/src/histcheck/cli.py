"""Command-line front end.

Exit codes: 0 pass, 1 IO or parse error, 2 check failed, 3 history budget
exceeded, 64 usage error.

Inputs are JSON files bundling ``unitary``, ``partition`` and optionally
``rho`` and ``k``. Without ``rho`` the first partition state is used. Names
of the bundled examples (``hadamard_k2.json`` and friends) resolve to the
copies shipped with the package when no such file exists locally.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import criteria, search
from .histories import BudgetExceeded, full_gram, history_from_code, probabilities
from .linalg import DEFAULT_TOL, is_unitary, matrix_from_json
from .partition import (
    NotAProjector,
    NotComplete,
    NotOrthogonal,
    PartitionError,
    density_from_json,
    is_fine_grained,
    partition_from_json,
    partition_states,
)

EXIT_PASS, EXIT_IO, EXIT_FAIL, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2, 3, 64
SCAN_TOL = 1e-9
BUNDLED = ("identity_k3.json", "hadamard_k2.json", "permutation_d4.json", "coarse_d3.json")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}")
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be > 0, got {s}")
    return v


def _epsilon(s: str) -> float:
    try:
        return criteria.Epsilon(float(s)).value
    except ValueError:
        raise argparse.ArgumentTypeError(f"eps must lie in (0, 1), got {s}")


def _groups(s: str):
    try:
        g = json.loads(s)
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"groups must be JSON, e.g. [[0],[1,2]]; got {s!r}")
    if not isinstance(g, list) or not all(isinstance(x, list) for x in g):
        raise argparse.ArgumentTypeError("groups must be a list of index lists")
    return g


def _resolve(path: str):
    p = Path(path)
    if p.exists():
        return p
    if p.name in BUNDLED and len(p.parts) == 1:
        return resources.files("histcheck") / "examples" / p.name
    raise InputError(f"cannot read {path}: no such file")


def _load_json(path: str) -> dict:
    src = _resolve(path)
    try:
        obj = json.loads(src.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise InputError(f"{path}: top level must be a JSON object")
    return obj


def _load_bundle(path: str, tol: float, need_rho: bool = True):
    obj = _load_json(path)
    try:
        if "unitary" not in obj or "partition" not in obj:
            raise InputError(f"{path}: needs 'unitary' and 'partition'")
        u = matrix_from_json(obj["unitary"])
        p = partition_from_json(obj["partition"], tol)
        if u.shape[0] != p.dim:
            raise InputError(f"{path}: unitary has dim {u.shape[0]}, partition has dim {p.dim}")
        if not is_unitary(u, max(tol, 1e-9)):
            raise InputError(f"{path}: 'unitary' is not unitary at tol={tol:g}")
        rho = None
        if need_rho:
            rho = density_from_json(obj["rho"], tol) if "rho" in obj else partition_states(p)[0]
            if rho.dim != p.dim:
                raise InputError(f"{path}: rho has dim {rho.dim}, partition has dim {p.dim}")
    except InputError:
        raise
    except ValueError as exc:
        raise InputError(f"{path}: {exc}")
    return u, p, rho, obj.get("k")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _report_text(r: criteria.CheckReport, verbose: bool) -> str:
    lines = [f"check: {r.check}", f"verdict: {r.verdict.upper()}", f"worst_value: {_fmt(r.worst_value)}"]
    if r.witness:
        parts = []
        for key, val in r.witness.items():
            if isinstance(val, float):
                val = _fmt(val)
            elif isinstance(val, list) and key == "value":
                val = f"{_fmt(val[0])}{'+' if val[1] >= 0 else '-'}{_fmt(abs(val[1]))}i"
            parts.append(f"{key}={val}")
        lines.append("witness: " + " ".join(parts))
    if r.params:
        lines.append("params: " + " ".join(
            f"{k}={_fmt(v) if isinstance(v, float) else v}" for k, v in r.params.items()
        ))
    if r.horizon_note:
        lines.append(f"note: {r.horizon_note}")
    if verbose and "table" in r.data:
        lines.append("commutator norms ||[U^n P_mu1 U^-n, P_mu2]||_2:")
        for n, block in enumerate(r.data["table"], start=1):
            for mu1, row in enumerate(block):
                lines.append(f"  n={n} mu1={mu1}: " + " ".join(_fmt(x) for x in row))
    return "\n".join(lines)


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _emit_report(args, r: criteria.CheckReport, extra: dict | None = None) -> int:
    if args.format == "json":
        d = r.to_dict()
        if extra:
            d.update(extra)
        _emit(args, json.dumps(d, indent=2, sort_keys=True))
    else:
        text = _report_text(r, args.verbose)
        if extra and "probabilities" in extra:
            text += "\nprobabilities:"
            for h, pr in extra["probabilities"]:
                text += f"\n  {tuple(h)}: {_fmt(pr)}"
        _emit(args, text)
    return EXIT_PASS if r.passed else EXIT_FAIL


def cmd_validate(args) -> int:
    obj = _load_json(args.input)
    pobj = obj.get("partition", obj)
    try:
        p = partition_from_json(pobj, args.tol)
    except NotOrthogonal as exc:
        return _invalid(args, str(exc), {"pair": [exc.mu, exc.nu]})
    except NotAProjector as exc:
        return _invalid(args, str(exc), {"index": exc.mu})
    except NotComplete as exc:
        return _invalid(args, str(exc), {"residual": exc.residual})
    except PartitionError as exc:
        return _invalid(args, str(exc), {})
    except ValueError as exc:
        raise InputError(f"{args.input}: {exc}")
    fine = is_fine_grained(p)
    info = {
        "valid": True,
        "dim": p.dim,
        "m": p.m,
        "ranks": list(p.ranks),
        "fine_grained": fine,
        "history_bound_holds": True,  # m <= d, hence m**k <= d**k for all k
    }
    if args.format == "json":
        _emit(args, json.dumps(info, indent=2, sort_keys=True))
    else:
        kind = "fine-grained, m=d" if fine else f"coarse-grained, m={p.m} < d={p.dim}"
        _emit(args, f"valid projective partition\ndim: {p.dim}\nranks: {list(p.ranks)}\n{kind}")
    return EXIT_PASS


def _invalid(args, msg: str, detail: dict) -> int:
    if args.format == "json":
        _emit(args, json.dumps({"valid": False, "error": msg, **detail}, indent=2, sort_keys=True))
    else:
        _emit(args, f"invalid partition: {msg}")
    return EXIT_FAIL


def _k(args, k_file) -> int:
    return args.k if args.k is not None else int(k_file or 2)


def cmd_decohere(args) -> int:
    u, p, rho, k_file = _load_bundle(args.input, args.tol)
    k = _k(args, k_file)
    g = full_gram(u, p, rho, k)
    r = criteria.exact_report_from_gram(g, args.tol)
    extra = None
    if r.passed:
        probs = probabilities(g)
        extra = {"probabilities": [[list(history_from_code(i, p.m, k)), float(x)] for i, x in enumerate(probs)]}
    return _emit_report(args, r, extra)


def cmd_approx(args) -> int:
    u, p, rho, k_file = _load_bundle(args.input, args.tol)
    k = _k(args, k_file)
    if args.mode == "strong":
        r = criteria.check_approx_strong(u, p, rho, k, args.eps, args.p_null)
    else:
        r = criteria.check_approx_dh(u, p, rho, k, args.eps, args.mode == "dh_re", args.p_null)
    return _emit_report(args, r)


def cmd_commutators(args) -> int:
    u, p, _, _ = _load_bundle(args.input, args.tol, need_rho=False)
    return _emit_report(args, criteria.check_commutators(u, p, args.n_max, args.tol))


def cmd_bound(args) -> int:
    u, p, _, _ = _load_bundle(args.input, args.tol, need_rho=False)
    return _emit_report(args, criteria.check_theorem2_bound(u, p, args.n_max, args.eps))


def cmd_scan(args) -> int:
    try:
        ens = search.Ensemble(args.ensemble, args.d, args.trials, args.seed, args.groups, args.rotate)
        ens.base_partition()
    except ValueError as exc:
        print(f"scan: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.experiment == "approx":
        if args.eps is None:
            print("scan: --experiment approx needs --eps", file=sys.stderr)
            return EXIT_USAGE
        if args.k_max < 2:
            print("scan: --experiment approx needs --k-max >= 2", file=sys.stderr)
            return EXIT_USAGE
        res = search.run_theorem2_experiment(ens, args.eps, args.k_max, args.n_max, args.p_null)
    else:
        res = search.run_theorem1_experiment(ens, args.k_max, args.n_max, args.tol, args.state_trials)
    n_viol = len(res.violations)
    summary = f"{res.experiment} {ens.kind} d={ens.d} trials={ens.trials} seed={ens.seed}\n" \
              f"counts: {json.dumps(res.counts, sort_keys=True)}\nviolations: {n_viol}"
    if args.out:
        Path(args.out).write_text(res.to_jsonl(), encoding="utf-8")
        if args.format == "text":
            print(summary)
    elif args.format == "json":
        sys.stdout.write(res.to_jsonl())
    else:
        print(summary)
    return EXIT_FAIL if n_viol else EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=_positive_float, default=None,
                        help=f"absolute tolerance (default {DEFAULT_TOL:g}; scan: {SCAN_TOL:g})")
    common.add_argument("--p-null", type=_positive_float, default=criteria.P_NULL,
                        help="diagonal entries at or below this are null histories")
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--verbose", "-v", action="store_true")

    ap = _Parser(prog="histcheck", description="Decoherence checks for histories over a fixed projective partition.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", parents=[common], help="validate a partition file")
    s.add_argument("input")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("decohere", parents=[common], help="exact (medium) decoherence at one length k")
    s.add_argument("input")
    s.add_argument("--k", type=_positive_int, help="history length (default: file's 'k', else 2)")
    s.set_defaults(func=cmd_decohere)

    s = sub.add_parser("approx", parents=[common], help="approximate decoherence at one length k")
    s.add_argument("input")
    s.add_argument("--k", type=_positive_int)
    s.add_argument("--eps", type=_epsilon, required=True)
    s.add_argument("--mode", choices=("dh", "dh_re", "strong"), default="dh")
    s.set_defaults(func=cmd_approx)

    s = sub.add_parser("commutators", parents=[common], help="commutators of evolved projectors with the partition")
    s.add_argument("input")
    s.add_argument("--n-max", type=_positive_int, default=criteria.DEFAULT_N_MAX)
    s.set_defaults(func=cmd_commutators)

    s = sub.add_parser("bound", parents=[common], help="commutator norms against 2 d^(3/2) sqrt(eps)")
    s.add_argument("input")
    s.add_argument("--n-max", type=_positive_int, default=criteria.DEFAULT_N_MAX)
    s.add_argument("--eps", type=_epsilon, required=True)
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("scan", parents=[common], help="run an ensemble experiment, JSON lines output")
    s.add_argument("--ensemble", choices=search.ENSEMBLE_KINDS, required=True)
    s.add_argument("--experiment", choices=("exact", "approx"), default="exact",
                   help="exact: commutators vs exact decoherence; approx: strong approximate decoherence vs commutator bound")
    s.add_argument("--d", type=_positive_int, default=2)
    s.add_argument("--groups", type=_groups, help="basis groups as JSON; default fine-grained")
    s.add_argument("--rotate", action="store_true", help="conjugate U and partition by a Haar unitary")
    s.add_argument("--trials", type=_positive_int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--k-max", type=_positive_int, default=3)
    s.add_argument("--n-max", type=_positive_int, default=4)
    s.add_argument("--eps", type=_epsilon)
    s.add_argument("--state-trials", type=_positive_int, default=10)
    s.set_defaults(func=cmd_scan)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.tol is None:
        args.tol = SCAN_TOL if args.command == "scan" else DEFAULT_TOL
    try:
        return args.func(args)
    except BudgetExceeded as exc:
        print(f"histcheck: {exc} (raise it with $HISTCHECK_BUDGET)", file=sys.stderr)
        return EXIT_BUDGET
    except InputError as exc:
        print(f"histcheck: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"histcheck: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
