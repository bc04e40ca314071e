"""Command-line interface: ``sepguard check|fit|simulate``.

Exit codes
----------
check: 0 no separation, 2 separation found, 3 estimates do not exist
(Gamma / Inverse Gaussian PML), 1 error.
fit: 0 fitted on all rows, 2 fitted after dropping separated rows,
3 estimates do not exist, 4 complete separation, 1 error.
simulate: 0 written, 1 error.

Row indices in reports are 1-based data rows (the header is not counted).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .dataset import load_csv
from .exceptions import CompleteSeparationError, NonExistenceError, SepguardError
from .families import family_from_name
from .glm import METHODS, detect_separation, fit
from .lp import existence_check
from .simulate import PATTERNS, simulate, write_simulated

__all__ = ["main", "build_parser", "dumps"]

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_ERROR, EXIT_SEPARATION, EXIT_NONEXISTENCE, EXIT_COMPLETE = 0, 1, 2, 3, 4


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats as ``%.17g``, non-finite as null."""
    out = io.StringIO()
    _write(obj, out, 0)
    out.write("\n")
    return out.getvalue()


def _write(obj, out, depth):
    pad = "  " * (depth + 1)
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = sorted(obj.items())
        for k, (key, val) in enumerate(items):
            out.write(pad + json.dumps(str(key)) + ": ")
            _write(val, out, depth + 1)
            out.write(",\n" if k < len(items) - 1 else "\n")
        out.write("  " * depth + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.write("[]")
            return
        scalars = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq)
        if scalars:
            out.write("[")
            for k, v in enumerate(seq):
                _write(v, out, depth + 1)
                if k < len(seq) - 1:
                    out.write(", ")
            out.write("]")
            return
        out.write("[\n")
        for k, v in enumerate(seq):
            out.write(pad)
            _write(v, out, depth + 1)
            out.write(",\n" if k < len(seq) - 1 else "\n")
        out.write("  " * depth + "]")
    elif isinstance(obj, (bool, np.bool_)):
        out.write("true" if obj else "false")
    elif obj is None:
        out.write("null")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        out.write("%.17g" % v if math.isfinite(v) else "null")
    else:
        out.write(json.dumps(str(obj)))


def _split(names):
    return [s.strip() for s in names.split(",") if s.strip()] if names else []


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sepguard", description="Detect separation in GLMs and fit them safely.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--input", required=True, help="CSV file with a header row")
        sp.add_argument("--family", default="poisson", help="poisson, logit, probit, negbin, gamma-pml, "
                        "gaussian-log or invgauss-pml")
        sp.add_argument("--nu", type=float, help="negative binomial dispersion (negbin only)")
        sp.add_argument("--depvar", default="y")
        sp.add_argument("--vars", default="", help="comma-separated dense regressors")
        sp.add_argument("--factors", default="", help="comma-separated fixed-effect columns")
        sp.add_argument("--weight", help="observation weight column")
        sp.add_argument("--no-constant", action="store_true", help="do not add a constant")
        sp.add_argument("--method", choices=METHODS, default="ir")
        sp.add_argument("--epsilon", type=float, default=1e-5)
        sp.add_argument("--output", help="write the report here instead of stdout")
        sp.add_argument("--format", choices=("json", "csv", "human"), default="json")

    c = sub.add_parser("check", help="detect separation / non-existence")
    common(c)
    f = sub.add_parser("fit", help="drop separated rows and fit")
    common(f)
    f.add_argument("--tol-dev", type=float, default=1e-9)
    f.add_argument("--tol-eta", type=float, default=1e-8)
    s = sub.add_parser("simulate", help="write a dataset with a planted separation pattern")
    s.add_argument("--pattern", required=True, help=", ".join(PATTERNS))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--output", required=True)
    return p


def _load(args):
    family = family_from_name(args.family, args.nu)
    ds = load_csv(args.input, args.depvar, _split(args.vars), _split(args.factors), args.weight,
                  add_constant=not args.no_constant, family=family)
    return ds, family


def _emit(text, args):
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _verdict_json(v):
    if v is None:
        return None
    return {"exists": v.exists, "reason": v.reason,
            "witness_z": None if v.witness is None else v.witness.z}


def run_check(args) -> int:
    ds, family = _load(args)
    verdict = report = None
    if not family.likelihood_bounded:
        verdict = existence_check(ds, family)
        code = EXIT_OK if verdict.exists else EXIT_NONEXISTENCE
        separated = np.zeros(0, dtype=np.int64)
        z = None if verdict.witness is None else verdict.witness.z
        method = "lp"
    else:
        report = detect_separation(ds, family, args.method, epsilon=args.epsilon)
        separated = report.separated
        code = EXIT_SEPARATION if separated.size else EXIT_OK
        z = None if report.certificate is None else report.certificate.z
        method = report.method
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "check",
        "family": str(family),
        "method": method,
        "n_obs": ds.n_obs,
        "separated_indices": [int(i) + 1 for i in separated],
        "certificate_z": None if z is None else list(z),
        "iterations": None if report is None else report.iterations,
        "converged": None if report is None else report.converged,
        "epsilon": args.epsilon if report is not None and report.method == "rectifier" else None,
        "K": None if report is None or report.method != "rectifier" else report.K,
        "existence_verdict": _verdict_json(verdict),
    }
    if args.format == "json":
        _emit(dumps(doc), args)
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "separated", "certificate_z"])
        mask = np.zeros(ds.n_obs, dtype=bool)
        mask[separated] = True
        for i in range(ds.n_obs):
            w.writerow([i + 1, int(mask[i]), "" if z is None else "%.17g" % z[i]])
        _emit(buf.getvalue(), args)
    else:
        _emit(_human_check(doc, ds.n_obs), args)
    return code


def _human_check(doc, n):
    lines = [f"family: {doc['family']}   method: {doc['method']}   observations: {n}"]
    v = doc["existence_verdict"]
    if v is not None:
        if v["exists"]:
            lines.append(f"PML estimates exist ({v['reason']}).")
        else:
            lines.append(f"PML estimates do NOT exist ({v['reason']}); a witness direction is reported.")
    sep = doc["separated_indices"]
    if v is None:
        if not sep:
            lines.append("No separation: no certificate of separation exists.")
        else:
            kind = "complete" if len(sep) == n else "quasi-complete"
            lines.append(f"Separation detected ({kind}): {len(sep)} of {n} observations are separated.")
            lines.append("Separated rows (1-based): " + ", ".join(str(i) for i in sep))
            lines.append("The certificate of separation z is 0 on every non-separated row.")
    return "\n".join(lines) + "\n"


def run_fit(args) -> int:
    ds, family = _load(args)
    try:
        res = fit(ds, family, method=args.method, epsilon=args.epsilon, tol_dev=args.tol_dev,
                  tol_eta=args.tol_eta)
    except CompleteSeparationError as err:
        rep = err.report
        doc = {"schema_version": SCHEMA_VERSION, "command": "fit", "family": str(family),
               "error": "complete separation", "n_obs": ds.n_obs,
               "separated_indices": [int(i) + 1 for i in rep.separated] if rep is not None else []}
        _emit(dumps(doc) if args.format == "json" else f"complete separation: {err}\n", args)
        return EXIT_COMPLETE
    except NonExistenceError as err:
        doc = {"schema_version": SCHEMA_VERSION, "command": "fit", "family": str(family),
               "error": "estimates do not exist", "n_obs": ds.n_obs,
               "existence_verdict": _verdict_json(err.verdict)}
        _emit(dumps(doc) if args.format == "json" else f"{err}\n", args)
        return EXIT_NONEXISTENCE
    status = res.status()
    table = []
    for j, name in enumerate(res.column_names):
        est = res.coefficients[j]
        row = {"name": name, "status": status[j], "implicated": bool(res.implicated[j]),
               "se": None if not np.isfinite(res.se[j]) else float(res.se[j])}
        if status[j] == "collinear":
            row["estimate"] = "collinear"
        elif status[j] == "diverges":
            row["estimate"] = "diverges"
            row["retained_sample_estimate"] = float(est)
        else:
            row["estimate"] = float(est)
        table.append(row)
    effects = {name: {str(lv): float(v) for lv, v in zip(levels, eff)}
               for name, levels, eff in zip(res.factor_names, res.factor_levels, res.factor_effects)}
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "family": str(family),
        "method": args.method if res.report is not None else "lp",
        "n_obs": res.n_obs,
        "n_retained": int(res.retained.size),
        "dropped_indices": [int(i) + 1 for i in res.dropped],
        "coefficients": table,
        "factor_effects": effects,
        "loglik": res.loglik,
        "deviance": res.deviance,
        "iterations": res.iterations,
        "converged": res.converged,
        "notes": res.notes,
        "existence_verdict": _verdict_json(res.verdict),
    }
    if args.format == "json":
        _emit(dumps(doc), args)
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "estimate", "se", "status", "implicated"])
        for row in table:
            est = row["estimate"]
            w.writerow([row["name"], est if isinstance(est, str) else "%.17g" % est,
                        "" if row["se"] is None else "%.17g" % row["se"], row["status"], int(row["implicated"])])
        _emit(buf.getvalue(), args)
    else:
        lines = [f"family: {doc['family']}   retained {doc['n_retained']} of {doc['n_obs']} observations"]
        if doc["dropped_indices"]:
            lines.append("dropped (separated) rows: " + ", ".join(str(i) for i in doc["dropped_indices"]))
        lines.append(f"{'name':<16}{'estimate':>16}{'se':>14}  status")
        for row in table:
            est = row["estimate"]
            est_s = est if isinstance(est, str) else f"{est:.6g}"
            se_s = "" if row["se"] is None else f"{row['se']:.6g}"
            lines.append(f"{row['name']:<16}{est_s:>16}{se_s:>14}  {row['status']}")
        lines.append(f"log-likelihood (PML convention): {res.loglik:.10g}   iterations: {res.iterations}")
        lines += [f"note: {s}" for s in res.notes]
        _emit("\n".join(lines) + "\n", args)
    return EXIT_SEPARATION if res.dropped.size else EXIT_OK


def run_simulate(args) -> int:
    sim = simulate(args.pattern, n=args.n, seed=args.seed)
    side = write_simulated(sim, args.output)
    sys.stdout.write(f"wrote {args.output} and {side}\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"check": run_check, "fit": run_fit, "simulate": run_simulate}
    try:
        return handlers[args.command](args)
    except (SepguardError, OSError, ValueError, RuntimeError) as err:
        sys.stderr.write(f"sepguard: error: {err}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
