"""Command-line front end.

Every subcommand builds one report: named scalars plus an optional table.
Reports render as an aligned text table, CSV (scalars as # comments), or
JSON, always through the same 12-significant-digit float formatting so a
rerun with the same config and seed is byte-identical.  Exit codes: 0 on
success, 2 for anything wrong with the input, 3 when the math itself
fails (instability, non-convergence), with the reason on stderr.
"""

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import acceptance
from .clt import dense_type_covariance, fg_type_covariances, overlap_covariance
from .config import build_dense, build_ensemble, build_rs, load_config, parse_alphabet
from .dense import central_approx_constant, exact_type_sum, solve_variational
from .errors import NumericalFailure, ValidationFailure
from .factor_graph import (
    exact_expected_Z,
    fg_asymptotic_estimate,
    fg_constant_log,
    lattice_step_s,
    ldpc_expected_codewords,
    make_ensemble,
    solve_bethe,
    step_size_methods,
)
from .replica_rs import RSParams, pqr_eigenvalues, rs_moment_patterns, sk_paramagnetic_correction


class Report:
    """Scalars and one rectangular table, format-agnostic."""

    def __init__(self, command: str):
        self.command = command
        self.scalars: list[tuple[str, object]] = []
        self.columns: list[str] = []
        self.rows: list[list[object]] = []

    def scalar(self, name: str, value) -> None:
        self.scalars.append((name, value))

    def table(self, columns, rows) -> None:
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def _json_value(value):
    if value is None or isinstance(value, (bool, str)):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isfinite(x):
            return float(format(x, ".12g"))
        return fmt(x)
    if isinstance(value, Fraction):
        return str(value)
    return str(value)


def render(report: Report, fmt_name: str) -> str:
    if fmt_name == "json":
        doc = {
            "command": report.command,
            "scalars": {k: _json_value(v) for k, v in report.scalars},
        }
        if report.columns:
            doc["columns"] = report.columns
            doc["rows"] = [[_json_value(v) for v in row] for row in report.rows]
        return json.dumps(doc, indent=2) + "\n"
    if fmt_name == "csv":
        buf = io.StringIO()
        for k, v in report.scalars:
            buf.write(f"# {k} = {fmt(v)}\n")
        if report.columns:
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(report.columns)
            for row in report.rows:
                writer.writerow([fmt(v) for v in row])
        return buf.getvalue()
    # plain text
    lines = []
    for k, v in report.scalars:
        lines.append(f"{k} = {fmt(v)}")
    if report.columns:
        if lines:
            lines.append("")
        cells = [report.columns] + [[fmt(v) for v in row] for row in report.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(report.columns))]
        for row in cells:
            lines.append("  ".join(c.rjust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def parse_N_list(text: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValidationFailure(f"bad N list {text!r}; expected comma-separated integers")
    if not values or any(v < 1 for v in values):
        raise ValidationFailure(f"bad N list {text!r}; every N must be >= 1")
    return values


# ------------------------------------------------------------- model setup

def _dense_from_args(args) -> tuple:
    cfg = load_config(args.config)
    if cfg["model"] != "dense":
        raise ValidationFailure(f"{args.config} is a {cfg['model']!r} config; need dense")
    return build_dense(cfg), cfg.get("guards", {})


def _ensemble_from_args(args):
    if args.config:
        cfg = load_config(args.config)
        if cfg["model"] != "factor-graph":
            raise ValidationFailure(
                f"{args.config} is a {cfg['model']!r} config; need factor-graph"
            )
        return build_ensemble(cfg), cfg.get("guards", {})
    if args.l is None or args.r is None or args.factor is None:
        raise ValidationFailure("need either --config or all of --l, --r, --factor")
    alphabet = parse_alphabet(args.alphabet.split(","))
    return make_ensemble(args.l, args.r, alphabet, args.factor), {}


def _rs_params(args):
    if args.config:
        cfg = load_config(args.config)
        if cfg["model"] != "rs":
            raise ValidationFailure(f"{args.config} is a {cfg['model']!r} config; need rs")
        return build_rs(cfg)
    missing = [k for k in ("n", "q", "r", "P", "Q", "R") if getattr(args, k) is None]
    if missing:
        raise ValidationFailure("need either --config or all of --" + ", --".join(missing))
    return RSParams(args.n, args.q, args.r, args.P, args.Q, args.R)


# ------------------------------------------------------------- subcommands

def _dense_sum_kwargs(guards: dict) -> dict:
    kw = {}
    if "type_sum" in guards:
        kw["guard"] = guards["type_sum"]
    if guards.get("allow_large"):
        kw["allow_large"] = True
    return kw


def cmd_dense_exact(args) -> Report:
    spec, guards = _dense_from_args(args)
    rep = Report("dense-exact")
    kw = _dense_sum_kwargs(guards)
    rows = [(N, exact_type_sum(spec, N, **kw)) for N in parse_N_list(args.N)]
    rep.table(["N", "log_exact"], rows)
    return rep


def _dense_solution(spec, args):
    solution = solve_variational(spec, seed=args.seed)
    return central_approx_constant(spec, solution)


def cmd_dense_asymptotic(args) -> Report:
    spec, _ = _dense_from_args(args)
    result = _dense_solution(spec, args)
    rep = Report("dense-asymptotic")
    rep.scalar("F", result.F)
    rep.scalar("log_constant", result.log_constant)
    rep.scalar("det", result.det_value)
    rows = [(N, N * result.F + result.log_constant) for N in parse_N_list(args.N)]
    rep.table(["N", "log_asymptotic"], rows)
    return rep


def cmd_dense_compare(args) -> Report:
    spec, guards = _dense_from_args(args)
    result = _dense_solution(spec, args)
    kw = _dense_sum_kwargs(guards)
    rep = Report("dense-compare")
    rep.scalar("F", result.F)
    rep.scalar("log_constant", result.log_constant)
    rows = []
    for N in parse_N_list(args.N):
        exact = exact_type_sum(spec, N, **kw)
        est = N * result.F + result.log_constant
        rows.append((N, exact, est, math.exp(exact - est)))
    rep.table(["N", "log_exact", "log_asymptotic", "ratio"], rows)
    return rep


def cmd_rs_det(args) -> Report:
    params = _rs_params(args)
    rep = Report("rs-det")
    rep.scalar("n", params.n)
    rep.scalar("determinant", params.determinant())
    Pu, Qu, Ru = rs_moment_patterns(params.q, params.r)
    gram = pqr_eigenvalues(params.n, params.P, params.Q, params.R)
    moment = pqr_eigenvalues(params.n, Pu, Qu, Ru)
    rows = [
        (mult, lg, lu, (1.0 - lg * lu) ** mult)
        for (lg, mult), (lu, _) in zip(gram, moment)
    ]
    rep.table(["multiplicity", "lambda_coupling", "lambda_moment", "factor"], rows)
    return rep


def cmd_rs_correction(args) -> Report:
    params = _rs_params(args)
    rep = Report("rs-correction")
    rep.scalar("N", args.N)
    rep.scalar("correction", params.correction_n0(args.N))
    return rep


def cmd_sk(args) -> Report:
    rep = Report("sk")
    rep.scalar("beta", args.beta)
    rows = [(N, sk_paramagnetic_correction(args.beta, N)) for N in parse_N_list(args.N)]
    if len(rows) == 1:
        rep.scalar("N", rows[0][0])
        rep.scalar("correction", rows[0][1])
    else:
        rep.table(["N", "correction"], rows)
    return rep


def cmd_fg_exact(args) -> Report:
    ens, guards = _ensemble_from_args(args)
    kw = {}
    if "type_pairs" in guards:
        kw["guard"] = guards["type_pairs"]
    if guards.get("allow_large") or args.allow_large:
        kw["allow_large"] = True
    rep = Report("fg-exact")
    rows = [(N, exact_expected_Z(ens, N, **kw)) for N in parse_N_list(args.N)]
    rep.table(["N", "log_exact"], rows)
    return rep


def cmd_fg_asymptotic(args) -> Report:
    ens, _ = _ensemble_from_args(args)
    sol = solve_bethe(ens, seed=args.seed)
    const = fg_constant_log(ens, sol)
    rep = Report("fg-asymptotic")
    rep.scalar("F", sol.F)
    rep.scalar("log_constant", const)
    rep.scalar("s", lattice_step_s(ens))
    rows = [(N, fg_asymptotic_estimate(ens, N, sol)) for N in parse_N_list(args.N)]
    rep.table(["N", "log_asymptotic"], rows)
    return rep


def cmd_fg_compare(args) -> Report:
    ens, guards = _ensemble_from_args(args)
    kw = {}
    if "type_pairs" in guards:
        kw["guard"] = guards["type_pairs"]
    if guards.get("allow_large") or args.allow_large:
        kw["allow_large"] = True
    sol = solve_bethe(ens, seed=args.seed)
    const = fg_constant_log(ens, sol)
    rep = Report("fg-compare")
    rep.scalar("F", sol.F)
    rep.scalar("log_constant", const)
    rows = []
    for N in parse_N_list(args.N):
        exact = exact_expected_Z(ens, N, **kw)
        est = fg_asymptotic_estimate(ens, N, sol)
        rows.append((N, exact, est, math.exp(exact - est)))
    rep.table(["N", "log_exact", "log_asymptotic", "ratio"], rows)
    return rep


def cmd_fg_s(args) -> Report:
    ens, _ = _ensemble_from_args(args)
    box = (3 * ens.l - 1) // 2 if ens.l % 2 else None
    methods = step_size_methods(ens, density_box_L=box)
    rep = Report("fg-s")
    rep.scalar("s", methods["snf"])
    rep.table(["method", "value"], [(k, str(v)) for k, v in methods.items()])
    return rep


def cmd_ldpc(args) -> Report:
    rep = Report("ldpc-codewords")
    rep.scalar("l", args.l)
    rep.scalar("r", args.r)
    if args.omega is not None:
        rep.scalar("omega", args.omega)
    rows = []
    for N in parse_N_list(args.N):
        res = ldpc_expected_codewords(args.l, args.r, N, omega=args.omega)
        rows.append((N, res.log_expected_count, res.growth_rate,
                     res.log_constant, res.theta))
    rep.table(["N", "log_expected_count", "growth_rate", "log_constant", "theta"], rows)
    return rep


def cmd_clt_cov(args) -> Report:
    cfg = load_config(args.config)
    rep = Report("clt-cov")
    if cfg["model"] == "dense":
        spec = build_dense(cfg)
        sol = solve_variational(spec, seed=args.seed)
        kind = args.kind or "type"
        if kind == "type":
            cov = dense_type_covariance(spec, sol.nu_star)
        elif kind == "overlap":
            cov = overlap_covariance(spec, sol.nu_star)
        else:
            raise ValidationFailure(f"dense models have kinds: type, overlap; got {kind!r}")
    elif cfg["model"] == "factor-graph":
        ens = build_ensemble(cfg)
        sol = solve_bethe(ens, seed=args.seed)
        kind = args.kind or "variable"
        covs = fg_type_covariances(ens, sol.mu_star, sol.nu_star)
        if kind not in covs:
            raise ValidationFailure(
                f"factor-graph models have kinds: {', '.join(covs)}; got {kind!r}"
            )
        cov = covs[kind]
    else:
        raise ValidationFailure("clt-cov needs a dense or factor-graph config")
    rep.scalar("kind", kind)
    rep.scalar("dim", cov.dim)
    rep.scalar("rank", cov.rank)
    rep.scalar("min_eigenvalue", cov.min_eigenvalue)

    def label(x) -> str:
        if isinstance(x, tuple):
            return "|".join(format(v, "g") for v in x)
        return format(x, "g") if isinstance(x, float) else str(x)

    rows = []
    for i, li in enumerate(cov.labels):
        for j in range(i, cov.dim):
            rows.append((label(li), label(cov.labels[j]), cov.matrix[i, j]))
    rep.table(["row", "col", "value"], rows)
    return rep


def cmd_selftest(args) -> Report:
    names = args.only.split(",") if args.only else None
    if names:
        known = {name for name, _ in acceptance.CHECKS}
        unknown = sorted(set(names) - known)
        if unknown:
            raise ValidationFailure(
                f"unknown checks: {', '.join(unknown)}; "
                f"available: {', '.join(name for name, _ in acceptance.CHECKS)}"
            )
    results = acceptance.run_all(names)
    rep = Report("selftest")
    failures = sum(1 for _, ok, _, _ in results if not ok)
    rep.scalar("checks", len(results))
    rep.scalar("failures", failures)
    rep.table(
        ["check", "status", "seconds", "detail"],
        [(name, "PASS" if ok else "FAIL", f"{secs:.2f}", detail)
         for name, ok, detail, secs in results],
    )
    return rep


# --------------------------------------------------------------- plumbing

def _add_output_flags(p) -> None:
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--seed", type=int, default=0)


def _add_fg_model_flags(p) -> None:
    p.add_argument("--config", help="factor-graph config JSON")
    p.add_argument("--l", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--alphabet", default="0,1", help="comma-separated symbol values")
    p.add_argument("--factor", help="parity | all-equal | uniform | table:<path>")


def _add_rs_flags(p) -> None:
    p.add_argument("--config", help="rs config JSON")
    p.add_argument("--n", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--P", type=float)
    p.add_argument("--Q", type=float)
    p.add_argument("--R", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="central-approx",
        description="Partition-function asymptotics, exact up to the constant factor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dense-exact", help="exact log type sum at each N")
    p.add_argument("--config", required=True)
    p.add_argument("--N", required=True, help="comma-separated sizes")
    _add_output_flags(p)
    p.set_defaults(run=cmd_dense_exact)

    p = sub.add_parser("dense-asymptotic", help="N F + log constant at each N")
    p.add_argument("--config", required=True)
    p.add_argument("--N", required=True)
    _add_output_flags(p)
    p.set_defaults(run=cmd_dense_asymptotic)

    p = sub.add_parser("dense-compare", help="exact vs asymptotic, with ratios")
    p.add_argument("--config", required=True)
    p.add_argument("--N", required=True)
    _add_output_flags(p)
    p.set_defaults(run=cmd_dense_compare)

    p = sub.add_parser("rs-det", help="replica-symmetric fluctuation determinant")
    _add_rs_flags(p)
    _add_output_flags(p)
    p.set_defaults(run=cmd_rs_det)

    p = sub.add_parser("rs-correction", help="n->0 free-energy correction")
    _add_rs_flags(p)
    p.add_argument("--N", type=int, required=True)
    _add_output_flags(p)
    p.set_defaults(run=cmd_rs_correction)

    p = sub.add_parser("sk", help="SK paramagnetic finite-size correction")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--N", required=True, help="size, or comma-separated sizes")
    _add_output_flags(p)
    p.set_defaults(run=cmd_sk)

    p = sub.add_parser("fg-exact", help="exact log E[Z] of an (l,r) ensemble")
    _add_fg_model_flags(p)
    p.add_argument("--N", required=True)
    p.add_argument("--allow-large", action="store_true")
    _add_output_flags(p)
    p.set_defaults(run=cmd_fg_exact)

    p = sub.add_parser("fg-asymptotic", help="N F + log constant for an ensemble")
    _add_fg_model_flags(p)
    p.add_argument("--N", required=True)
    _add_output_flags(p)
    p.set_defaults(run=cmd_fg_asymptotic)

    p = sub.add_parser("fg-compare", help="exact vs asymptotic for an ensemble")
    _add_fg_model_flags(p)
    p.add_argument("--N", required=True)
    p.add_argument("--allow-large", action="store_true")
    _add_output_flags(p)
    p.set_defaults(run=cmd_fg_compare)

    p = sub.add_parser("fg-s", help="lattice step size with method breakdown")
    _add_fg_model_flags(p)
    _add_output_flags(p)
    p.set_defaults(run=cmd_fg_s)

    p = sub.add_parser("ldpc-codewords", help="expected LDPC codeword counts")
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--N", required=True)
    p.add_argument("--omega", type=float, help="weight fraction; omit for the total")
    _add_output_flags(p)
    p.set_defaults(run=cmd_ldpc)

    p = sub.add_parser("clt-cov", help="fluctuation covariance matrices")
    p.add_argument("--config", required=True)
    p.add_argument("--kind", help="dense: type|overlap; factor-graph: factor|variable")
    _add_output_flags(p)
    p.set_defaults(run=cmd_clt_cov)

    p = sub.add_parser("selftest", help="run the acceptance battery")
    p.add_argument("--only", help="comma-separated subset of check names")
    _add_output_flags(p)
    p.set_defaults(run=cmd_selftest)

    return parser


def _emit_failure(args, text: str) -> None:
    print(text, file=sys.stderr)
    out = getattr(args, "out", None)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.run(args)
    except ValidationFailure as exc:
        _emit_failure(args, f"error: {exc}")
        return 2
    except NumericalFailure as exc:
        _emit_failure(args, f"numerical failure: {exc}")
        return 3
    text = render(report, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if report.command == "selftest":
        failures = dict(report.scalars).get("failures", 0)
        return 1 if failures else 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
