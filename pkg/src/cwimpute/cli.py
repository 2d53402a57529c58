"""Command-line interface: ``cwimpute analyze | simulate | verify``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 invalid
data, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import CWIError, DataValidationError, NumericalError, TrialDataset
from .estimators import (
    EstimateResult,
    anhecova_cwi,
    anhecova_mim,
    anhecova_si,
    anova,
    mim_to_cwi_values,
)
from .imputation import ImputationPlan, build_plan
from .io import DEFAULT_NA_TOKENS, format_float, read_csv
from .optimal_si import OptimalC, optimal_c_numeric
from .simulation import CASES, SIM_METHODS, ScenarioConfig, SimulationReport, run_monte_carlo
from .variance import (
    ContrastInference,
    confidence_interval,
    var_cwi_contrast,
    var_mim_contrast,
    var_si_contrast,
)
from .verify import run_identity_suite

__all__ = ["ANALYZE_METHODS", "AnalyzeRequest", "AnalysisReport", "cmd_analyze", "main"]

ANALYZE_METHODS = ("anova", "si-mean", "si-fixed", "si-opt", "cwi", "mim")
FORMATS = ("table", "json", "csv")

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class AnalyzeRequest:
    input: str
    outcome_col: str = "y"
    arm_col: str = "arm"
    covariates: Optional[tuple[str, ...]] = None
    method: str = "mim"
    contrast: tuple[int, int] = (2, 1)
    level: float = 0.95
    pi: Optional[tuple[float, ...]] = None
    format: str = "table"
    na_tokens: tuple[str, ...] = DEFAULT_NA_TOKENS
    fixed_values: Optional[tuple[float, ...]] = None
    cwi_values: Optional[tuple[tuple[float, ...], ...]] = None
    arm_order: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.method not in ANALYZE_METHODS:
            raise UsageError(f"method must be one of {ANALYZE_METHODS}, got {self.method!r}")
        if not 0.0 < self.level < 1.0:
            raise UsageError(f"level must lie in (0, 1), got {self.level}")
        if self.format not in FORMATS:
            raise UsageError(f"format must be one of {FORMATS}")
        t, s = self.contrast
        if t == s or t < 1 or s < 1:
            raise UsageError(f"contrast needs two distinct arm codes >= 1, got {self.contrast}")
        if self.method == "si-fixed" and self.fixed_values is None:
            raise UsageError("method si-fixed needs --fixed-values")


@dataclass(eq=False)
class AnalysisReport:
    request: AnalyzeRequest
    dataset: TrialDataset
    result: EstimateResult
    inference: ContrastInference
    variance: float
    imputation_values: Optional[np.ndarray] = None
    implied_values: Optional[np.ndarray] = None
    optimizer: Optional[OptimalC] = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        req = self.request
        d = self.dataset
        labels = d.arm_labels or tuple(str(a) for a in range(1, d.k + 1))
        inf = self.inference
        t, s = req.contrast
        return {
            "config": {
                "input": req.input,
                "method": req.method,
                "contrast": [t, s],
                "level": req.level,
                "pi": None if req.pi is None else list(req.pi),
                "outcome_col": req.outcome_col,
                "arm_col": req.arm_col,
                "covariates": list(d.covariate_names),
                "na_tokens": list(req.na_tokens),
            },
            "results": [
                {
                    "method": req.method,
                    "contrast": f"{labels[t - 1]} - {labels[s - 1]}",
                    "estimate": inf.estimate,
                    "se": inf.se,
                    "ci_lower": inf.ci[0],
                    "ci_upper": inf.ci[1],
                    "level": inf.level,
                    "variance": self.variance,
                }
            ],
            "diagnostics": {
                "n": d.n,
                "arm_mapping": {lab: code for code, lab in enumerate(labels, start=1)},
                "arm_counts": {lab: int(c) for lab, c in zip(labels, d.arm_counts())},
                "arm_means": [float(v) for v in self.result.theta],
                "imputation_values": _matrix(self.imputation_values),
                "implied_values": _matrix(self.implied_values),
                "optimizer": None if self.optimizer is None else {
                    "c": [float(v) for v in self.optimizer.c],
                    "objective": self.optimizer.objective,
                    "converged": self.optimizer.converged,
                    "evaluations": self.optimizer.evaluations,
                },
                "notes": list(self.notes),
            },
        }


def _matrix(m: Optional[np.ndarray]) -> Optional[list]:
    return None if m is None else [[float(v) for v in row] for row in np.atleast_2d(m)]


def cmd_analyze(request: AnalyzeRequest) -> AnalysisReport:
    """Load the data, fit the requested estimator and build the interval."""
    d = read_csv(
        request.input, request.outcome_col, request.arm_col, request.covariates,
        request.pi, request.na_tokens, request.arm_order,
    )
    t, s = request.contrast
    if max(t, s) > d.k:
        raise UsageError(f"contrast ({t}, {s}) refers to an arm beyond the {d.k} found")
    notes: list[str] = []
    values = implied_values = None
    opt = None
    method = request.method
    if method == "anova":
        result = anova(d)
        var = var_si_contrast(d.subset_covariates([]), np.zeros(0), t, s)
    elif method in ("si-mean", "si-fixed"):
        if method == "si-mean":
            plan = build_plan(d, "observed-mean")
        else:
            if len(request.fixed_values) != d.J:
                raise UsageError(f"--fixed-values has {len(request.fixed_values)} entries for {d.J} covariates")
            plan = build_plan(d, "fixed", request.fixed_values)
        values = plan.values[0]
        result = anhecova_si(d, plan)
        var = var_si_contrast(d, plan, t, s)
    elif method == "si-opt":
        opt = optimal_c_numeric(d, t, s)
        if not opt.converged:
            notes.append("optimizer stopped at the evaluation limit before converging")
        values = opt.c
        result = anhecova_si(d, opt.c)
        var = opt.objective
    elif method == "cwi":
        if request.cwi_values is not None:
            matrix = np.array(request.cwi_values, dtype=float)
            if matrix.shape != (d.k, d.J):
                raise UsageError(f"--cwi-values has shape {matrix.shape}, expected {(d.k, d.J)}")
        else:
            mim = anhecova_mim(d)
            matrix = mim_to_cwi_values(mim)
            notes.append("cross-world values set to the indicator-method implied values")
            notes.extend(mim.notes)
        plan = ImputationPlan("cross-world", matrix)
        values = matrix
        result = anhecova_cwi(d, plan)
        var = var_cwi_contrast(d, plan, t, s)
    else:
        result = anhecova_mim(d)
        notes.extend(result.notes)
        var = var_mim_contrast(d, result, t, s)
        try:
            implied_values = mim_to_cwi_values(result)
        except NumericalError as exc:
            notes.append(f"implied cross-world values unavailable: {exc}")
    if request.covariates is None:
        with open(request.input, newline="", encoding="utf-8") as fh:
            header = [h.strip() for h in next(csv.reader(fh), [])]
        skipped = [h for h in header if h not in (request.outcome_col, request.arm_col) and h not in d.covariate_names]
        if skipped:
            notes.append("non-numeric columns skipped: " + ", ".join(skipped))
    if result.reduction is not None:
        dup = {j: rep for j, rep in result.reduction.dropped.items() if isinstance(rep, int)}
        for j, rep in dup.items():
            notes.append(f"indicator of {d.covariate_names[j]} duplicates {d.covariate_names[rep]}")
    if not math.isfinite(var) or var < 0:
        raise NumericalError(f"variance estimate {var} is not a finite non-negative number")
    inference = confidence_interval(result.contrast(t, s), var, d.n, request.level)
    return AnalysisReport(request, d, result, inference, var, values, implied_values, opt, notes)


def render_analysis(report: AnalysisReport, fmt: str) -> str:
    data = report.to_dict()
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    res = data["results"][0]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        keys = ["method", "contrast", "estimate", "se", "ci_lower", "ci_upper", "level", "n"]
        writer.writerow(keys)
        row = dict(res, n=data["diagnostics"]["n"])
        writer.writerow([format_float(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
        return buf.getvalue()
    diag = data["diagnostics"]
    pct = round(100 * res["level"], 6)
    lines = [
        f"method      {res['method']}",
        f"contrast    {res['contrast']}",
        f"estimate    {res['estimate']:.6g}",
        f"SE          {res['se']:.6g}",
        f"{pct:g}% CI".ljust(12) + f"[{res['ci_lower']:.6g}, {res['ci_upper']:.6g}]",
        f"n           {diag['n']}",
        "arms        " + ", ".join(f"{lab}={code} (n={diag['arm_counts'][lab]})" for lab, code in diag["arm_mapping"].items()),
    ]
    names = data["config"]["covariates"]
    if diag["imputation_values"] is not None:
        rows = diag["imputation_values"]
        for i, row in enumerate(rows):
            tag = "imputation" if len(rows) == 1 else f"world {i + 1}"
            lines.append(f"{tag:<12}" + ", ".join(f"{nm}={v:.6g}" for nm, v in zip(names, row)))
    if diag["implied_values"] is not None:
        for i, row in enumerate(diag["implied_values"], start=1):
            lines.append(f"implied c{i:<3} " + ", ".join(f"{nm}={v:.6g}" for nm, v in zip(names, row)))
    if diag["optimizer"] is not None:
        o = diag["optimizer"]
        lines.append(f"objective   {o['objective']:.8g} ({'converged' if o['converged'] else 'not converged'}, {o['evaluations']} evaluations)")
    lines.extend(f"note        {msg}" for msg in diag["notes"])
    return "\n".join(lines) + "\n"


def _simulation_dict(reports: Sequence[SimulationReport], timing: bool) -> dict:
    first = reports[0].config
    results = []
    failed = {}
    for rep in reports:
        d = rep.to_dict(include_timing=timing)
        for row in d["results"]:
            results.append({"n": rep.config.n, **row})
        failed[str(rep.config.n)] = d["diagnostics"]["failed_replications"]
    out = {
        "config": {
            "case": first.case,
            "n": [rep.config.n for rep in reports],
            "J": first.J,
            "reps": first.reps,
            "seed": first.seed,
            "rho": first.rho,
            "methods": list(first.methods),
        },
        "results": results,
        "diagnostics": {"true_effect": 1.0, "failed_replications": failed},
    }
    if timing:
        out["diagnostics"]["wall_time_s"] = {str(rep.config.n): rep.wall_time for rep in reports}
    return out


def render_simulation(reports: Sequence[SimulationReport], fmt: str, timing: bool = False) -> str:
    data = _simulation_dict(reports, timing)
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        keys = ["n", "method", "bias", "sd", "mean_se", "coverage_pct", "n_ok", "n_failed", "sd_defined"]
        writer.writerow(keys)
        for row in data["results"]:
            writer.writerow(["NA" if row[k] is None else (format_float(row[k]) if isinstance(row[k], float) else row[k]) for k in keys])
        return buf.getvalue()
    cfg = data["config"]
    head = f"{cfg['case']}, J={cfg['J']}, reps={cfg['reps']}, seed={cfg['seed']}"
    if cfg["case"] == "case3":
        head += f", rho={cfg['rho']}"
    ns = cfg["n"]
    cell = "{:>8}{:>8}{:>8}{:>7}"
    lines = [head, " " * 10 + "".join(f"{'n=' + str(n):^31}" for n in ns)]
    lines.append(f"{'method':<10}" + "".join(cell.format("Bias", "SD", "SE", "CP") for _ in ns))
    by_key = {(row["n"], row["method"]): row for row in data["results"]}

    def fmt_num(v, spec):
        return "NA" if v is None else format(v, spec)

    for m in cfg["methods"]:
        parts = []
        for n in ns:
            row = by_key[(n, m)]
            sd = fmt_num(row["sd"], ".3f") if row["sd_defined"] else "undef"
            parts.append(cell.format(fmt_num(row["bias"], ".3f"), sd, fmt_num(row["mean_se"], ".3f"), fmt_num(row["coverage_pct"], ".1f")))
        lines.append(f"{m:<10}" + "".join(parts))
    for n, counts in data["diagnostics"]["failed_replications"].items():
        bad = {m: c for m, c in counts.items() if c}
        if bad:
            lines.append(f"excluded replications at n={n}: " + ", ".join(f"{m}={c}" for m, c in bad.items()))
    return "\n".join(lines) + "\n"


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _names(values: Optional[Sequence[str]]) -> Optional[tuple[str, ...]]:
    if values is None:
        return None
    return tuple(v.strip() for item in values for v in item.split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cwimpute",
        description="Covariate-adjusted treatment effects with incomplete baseline covariates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate a treatment contrast from a CSV file")
    a.add_argument("input", help="CSV file with a header row")
    a.add_argument("--method", choices=ANALYZE_METHODS, default="mim")
    a.add_argument("--contrast", nargs=2, type=int, default=[2, 1], metavar=("T", "S"),
                   help="report theta_T - theta_S (arm codes, see the echoed mapping)")
    a.add_argument("--level", type=float, default=0.95)
    a.add_argument("--pi", nargs="+", type=float, help="known allocation proportions, one per arm")
    a.add_argument("--outcome-col", default="y")
    a.add_argument("--arm-col", default="arm")
    a.add_argument("--covariates", nargs="+", help="covariate columns (default: all other numeric columns)")
    a.add_argument("--arm-order", nargs="+", help="arm labels to code first, in this order")
    a.add_argument("--na-tokens", nargs="*", default=list(DEFAULT_NA_TOKENS),
                   help="cell values treated as missing (default: empty and NA)")
    a.add_argument("--fixed-values", help="comma-separated imputation values for si-fixed")
    a.add_argument("--cwi-values", help="cross-world values, rows separated by ';' (default: implied by the indicator method)")
    a.add_argument("--format", choices=FORMATS, default="table")

    s = sub.add_parser("simulate", help="Monte Carlo study of the simulation cases")
    s.add_argument("--case", choices=CASES, default="case1")
    s.add_argument("--n", nargs="+", type=int, default=[500])
    s.add_argument("--j", type=int, choices=(2, 5), default=5)
    s.add_argument("--rho", type=float, default=0.3)
    s.add_argument("--reps", type=int, default=3000)
    s.add_argument("--seed", type=int, default=20240101)
    s.add_argument("--method", nargs="+", default=["anova", "si-mean", "si-opt", "mim"],
                   help=f"methods among {', '.join(SIM_METHODS)}")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--format", choices=FORMATS, default="table")
    s.add_argument("--json-out", help="also write the JSON report to this path")
    s.add_argument("--timing", action="store_true", help="include wall time in the JSON diagnostics")

    v = sub.add_parser("verify", help="run the identity self-checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to sweep")
    v.add_argument("--sizes", nargs="+", type=int, default=[200])
    v.add_argument("--datasets", type=int, default=10, help="datasets per size and seed")
    v.add_argument("--format", choices=("table", "json"), default="table")
    v.add_argument("--corrupt-for-testing", action="store_true", help=argparse.SUPPRESS)
    return parser


def _run_analyze(args, out) -> int:
    cwi_values = None
    if args.cwi_values:
        cwi_values = tuple(_floats(row) for row in args.cwi_values.split(";"))
    request = AnalyzeRequest(
        input=args.input,
        outcome_col=args.outcome_col,
        arm_col=args.arm_col,
        covariates=_names(args.covariates),
        method=args.method,
        contrast=tuple(args.contrast),
        level=args.level,
        pi=None if args.pi is None else tuple(args.pi),
        format=args.format,
        na_tokens=tuple(args.na_tokens),
        fixed_values=None if args.fixed_values is None else _floats(args.fixed_values),
        cwi_values=cwi_values,
        arm_order=_names(args.arm_order),
    )
    out.write(render_analysis(cmd_analyze(request), request.format))
    return EXIT_OK


def _run_simulate(args, out) -> int:
    methods = _names(args.method)
    if args.workers < 1:
        raise UsageError("--workers must be at least 1")
    configs = [
        ScenarioConfig(case=args.case, n=n, J=args.j, reps=args.reps, seed=args.seed, rho=args.rho, methods=methods)
        for n in args.n
    ]
    reports = [run_monte_carlo(cfg, workers=args.workers) for cfg in configs]
    out.write(render_simulation(reports, args.format, args.timing))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            fh.write(render_simulation(reports, "json", args.timing))
    return EXIT_OK


def _run_verify(args, out) -> int:
    if args.seeds < 1 or args.datasets < 1 or any(n < 20 for n in args.sizes):
        raise UsageError("--seeds and --datasets must be positive and --sizes at least 20")
    sweep = []
    for seed in range(args.seed, args.seed + args.seeds):
        checks = run_identity_suite(seed, args.sizes, args.datasets, corrupt=args.corrupt_for_testing)
        sweep.append((seed, checks))
    n_pass = sum(all(c.passed for c in checks) for _, checks in sweep)
    if args.format == "json":
        data = {
            "config": {"seed": args.seed, "seeds": args.seeds, "sizes": list(args.sizes), "datasets": args.datasets},
            "results": [
                {"seed": seed, "check": c.name, "max_deviation": c.max_deviation,
                 "tolerance": c.tolerance, "passed": c.passed}
                for seed, checks in sweep for c in checks
            ],
            "diagnostics": {"seeds_passed": n_pass, "seeds_run": len(sweep)},
        }
        out.write(json.dumps(data, indent=2) + "\n")
    else:
        for seed, checks in sweep:
            for c in checks:
                status = "PASS" if c.passed else "FAIL"
                out.write(f"seed {seed:<6} {c.name:<33} max dev {c.max_deviation:.3e}  tol {c.tolerance:.0e}  {status}\n")
        out.write(f"{n_pass}/{len(sweep)} seeds pass\n")
    return EXIT_OK if n_pass == len(sweep) else EXIT_VERIFY_FAILED


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    handler = {"analyze": _run_analyze, "simulate": _run_simulate, "verify": _run_verify}[args.command]
    try:
        return handler(args, out)
    except UsageError as exc:
        print(f"cwimpute {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as exc:
        print(f"cwimpute {args.command}: invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"cwimpute {args.command}: cannot read input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"cwimpute {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CWIError as exc:
        print(f"cwimpute {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"cwimpute {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
