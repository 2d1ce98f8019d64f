"""Command line front end: ampute, impute, score, validate and spiral-demo.

Exit codes: 0 success, 1 input or parse error, 2 contract violation,
3 numerical degeneracy, 4 ``spiral-demo --check`` found the ordering broken.
"""

from __future__ import annotations

import argparse
import csv
import glob
import io
import json
import math
import re
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence


from .amputer import ampute_mar, ampute_mcar, ampute_spiral, gen_spiral, random_mar_spec
from .data import IncompleteMatrix, as_matrix, load_csv, write_csv
from .errors import ContractError, DRScoreError, ParseError
from .evaluation import coverage_width, neg_rmse, normalize_widths, rank_methods
from .imputers import IMPUTERS, ImputationSet, impute
from .inference import confidence_interval, jackknife_variance, propriety_test, variance_from_halves
from .projection import FULL, UNRESTRICTED, ProjectionMode
from .score import ScoreParams, dr_iscore, score_true_data

__all__ = ["main", "RunConfig", "build_parser"]

SCHEMA_VERSION = 1
EXIT_ORDERING = 4
MECHANISMS = ("mcar", "mar", "spiral")
DEMO_METHODS = ("true", "donor", "sample", "regress-mean", "mean")
DEMO_ORDER = ("true", "donor", "sample", "regress-mean")
DEFAULT_METHODS = ("mean", "sample", "regress-mean", "donor")


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of one invocation."""

    subcommand: str
    seed: int
    inputs: tuple[Path, ...] = ()
    outputs: tuple[Path, ...] = ()
    params: ScoreParams = field(default_factory=ScoreParams)
    methods: tuple[str, ...] = ()
    mechanism: str = "mcar"
    p_miss: float = 0.2
    alpha: float = 0.05
    B: int = 30
    ci: bool = False

    def check_paths(self) -> None:
        for p in self.inputs:
            if not p.is_file():
                raise ParseError(f"input file {p} does not exist")
        for p in self.outputs:
            if not p.parent.is_dir():
                raise ParseError(f"output directory {p.parent} does not exist")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _num(v: float) -> float | None:
    """JSON-safe float: NaN becomes null, -0.0 becomes 0.0."""
    v = float(v)
    return None if math.isnan(v) else v + 0.0


def _dump_json(obj, path: Path | None) -> None:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **obj}, indent=2, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _dump_csv(header: Sequence[str], rows: Sequence[Sequence], path: Path | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["NA" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        path.write_text(buf.getvalue(), encoding="utf-8")


def _projection_mode(args) -> ProjectionMode:
    if args.projection_mode == "blocks":
        if args.blocks is None:
            raise ContractError("--projection-mode blocks needs --blocks FILE")
        try:
            blocks = json.loads(Path(args.blocks).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read block file {args.blocks}: {exc}") from exc
        if not isinstance(blocks, list) or not all(isinstance(b, list) for b in blocks):
            raise ParseError("the block file must hold a JSON list of index lists")
        return ProjectionMode.from_blocks(blocks)
    if args.blocks is not None:
        raise ContractError("--blocks only applies with --projection-mode blocks")
    return FULL if args.projection_mode == "full" else UNRESTRICTED


def _params(args) -> ScoreParams:
    return ScoreParams(
        num_proj=args.num_proj,
        num_trees_per_proj=args.trees_per_proj,
        min_node_size=args.min_node,
        tau=args.tau,
        projection_mode=_projection_mode(args),
        seed=args.seed,
        threads=args.threads,
    )


def _ampute(X: IncompleteMatrix, mechanism: str, p_miss: float, seed: int, mar_patterns: int | None = None):
    if mechanism == "mcar":
        return ampute_mcar(X, p_miss, seed)
    if mechanism == "spiral":
        return ampute_spiral(X, p_miss, seed)
    spec = random_mar_spec(X.n_cols, mar_patterns, seed, p_miss)
    return ampute_mar(X, spec, seed)


def _natural_key(path: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", path)]


def _completion_files(spec: str) -> list[Path]:
    if any(ch in spec for ch in "*?["):
        files = glob.glob(spec)
    else:
        files = glob.glob(glob.escape(spec) + "*.csv")
        files = [f for f in files if not f.endswith(".levels.json")]
    if not files:
        raise ParseError(f"no completion files match {spec!r}")
    return [Path(f) for f in sorted(files, key=_natural_key)]


def _load_completions(X: IncompleteMatrix, files: Sequence[Path]) -> ImputationSet:
    levels = {X.column_names[j]: list(X.levels[j]) for j in range(X.n_cols) if X.kinds[j].is_categorical}
    comps = []
    for f in files:
        C = load_csv(f, levels=levels or None)
        if C.column_names != X.column_names:
            raise ContractError(f"{f}: columns {list(C.column_names)} differ from the incomplete file")
        if C.n_rows != X.n_rows:
            raise ContractError(f"{f}: {C.n_rows} rows, the incomplete file has {X.n_rows}")
        if not C.is_complete:
            raise ContractError(f"{f}: completion still has missing cells")
        comps.append(C.values)
    return ImputationSet(X, tuple(comps), "custom")


# ---- subcommands ---------------------------------------------------------


def cmd_ampute(args) -> int:
    cfg = RunConfig("ampute", args.seed, (Path(args.input),), (Path(args.out),), p_miss=args.p_miss)
    cfg.check_paths()
    X = load_csv(args.input)
    if not X.is_complete:
        raise ContractError("ampute needs a fully observed input file")
    write_csv(_ampute(X, args.mechanism, args.p_miss, args.seed, args.mar_patterns), args.out)
    return 0


def cmd_impute(args) -> int:
    prefix = Path(args.out_prefix)
    cfg = RunConfig("impute", args.seed, (Path(args.input),), (prefix,), methods=(args.method,))
    cfg.check_paths()
    X = load_csv(args.input)
    imp = impute(args.method, X, args.n_imputations, args.seed)
    for j in range(imp.n_imputations):
        write_csv(imp.completion_matrix(j), f"{prefix}_{j}.csv")
    return 0


def cmd_score(args) -> int:
    out = Path(args.json_out) if args.json_out else None
    cfg = RunConfig(
        "score", args.seed, (Path(args.input),), (out,) if out else (), _params(args),
        alpha=args.alpha, B=args.B, ci=args.ci,
    )
    cfg.check_paths()
    X = load_csv(args.input)
    imp = _load_completions(X, _completion_files(args.imputations))
    report = dr_iscore(X, imp, cfg.params)
    if cfg.ci:
        jk = jackknife_variance(
            lambda sub: dr_iscore(sub.source, sub, cfg.params).score, imp, cfg.B, cfg.seed, report.score
        )
        report = report.with_interval(jk.variance, confidence_interval(report.score, jk.variance, cfg.alpha))
    payload = report.to_dict()
    payload["n_imputations"] = imp.n_imputations
    _dump_json(payload, out)
    return 0


def _mask_fn(method: str, N: int, seed: int, params: ScoreParams):
    def score_H(Xc, mask):
        X = as_matrix(Xc).with_mask(mask)
        return dr_iscore(X, impute(method, X, N, seed), params).score

    return score_H


def _true_fn(params: ScoreParams):
    def score_true(Xc, mask):
        return score_true_data(Xc, mask, params).score

    return score_true


def cmd_validate(args) -> int:
    out_dir = Path(args.out_dir)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in IMPUTERS:
            raise ContractError(f"unknown imputation method {m!r}; choose from {sorted(IMPUTERS)}")
    if not methods:
        raise ContractError("--methods is empty")
    cfg = RunConfig(
        "validate", args.seed, (Path(args.input),), (out_dir / "report.json",), _params(args),
        methods, args.mechanism, args.p_miss, args.alpha, args.B, True,
    )
    cfg.check_paths()
    full = load_csv(args.input)
    if not full.is_complete:
        raise ContractError("validate needs a fully observed input file")
    X = _ampute(full, cfg.mechanism, cfg.p_miss, cfg.seed, args.mar_patterns)
    if not X.mask.any():
        raise ContractError("nothing to score: the amputation left no missing cell")
    mask = X.mask
    params = cfg.params
    score_true = _true_fn(params)

    true_point = true_halves = None
    results, coverages, rmses = [], [], []
    for m in methods:
        res = propriety_test(
            _mask_fn(m, args.n_imputations, cfg.seed, params), score_true, full, mask, cfg.B, cfg.seed, m,
            true_point=true_point, true_halves=true_halves,
        )
        true_point, true_halves = res.true_score, res.true_halves
        results.append(res)
        cov_imp = impute(m, X, args.coverage_imputations, cfg.seed)
        coverages.append(coverage_width(cov_imp, full.values, mask))
        rmses.append(neg_rmse(cov_imp, full.values, mask) if not X.categorical_mask.all() else math.nan)
    coverages = normalize_widths(coverages)
    ranks = rank_methods([r.score for r in results])

    report_methods, table, scatter = [], [], []
    for res, cov, rmse, rank in zip(results, coverages, rmses, ranks):
        var = variance_from_halves(res.score_halves)
        lo, hi = confidence_interval(res.score, var, cfg.alpha)
        report_methods.append({
            "method": res.method_name,
            "score": _num(res.score),
            "variance": _num(var),
            "ci_lo": _num(lo),
            "ci_hi": _num(hi),
            "D_H": _num(res.D_H),
            "sigma": _num(res.sigma),
            "p_superiority": _num(res.p_superiority),
            "p_inferiority": _num(res.p_inferiority),
            "bucket_superiority": res.bucket_superiority,
            "bucket_inferiority": res.bucket_inferiority,
            "n_replicates": res.jackknife.B,
            "n_dropped": res.jackknife.n_dropped,
        })
        table.append([
            res.method_name, _num(res.score), _num(lo), _num(hi), _num(cov.coverage),
            _num(cov.normalized_width), _num(rmse), rank,
        ])
        scatter.append({
            "method": res.method_name,
            "coverage": _num(cov.coverage),
            "width_raw": _num(cov.raw_width),
            "width_norm": _num(cov.normalized_width),
            "quadrant": cov.quadrant,
        })
    header = {
        "mechanism": cfg.mechanism,
        "p_miss": cfg.p_miss,
        "realized_p_miss": _num(mask.mean()),
        "seed": cfg.seed,
        "B": cfg.B,
        "alpha": cfg.alpha,
        "n_imputations": args.n_imputations,
    }
    _dump_json({**header, "true_score": _num(true_point), "methods": report_methods}, out_dir / "report.json")
    _dump_csv(
        ("method", "score", "ci_lo", "ci_hi", "coverage", "width_norm", "neg_rmse", "rank"),
        table, out_dir / "table.csv",
    )
    _dump_json(
        {**header, "n_imputations": args.coverage_imputations, "points": scatter}, out_dir / "scatter.json"
    )
    return 0


def spiral_demo(n: int, p_miss: float, seed: int, N: int, B: int, alpha: float, params: ScoreParams) -> dict:
    """Score table of the spiral example: both mechanisms, true data and four imputers.

    Intervals come from half-sampling the fixed completions; ``B = 0`` skips them.
    """
    full = gen_spiral(n, seed=seed)
    rows, checks = [], {}
    for mech in ("mcar", "mar"):
        X = ampute_mcar(full, p_miss, seed) if mech == "mcar" else ampute_spiral(full, p_miss, seed)
        scores = {}
        for m in DEMO_METHODS:
            if m == "true":
                imp = ImputationSet(X, (full.values,), "true", seed)
            else:
                imp = impute(m, X, N, seed)
            point = dr_iscore(X, imp, params).score
            var = lo = hi = math.nan
            if B > 0:
                jk = jackknife_variance(lambda sub: dr_iscore(sub.source, sub, params).score, imp, B, seed, point)
                var = jk.variance
                lo, hi = confidence_interval(point, var, alpha)
            scores[m] = (point, lo, hi)
            rows.append({
                "mechanism": mech,
                "method": m,
                "score": _num(point),
                "variance": _num(var),
                "ci_lo": _num(lo),
                "ci_hi": _num(hi),
                "neg_rmse": _num(neg_rmse(imp, full.values, X.mask)),
            })
        ordered = all(scores[a][0] > scores[b][0] for a, b in zip(DEMO_ORDER, DEMO_ORDER[1:]))
        s, r = scores["sample"], scores["regress-mean"]
        disjoint = None if B == 0 else bool(s[1] > r[2] or r[1] > s[2])
        checks[mech] = {"ordering_holds": ordered, "sample_regress_ci_disjoint": disjoint}
    return {"n": n, "p_miss": p_miss, "seed": seed, "n_imputations": N, "B": B, "rows": rows, "checks": checks}


def cmd_spiral_demo(args) -> int:
    json_out = Path(args.json_out) if args.json_out else None
    csv_out = Path(args.csv_out) if args.csv_out else None
    cfg = RunConfig(
        "spiral-demo", args.seed, (), tuple(p for p in (json_out, csv_out) if p), _params(args),
        DEMO_METHODS, "spiral", args.p_miss, args.alpha, args.B, args.B > 0,
    )
    cfg.check_paths()
    if args.n < 4:
        raise ContractError("--n must be at least 4")
    if args.B < 0:
        raise ContractError("--B must be >= 0")
    res = spiral_demo(args.n, cfg.p_miss, cfg.seed, args.n_imputations, cfg.B, cfg.alpha, cfg.params)
    if csv_out is not None:
        cols = ("mechanism", "method", "score", "variance", "ci_lo", "ci_hi", "neg_rmse")
        _dump_csv(cols, [[r[c] for c in cols] for r in res["rows"]], csv_out)
    if json_out is not None or csv_out is None:
        _dump_json(res, json_out)
    if args.check:
        ok = all(c["ordering_holds"] for c in res["checks"].values())
        for mech, c in res["checks"].items():
            print(f"{mech}: ordering {'holds' if c['ordering_holds'] else 'BROKEN'}", file=sys.stderr)
        return 0 if ok else EXIT_ORDERING
    return 0


# ---- parser --------------------------------------------------------------


def _add_seed(p) -> None:
    p.add_argument("--seed", type=int, required=True, help="integer seed; every random draw derives from it")


def _add_score_flags(p, num_proj_default=None) -> None:
    g = p.add_argument_group("score estimator")
    g.add_argument("--num-proj", type=int, default=num_proj_default,
                   help="projections per pattern group (default: 50 up to 6 columns, 100 up to 14, else 200)")
    g.add_argument("--trees-per-proj", type=int, default=5, help="trees per projection forest (default 5)")
    g.add_argument("--min-node", type=int, default=10, help="minimum node weight of the forest (default 10)")
    g.add_argument("--tau", type=float, default=0.75, help="class balancing threshold in (0, 1) (default 0.75)")
    g.add_argument("--projection-mode", choices=("unrestricted", "full", "blocks"), default="unrestricted",
                   help="how projections are drawn (default unrestricted)")
    g.add_argument("--blocks", metavar="FILE", help="JSON list of column index lists for blocks mode")
    g.add_argument("--threads", type=int, default=1, help="worker threads; never changes results (default 1)")
    g.add_argument("--alpha", type=float, default=0.05, help="confidence intervals have level 1 - alpha")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drscore", description="Density-ratio imputation scores.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ampute", help="introduce missing values into a complete CSV")
    p.add_argument("--mechanism", choices=MECHANISMS, required=True, help="missingness mechanism")
    p.add_argument("--p-miss", type=float, required=True, help="target fraction of missing cells")
    _add_seed(p)
    p.add_argument("--in", dest="input", required=True, help="complete input CSV")
    p.add_argument("--out", required=True, help="output CSV with NA cells")
    p.add_argument("--mar-patterns", type=int, default=None, help="candidate patterns for mar (default ceil(d/2))")
    p.set_defaults(func=cmd_ampute)

    p = sub.add_parser("impute", help="write N completions of an incomplete CSV")
    p.add_argument("--method", choices=sorted(IMPUTERS), required=True, help="imputation method")
    p.add_argument("--n-imputations", type=int, default=5, help="number of completions (default 5)")
    _add_seed(p)
    p.add_argument("--in", dest="input", required=True, help="incomplete input CSV")
    p.add_argument("--out-prefix", required=True, help="completion j is written to PREFIX_j.csv")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("score", help="score completions against an incomplete CSV")
    p.add_argument("--in", dest="input", required=True, help="incomplete CSV")
    p.add_argument("--imputations", required=True,
                   help="glob pattern, or a prefix matched as PREFIX*.csv; files are taken in natural order")
    _add_seed(p)
    _add_score_flags(p)
    p.add_argument("--ci", action=argparse.BooleanOptionalAction, default=False,
                   help="add a half-sampling jackknife variance and confidence interval")
    p.add_argument("--B", type=int, default=30, help="jackknife replicates for --ci (default 30)")
    p.add_argument("--json-out", help="report path (default stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("validate", help="ampute a complete CSV, impute, score, test and evaluate")
    p.add_argument("--in", dest="input", required=True, help="complete CSV")
    p.add_argument("--mechanism", choices=MECHANISMS, default="mcar", help="missingness mechanism (default mcar)")
    p.add_argument("--p-miss", type=float, default=0.2, help="target fraction of missing cells (default 0.2)")
    p.add_argument("--mar-patterns", type=int, default=None, help="candidate patterns for mar")
    p.add_argument("--methods", default=",".join(DEFAULT_METHODS),
                   help=f"comma separated imputers (default {','.join(DEFAULT_METHODS)})")
    p.add_argument("--n-imputations", type=int, default=5, help="completions per score (default 5)")
    p.add_argument("--coverage-imputations", type=int, default=20,
                   help="completions for coverage, width and RMSE (default 20)")
    p.add_argument("--B", type=int, default=30, help="jackknife replicates (default 30)")
    _add_seed(p)
    _add_score_flags(p)
    p.add_argument("--out-dir", required=True, help="directory for report.json, table.csv and scatter.json")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("spiral-demo", help="score true data and four imputers on the two-arm spiral")
    p.add_argument("--n", type=int, default=1000, help="rows (default 1000)")
    p.add_argument("--p-miss", type=float, default=0.3, help="missingness probability (default 0.3)")
    _add_seed(p)
    p.add_argument("--n-imputations", type=int, default=5, help="completions per imputer (default 5)")
    p.add_argument("--B", type=int, default=30, help="jackknife replicates, 0 skips intervals (default 30)")
    _add_score_flags(p)
    p.add_argument("--check", action="store_true",
                   help=f"exit {EXIT_ORDERING} unless true > donor > sample > regress-mean under both mechanisms")
    p.add_argument("--json-out", help="JSON table path (default stdout)")
    p.add_argument("--csv-out", help="CSV table path")
    p.set_defaults(func=cmd_spiral_demo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except DRScoreError as exc:
        print(f"drscore: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"drscore: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
