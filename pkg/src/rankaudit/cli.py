"""Command-line front end: metrics, significance, leaderboard, fairness, report,
and a family-wise error-rate simulation harness.

Exit codes: 0 success, 2 input/validation/usage error, 1 internal error.
Diagnostics go to stderr; stdout carries machine-readable ``key=value``
summaries only. All outputs land under the directory given by ``--out``.

``RANKAUDIT_THREADS`` caps worker parallelism for the pairwise tests (the
results are byte-identical regardless of the setting); there is no other
environment dependence.
"""

from __future__ import annotations

import argparse
import csv
import re
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .data_model import MetricKind, load_demographics, load_mask, load_score_table
from .errors import AuditError, ConfigurationError, ParseError
from .fairness import DpdMode, fairness_audit, group_scores, write_fairness_csv, write_worst_pairs_csv
from .leaderboard import (
    SortKey,
    build_leaderboard,
    default_policy,
    load_policy,
    rank_changes,
    write_leaderboard_csv,
    write_rank_changes_csv,
)
from .rank_stats import (
    TIER_THRESHOLDS,
    significance_map,
    simulate_null_fwer,
    threads_from_env,
    write_significance_csv,
)
from .render import kde, render_significance_svg, render_violin_svg
from .seg_metrics import DEFAULT_TOLERANCE_MM, Tolerance, dsc, nsd

__all__ = ["RunConfig", "run", "main"]

_DEFAULTS = {
    "metric": "DSC",
    "alpha": 0.05,
    "tau_mm": DEFAULT_TOLERANCE_MM,
    "min_n": 40,
    "depth": 2,
    "t": 0.8,
    "flag_tau": 0.10,
    "mode": "rate",
    "sort": "avg_dsc",
    "seed": 0,
    "delimiter": ",",
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved inputs and thresholds for one CLI invocation.

    Built from defaults, then the optional ``--config`` file, then explicit
    flags (flags win). Paths from the config file resolve relative to the
    config file; paths from flags resolve relative to the working directory.
    """

    out: Path
    scores: Path | None = None
    demographics: Path | None = None
    pairs: Path | None = None
    policy: Path | None = None
    metric: MetricKind = MetricKind.DSC
    alpha: float = 0.05
    tau_mm: float = DEFAULT_TOLERANCE_MM
    min_n: int = 40
    depth: int = 2
    t: float = 0.8
    flag_tau: float = 0.10
    mode: DpdMode = DpdMode.RATE
    sort: SortKey = SortKey.AVG_DSC
    top_k: int | None = None
    target: str | None = None
    include_unknown: bool = False
    order: tuple[str, ...] | None = None
    tier_thresholds: tuple[float, ...] = TIER_THRESHOLDS
    delimiter: str = ","
    seed: int = 0
    workers: int = field(default=1)

    def __post_init__(self) -> None:
        for name, value in (("alpha", self.alpha), ("t", self.t), ("flag_tau", self.flag_tau)):
            if not (0.0 < value < 1.0):
                raise ConfigurationError(f"{name} must lie strictly inside (0, 1), got {value!r}")
        if self.tau_mm < 0:
            raise ConfigurationError(f"tau_mm must be nonnegative, got {self.tau_mm!r}")
        if self.min_n < 1 or self.depth < 1:
            raise ConfigurationError("min_n and depth must be >= 1")
        if self.top_k is not None and self.top_k < 1:
            raise ConfigurationError(f"top_k must be >= 1, got {self.top_k!r}")


def _load_config_file(path: Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: cannot parse config file: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a table of key = value entries")
    return data


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg: dict = {}
    cfg_dir = Path.cwd()
    if getattr(args, "config", None):
        cfg_path = Path(args.config)
        cfg = _load_config_file(cfg_path)
        cfg_dir = cfg_path.parent

    def pick(name: str, default=None):
        value = getattr(args, name, None)
        if value is not None:
            return value, False
        if name in cfg:
            return cfg[name], True
        return _DEFAULTS.get(name, default), False

    def pick_path(name: str) -> Path | None:
        value, from_cfg = pick(name)
        if value is None:
            return None
        p = Path(value)
        if from_cfg and not p.is_absolute():
            p = cfg_dir / p
        return p

    out = pick_path("out")
    if out is None:
        raise ConfigurationError("an output directory is required (--out or config key 'out')")
    metric, _ = pick("metric")
    mode, _ = pick("mode")
    sort, _ = pick("sort")
    order = cfg.get("order")  # explicit axis order; config file only
    if order is not None and not (
        isinstance(order, list) and all(isinstance(m, str) for m in order)
    ):
        raise ConfigurationError("config key 'order' must be a list of method ids")
    return RunConfig(
        out=out,
        scores=pick_path("scores"),
        demographics=pick_path("demographics"),
        pairs=pick_path("pairs"),
        policy=pick_path("policy"),
        metric=MetricKind.parse(str(metric)),
        alpha=float(pick("alpha")[0]),
        tau_mm=float(pick("tau_mm")[0]),
        min_n=int(pick("min_n")[0]),
        depth=int(pick("depth")[0]),
        t=float(pick("t")[0]),
        flag_tau=float(pick("flag_tau")[0]),
        mode=DpdMode.parse(str(mode)),
        sort=SortKey.parse(str(sort)),
        top_k=(int(v) if (v := pick("top_k")[0]) is not None else None),
        target=(str(v) if (v := pick("target")[0]) is not None else None),
        include_unknown=bool(pick("include_unknown", False)[0]),
        order=tuple(order) if order is not None else None,
        delimiter=str(pick("delimiter")[0]),
        seed=int(pick("seed")[0]),
        workers=threads_from_env(),
    )


def _require(cfg: RunConfig, attr: str, flag: str) -> Path:
    value = getattr(cfg, attr)
    if value is None:
        raise ConfigurationError(f"this subcommand requires {flag}")
    return value


def _load_scores(cfg: RunConfig):
    from .data_model import TableSchema

    path = _require(cfg, "scores", "--scores")
    return load_score_table(path, TableSchema(delimiter=cfg.delimiter))


def _emit(line: str) -> None:
    sys.stdout.write(line + "\n")


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def _cmd_significance(cfg: RunConfig) -> int:
    table = _load_scores(cfg)
    smap = significance_map(
        table, cfg.metric, alpha=cfg.alpha, order=cfg.order, workers=cfg.workers
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_significance_csv(smap, cfg.out / "significance.csv")
    (cfg.out / "significance.svg").write_text(render_significance_svg(smap), encoding="utf-8")
    n_sig = len(smap.significant_cells())
    _emit(
        f"command=significance methods={len(smap.methods)} metric={cfg.metric.value} "
        f"alpha={cfg.alpha!r} k={smap.k_comparisons} significant_cells={n_sig}"
    )
    return 0


def _cmd_leaderboard(cfg: RunConfig) -> int:
    table = _load_scores(cfg)
    policy = load_policy(cfg.policy) if cfg.policy is not None else default_policy()
    lb = build_leaderboard(table, policy, sort_key=cfg.sort)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_leaderboard_csv(lb, cfg.out / "leaderboard.csv")
    top_k = cfg.top_k if cfg.top_k is not None else min(4, len(lb.methods))
    report = rank_changes(lb, SortKey.AVG_DSC, SortKey.AVG_NSD, top_k=top_k)
    write_rank_changes_csv(report, cfg.out / "rank_changes.csv")
    _emit(
        f"command=leaderboard methods={len(lb.methods)} targets={len(lb.targets)} "
        f"sort={cfg.sort.value} changed={report.n_changed} top_k={top_k} "
        f"top_k_reversal={str(report.top_k_reversal).lower()}"
    )
    return 0


def _cmd_fairness(cfg: RunConfig) -> int:
    table = _load_scores(cfg)
    meta = load_demographics(_require(cfg, "demographics", "--demographics"), delimiter=cfg.delimiter)
    report = fairness_audit(
        table,
        meta,
        metric=cfg.metric,
        mode=cfg.mode,
        min_n=cfg.min_n,
        depth=cfg.depth,
        t=cfg.t,
        flag_tau=cfg.flag_tau,
        target=cfg.target,
        include_unknown=cfg.include_unknown,
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_fairness_csv(report, cfg.out / "fairness.csv")
    write_worst_pairs_csv(report, cfg.out / "fairness_worst.csv")
    n_flagged = sum(1 for rs in report.results.values() for r in rs if r.flagged)
    for method in report.method_order:
        worst = report.worst[method]
        scores_a = group_scores(table, method, cfg.metric, worst.group_a, cfg.target)
        scores_b = group_scores(table, method, cfg.metric, worst.group_b, cfg.target)
        if len(scores_a) < 2 or len(scores_b) < 2:
            continue
        svg = render_violin_svg(
            kde(scores_a), worst.group_a.label(), kde(scores_b), worst.group_b.label(), worst
        )
        (cfg.out / f"violin_{_safe_name(method)}.svg").write_text(svg, encoding="utf-8")
    for method in report.skipped:
        print(f"note: method {method!r} had no qualifying subgroup pair", file=sys.stderr)
    _emit(
        f"command=fairness methods={len(report.method_order)} mode={report.mode.value} "
        f"min_n={report.min_n} flagged_pairs={n_flagged} "
        f"most_equitable={report.method_order[0]}"
    )
    return 0


def _cmd_metrics(cfg: RunConfig) -> int:
    manifest = _require(cfg, "pairs", "--pairs")
    rows = []
    with open(manifest, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=cfg.delimiter)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{manifest}: empty manifest")
        header = [h.strip() for h in header]
        for col in ("case", "target", "gt", "pred"):
            if col not in header:
                raise ParseError(f"{manifest}: header is missing required column {col!r}")
        idx = {col: header.index(col) for col in ("case", "target", "gt", "pred")}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{manifest}:{lineno}: expected {len(header)} columns, got {len(row)}")
            rows.append((row[idx["case"]], row[idx["target"]], row[idx["gt"]], row[idx["pred"]]))

    tol = Tolerance(cfg.tau_mm)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["case", "target", "dsc", "nsd", "tau_mm", "note"])
        for case, target, gt_rel, pred_rel in rows:
            gt = load_mask(manifest.parent / gt_rel)
            pred = load_mask(manifest.parent / pred_rel)
            empty_gt = gt.foreground_count == 0
            empty_pred = pred.foreground_count == 0
            note = ""
            if empty_gt and empty_pred:
                note = "empty_both"
            elif empty_gt:
                note = "empty_gt"
            elif empty_pred:
                note = "empty_pred"
            writer.writerow(
                [case, target, repr(dsc(gt, pred)), repr(nsd(gt, pred, tol)), repr(tol.tau), note]
            )
    _emit(f"command=metrics pairs={len(rows)} tau_mm={tol.tau!r}")
    return 0


def _cmd_report(cfg: RunConfig) -> int:
    code = _cmd_significance(cfg)
    if code != 0:
        return code
    code = _cmd_leaderboard(cfg)
    if code != 0:
        return code
    if cfg.demographics is not None:
        code = _cmd_fairness(cfg)
        if code != 0:
            return code
    else:
        print("note: no --demographics given, skipping the fairness audit", file=sys.stderr)
    return 0


def _cmd_simulate_null(cfg: RunConfig, n_methods: int, n_cases: int, reps: int) -> int:
    result = simulate_null_fwer(
        n_methods, n_cases, reps, alpha=cfg.alpha, seed=cfg.seed, workers=cfg.workers
    )
    _emit(
        f"command=simulate-null methods={n_methods} cases={n_cases} reps={result.reps} "
        f"alpha={cfg.alpha!r} seed={cfg.seed} hits={result.hits} fwer={result.fwer!r}"
    )
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="structured-text config file; flags override its values")
    p.add_argument("--out", help="output directory (created if absent)")
    p.add_argument("--delimiter", help="field delimiter for delimited inputs (default ',')")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankaudit",
        description="Audit a method-comparison leaderboard: ranking significance, "
        "metric-appropriate rankings, and demographic fairness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="compute DSC and NSD for ground-truth/prediction mask pairs")
    _add_common(p)
    p.add_argument("--pairs", help="manifest CSV with columns case,target,gt,pred")
    p.add_argument("--tau", dest="tau_mm", type=float, help="NSD tolerance in mm (default 1.5)")

    p = sub.add_parser("significance", help="pairwise one-sided rank tests and the tier map")
    _add_common(p)
    p.add_argument("--scores", help="score table CSV")
    p.add_argument("--metric", choices=["DSC", "NSD"], help="metric to test on (default DSC)")
    p.add_argument("--alpha", type=float, help="family-wise significance level (default 0.05)")

    p = sub.add_parser("leaderboard", help="per-target rankings under a metric policy")
    _add_common(p)
    p.add_argument("--scores", help="score table CSV")
    p.add_argument("--policy", help="target-to-metric policy file (default: built-in dictionary)")
    p.add_argument("--sort", choices=[k.value for k in SortKey], help="leaderboard sort key")
    p.add_argument("--top-k", dest="top_k", type=int, help="top-k window for the reversal check")

    p = sub.add_parser("fairness", help="demographic parity audit over subgroup intersections")
    _add_common(p)
    p.add_argument("--scores", help="score table CSV")
    p.add_argument("--demographics", help="demographics CSV (case,<attr1>,<attr2>,...)")
    p.add_argument("--metric", choices=["DSC", "NSD"], help="metric to audit (default DSC)")
    p.add_argument("--mode", choices=["rate", "mean"], help="DPD mode (default rate)")
    p.add_argument("--min-n", dest="min_n", type=int, help="minimum subgroup size (default 40)")
    p.add_argument("--depth", type=int, help="maximum intersection depth (default 2)")
    p.add_argument("--t", type=float, help="success threshold on the score (default 0.8)")
    p.add_argument("--flag-tau", dest="flag_tau", type=float, help="disparity flag threshold (default 0.10)")
    p.add_argument("--target", help="restrict per-case scores to one target (default: mean over targets)")
    p.add_argument(
        "--include-unknown", dest="include_unknown", action="store_true", default=None,
        help="treat 'unknown' as an ordinary category during subgroup enumeration",
    )

    p = sub.add_parser("report", help="run significance, leaderboard, and fairness together")
    _add_common(p)
    p.add_argument("--scores", help="score table CSV")
    p.add_argument("--demographics", help="demographics CSV (omit to skip the fairness audit)")
    p.add_argument("--policy", help="target-to-metric policy file")
    p.add_argument("--metric", choices=["DSC", "NSD"], help="metric for significance and fairness")
    p.add_argument("--alpha", type=float)
    p.add_argument("--sort", choices=[k.value for k in SortKey])
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--mode", choices=["rate", "mean"])
    p.add_argument("--min-n", dest="min_n", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--t", type=float)
    p.add_argument("--flag-tau", dest="flag_tau", type=float)
    p.add_argument("--target")
    p.add_argument("--include-unknown", dest="include_unknown", action="store_true", default=None)

    p = sub.add_parser("simulate-null", help="empirical family-wise error rate under a null")
    _add_common(p)
    p.add_argument("--methods", type=int, required=True, help="number of simulated methods")
    p.add_argument("--cases", type=int, required=True, help="number of simulated cases")
    p.add_argument("--reps", type=int, required=True, help="number of repetitions")
    p.add_argument("--alpha", type=float, help="family-wise significance level (default 0.05)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")

    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse arguments and execute one subcommand; returns the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return int(exc.code or 0)
    try:
        if args.command == "simulate-null":
            ns = argparse.Namespace(**{**vars(args), "out": getattr(args, "out", None) or "."})
            cfg = _build_config(ns)
            return _cmd_simulate_null(cfg, args.methods, args.cases, args.reps)
        cfg = _build_config(args)
        handler = {
            "metrics": _cmd_metrics,
            "significance": _cmd_significance,
            "leaderboard": _cmd_leaderboard,
            "fairness": _cmd_fairness,
            "report": _cmd_report,
        }[args.command]
        return handler(cfg)
    except (AuditError, FileNotFoundError, KeyError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
