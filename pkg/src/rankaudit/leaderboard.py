"""Leaderboards under a target-to-metric policy, and rank-change reports.

Each target (organ, class) is ranked under the metric the policy assigns to
it. A method's Average DSC and Average NSD are unweighted means over the
targets where it has data (coverage is reported rather than zero-filled);
the Overall score is the unweighted mean of those two averages. A fourth
aggregate, POLICY, averages each target's policy-chosen metric instead.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

from .data_model import MetricKind, ScoreTable
from .errors import ConfigurationError
from .seg_metrics import DEFAULT_TOLERANCE_MM, Tolerance

__all__ = [
    "SortKey",
    "MetricPolicy",
    "Leaderboard",
    "RankChangeReport",
    "CoverageWarning",
    "method_target_mean",
    "default_policy",
    "load_policy",
    "build_leaderboard",
    "rank_changes",
    "write_leaderboard_csv",
    "write_rank_changes_csv",
]


class CoverageWarning(UserWarning):
    """A policy assigns a metric to a target that has no scores under it."""


class SortKey(enum.Enum):
    AVG_DSC = "avg_dsc"
    AVG_NSD = "avg_nsd"
    OVERALL = "overall"
    POLICY = "policy"

    @classmethod
    def parse(cls, text: str) -> "SortKey":
        name = text.strip().lower()
        for key in cls:
            if key.value == name:
                return key
        raise ConfigurationError(f"unknown sort key {text!r}")


@dataclass(frozen=True)
class MetricPolicy:
    """Target-to-metric mapping; NSD assignments always carry a tolerance."""

    mapping: dict[str, tuple[MetricKind, Tolerance | None]]
    default_rule: MetricKind = MetricKind.DSC

    def __post_init__(self) -> None:
        for target, (kind, tol) in self.mapping.items():
            if kind is MetricKind.NSD and tol is None:
                raise ConfigurationError(f"NSD target {target!r} has no tolerance")

    def metric_for(self, target: str) -> MetricKind:
        entry = self.mapping.get(target)
        return entry[0] if entry is not None else self.default_rule

    def tau_for(self, target: str) -> Tolerance | None:
        """Tolerance for NSD targets (default filled for unmapped ones), else None."""
        entry = self.mapping.get(target)
        if entry is not None:
            return entry[1]
        if self.default_rule is MetricKind.NSD:
            return Tolerance(DEFAULT_TOLERANCE_MM)
        return None


_DSC_TARGETS = ("heart", "liver", "kidney_left", "kidney_right", "spleen", "stomach", "tumor")
_NSD_TARGETS = ("aorta", "postcava", "vessels", "airways", "ducts", "spinal_cord")


def default_policy() -> MetricPolicy:
    """Built-in dictionary: solid organs score DSC, tubular structures NSD."""
    mapping: dict[str, tuple[MetricKind, Tolerance | None]] = {}
    for target in _DSC_TARGETS:
        mapping[target] = (MetricKind.DSC, None)
    for target in _NSD_TARGETS:
        mapping[target] = (MetricKind.NSD, Tolerance(DEFAULT_TOLERANCE_MM))
    return MetricPolicy(mapping=mapping, default_rule=MetricKind.DSC)


def load_policy(path: str | Path) -> MetricPolicy:
    """Read a policy file.

    Format: one ``target = {metric = "DSC"|"NSD", tau_mm = <float>}`` entry
    per target plus an optional ``default = "DSC"`` fallback rule. NSD
    entries without tau_mm get the built-in default tolerance.
    """
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: cannot parse policy file: {exc}") from None
    default_rule = MetricKind.DSC
    mapping: dict[str, tuple[MetricKind, Tolerance | None]] = {}
    for key, value in data.items():
        if key == "default":
            default_rule = MetricKind.parse(str(value))
            continue
        if isinstance(value, str):
            kind = MetricKind.parse(value)
            tau = None
        elif isinstance(value, dict):
            if "metric" not in value:
                raise ConfigurationError(f"{path}: target {key!r} entry has no 'metric'")
            kind = MetricKind.parse(str(value["metric"]))
            tau = value.get("tau_mm")
        else:
            raise ConfigurationError(f"{path}: target {key!r} must map to a string or a table")
        if kind is MetricKind.NSD:
            tol = Tolerance(float(tau)) if tau is not None else Tolerance(DEFAULT_TOLERANCE_MM)
        else:
            tol = None
        mapping[key] = (kind, tol)
    return MetricPolicy(mapping=mapping, default_rule=default_rule)


def method_target_mean(
    table: ScoreTable, method: str, target: str, metric: MetricKind
) -> float | None:
    """Mean over cases of one method's scores for one target, or None if no data."""
    values = [v for c in table.cases if (v := table.get(method, c, target, metric)) is not None]
    if not values:
        return None
    return math.fsum(values) / len(values)


@dataclass(frozen=True, eq=False)
class Leaderboard:
    """Per-target rankings plus Average DSC / Average NSD / Overall aggregates."""

    methods: tuple[str, ...]
    family: dict[str, str]
    targets: tuple[str, ...]
    per_target_rank: dict[str, list[tuple[str, float]]]
    avg_dsc: dict[str, float | None]
    avg_nsd: dict[str, float | None]
    overall: dict[str, float | None]
    policy_avg: dict[str, float | None]
    coverage: dict[str, float]
    sort_key: SortKey
    policy: MetricPolicy

    def _score(self, method: str, key: SortKey) -> float | None:
        column = {
            SortKey.AVG_DSC: self.avg_dsc,
            SortKey.AVG_NSD: self.avg_nsd,
            SortKey.OVERALL: self.overall,
            SortKey.POLICY: self.policy_avg,
        }[key]
        return column[method]

    def ranking(self, key: SortKey) -> list[str]:
        """Methods best first under a sort key; missing aggregates rank last."""

        def sort_key(m: str):
            s = self._score(m, key)
            return (0, -s, m) if s is not None else (1, 0.0, m)

        return sorted(self.methods, key=sort_key)

    def rank_of(self, key: SortKey) -> dict[str, int]:
        return {m: i + 1 for i, m in enumerate(self.ranking(key))}


def build_leaderboard(
    table: ScoreTable, policy: MetricPolicy, sort_key: SortKey = SortKey.AVG_DSC
) -> Leaderboard:
    """Rank every target under its policy metric and aggregate the averages."""
    if not table.methods or not table.targets:
        raise ConfigurationError("score table has no methods or no targets")

    cell: dict[tuple[str, str, MetricKind], float | None] = {}
    for m in table.methods:
        for t in table.targets:
            for kind in MetricKind:
                cell[(m, t, kind)] = method_target_mean(table, m, t, kind)

    per_target_rank: dict[str, list[tuple[str, float]]] = {}
    for t in table.targets:
        kind = policy.metric_for(t)
        scored = [(m, cell[(m, t, kind)]) for m in table.methods]
        present = [(m, s) for m, s in scored if s is not None]
        per_target_rank[t] = sorted(present, key=lambda ms: (-ms[1], ms[0]))
        if kind is MetricKind.NSD and not present:
            warnings.warn(
                f"policy assigns NSD to target {t!r} but no NSD scores exist; "
                "target excluded from avg_nsd",
                CoverageWarning,
                stacklevel=2,
            )

    def mean_over_targets(m: str, kind_of) -> float | None:
        values = []
        for t in table.targets:
            v = cell[(m, t, kind_of(t))]
            if v is not None:
                values.append(v)
        return math.fsum(values) / len(values) if values else None

    avg_dsc = {m: mean_over_targets(m, lambda t: MetricKind.DSC) for m in table.methods}
    avg_nsd = {m: mean_over_targets(m, lambda t: MetricKind.NSD) for m in table.methods}
    policy_avg = {m: mean_over_targets(m, policy.metric_for) for m in table.methods}
    overall: dict[str, float | None] = {}
    coverage: dict[str, float] = {}
    for m in table.methods:
        d, s = avg_dsc[m], avg_nsd[m]
        overall[m] = (d + s) / 2.0 if d is not None and s is not None else None
        present = sum(
            1 for t in table.targets for kind in MetricKind if cell[(m, t, kind)] is not None
        )
        coverage[m] = present / (2 * len(table.targets))

    return Leaderboard(
        methods=table.methods,
        family={m: table.family.get(m, "") for m in table.methods},
        targets=table.targets,
        per_target_rank=per_target_rank,
        avg_dsc=avg_dsc,
        avg_nsd=avg_nsd,
        overall=overall,
        policy_avg=policy_avg,
        coverage=coverage,
        sort_key=sort_key,
        policy=policy,
    )


@dataclass(frozen=True)
class RankChangeReport:
    """Per-method rank movement between two sort keys.

    ``per_method`` maps method -> (rank under key_a, rank under key_b, delta)
    with delta = rank_b - rank_a (positive means the method dropped).
    ``top_k_reversal`` is true iff the top-k methods under key_a appear in
    exactly inverted relative order under key_b.
    """

    key_a: SortKey
    key_b: SortKey
    top_k: int
    per_method: dict[str, tuple[int, int, int]]
    n_changed: int
    top_k_reversal: bool


def rank_changes(lb: Leaderboard, key_a: SortKey, key_b: SortKey, top_k: int) -> RankChangeReport:
    """Compare rankings under two sort keys."""
    if not (1 <= top_k <= len(lb.methods)):
        raise ValueError(f"top_k must be in [1, {len(lb.methods)}], got {top_k}")
    rank_a = lb.rank_of(key_a)
    rank_b = lb.rank_of(key_b)
    per_method = {m: (rank_a[m], rank_b[m], rank_b[m] - rank_a[m]) for m in lb.methods}
    top = lb.ranking(key_a)[:top_k]
    top_set = set(top)
    restricted = [m for m in lb.ranking(key_b) if m in top_set]
    return RankChangeReport(
        key_a=key_a,
        key_b=key_b,
        top_k=top_k,
        per_method=per_method,
        n_changed=sum(1 for _, _, delta in per_method.values() if delta != 0),
        top_k_reversal=restricted == top[::-1],
    )


def _cell_text(value: float | None) -> str:
    return "" if value is None else repr(value)


def write_leaderboard_csv(lb: Leaderboard, path: str | Path) -> None:
    """One row per method, ordered by the leaderboard's sort key."""
    rank_dsc = lb.rank_of(SortKey.AVG_DSC)
    rank_nsd = lb.rank_of(SortKey.AVG_NSD)
    rank_overall = lb.rank_of(SortKey.OVERALL)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "method",
                "family",
                "avg_dsc",
                "avg_nsd",
                "overall",
                "coverage",
                "rank_dsc",
                "rank_nsd",
                "rank_overall",
                *(f"target:{t}" for t in lb.targets),
            ]
        )
        for m in lb.ranking(lb.sort_key):
            per_target = []
            for t in lb.targets:
                score = dict(lb.per_target_rank[t]).get(m)
                per_target.append(_cell_text(score))
            writer.writerow(
                [
                    m,
                    lb.family.get(m, ""),
                    _cell_text(lb.avg_dsc[m]),
                    _cell_text(lb.avg_nsd[m]),
                    _cell_text(lb.overall[m]),
                    repr(lb.coverage[m]),
                    rank_dsc[m],
                    rank_nsd[m],
                    rank_overall[m],
                    *per_target,
                ]
            )


def write_rank_changes_csv(report: RankChangeReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", f"rank_{report.key_a.value}", f"rank_{report.key_b.value}", "delta"])
        for m, (ra, rb, delta) in sorted(report.per_method.items(), key=lambda kv: kv[1][0]):
            writer.writerow([m, ra, rb, delta])
