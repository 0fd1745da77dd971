"""Demographic subgroup enumeration and Demographic Parity Difference audits.

Subgroups are all value combinations over every attribute subset up to a
configurable depth (depth 2 covers single attributes plus pairwise
intersections). Groups below the minimum sample size are dropped, and the
"unknown" category is excluded from enumeration unless requested.

DPD comes in two modes:

* RATE: absolute difference in success rates, where a case counts as a
  success when its per-case aggregated score strictly exceeds a threshold t;
* MEAN: absolute difference of per-case aggregated score means.

Pairs are compared only within the same attribute schema (a sex group against
a sex group, a sex-by-race group against a sex-by-race group), which keeps
the two sides disjoint.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .data_model import UNKNOWN, DemographicTable, MetricKind, ScoreTable
from .errors import ConfigurationError, InsufficientDataError

__all__ = [
    "DpdMode",
    "Subgroup",
    "DpdResult",
    "FairnessReport",
    "enumerate_subgroups",
    "success_rate",
    "group_scores",
    "dpd",
    "fairness_audit",
    "write_fairness_csv",
    "write_worst_pairs_csv",
]


class DpdMode(enum.Enum):
    RATE = "rate"
    MEAN = "mean"

    @classmethod
    def parse(cls, text: str) -> "DpdMode":
        name = text.strip().lower()
        for mode in cls:
            if mode.value == name:
                return mode
        raise ConfigurationError(f"unknown DPD mode {text!r}, expected 'rate' or 'mean'")


@dataclass(frozen=True)
class Subgroup:
    """Cases matching a fixed assignment of one or more attributes.

    ``selector`` is a tuple of (attribute, value) pairs in attribute order;
    ``n`` is the metadata member count (before any per-method score join).
    """

    selector: tuple[tuple[str, str], ...]
    members: frozenset[str]
    n: int

    @property
    def attrs(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.selector)

    def label(self) -> str:
        return ",".join(f"{a}={v}" for a, v in self.selector)


@dataclass(frozen=True)
class DpdResult:
    """Parity gap between two subgroups for one method.

    ``n_scored_a`` / ``n_scored_b`` count group members that actually have a
    score for the method, which is what the rate or mean was computed on.
    """

    method: str
    group_a: Subgroup
    group_b: Subgroup
    mode: DpdMode
    threshold_t: float
    value: float
    flag_tau: float
    flagged: bool
    n_scored_a: int
    n_scored_b: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.value <= 1.0):
            raise ValueError(f"DPD value {self.value} outside [0, 1]")
        if self.flagged != (self.value > self.flag_tau):
            raise ValueError("flagged must hold exactly when value > flag_tau")


@dataclass(frozen=True, eq=False)
class FairnessReport:
    """All qualifying subgroup pairs per method, plus each method's worst pair.

    ``method_order`` lists methods most equitable first (ascending worst-pair
    DPD). ``skipped`` lists requested methods that had no qualifying pair
    after the per-method score join.
    """

    results: dict[str, tuple[DpdResult, ...]]
    worst: dict[str, DpdResult]
    method_order: tuple[str, ...]
    skipped: tuple[str, ...]
    min_n: int
    mode: DpdMode


def enumerate_subgroups(
    meta: DemographicTable,
    min_n: int = 40,
    depth: int = 2,
    include_unknown: bool = False,
) -> list[Subgroup]:
    """All subgroups over attribute subsets of size <= depth with n >= min_n."""
    if depth < 1:
        raise ConfigurationError(f"depth must be >= 1, got {depth}")
    if min_n < 1:
        raise ConfigurationError(f"min_n must be >= 1, got {min_n}")
    out: list[Subgroup] = []
    for size in range(1, min(depth, len(meta.attributes)) + 1):
        for attrs in combinations(meta.attributes, size):
            buckets: dict[tuple[str, ...], set[str]] = {}
            for case, record in meta.records.items():
                values = tuple(record[a] for a in attrs)
                if not include_unknown and UNKNOWN in values:
                    continue
                buckets.setdefault(values, set()).add(case)
            for values in sorted(buckets):
                members = buckets[values]
                if len(members) >= min_n:
                    out.append(
                        Subgroup(
                            selector=tuple(zip(attrs, values)),
                            members=frozenset(members),
                            n=len(members),
                        )
                    )
    out.sort(key=lambda g: g.selector)
    return out


def _per_case_scores(
    table: ScoreTable, method: str, metric: MetricKind, target: str | None
) -> dict[str, float]:
    """Per-case score used by the audit: one target's score, or the mean over targets."""
    if method not in table.methods:
        raise KeyError(f"unknown method {method!r}")
    if target is None:
        from .rank_stats import aggregate_per_case

        return aggregate_per_case(table, method, metric)
    out = {}
    for case in table.cases:
        v = table.get(method, case, target, metric)
        if v is not None:
            out[case] = v
    return out


def group_scores(
    table: ScoreTable,
    method: str,
    metric: MetricKind,
    group: Subgroup,
    target: str | None = None,
) -> list[float]:
    """Scored members of a subgroup, in case-id order (violin plot input)."""
    scores = _per_case_scores(table, method, metric, target)
    return [scores[c] for c in sorted(group.members) if c in scores]


def _rate(scores: Sequence[float], t: float) -> float:
    return sum(1 for s in scores if s > t) / len(scores)


def success_rate(
    table: ScoreTable,
    method: str,
    metric: MetricKind,
    group: Subgroup,
    t: float = 0.8,
    target: str | None = None,
) -> float:
    """Fraction of the group's scored cases with score strictly above t."""
    scores = group_scores(table, method, metric, group, target)
    if not scores:
        raise InsufficientDataError(
            f"group [{group.label()}] has no scored members for method {method!r}"
        )
    return _rate(scores, t)


def _dpd_from_scores(
    method: str,
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    group_a: Subgroup,
    group_b: Subgroup,
    mode: DpdMode,
    t: float,
    flag_tau: float,
) -> DpdResult:
    if mode is DpdMode.RATE:
        value = abs(_rate(scores_a, t) - _rate(scores_b, t))
    else:
        mean_a = math.fsum(scores_a) / len(scores_a)
        mean_b = math.fsum(scores_b) / len(scores_b)
        value = abs(mean_a - mean_b)
    return DpdResult(
        method=method,
        group_a=group_a,
        group_b=group_b,
        mode=mode,
        threshold_t=t,
        value=value,
        flag_tau=flag_tau,
        flagged=value > flag_tau,
        n_scored_a=len(scores_a),
        n_scored_b=len(scores_b),
    )


def dpd(
    table: ScoreTable,
    method: str,
    metric: MetricKind,
    group_a: Subgroup,
    group_b: Subgroup,
    mode: DpdMode = DpdMode.RATE,
    t: float = 0.8,
    flag_tau: float = 0.10,
    target: str | None = None,
) -> DpdResult:
    """Demographic Parity Difference between two subgroups for one method."""
    scores_a = group_scores(table, method, metric, group_a, target)
    scores_b = group_scores(table, method, metric, group_b, target)
    for group, scores in ((group_a, scores_a), (group_b, scores_b)):
        if not scores:
            raise InsufficientDataError(
                f"group [{group.label()}] has no scored members for method {method!r}"
            )
    return _dpd_from_scores(method, scores_a, scores_b, group_a, group_b, mode, t, flag_tau)


def fairness_audit(
    table: ScoreTable,
    meta: DemographicTable,
    methods: Iterable[str] | None = None,
    metric: MetricKind = MetricKind.DSC,
    mode: DpdMode = DpdMode.RATE,
    min_n: int = 40,
    depth: int = 2,
    t: float = 0.8,
    flag_tau: float = 0.10,
    target: str | None = None,
    include_unknown: bool = False,
) -> FairnessReport:
    """Evaluate DPD over all same-schema subgroup pairs for each method.

    The minimum sample size is enforced twice: on metadata membership during
    enumeration, and per method on scored membership after the join. Methods
    are ordered most equitable first by their worst-pair DPD.
    """
    groups = enumerate_subgroups(meta, min_n=min_n, depth=depth, include_unknown=include_unknown)
    by_schema: dict[tuple[str, ...], list[Subgroup]] = {}
    for g in groups:
        by_schema.setdefault(g.attrs, []).append(g)
    schema_pairs = [
        (ga, gb)
        for schema in sorted(by_schema)
        for ga, gb in combinations(by_schema[schema], 2)
    ]
    if not schema_pairs:
        raise ConfigurationError(
            f"no two subgroups share an attribute schema at min_n = {min_n}; "
            "lower min_n or reduce depth"
        )

    method_list = list(methods) if methods is not None else list(table.methods)
    for m in method_list:
        if m not in table.methods:
            raise KeyError(f"unknown method {m!r}")

    results: dict[str, tuple[DpdResult, ...]] = {}
    worst: dict[str, DpdResult] = {}
    skipped: list[str] = []
    for m in sorted(method_list):
        scores = _per_case_scores(table, m, metric, target)
        found: list[DpdResult] = []
        for ga, gb in schema_pairs:
            scores_a = [scores[c] for c in sorted(ga.members) if c in scores]
            scores_b = [scores[c] for c in sorted(gb.members) if c in scores]
            if len(scores_a) < min_n or len(scores_b) < min_n:
                continue
            found.append(_dpd_from_scores(m, scores_a, scores_b, ga, gb, mode, t, flag_tau))
        if not found:
            skipped.append(m)
            continue
        found.sort(key=lambda r: (-r.value, r.group_a.label(), r.group_b.label()))
        results[m] = tuple(found)
        worst[m] = found[0]

    if not results:
        raise ConfigurationError(
            f"no method has a qualifying subgroup pair at min_n = {min_n}"
        )
    method_order = tuple(sorted(results, key=lambda m: (worst[m].value, m)))
    return FairnessReport(
        results=results,
        worst=worst,
        method_order=method_order,
        skipped=tuple(skipped),
        min_n=min_n,
        mode=mode,
    )


_FAIRNESS_HEADER = ["method", "attrs", "group_a", "group_b", "n_a", "n_b", "mode", "value", "flagged"]


def _result_row(r: DpdResult) -> list:
    return [
        r.method,
        ",".join(r.group_a.attrs),
        r.group_a.label(),
        r.group_b.label(),
        r.n_scored_a,
        r.n_scored_b,
        r.mode.value,
        repr(r.value),
        str(r.flagged).lower(),
    ]


def write_fairness_csv(report: FairnessReport, path: str | Path) -> None:
    """All qualifying pairs, methods most equitable first, worst pairs first within."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_FAIRNESS_HEADER)
        for m in report.method_order:
            for r in report.results[m]:
                writer.writerow(_result_row(r))


def write_worst_pairs_csv(report: FairnessReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_FAIRNESS_HEADER)
        for m in report.method_order:
            writer.writerow(_result_row(report.worst[m]))
