"""Pairwise one-sided Wilcoxon signed-rank testing and significance maps.

For each ordered method pair (r, c) the per-case aggregated scores are
paired, zero differences dropped, and a one-sided signed-rank test run with
the alternative "r scores stochastically higher than c". Raw p-values are
Bonferroni-adjusted with k = M(M-1)/2 and classified into confidence tiers.

The null distribution of the rank sum of positive differences is computed
exactly (a subset-sum dynamic program, equivalent to enumerating all 2^n
sign assignments) whenever n <= EXACT_N_MAX and no magnitudes tie; otherwise
a normal approximation with tie-corrected variance and a 0.5 continuity
correction toward the mean is used.
"""

from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .data_model import MetricKind, ScoreTable
from .errors import ConfigurationError, InsufficientDataError

__all__ = [
    "EXACT_N_MAX",
    "TIER_THRESHOLDS",
    "WilcoxonMethod",
    "Tier",
    "PairedSample",
    "WilcoxonResult",
    "SignificanceMap",
    "SimulationResult",
    "aggregate_per_case",
    "pair",
    "wilcoxon_one_sided",
    "bonferroni",
    "tier_for",
    "order_methods",
    "significance_map",
    "significance_rows",
    "write_significance_csv",
    "simulate_null_fwer",
    "threads_from_env",
]

EXACT_N_MAX = 25
TIER_THRESHOLDS = (0.001, 0.01, 0.05)


class WilcoxonMethod(enum.Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal-approx"
    NO_INFORMATION = "no-information"


class Tier(enum.Enum):
    """Confidence tier of an adjusted one-sided p-value (strict thresholds)."""

    P_LT_0_001 = "p<0.001"
    P_LT_0_01 = "p<0.01"
    P_LT_0_05 = "p<0.05"
    NOT_SIGNIFICANT = "ns"


def tier_for(p_adj: float) -> Tier:
    if p_adj < TIER_THRESHOLDS[0]:
        return Tier.P_LT_0_001
    if p_adj < TIER_THRESHOLDS[1]:
        return Tier.P_LT_0_01
    if p_adj < TIER_THRESHOLDS[2]:
        return Tier.P_LT_0_05
    return Tier.NOT_SIGNIFICANT


@dataclass(frozen=True)
class PairedSample:
    """Nonzero per-case score differences after pairing, plus drop counts."""

    diffs: tuple[float, ...]
    n_dropped_missing: int
    n_dropped_zero: int

    @property
    def n_used(self) -> int:
        return len(self.diffs)


@dataclass(frozen=True)
class WilcoxonResult:
    """One-sided signed-rank outcome.

    ``p_exact`` carries the exact tail probability as a rational number when
    the exact path ran, and is None otherwise.
    """

    w_plus: float
    n_used: int
    p_raw: float
    method: WilcoxonMethod
    p_exact: Fraction | None = None

    def __post_init__(self) -> None:
        limit = self.n_used * (self.n_used + 1) / 2
        if not (0.0 <= self.w_plus <= limit):
            raise ValueError(f"w_plus {self.w_plus} outside [0, {limit}]")
        if not (0.0 < self.p_raw <= 1.0):
            raise ValueError(f"p_raw {self.p_raw} outside (0, 1]")


def aggregate_per_case(table: ScoreTable, method: str, metric: MetricKind) -> dict[str, float]:
    """Per-case unweighted mean of a method's scores over targets with a value.

    Cases with no value for any target are absent from the result.
    """
    if method not in table.methods:
        raise KeyError(f"unknown method {method!r}")
    out: dict[str, float] = {}
    for case in table.cases:
        values = [
            v for t in table.targets if (v := table.get(method, case, t, metric)) is not None
        ]
        if values:
            out[case] = math.fsum(values) / len(values)
    return out


def pair(xs: Mapping[str, float], ys: Mapping[str, float]) -> PairedSample:
    """Pair two per-case score maps; cases present in only one side are dropped."""
    common = sorted(xs.keys() & ys.keys())
    if not common:
        raise InsufficientDataError("no cases shared between the two score maps")
    n_dropped_missing = len(xs.keys() ^ ys.keys())
    diffs = [xs[c] - ys[c] for c in common]
    nonzero = tuple(d for d in diffs if d != 0.0)
    return PairedSample(
        diffs=nonzero,
        n_dropped_missing=n_dropped_missing,
        n_dropped_zero=len(diffs) - len(nonzero),
    )


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ascending ranks with tied values receiving the mean of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(sorted_vals):
        j = i
        while j + 1 < len(sorted_vals) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _tail_count(n: int, w: int) -> int:
    """Number of subsets of {1..n} whose element sum is >= w (exact integer)."""
    total = n * (n + 1) // 2
    if w <= 0:
        return 1 << n
    counts = [0] * (total + 1)
    counts[0] = 1
    for j in range(1, n + 1):
        for s in range(total, j - 1, -1):
            counts[s] += counts[s - j]
    return sum(counts[w:])


def wilcoxon_one_sided(sample: PairedSample) -> WilcoxonResult:
    """One-sided signed-rank test for "x stochastically greater than y".

    p_raw = P(W+ >= observed) under the symmetric null, where W+ is the sum
    of the ranks (mid-ranks under ties) of the positive differences. With no
    usable differences the result is flagged no-information with p_raw = 1.
    """
    n = sample.n_used
    if n == 0:
        return WilcoxonResult(w_plus=0.0, n_used=0, p_raw=1.0, method=WilcoxonMethod.NO_INFORMATION)
    d = np.asarray(sample.diffs, dtype=np.float64)
    magnitudes = np.abs(d)
    ranks = _midranks(magnitudes)
    w_plus = float(ranks[d > 0].sum())
    _, tie_sizes = np.unique(magnitudes, return_counts=True)
    has_ties = bool((tie_sizes > 1).any())

    if n <= EXACT_N_MAX and not has_ties:
        w = int(round(w_plus))
        tail = _tail_count(n, w)
        p = Fraction(tail, 1 << n)
        return WilcoxonResult(
            w_plus=float(w), n_used=n, p_raw=tail / (1 << n), method=WilcoxonMethod.EXACT, p_exact=p
        )

    mean = n * (n + 1) / 4.0
    tie_term = float(sum(int(t) ** 3 - int(t) for t in tie_sizes)) / 48.0
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    sd = math.sqrt(variance) if variance > 0 else 0.0
    delta = w_plus - mean
    correction = 0.5 if delta > 0 else (-0.5 if delta < 0 else 0.0)
    z = (delta - correction) / sd if sd > 0 else 0.0
    p_raw = 0.5 * math.erfc(z / math.sqrt(2.0))
    p_raw = min(1.0, max(p_raw, 5e-324))
    return WilcoxonResult(w_plus=w_plus, n_used=n, p_raw=p_raw, method=WilcoxonMethod.NORMAL_APPROX)


def bonferroni(p_raw: float, k: int) -> float:
    """Family-wise adjusted p-value min(1, k * p_raw)."""
    if not (0.0 < p_raw <= 1.0):
        raise ValueError(f"p_raw must lie in (0, 1], got {p_raw!r}")
    if k < 1:
        raise ValueError(f"comparison count must be >= 1, got {k!r}")
    return min(1.0, k * p_raw)


@dataclass(frozen=True, eq=False)
class SignificanceMap:
    """M x M one-sided adjusted p-values and confidence tiers.

    Cell (r, c) asserts "row method outperforms column method". Diagonals are
    undefined (NaN / None). ``k_comparisons`` = M(M-1)/2 is the Bonferroni
    factor; ``k_informative`` counts unordered pairs that had usable data.
    """

    methods: tuple[str, ...]
    family: dict[str, str]
    p_raw: np.ndarray
    p_adj: np.ndarray
    tiers: tuple[tuple["Tier | None", ...], ...]
    n_used: np.ndarray
    n_dropped_missing: np.ndarray
    n_dropped_zero: np.ndarray
    alpha: float
    k_comparisons: int
    k_informative: int

    def tier(self, row: str, col: str) -> "Tier | None":
        r = self.methods.index(row)
        c = self.methods.index(col)
        return self.tiers[r][c]

    def significant_cells(self) -> list[tuple[str, str]]:
        """Ordered pairs whose adjusted p is below the family-wise level."""
        out = []
        m = len(self.methods)
        for r in range(m):
            for c in range(m):
                if r != c and self.p_adj[r, c] < self.alpha:
                    out.append((self.methods[r], self.methods[c]))
        return out


def order_methods(table: ScoreTable, metric: MetricKind) -> list[str]:
    """Axis order: families by mean member score, then members by own score.

    Methods without a family label form singleton families. Ties break
    lexicographically by label and method id; methods with no data sort last.
    """
    score: dict[str, float | None] = {}
    for m in table.methods:
        per_case = aggregate_per_case(table, m, metric)
        score[m] = (math.fsum(per_case.values()) / len(per_case)) if per_case else None
    family = {m: table.family.get(m, m) for m in table.methods}
    fam_members: dict[str, list[str]] = {}
    for m in table.methods:
        fam_members.setdefault(family[m], []).append(m)
    fam_score: dict[str, float | None] = {}
    for fam, members in fam_members.items():
        vals = [score[m] for m in members if score[m] is not None]
        fam_score[fam] = (math.fsum(vals) / len(vals)) if vals else None

    def fam_key(fam: str):
        s = fam_score[fam]
        return (0, -s, fam) if s is not None else (1, 0.0, fam)

    def method_key(m: str):
        s = score[m]
        return (0, -s, m) if s is not None else (1, 0.0, m)

    ordered: list[str] = []
    for fam in sorted(fam_members, key=fam_key):
        ordered.extend(sorted(fam_members[fam], key=method_key))
    return ordered


def _cell_result(
    agg_r: dict[str, float], agg_c: dict[str, float]
) -> tuple[WilcoxonResult, int, int]:
    try:
        sample = pair(agg_r, agg_c)
    except InsufficientDataError:
        missing = len(agg_r.keys() ^ agg_c.keys())
        return (
            WilcoxonResult(w_plus=0.0, n_used=0, p_raw=1.0, method=WilcoxonMethod.NO_INFORMATION),
            missing,
            0,
        )
    res = wilcoxon_one_sided(sample)
    return res, sample.n_dropped_missing, sample.n_dropped_zero


def significance_map(
    table: ScoreTable,
    metric: MetricKind,
    alpha: float = 0.05,
    order: Sequence[str] | None = None,
    workers: int | None = None,
) -> SignificanceMap:
    """All-pairs one-sided tests, Bonferroni-adjusted and tier-classified.

    ``order`` overrides the default family-based axis ordering and must be a
    permutation of the table's methods. ``workers`` > 1 evaluates cells in a
    thread pool; the output is identical regardless of parallelism.
    """
    if len(table.methods) < 2:
        raise ConfigurationError("significance map needs at least two methods")
    if order is None:
        methods = order_methods(table, metric)
    else:
        methods = list(order)
        if sorted(methods) != sorted(table.methods):
            raise ConfigurationError("explicit order must be a permutation of the table's methods")
    m = len(methods)
    k = m * (m - 1) // 2
    agg = {name: aggregate_per_case(table, name, metric) for name in methods}

    cells = [(r, c) for r in range(m) for c in range(m) if r != c]
    jobs = [(agg[methods[r]], agg[methods[c]]) for r, c in cells]
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda rc: _cell_result(*rc), jobs))
    else:
        results = [_cell_result(*job) for job in jobs]

    p_raw = np.full((m, m), np.nan)
    p_adj = np.full((m, m), np.nan)
    n_used = np.zeros((m, m), dtype=np.int64)
    n_miss = np.zeros((m, m), dtype=np.int64)
    n_zero = np.zeros((m, m), dtype=np.int64)
    tiers: list[list[Tier | None]] = [[None] * m for _ in range(m)]
    informative = set()
    for (r, c), (res, dropped_missing, dropped_zero) in zip(cells, results):
        p_raw[r, c] = res.p_raw
        adjusted = bonferroni(res.p_raw, k)
        p_adj[r, c] = adjusted
        tiers[r][c] = tier_for(adjusted)
        n_used[r, c] = res.n_used
        n_miss[r, c] = dropped_missing
        n_zero[r, c] = dropped_zero
        if res.method is not WilcoxonMethod.NO_INFORMATION:
            informative.add(frozenset((r, c)))

    return SignificanceMap(
        methods=tuple(methods),
        family={name: table.family.get(name, "") for name in methods},
        p_raw=p_raw,
        p_adj=p_adj,
        tiers=tuple(tuple(row) for row in tiers),
        n_used=n_used,
        n_dropped_missing=n_miss,
        n_dropped_zero=n_zero,
        alpha=alpha,
        k_comparisons=k,
        k_informative=len(informative),
    )


def significance_rows(smap: SignificanceMap) -> list[dict]:
    """Flat machine-readable rows, one per ordered off-diagonal cell."""
    rows = []
    m = len(smap.methods)
    for r in range(m):
        for c in range(m):
            if r == c:
                continue
            tier = smap.tiers[r][c]
            rows.append(
                {
                    "row": smap.methods[r],
                    "column": smap.methods[c],
                    "p_raw": float(smap.p_raw[r, c]),
                    "p_adj": float(smap.p_adj[r, c]),
                    "tier": tier.value if tier is not None else "",
                    "n_used": int(smap.n_used[r, c]),
                    "n_dropped_missing": int(smap.n_dropped_missing[r, c]),
                    "n_dropped_zero": int(smap.n_dropped_zero[r, c]),
                }
            )
    return rows


def write_significance_csv(smap: SignificanceMap, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["row", "column", "p_raw", "p_adj", "tier", "n_used", "n_dropped_missing", "n_dropped_zero"]
        )
        for row in significance_rows(smap):
            writer.writerow(
                [
                    row["row"],
                    row["column"],
                    repr(row["p_raw"]),
                    repr(row["p_adj"]),
                    row["tier"],
                    row["n_used"],
                    row["n_dropped_missing"],
                    row["n_dropped_zero"],
                ]
            )


@dataclass(frozen=True)
class SimulationResult:
    reps: int
    hits: int

    @property
    def fwer(self) -> float:
        return self.hits / self.reps


def simulate_null_fwer(
    n_methods: int,
    n_cases: int,
    reps: int,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int | None = None,
) -> SimulationResult:
    """Empirical family-wise error rate under an exchangeable null.

    Each repetition draws every (method, case) score i.i.d. uniform on [0, 1],
    builds the full significance map, and counts the repetition as a hit when
    any off-diagonal cell is significant at the family-wise level.
    """
    if n_methods < 2 or n_cases < 1 or reps < 1:
        raise ConfigurationError("simulation needs >= 2 methods, >= 1 case, >= 1 repetition")
    rng = np.random.default_rng(seed)
    methods = [f"m{i:02d}" for i in range(n_methods)]
    cases = [f"c{i:04d}" for i in range(n_cases)]
    hits = 0
    for _ in range(reps):
        scores = rng.random((n_methods, n_cases))
        entries = {
            (methods[i], cases[j], "t0", MetricKind.DSC): float(scores[i, j])
            for i in range(n_methods)
            for j in range(n_cases)
        }
        table = ScoreTable(
            methods=tuple(methods), cases=tuple(cases), targets=("t0",), entries=entries
        )
        smap = significance_map(table, MetricKind.DSC, alpha=alpha, order=methods, workers=workers)
        if smap.significant_cells():
            hits += 1
    return SimulationResult(reps=reps, hits=hits)


def threads_from_env(env: Mapping[str, str] | None = None) -> int:
    """Worker cap from RANKAUDIT_THREADS; 1 (serial) when unset."""
    raw = (env if env is not None else os.environ).get("RANKAUDIT_THREADS")
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"RANKAUDIT_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)
