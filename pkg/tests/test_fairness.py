"""Subgroup enumeration and parity-gap audits, with exhaustive pair oracles."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankaudit.data_model import DemographicTable, MetricKind, ScoreTable
from rankaudit.errors import ConfigurationError, InsufficientDataError
from rankaudit.fairness import (
    DpdMode,
    dpd,
    enumerate_subgroups,
    fairness_audit,
    group_scores,
    success_rate,
)


def meta_from(assignments: dict[str, dict[str, str]]) -> DemographicTable:
    attrs = tuple(next(iter(assignments.values())).keys())
    return DemographicTable(attributes=attrs, records=assignments)


def table_for(case_scores: dict[str, float], method="m1") -> ScoreTable:
    rows = [(method, c, "t0", MetricKind.DSC, v) for c, v in case_scores.items()]
    return ScoreTable.from_rows(rows)


def sex_race_meta(n=100) -> DemographicTable:
    records = {}
    for i in range(n):
        records[f"c{i:03d}"] = {
            "sex": "M" if i % 2 == 0 else "F",
            "race": "A" if i < n // 2 else "B",
        }
    return meta_from(records)


def group_by_label(groups, label):
    for g in groups:
        if g.label() == label:
            return g
    raise AssertionError(f"no group labelled {label}")


class TestEnumerate:
    def test_min_n_keeps_both(self):
        records = {f"c{i}": {"sex": "M" if i < 60 else "F"} for i in range(100)}
        groups = enumerate_subgroups(meta_from(records), min_n=40, depth=1)
        assert sorted(g.label() for g in groups) == ["sex=F", "sex=M"]

    def test_min_n_boundary_drops_smaller(self):
        records = {f"c{i}": {"sex": "M" if i < 60 else "F"} for i in range(100)}
        groups = enumerate_subgroups(meta_from(records), min_n=41, depth=1)
        assert [g.label() for g in groups] == ["sex=M"]

    def test_intersections_counted_exhaustively(self):
        groups = enumerate_subgroups(sex_race_meta(), min_n=20, depth=2)
        # 2 sex + 2 race + 4 intersections
        assert len(groups) == 8
        g = group_by_label(groups, "sex=F,race=A")
        assert g.n == 25
        assert g.attrs == ("sex", "race")

    def test_depth_one_skips_intersections(self):
        groups = enumerate_subgroups(sex_race_meta(), min_n=20, depth=1)
        assert len(groups) == 4

    def test_unknown_excluded_by_default(self):
        records = {f"c{i}": {"sex": "unknown" if i < 50 else "F"} for i in range(100)}
        groups = enumerate_subgroups(meta_from(records), min_n=10, depth=1)
        assert [g.label() for g in groups] == ["sex=F"]
        with_unknown = enumerate_subgroups(
            meta_from(records), min_n=10, depth=1, include_unknown=True
        )
        assert sorted(g.label() for g in with_unknown) == ["sex=F", "sex=unknown"]

    def test_depth_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            enumerate_subgroups(sex_race_meta(), min_n=1, depth=0)

    def test_members_match_selector(self):
        groups = enumerate_subgroups(sex_race_meta(), min_n=1, depth=2)
        meta = sex_race_meta()
        for g in groups:
            for case in g.members:
                for attr, value in g.selector:
                    assert meta.get(case, attr) == value
            assert g.n == len(g.members) >= 1


class TestSuccessRate:
    def setup_method(self):
        self.meta = meta_from({f"c{i}": {"grp": "x"} for i in range(4)})
        (self.group,) = enumerate_subgroups(self.meta, min_n=1, depth=1)

    def test_all_above(self):
        t = table_for({f"c{i}": 0.9 for i in range(4)})
        assert success_rate(t, "m1", MetricKind.DSC, self.group, t=0.8) == 1.0

    def test_half_above(self):
        t = table_for({"c0": 0.85, "c1": 0.75, "c2": 0.9, "c3": 0.5})
        assert success_rate(t, "m1", MetricKind.DSC, self.group, t=0.8) == 0.5

    def test_exactly_at_threshold_is_failure(self):
        t = table_for({"c0": 0.8, "c1": 0.8, "c2": 0.8, "c3": 0.8})
        assert success_rate(t, "m1", MetricKind.DSC, self.group, t=0.8) == 0.0

    def test_no_scored_members_raises_with_selector(self):
        t = table_for({"other": 0.9})
        with pytest.raises(InsufficientDataError, match="grp=x"):
            success_rate(t, "m1", MetricKind.DSC, self.group, t=0.8)

    def test_single_target_restriction(self):
        rows = [
            ("m1", "c0", "main", MetricKind.DSC, 0.9),
            ("m1", "c0", "other", MetricKind.DSC, 0.1),
        ]
        t = ScoreTable.from_rows(rows)
        meta = meta_from({"c0": {"grp": "x"}, "c1": {"grp": "x"}})
        (group,) = enumerate_subgroups(meta, min_n=1, depth=1)
        assert success_rate(t, "m1", MetricKind.DSC, group, t=0.8, target="main") == 1.0
        assert success_rate(t, "m1", MetricKind.DSC, group, t=0.8) == 0.0  # mean 0.5


class TestDpd:
    def setup_method(self):
        records = {f"a{i}": {"grp": "A"} for i in range(10)}
        records |= {f"b{i}": {"grp": "B"} for i in range(10)}
        self.meta = meta_from(records)
        groups = enumerate_subgroups(self.meta, min_n=1, depth=1)
        self.group_a = group_by_label(groups, "grp=A")
        self.group_b = group_by_label(groups, "grp=B")

    def test_rate_gap_of_ten_points(self):
        scores = {f"a{i}": (0.9 if i < 9 else 0.5) for i in range(10)}
        scores |= {f"b{i}": (0.9 if i < 8 else 0.5) for i in range(10)}
        r = dpd(table_for(scores), "m1", MetricKind.DSC, self.group_a, self.group_b, t=0.8)
        assert r.value == pytest.approx(0.10)
        assert not r.flagged  # 0.10 is not strictly above 0.10

    def test_identical_groups(self):
        scores = {c: 0.9 for c in self.meta.cases}
        r = dpd(table_for(scores), "m1", MetricKind.DSC, self.group_a, self.group_b)
        assert r.value == 0.0
        assert not r.flagged

    def test_mean_mode(self):
        scores = {f"a{i}": 0.62 for i in range(10)}
        scores |= {f"b{i}": 0.50 for i in range(10)}
        r = dpd(
            table_for(scores), "m1", MetricKind.DSC, self.group_a, self.group_b,
            mode=DpdMode.MEAN, flag_tau=0.10,
        )
        assert r.value == pytest.approx(0.12)
        assert r.flagged

    def test_symmetry(self):
        scores = {f"a{i}": 0.9 for i in range(10)}
        scores |= {f"b{i}": 0.4 for i in range(10)}
        t = table_for(scores)
        for mode in DpdMode:
            ab = dpd(t, "m1", MetricKind.DSC, self.group_a, self.group_b, mode=mode)
            ba = dpd(t, "m1", MetricKind.DSC, self.group_b, self.group_a, mode=mode)
            assert ab.value == ba.value

    def test_scored_counts_reported(self):
        scores = {f"a{i}": 0.9 for i in range(10)}
        scores |= {f"b{i}": 0.4 for i in range(6)}  # four b cases unscored
        r = dpd(table_for(scores), "m1", MetricKind.DSC, self.group_a, self.group_b)
        assert (r.n_scored_a, r.n_scored_b) == (10, 6)


class TestAudit:
    def test_single_pair_single_method(self):
        records = {f"c{i}": {"sex": "M" if i < 5 else "F"} for i in range(10)}
        t = table_for({c: 0.9 for c in records})
        report = fairness_audit(t, meta_from(records), min_n=5, depth=1)
        assert len(report.results["m1"]) == 1
        assert report.worst["m1"].value == 0.0

    def test_equal_method_ranks_most_equitable(self):
        records = {f"c{i}": {"sex": "M" if i < 5 else "F"} for i in range(10)}
        scores_fair = {c: 0.9 for c in records}
        scores_biased = {c: (0.9 if records[c]["sex"] == "M" else 0.5) for c in records}
        rows = [("fair", c, "t0", MetricKind.DSC, v) for c, v in scores_fair.items()]
        rows += [("biased", c, "t0", MetricKind.DSC, v) for c, v in scores_biased.items()]
        t = ScoreTable.from_rows(rows)
        report = fairness_audit(t, meta_from(records), min_n=5, depth=1)
        assert report.method_order == ("fair", "biased")
        assert report.worst["biased"].flagged

    def test_worst_pair_is_extreme_pair(self):
        # three groups with success rates 1.0 / 0.9 / 0.7: worst gap is A vs C
        records = {}
        scores = {}
        for g, rate in (("A", 1.0), ("B", 0.9), ("C", 0.7)):
            for i in range(10):
                case = f"{g}{i}"
                records[case] = {"grp": g}
                scores[case] = 0.9 if i < rate * 10 else 0.5
        report = fairness_audit(table_for(scores), meta_from(records), min_n=5, depth=1)
        worst = report.worst["m1"]
        assert worst.value == pytest.approx(0.3)
        assert {worst.group_a.label(), worst.group_b.label()} == {"grp=A", "grp=C"}
        # exhaustive check: no pair exceeds it
        assert all(r.value <= worst.value for r in report.results["m1"])

    def test_no_qualifying_pair_names_min_n(self):
        records = {f"c{i}": {"sex": "M" if i < 5 else "F"} for i in range(10)}
        t = table_for({c: 0.9 for c in records})
        with pytest.raises(ConfigurationError, match="min_n = 50"):
            fairness_audit(t, meta_from(records), min_n=50, depth=1)

    def test_min_n_applies_to_scored_members_per_method(self):
        records = {f"c{i}": {"sex": "M" if i < 10 else "F"} for i in range(20)}
        # only 5 of 10 F cases scored: pair disqualified at min_n = 10
        scores = {f"c{i}": 0.9 for i in range(15)}
        t = table_for(scores)
        with pytest.raises(ConfigurationError):
            fairness_audit(t, meta_from(records), min_n=10, depth=1)

    def test_unmatched_case_leaves_report_unchanged(self):
        records = {f"c{i}": {"sex": "M" if i < 5 else "F"} for i in range(10)}
        scores = {c: (0.9 if records[c]["sex"] == "M" else 0.7) for c in records}
        base = fairness_audit(table_for(scores), meta_from(records), min_n=5, depth=1)
        extended = dict(records)
        extended["extra"] = {"sex": "unknown"}
        scores_ext = dict(scores)
        scores_ext["extra"] = 0.1
        bigger = fairness_audit(table_for(scores_ext), meta_from(extended), min_n=5, depth=1)
        assert base.worst["m1"].value == bigger.worst["m1"].value
        assert len(base.results["m1"]) == len(bigger.results["m1"])

    def test_method_input_order_irrelevant(self):
        records = {f"c{i}": {"sex": "M" if i < 5 else "F"} for i in range(10)}
        rows = []
        for m, bias in (("m1", 0.0), ("m2", 0.2), ("m3", 0.1)):
            for c in records:
                v = 0.9 - (bias if records[c]["sex"] == "F" else 0.0)
                rows.append((m, c, "t0", MetricKind.DSC, v))
        t = ScoreTable.from_rows(rows)
        meta = meta_from(records)
        r1 = fairness_audit(t, meta, methods=["m1", "m2", "m3"], min_n=5, depth=1, mode=DpdMode.MEAN)
        r2 = fairness_audit(t, meta, methods=["m3", "m1", "m2"], min_n=5, depth=1, mode=DpdMode.MEAN)
        assert r1.method_order == r2.method_order == ("m1", "m3", "m2")

    def test_pairs_only_within_same_schema(self):
        report = fairness_audit(
            table_for({c: 0.9 for c in sex_race_meta().cases}),
            sex_race_meta(),
            min_n=20,
            depth=2,
        )
        for r in report.results["m1"]:
            assert r.group_a.attrs == r.group_b.attrs

    def test_group_scores_sorted_by_case(self):
        records = {f"c{i}": {"sex": "M"} for i in range(5)}
        scores = {f"c{i}": i / 10 for i in range(5)}
        (group,) = enumerate_subgroups(meta_from(records), min_n=1, depth=1)
        assert group_scores(table_for(scores), "m1", MetricKind.DSC, group) == [
            0.0, 0.1, 0.2, 0.3, 0.4,
        ]


@st.composite
def rate_groups(draw):
    n_groups = draw(st.integers(2, 6))
    sizes = draw(st.lists(st.integers(3, 8), min_size=n_groups, max_size=n_groups))
    rates = draw(
        st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=n_groups, max_size=n_groups)
    )
    return sizes, rates


class TestProperties:
    @given(spec=rate_groups())
    @settings(max_examples=50)
    def test_worst_pair_equals_rate_span(self, spec):
        sizes, rates = spec
        records = {}
        scores = {}
        for g, (size, rate) in enumerate(zip(sizes, rates)):
            n_success = round(rate * size)
            for i in range(size):
                case = f"g{g}_{i}"
                records[case] = {"grp": f"g{g}"}
                scores[case] = 0.9 if i < n_success else 0.1
        report = fairness_audit(
            table_for(scores), meta_from(records), min_n=1, depth=1, t=0.8
        )
        actual_rates = [
            sum(1 for i in range(size) if i < round(rate * size)) / size
            for size, rate in zip(sizes, rates)
        ]
        expected = max(actual_rates) - min(actual_rates)
        assert report.worst["m1"].value == pytest.approx(expected)

    @given(spec=rate_groups(), min_n=st.integers(1, 8))
    @settings(max_examples=50)
    def test_filter_soundness(self, spec, min_n):
        sizes, rates = spec
        records = {}
        scores = {}
        for g, (size, rate) in enumerate(zip(sizes, rates)):
            for i in range(size):
                case = f"g{g}_{i}"
                records[case] = {"grp": f"g{g}"}
                scores[case] = 0.9 if i < round(rate * size) else 0.1
        if sum(1 for s in sizes if s >= min_n) < 2:
            with pytest.raises(ConfigurationError):
                fairness_audit(table_for(scores), meta_from(records), min_n=min_n, depth=1)
            return
        report = fairness_audit(table_for(scores), meta_from(records), min_n=min_n, depth=1)
        for results in report.results.values():
            for r in results:
                assert r.group_a.n >= min_n and r.group_b.n >= min_n
                assert r.n_scored_a >= min_n and r.n_scored_b >= min_n

    @given(
        scores_a=st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=10),
        scores_b=st.lists(st.floats(0.0, 1.0, allow_nan=False), min_size=1, max_size=10),
        mode=st.sampled_from(list(DpdMode)),
    )
    @settings(max_examples=60)
    def test_bounded_in_unit_interval(self, scores_a, scores_b, mode):
        records = {f"a{i}": {"grp": "A"} for i in range(len(scores_a))}
        records |= {f"b{i}": {"grp": "B"} for i in range(len(scores_b))}
        scores = {f"a{i}": v for i, v in enumerate(scores_a)}
        scores |= {f"b{i}": v for i, v in enumerate(scores_b)}
        groups = enumerate_subgroups(meta_from(records), min_n=1, depth=1)
        ga = group_by_label(groups, "grp=A")
        gb = group_by_label(groups, "grp=B")
        r = dpd(table_for(scores), "m1", MetricKind.DSC, ga, gb, mode=mode)
        assert 0.0 <= r.value <= 1.0
