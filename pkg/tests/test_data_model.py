"""Ingestion, validation, and round-trip tests for the data model."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankaudit.data_model import (
    DemographicTable,
    MetricKind,
    ScoreTable,
    TableSchema,
    VoxelMask,
    load_demographics,
    load_mask,
    load_score_table,
    write_demographics,
    write_mask,
    write_score_table,
)
from rankaudit.errors import FormatError, ParseError, ValidationError


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestScoreTable:
    def test_four_row_file(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv",
            "method,case,target,metric,score\n"
            "a,c1,liver,DSC,0.9\n"
            "a,c1,liver,NSD,0.8\n"
            "b,c1,liver,DSC,0.7\n"
            "b,c1,liver,NSD,0.6\n",
        )
        t = load_score_table(p)
        assert t.methods == ("a", "b")
        assert t.cases == ("c1",)
        assert t.targets == ("liver",)
        assert len(t.entries) == 4
        assert t.n_missing == 0
        assert t.get("a", "c1", "liver", MetricKind.DSC) == 0.9

    def test_score_above_one_names_line(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv",
            "method,case,target,metric,score\na,c1,liver,DSC,1.2\n",
        )
        with pytest.raises(ValidationError, match=r":2:"):
            load_score_table(p)

    def test_blank_score_is_missing(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv",
            "method,case,target,metric,score\na,c1,liver,DSC,\na,c1,liver,NSD,0.5\n",
        )
        t = load_score_table(p)
        assert t.get("a", "c1", "liver", MetricKind.DSC) is None
        assert not t.has_value("a", "c1", "liver", MetricKind.DSC)
        assert t.n_missing == 1
        # absent key is also reported missing
        assert t.get("a", "c9", "liver", MetricKind.DSC) is None

    def test_duplicate_key_rejected(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv",
            "method,case,target,metric,score\na,c1,liver,DSC,0.9\na,c1,liver,DSC,0.8\n",
        )
        with pytest.raises(ValidationError, match="duplicate"):
            load_score_table(p)

    def test_wrong_column_count_names_line(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv",
            "method,case,target,metric,score\na,c1,liver,DSC\n",
        )
        with pytest.raises(ParseError, match=r":2:"):
            load_score_table(p)

    def test_missing_required_column(self, tmp_path):
        p = write_text(tmp_path / "s.csv", "method,case,target,score\na,c1,liver,0.9\n")
        with pytest.raises(ParseError, match="metric"):
            load_score_table(p)

    def test_non_numeric_score(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv", "method,case,target,metric,score\na,c1,liver,DSC,oops\n"
        )
        with pytest.raises(ParseError, match=r":2:"):
            load_score_table(p)

    def test_unknown_metric(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv", "method,case,target,metric,score\na,c1,liver,IOU,0.9\n"
        )
        with pytest.raises(ValidationError, match="IOU"):
            load_score_table(p)

    def test_family_column_round_trip(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv",
            "method,case,target,metric,score,family\na,c1,liver,DSC,0.9,fam1\n",
        )
        t = load_score_table(p)
        assert t.family == {"a": "fam1"}
        out = tmp_path / "out.csv"
        write_score_table(t, out)
        assert load_score_table(out) == t

    def test_conflicting_family_labels(self, tmp_path):
        p = write_text(
            tmp_path / "s.csv",
            "method,case,target,metric,score,family\n"
            "a,c1,liver,DSC,0.9,fam1\n"
            "a,c2,liver,DSC,0.9,fam2\n",
        )
        with pytest.raises(ValidationError, match="conflicting family"):
            load_score_table(p)

    def test_custom_schema_and_delimiter(self, tmp_path):
        p = write_text(tmp_path / "s.tsv", "M\tC\tT\tK\tS\na\tc1\tliver\tDSC\t0.5\n")
        schema = TableSchema(method="M", case="C", target="T", metric="K", score="S", delimiter="\t")
        t = load_score_table(p, schema)
        assert t.get("a", "c1", "liver", MetricKind.DSC) == 0.5

    def test_direct_construction_validates(self):
        with pytest.raises(ValidationError):
            ScoreTable(
                methods=("a",),
                cases=("c",),
                targets=("t",),
                entries={("a", "c", "t", MetricKind.DSC): 1.5},
            )
        with pytest.raises(ValidationError):
            ScoreTable(methods=("a", "a"), cases=("c",), targets=("t",), entries={})

    @given(
        rows=st.lists(
            st.tuples(
                st.sampled_from(["m1", "m2", "m3"]),
                st.sampled_from(["c1", "c2", "c3", "c4"]),
                st.sampled_from(["t1", "t2"]),
                st.sampled_from(list(MetricKind)),
                st.one_of(st.none(), st.floats(min_value=0.0, max_value=1.0, allow_nan=False)),
            ),
            unique_by=lambda r: (r[0], r[1], r[2], r[3]),
            min_size=1,
            max_size=24,
        )
    )
    @settings(max_examples=40)
    def test_round_trip_property(self, tmp_path_factory, rows):
        table = ScoreTable.from_rows(rows)
        path = tmp_path_factory.mktemp("rt") / "t.csv"
        write_score_table(table, path)
        assert load_score_table(path) == table


class TestDemographics:
    def test_three_by_two(self, tmp_path):
        p = write_text(
            tmp_path / "d.csv", "case,sex,race\nc1,F,A\nc2,M,B\nc3,F,B\n"
        )
        t = load_demographics(p)
        assert t.attributes == ("sex", "race")
        assert len(t.records) == 3
        assert t.get("c2", "sex") == "M"

    def test_duplicate_case_rejected(self, tmp_path):
        p = write_text(tmp_path / "d.csv", "case,sex\nc1,F\nc1,M\n")
        with pytest.raises(ValidationError, match="duplicate case"):
            load_demographics(p)

    def test_empty_cell_becomes_unknown(self, tmp_path):
        p = write_text(tmp_path / "d.csv", "case,sex,race\nc1,F,\n")
        t = load_demographics(p)
        assert t.get("c1", "race") == "unknown"
        out = tmp_path / "out.csv"
        write_demographics(t, out)
        assert load_demographics(out) == t

    def test_column_count_mismatch(self, tmp_path):
        p = write_text(tmp_path / "d.csv", "case,sex,race\nc1,F\n")
        with pytest.raises(ParseError, match=r":2:"):
            load_demographics(p)

    def test_record_must_cover_attributes(self):
        with pytest.raises(ValidationError):
            DemographicTable(attributes=("sex", "race"), records={"c1": {"sex": "F"}})


class TestVoxelMask:
    def test_all_ones_cube(self, tmp_path):
        raw = tmp_path / "m.raw"
        raw.write_bytes(bytes([1] * 8))
        hdr = write_text(
            tmp_path / "m.hdr", "dims = 2 2 2\nspacing_mm = 1.0 1.0 1.0\ndata_file = m.raw\n"
        )
        m = load_mask(hdr)
        assert m.foreground_count == 8

    def test_byte_count_mismatch(self, tmp_path):
        (tmp_path / "m.raw").write_bytes(bytes([1] * 7))
        hdr = write_text(
            tmp_path / "m.hdr", "dims = 2 2 2\nspacing_mm = 1.0 1.0 1.0\ndata_file = m.raw\n"
        )
        with pytest.raises(FormatError, match="expected 8 bytes"):
            load_mask(hdr)

    def test_non_binary_byte_named(self, tmp_path):
        (tmp_path / "m.raw").write_bytes(bytes([1, 0, 2, 0, 0, 0, 0, 0]))
        hdr = write_text(
            tmp_path / "m.hdr", "dims = 2 2 2\nspacing_mm = 1.0 1.0 1.0\ndata_file = m.raw\n"
        )
        with pytest.raises(FormatError, match="byte 2"):
            load_mask(hdr)

    def test_nonpositive_spacing(self, tmp_path):
        (tmp_path / "m.raw").write_bytes(bytes([1] * 8))
        hdr = write_text(
            tmp_path / "m.hdr", "dims = 2 2 2\nspacing_mm = 1.0 0.0 1.0\ndata_file = m.raw\n"
        )
        with pytest.raises(ValidationError, match="spacing"):
            load_mask(hdr)

    def test_missing_header_key(self, tmp_path):
        hdr = write_text(tmp_path / "m.hdr", "dims = 2 2 2\nspacing_mm = 1 1 1\n")
        with pytest.raises(FormatError, match="data_file"):
            load_mask(hdr)

    def test_x_fastest_order(self, tmp_path):
        # bytes [1, 0, 1] on a 3x1x1 grid: foreground at x = 0 and x = 2
        (tmp_path / "m.raw").write_bytes(bytes([1, 0, 1]))
        hdr = write_text(
            tmp_path / "m.hdr", "dims = 3 1 1\nspacing_mm = 2.0 1.0 1.0\ndata_file = m.raw\n"
        )
        m = load_mask(hdr)
        assert m.spacing == (2.0, 1.0, 1.0)
        assert m.voxels[0, 0, 0] and not m.voxels[1, 0, 0] and m.voxels[2, 0, 0]
        out = tmp_path / "copy.hdr"
        write_mask(m, out)
        assert load_mask(out) == m

    def test_mixed_axis_order_round_trip(self, tmp_path):
        # 2x3x2 pattern with a single foreground voxel at (1, 2, 0):
        # flat x-fastest index = 1 + 2*(2 + 3*0) = 5
        data = bytearray(12)
        data[5] = 1
        (tmp_path / "m.raw").write_bytes(bytes(data))
        hdr = write_text(
            tmp_path / "m.hdr", "dims = 2 3 2\nspacing_mm = 1.0 1.0 1.0\ndata_file = m.raw\n"
        )
        m = load_mask(hdr)
        assert m.voxels[1, 2, 0]
        assert m.foreground_count == 1

    @given(
        dims=st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
        seed=st.integers(0, 2**16 - 1),
    )
    @settings(max_examples=40)
    def test_round_trip_property(self, tmp_path_factory, dims, seed):
        rng = np.random.default_rng(seed)
        vox = rng.random(dims) < 0.5
        mask = VoxelMask(dims, (1.5, 0.75, 2.0), vox)
        path = tmp_path_factory.mktemp("mask") / "m.hdr"
        write_mask(mask, path)
        assert load_mask(path) == mask
