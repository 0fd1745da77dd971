"""Typed data model for scores, demographics, and voxel masks, plus file ingestion.

On-disk formats are deliberately small and ecosystem neutral:

* score tables and demographics are UTF-8 delimited text with a header row,
* voxel masks are a ``key = value`` header file pointing at a sibling raw
  file with one byte per voxel (0 or 1), x varying fastest, then y, then z.

All loaded values are immutable after construction and safe to share across
concurrent readers. Scores are kept at full double precision; nothing is
rounded at ingest, because downstream rank tests are sensitive to ties
introduced by rounding.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import FormatError, ParseError, ValidationError

__all__ = [
    "MetricKind",
    "TableSchema",
    "ScoreTable",
    "DemographicTable",
    "VoxelMask",
    "UNKNOWN",
    "load_score_table",
    "write_score_table",
    "load_demographics",
    "write_demographics",
    "load_mask",
    "write_mask",
]

UNKNOWN = "unknown"


class MetricKind(enum.Enum):
    """The two score families a table can hold."""

    DSC = "DSC"
    NSD = "NSD"

    @classmethod
    def parse(cls, text: str) -> "MetricKind":
        name = text.strip().upper()
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValidationError(f"unknown metric {text!r}, expected one of DSC, NSD")


@dataclass(frozen=True)
class TableSchema:
    """Column names and delimiter for score-table files.

    The ``family`` column is optional; when present in the header it assigns
    each method to a model family used for axis grouping.
    """

    method: str = "method"
    case: str = "case"
    target: str = "target"
    metric: str = "metric"
    score: str = "score"
    family: str = "family"
    delimiter: str = ","


ScoreKey = tuple[str, str, str, MetricKind]


@dataclass(frozen=True)
class ScoreTable:
    """Per-(method, case, target, metric) scores with explicit missingness.

    ``entries`` maps keys to a score in [0, 1] or to ``None`` for an
    explicitly recorded missing value; keys that are absent entirely are
    also treated as missing by :meth:`get`. Identifier lists preserve first
    appearance order; identifiers are case sensitive exact strings.
    """

    methods: tuple[str, ...]
    cases: tuple[str, ...]
    targets: tuple[str, ...]
    entries: dict[ScoreKey, float | None]
    family: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, ids in (("method", self.methods), ("case", self.cases), ("target", self.targets)):
            if len(set(ids)) != len(ids):
                raise ValidationError(f"duplicate {name} identifiers in {ids!r}")
        methods, cases, targets = set(self.methods), set(self.cases), set(self.targets)
        for key, score in self.entries.items():
            m, c, t, kind = key
            if m not in methods or c not in cases or t not in targets:
                raise ValidationError(f"entry key {key!r} references an unlisted identifier")
            if not isinstance(kind, MetricKind):
                raise ValidationError(f"entry key {key!r} carries a non-MetricKind metric")
            if score is not None and not (0.0 <= score <= 1.0):
                raise ValidationError(f"score {score!r} for {key!r} outside [0, 1]")
        for m in self.family:
            if m not in methods:
                raise ValidationError(f"family label for unknown method {m!r}")

    @classmethod
    def from_rows(
        cls,
        rows: Iterable[tuple[str, str, str, "MetricKind | str", float | None]],
        family: Mapping[str, str] | None = None,
    ) -> "ScoreTable":
        """Build a table from (method, case, target, metric, score) tuples."""
        methods: dict[str, None] = {}
        cases: dict[str, None] = {}
        targets: dict[str, None] = {}
        entries: dict[ScoreKey, float | None] = {}
        for m, c, t, metric, score in rows:
            kind = metric if isinstance(metric, MetricKind) else MetricKind.parse(metric)
            key = (m, c, t, kind)
            if key in entries:
                raise ValidationError(f"duplicate score key {key!r}")
            methods[m] = cases[c] = targets[t] = None
            entries[key] = None if score is None else float(score)
        return cls(
            methods=tuple(methods),
            cases=tuple(cases),
            targets=tuple(targets),
            entries=entries,
            family=dict(family) if family else {},
        )

    def get(self, method: str, case: str, target: str, metric: MetricKind) -> float | None:
        """Score for a key, or None when missing (blank cell or absent row)."""
        return self.entries.get((method, case, target, metric))

    def has_value(self, method: str, case: str, target: str, metric: MetricKind) -> bool:
        return self.get(method, case, target, metric) is not None

    @property
    def n_missing(self) -> int:
        return sum(1 for v in self.entries.values() if v is None)


@dataclass(frozen=True)
class DemographicTable:
    """Categorical per-case metadata (sex, race, age group, scanner type, ...).

    Every record carries a value for every attribute; absent metadata is the
    explicit category ``"unknown"``.
    """

    attributes: tuple[str, ...]
    records: dict[str, dict[str, str]]

    def __post_init__(self) -> None:
        if len(set(self.attributes)) != len(self.attributes):
            raise ValidationError(f"duplicate attribute names in {self.attributes!r}")
        expected = set(self.attributes)
        for case, rec in self.records.items():
            if set(rec) != expected:
                raise ValidationError(f"record for case {case!r} does not cover attributes {sorted(expected)}")

    @property
    def cases(self) -> tuple[str, ...]:
        return tuple(self.records)

    def get(self, case: str, attribute: str) -> str:
        return self.records[case][attribute]


@dataclass(frozen=True, eq=False)
class VoxelMask:
    """Binary 3D occupancy grid with anisotropic voxel spacing in mm.

    ``voxels`` is indexed ``[x, y, z]`` and has shape ``dims``.
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    voxels: np.ndarray

    def __post_init__(self) -> None:
        if len(self.dims) != 3 or any(int(d) != d or d <= 0 for d in self.dims):
            raise ValidationError(f"dims must be three positive integers, got {self.dims!r}")
        if len(self.spacing) != 3 or any(not (s > 0) or not np.isfinite(s) for s in self.spacing):
            raise ValidationError(f"spacing must be three positive finite floats, got {self.spacing!r}")
        vox = np.asarray(self.voxels)
        if vox.shape != tuple(self.dims):
            raise ValidationError(f"voxel array shape {vox.shape} does not match dims {self.dims}")
        if vox.dtype != np.bool_:
            if not np.isin(vox, (0, 1)).all():
                raise FormatError("voxel values must be 0 or 1")
            vox = vox.astype(bool)
        object.__setattr__(self, "voxels", vox)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VoxelMask):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.spacing == other.spacing
            and bool(np.array_equal(self.voxels, other.voxels))
        )

    @property
    def foreground_count(self) -> int:
        return int(self.voxels.sum())


def _open_rows(path: Path, delimiter: str):
    fh = open(path, newline="", encoding="utf-8")
    return fh, csv.reader(fh, delimiter=delimiter)


def load_score_table(path: str | Path, schema: TableSchema | None = None) -> ScoreTable:
    """Load a delimited score table.

    Rows with an empty score cell become explicitly missing entries. Scores
    are parsed as decimal fractions and validated to lie in [0, 1].
    """
    schema = schema or TableSchema()
    path = Path(path)
    fh, reader = _open_rows(path, schema.delimiter)
    with fh:
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file, expected a header row")
        header = [h.strip() for h in header]
        cols = {}
        for col in (schema.method, schema.case, schema.target, schema.metric, schema.score):
            if col not in header:
                raise ParseError(f"{path}: header is missing required column {col!r}")
            cols[col] = header.index(col)
        fam_idx = header.index(schema.family) if schema.family in header else None

        methods: dict[str, None] = {}
        cases: dict[str, None] = {}
        targets: dict[str, None] = {}
        entries: dict[ScoreKey, float | None] = {}
        first_line: dict[ScoreKey, int] = {}
        family: dict[str, str] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            m = row[cols[schema.method]].strip()
            c = row[cols[schema.case]].strip()
            t = row[cols[schema.target]].strip()
            if not m or not c or not t:
                raise ValidationError(f"{path}:{lineno}: empty method/case/target identifier")
            try:
                kind = MetricKind.parse(row[cols[schema.metric]])
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            raw = row[cols[schema.score]].strip()
            if raw == "":
                score: float | None = None
            else:
                try:
                    score = float(raw)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: score {raw!r} is not a number") from None
                if not (0.0 <= score <= 1.0):
                    raise ValidationError(f"{path}:{lineno}: score {score!r} outside [0, 1]")
            key = (m, c, t, kind)
            if key in entries:
                raise ValidationError(
                    f"{path}:{lineno}: duplicate key {key[:3] + (kind.value,)!r}, first seen on line {first_line[key]}"
                )
            methods[m] = cases[c] = targets[t] = None
            entries[key] = score
            first_line[key] = lineno
            if fam_idx is not None:
                label = row[fam_idx].strip()
                if label:
                    if family.get(m, label) != label:
                        raise ValidationError(
                            f"{path}:{lineno}: method {m!r} has conflicting family labels "
                            f"{family[m]!r} and {label!r}"
                        )
                    family[m] = label
    return ScoreTable(
        methods=tuple(methods),
        cases=tuple(cases),
        targets=tuple(targets),
        entries=entries,
        family=family,
    )


def write_score_table(table: ScoreTable, path: str | Path, schema: TableSchema | None = None) -> None:
    """Serialize a table so that :func:`load_score_table` reproduces it exactly."""
    schema = schema or TableSchema()
    path = Path(path)
    with_family = bool(table.family)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        header = [schema.method, schema.case, schema.target, schema.metric, schema.score]
        if with_family:
            header.append(schema.family)
        writer.writerow(header)
        for (m, c, t, kind), score in table.entries.items():
            row = [m, c, t, kind.value, "" if score is None else repr(score)]
            if with_family:
                row.append(table.family.get(m, ""))
            writer.writerow(row)


def load_demographics(path: str | Path, delimiter: str = ",") -> DemographicTable:
    """Load per-case metadata; first column is the case id, the rest are attributes."""
    path = Path(path)
    fh, reader = _open_rows(path, delimiter)
    with fh:
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ParseError(f"{path}: expected a header with a case column and at least one attribute")
        attributes = tuple(h.strip() for h in header[1:])
        records: dict[str, dict[str, str]] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
            case = row[0].strip()
            if not case:
                raise ValidationError(f"{path}:{lineno}: empty case id")
            if case in records:
                raise ValidationError(f"{path}:{lineno}: duplicate case id {case!r}")
            records[case] = {
                attr: (cell.strip() or UNKNOWN) for attr, cell in zip(attributes, row[1:])
            }
    return DemographicTable(attributes=attributes, records=records)


def write_demographics(
    table: DemographicTable, path: str | Path, delimiter: str = ",", case_column: str = "case"
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        writer.writerow([case_column, *table.attributes])
        for case, rec in table.records.items():
            writer.writerow([case, *(rec[a] for a in table.attributes)])


_MASK_KEYS = ("dims", "spacing_mm", "data_file")


def load_mask(header_path: str | Path) -> VoxelMask:
    """Load a voxel mask from its structured-text header.

    The header declares ``dims``, ``spacing_mm``, and ``data_file`` (a sibling
    raw file of exactly nx*ny*nz bytes, values 0 or 1, x varying fastest).
    """
    header_path = Path(header_path)
    fields: dict[str, str] = {}
    for lineno, line in enumerate(header_path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{header_path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    for key in _MASK_KEYS:
        if key not in fields:
            raise FormatError(f"{header_path}: missing required key {key!r}")

    try:
        dims = tuple(int(v) for v in fields["dims"].split())
    except ValueError:
        raise FormatError(f"{header_path}: dims must be three integers, got {fields['dims']!r}") from None
    try:
        spacing = tuple(float(v) for v in fields["spacing_mm"].split())
    except ValueError:
        raise FormatError(
            f"{header_path}: spacing_mm must be three floats, got {fields['spacing_mm']!r}"
        ) from None
    if len(dims) != 3 or any(d <= 0 for d in dims):
        raise ValidationError(f"{header_path}: dims must be three positive integers, got {dims!r}")
    if len(spacing) != 3 or any(not (s > 0) for s in spacing):
        raise ValidationError(f"{header_path}: spacing_mm must be strictly positive, got {spacing!r}")

    data_path = header_path.parent / fields["data_file"]
    raw = data_path.read_bytes()
    nx, ny, nz = dims
    expected = nx * ny * nz
    if len(raw) != expected:
        raise FormatError(f"{data_path}: expected {expected} bytes for dims {dims}, got {len(raw)}")
    flat = np.frombuffer(raw, dtype=np.uint8)
    bad = np.nonzero(flat > 1)[0]
    if bad.size:
        raise FormatError(f"{data_path}: byte {int(bad[0])} has value {int(flat[bad[0]])}, expected 0 or 1")
    voxels = flat.reshape((nz, ny, nx)).transpose(2, 1, 0).astype(bool)
    return VoxelMask(dims=dims, spacing=spacing, voxels=voxels)


def write_mask(mask: VoxelMask, header_path: str | Path, data_file: str | None = None) -> None:
    """Write a mask header and its raw byte payload next to it."""
    header_path = Path(header_path)
    name = data_file or (header_path.stem + ".raw")
    nx, ny, nz = mask.dims
    sx, sy, sz = mask.spacing
    header_path.write_text(
        f"dims = {nx} {ny} {nz}\n"
        f"spacing_mm = {sx!r} {sy!r} {sz!r}\n"
        f"data_file = {name}\n",
        encoding="utf-8",
    )
    payload = np.ascontiguousarray(mask.voxels.transpose(2, 1, 0)).astype(np.uint8).tobytes()
    (header_path.parent / name).write_bytes(payload)
