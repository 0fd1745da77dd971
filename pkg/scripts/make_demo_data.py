#!/usr/bin/env python3
"""Regenerate the bundled synthetic demo dataset under data/demo/.

Deterministic: a fixed seed drives every draw, so reruns reproduce the files
byte for byte. The dataset is sized so that single attributes and pairwise
intersections both clear the default min_n = 40 subgroup filter, and one
method is given a deliberate deficit on one intersection so the fairness
audit has something to flag.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from rankaudit import (  # noqa: E402
    DemographicTable,
    ScoreTable,
    VoxelMask,
    write_demographics,
    write_mask,
    write_score_table,
)

SEED = 20240817
N_CASES = 200
TARGETS = ("liver", "spleen", "aorta", "airways")

# (method, family, dsc base, nsd base); NSD order deliberately disagrees with
# DSC order so the demo leaderboard shows a rank reversal.
METHODS = (
    ("unet_base", "unet", 0.92, 0.84),
    ("unet_large", "unet", 0.90, 0.86),
    ("unet_huge", "unet", 0.89, 0.88),
    ("vl_seg", "vlm", 0.86, 0.80),
    ("vl_clipseg", "vlm", 0.84, 0.82),
    ("monai_seg", "monai", 0.80, 0.74),
)

TARGET_OFFSET = {"liver": 0.03, "spleen": 0.01, "aorta": -0.02, "airways": -0.04}


def make_scores(rng: np.ndarray, cases, demographics) -> ScoreTable:
    case_effect = rng.normal(0.0, 0.04, size=N_CASES)
    rows = []
    family = {}
    for method, fam, dsc_base, nsd_base in METHODS:
        family[method] = fam
        for i, case in enumerate(cases):
            penalty = 0.0
            rec = demographics[case]
            if method == "monai_seg" and rec["sex"] == "F" and rec["scanner"] == "B":
                penalty = 0.08
            for target in TARGETS:
                for metric, base in (("DSC", dsc_base), ("NSD", nsd_base)):
                    if rng.random() < 0.01:
                        continue  # dropped prediction: no row at all
                    if rng.random() < 0.005:
                        rows.append((method, case, target, metric, None))  # blank score cell
                        continue
                    value = (
                        base
                        + TARGET_OFFSET[target]
                        + case_effect[i]
                        - penalty
                        + rng.normal(0.0, 0.03)
                    )
                    rows.append((method, case, target, metric, float(np.clip(value, 0.01, 0.99))))
    return ScoreTable.from_rows(rows, family=family)


def make_demographics(rng) -> dict[str, dict[str, str]]:
    sexes = np.array(["M"] * (N_CASES // 2) + ["F"] * (N_CASES // 2))
    scanners = np.array(["A"] * (N_CASES // 2) + ["B"] * (N_CASES // 2))
    rng.shuffle(sexes)
    rng.shuffle(scanners)
    records = {}
    for i in range(N_CASES):
        records[f"case_{i:03d}"] = {"sex": str(sexes[i]), "scanner": str(scanners[i])}
    # two cases with unrecorded scanner metadata
    records["case_013"]["scanner"] = ""
    records["case_077"]["scanner"] = ""
    return records


def sphere_mask(dims, spacing, center_mm, radius_mm) -> VoxelMask:
    nx, ny, nz = dims
    xs = np.arange(nx)[:, None, None] * spacing[0]
    ys = np.arange(ny)[None, :, None] * spacing[1]
    zs = np.arange(nz)[None, None, :] * spacing[2]
    sq = (xs - center_mm[0]) ** 2 + (ys - center_mm[1]) ** 2 + (zs - center_mm[2]) ** 2
    return VoxelMask(dims, spacing, sq <= radius_mm**2)


def make_masks(out_dir: Path) -> None:
    masks_dir = out_dir / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)
    dims = (10, 10, 8)
    spacing = (1.5, 1.0, 2.0)
    pairs = [
        ("case_000", "liver", (7.0, 5.0, 7.0), 4.0, (7.0, 5.0, 7.0), 4.0),
        ("case_001", "liver", (7.0, 5.0, 7.0), 4.0, (8.5, 5.0, 7.0), 4.0),
        ("case_002", "aorta", (7.0, 5.0, 7.0), 3.0, (7.0, 6.5, 8.0), 3.5),
    ]
    lines = ["case,target,gt,pred"]
    for case, target, c_gt, r_gt, c_pred, r_pred in pairs:
        gt_name = f"{case}_{target}_gt.hdr"
        pred_name = f"{case}_{target}_pred.hdr"
        write_mask(sphere_mask(dims, spacing, c_gt, r_gt), masks_dir / gt_name)
        write_mask(sphere_mask(dims, spacing, c_pred, r_pred), masks_dir / pred_name)
        lines.append(f"{case},{target},masks/{gt_name},masks/{pred_name}")
    (out_dir / "manifest.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


POLICY_TEXT = """\
default = "DSC"
liver = {metric = "DSC"}
spleen = {metric = "DSC"}
aorta = {metric = "NSD", tau_mm = 1.5}
airways = {metric = "NSD", tau_mm = 1.0}
"""


def main() -> None:
    out_dir = Path(__file__).resolve().parents[1] / "data" / "demo"
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    records = make_demographics(rng)
    cases = list(records)
    table = make_scores(rng, cases, records)
    write_score_table(table, out_dir / "scores.csv")
    meta = DemographicTable(
        attributes=("sex", "scanner"),
        records={c: {k: (v or "unknown") for k, v in rec.items()} for c, rec in records.items()},
    )
    write_demographics(meta, out_dir / "demographics.csv")
    (out_dir / "policy.toml").write_text(POLICY_TEXT, encoding="utf-8")
    make_masks(out_dir)
    n_rows = len(table.entries)
    print(f"wrote {out_dir} (scores rows: {n_rows}, cases: {len(cases)})")


if __name__ == "__main__":
    main()
