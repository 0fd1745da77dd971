#!/usr/bin/env python3
"""Run the full audit report on the bundled demo dataset.

Writes significance, leaderboard, fairness tables and figures under
out/demo_report/, plus per-pair mask metrics for the demo mask manifest.
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from rankaudit.cli import run  # noqa: E402


def main() -> int:
    root = Path(__file__).resolve().parents[1]
    demo = root / "data" / "demo"
    out = root / "out" / "demo_report"
    code = run(
        [
            "report",
            "--scores", str(demo / "scores.csv"),
            "--demographics", str(demo / "demographics.csv"),
            "--policy", str(demo / "policy.toml"),
            "--out", str(out),
        ]
    )
    if code != 0:
        return code
    return run(
        [
            "metrics",
            "--pairs", str(demo / "manifest.csv"),
            "--tau", "1.5",
            "--out", str(out),
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
