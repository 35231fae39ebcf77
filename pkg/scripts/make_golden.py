"""Regenerate the golden RCS grids under tests/data/golden/.

Synthesizes the bundled two-band scene, runs ``rcskit extract`` with default
gating and copies the per-band grid CSVs. Rerun only when the extraction
defaults change on purpose, and review the diff.

    python3 scripts/make_golden.py
"""

from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

from rcskit.cli import run

ROOT = Path(__file__).resolve().parents[1]
SCENE = ROOT / "scripts" / "scenes" / "oracle_two_band.json"
GOLDEN = ROOT / "tests" / "data" / "golden"


def main() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        camp, out = Path(tmp) / "camp", Path(tmp) / "out"
        if run(["synth", "--scene", str(SCENE), "--out", str(camp)]) != 0:
            return 1
        if run(["extract", "--manifest", str(camp / "manifest.json"), "--out", str(out), "--no-figures"]) != 0:
            return 1
        for csv in sorted(out.glob("grid_*.csv")):
            shutil.copyfile(csv, GOLDEN / csv.name)
            print(f"wrote {GOLDEN / csv.name}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
