"""Regenerate src/vfdenoise/data/normative_24_2.csv from the healthy-cohort simulation."""

from pathlib import Path

from vfdenoise.core import NORMATIVE_FILE, NormativeModel, hill_of_vision, write_normative
from vfdenoise.simulator import derive_cutoffs

if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "vfdenoise" / "data" / NORMATIVE_FILE
    model = NormativeModel(hill_of_vision(), -0.1, derive_cutoffs())
    write_normative(model, out)
    print(f"wrote {out}")
