"""Correct a real reversed-PE pair and tabulate metrics against a T1 image.

The T1 must already be resampled onto the EPI grid. This evaluation is not
part of the test suite; it needs data that is not shipped with the package.

    python3 scripts/real_data_eval.py --plus LR.nii.gz --minus RL.nii.gz \
        --t1 T1_in_epi.nii.gz --pe-axis x --out results/sub01
"""
import argparse
import sys
from pathlib import Path

from otsdc.cli import main as otsdc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--plus", required=True)
    ap.add_argument("--minus", required=True)
    ap.add_argument("--t1", required=True)
    ap.add_argument("--mask")
    ap.add_argument("--pe-axis", default="x")
    ap.add_argument("--slices", type=int, nargs="*", default=[])
    ap.add_argument("--out", default="results/run")
    args = ap.parse_args()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    extra = ["--mask", args.mask] if args.mask else []
    code = otsdc(["correct", "--plus", args.plus, "--minus", args.minus, "--t1", args.t1,
                  "--pe-axis", args.pe_axis, "--threads", "1", "--out", args.out, *extra])
    if code:
        return code
    return otsdc(["metrics", "--pe-axis", args.pe_axis, "--t1", args.t1, *extra,
                  "--plus", args.plus, "--minus", args.minus, "--label", "Uncorrected",
                  "--plus", f"{args.out}_corrected_plus.nii.gz",
                  "--minus", f"{args.out}_corrected_minus.nii.gz", "--label", "Corrected",
                  *(["--slices", *map(str, args.slices)] if args.slices else []),
                  "--out", f"{args.out}_table"])


if __name__ == "__main__":
    sys.exit(main())
