"""
Accuracy vs ADC resolution, cutoff and activated rows on the bundled workload.

Writes a gnuplot-ready CSV with one record per design point.
"""

import argparse
import sys

from cimforge import mapper
from cimforge.macro import MacroConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", default="4,8,16")
    ap.add_argument("--bits", default="3,4,5,6")
    ap.add_argument("--cutoffs", default="0,0.375,0.5,0.625")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    grid = mapper.SweepGrid(
        rows=tuple(int(r) for r in args.rows.split(",")),
        adc_bits=tuple(int(b) for b in args.bits.split(",")),
        cutoff=tuple(float(c) for c in args.cutoffs.split(",")),
        hw_errors=(False, True),
    )
    records = mapper.run_sweep(grid, base=MacroConfig(seed=args.seed), repeats=args.repeats, workers=args.workers)
    text = mapper.format_records(records)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)


if __name__ == "__main__":
    main()
