"""Regenerate the bundled synthetic workload (trained + quantized in numpy)."""

import argparse

from cimforge import mapper


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(mapper.BUNDLED_DIR))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    wl = mapper.make_synthetic_workload(args.seed)
    mapper.save_workload(wl, args.out)
    print(f"wrote {args.out}: float acc {mapper.float_accuracy(wl):.4f}, integer acc {mapper.integer_accuracy(wl):.4f}")


if __name__ == "__main__":
    main()
