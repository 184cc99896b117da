"""F1 on the target versus labelled fraction for the three sweep heads on coloured digits.

Usage:
    python scripts/run_sweep.py [--fractions 0.01 0.05 0.1 0.5] [--seeds 0 1 2 3 4] [--jobs 1]

Same as ``rulehead sweep`` but prints a fraction-by-head table at the end.
"""
import argparse

from rulehead.experiments import (
    DIGITS_RULE,
    DIGITS_SCHEMA,
    SWEEP_CONFIG,
    SWEEP_HEADS,
    gen_colored_digits,
    run_sweep,
    summarize,
    write_results,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", default="data/mnist5k/images-idx3-ubyte.gz")
    ap.add_argument("--labels", default="data/mnist5k/labels-idx1-ubyte.gz")
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.5])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    data = gen_colored_digits(args.images, args.labels, args.n, seed=0)
    rows = run_sweep(data, DIGITS_SCHEMA, DIGITS_RULE, args.fractions, args.seeds, SWEEP_HEADS, SWEEP_CONFIG, args.jobs)
    write_results(rows, args.out)
    means = summarize(rows)
    print(f"{'fraction':>10}" + "".join(f"{h:>14}" for h in SWEEP_HEADS))
    for f in args.fractions:
        print(f"{f:>10g}" + "".join(f"{means[(h, f)]:>14.4f}" for h in SWEEP_HEADS))


if __name__ == "__main__":
    main()
