"""Tree-LSTM (L=2) vs zero-fill and forward-fill LSTMs on the noisy sine.

Trains every architecture at r = 0.3 and r = 0.7 for five seeds and prints
the median final test MSE per cell.  Takes about five minutes on one core.
"""

import argparse
import csv
import sys
import time

from treelstm.experiments import SineSetup, directional_benchmark, medians


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--ratios", default="0.3,0.7")
    ap.add_argument("--csv", help="optional per-run CSV")
    args = ap.parse_args()
    setup = SineSetup(epochs=args.epochs)
    ratios = [float(v) for v in args.ratios.split(",")]
    t0 = time.perf_counter()
    results = directional_benchmark(
        ratios, range(args.seeds), setup,
        progress=lambda r: print(f"{r.arch:4s} r={r.r:.1f} seed={r.seed} "
                                 f"test_mse={r.final_test_mse:.5f} ({r.seconds:.1f}s)",
                                 flush=True))
    med = medians(results)
    print("\nmedian final test MSE")
    print("r     tree      zi        fi")
    for r in ratios:
        print(f"{r:.1f}  " + "  ".join(f"{med[(a, r)]:.5f}" for a in ("tree", "zi", "fi")))
    print(f"total {time.perf_counter() - t0:.0f}s")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arch", "r", "seed", "initial_test_mse", "final_test_mse", "seconds"])
            for x in results:
                w.writerow([x.arch, x.r, x.seed, x.initial_test_mse, x.final_test_mse,
                            f"{x.seconds:.2f}"])


if __name__ == "__main__":
    sys.exit(main())
