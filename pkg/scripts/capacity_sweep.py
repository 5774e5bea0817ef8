"""Window-length sweep L = 1..4 for the Tree-LSTM at 30% missingness."""

import argparse

from treelstm.experiments import SineSetup, capacity_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--ratio", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print("L  initial_mse  final_mse  seconds")
    for res in capacity_sweep((1, 2, 3, 4), args.ratio, args.seed, SineSetup(epochs=args.epochs)):
        print(f"{res.L}  {res.initial_test_mse:.5f}      {res.final_test_mse:.5f}    "
              f"{res.seconds:.1f}", flush=True)


if __name__ == "__main__":
    main()
