"""Print the closed-form cost table and the ratio where the tree gets cheaper
than zero imputation, for L = 1..6."""

import argparse

from treelstm.complexity import crossover_scan


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=int, default=8)
    ap.add_argument("--m", type=int, default=1)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--table", action="store_true", help="also print the r grid")
    args = ap.parse_args()
    for L in range(1, 7):
        scan = crossover_scan(args.q, args.m, L, args.n)
        where = "never" if scan.crossover_r is None else f"{scan.crossover_r:.4f}"
        print(f"L={L}: tree cheaper than ZI for r > {where} "
              f"(first grid point {scan.first_grid_r})")
        if args.table:
            for r, tmin, tmax, zi, fi in scan.rows:
                print(f"   r={r:.2f} tree_min={tmin:.4g} tree_max={tmax:.4g} zi={zi} fi={fi}")


if __name__ == "__main__":
    main()
