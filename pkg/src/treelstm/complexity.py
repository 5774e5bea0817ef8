"""Multiplication counting and the closed-form forward-pass cost model.

By default a cell step is charged ``4q^2 + 4qm + 3q`` multiplications: the
bias column of the input weights is not counted, as in the published cost
table.  ``include_bias=True`` charges ``4q(m+1)`` for the input products.
Combination work (mixing logits, weighting, head) is tallied separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


def cell_mults(q: int, m: int, include_bias: bool = False) -> int:
    width = m + 1 if include_bias else m
    return 4 * q * q + 4 * q * width + 3 * q


@dataclass
class MultCounter:
    include_bias: bool = False
    cells: int = 0
    cell_calls: int = 0
    combination: int = 0

    def add_cells(self, q: int, m: int, count: int = 1):
        self.cell_calls += count
        self.cells += count * cell_mults(q, m, self.include_bias)

    def add_combination(self, q: int, L: int, n_active: int):
        # logits w~.h~ (q + 2L each), alpha * h_bar (q each), head (q [+1])
        head = q + 1 if self.include_bias else q
        self.combination += n_active * (q + 2 * L) + n_active * q + head

    def add_head(self, q: int, count: int = 1):
        self.combination += count * (q + 1 if self.include_bias else q)

    def merge(self, other: "MultCounter") -> "MultCounter":
        if other.include_bias != self.include_bias:
            raise ValueError("cannot merge counters with different bias conventions")
        return MultCounter(self.include_bias, self.cells + other.cells,
                           self.cell_calls + other.cell_calls,
                           self.combination + other.combination)


@dataclass
class CostModel:
    N: int
    M: int
    q: int
    m: int
    L: int = 1

    def __post_init__(self):
        if not 0 <= self.M <= self.N:
            raise ValueError(f"need 0 <= M <= N, got M={self.M}, N={self.N}")
        if self.L < 1:
            raise ValueError(f"L must be >= 1, got {self.L}")

    @property
    def r(self) -> float:
        if self.N == 0:
            raise ValueError("missingness ratio undefined for N = 0")
        return self.M / self.N

    @property
    def cell(self) -> int:
        return cell_mults(self.q, self.m)


def zi_cost(cm: CostModel) -> int:
    return cm.N * (4 * cm.q ** 2 + 4 * cm.q * cm.m + 3 * cm.q)


def fi_cost(cm: CostModel) -> int:
    return cm.N * (4 * cm.q ** 2 + 4 * cm.q * cm.m + 7 * cm.q)


def tree_max_cost(cm: CostModel) -> int:
    return (cm.N - cm.M) * (1 + 2 ** (cm.L - 1) * cm.L) * cm.cell


def tree_min_cost(cm: CostModel) -> float:
    p = 1.0 - cm.r
    return (cm.N - cm.M) * (1.0 + 2.0 ** (cm.L * p) * cm.L * p / 2.0) * cm.cell


def tree_min_ratio(r: float, L: int) -> float:
    """``tree_min / zi`` as a function of the missingness ratio alone."""
    p = 1.0 - r
    return p * (1.0 + 2.0 ** (L * p) * L * p / 2.0)


@dataclass
class CrossoverScan:
    L: int
    rows: list  # (r, tree_min, tree_max, zi, fi)
    first_grid_r: float | None  # smallest grid r with tree_min < zi
    crossover_r: float | None  # root of tree_min == zi bracketed by the grid


def crossover_scan(q: int, m: int, L: int, N: int, step: float = 0.05) -> CrossoverScan:
    """Sweep r over ``0, step, ..., 1`` and locate where the tree's
    uniform-missingness cost drops below zero imputation's.

    ``crossover_r`` is refined by root finding inside the first grid interval
    whose right end has ``tree_min < zi``; beyond it the tree is cheaper.
    """
    n_pts = int(round(1.0 / step))
    rows = []
    first = None
    prev_r = None
    crossover = None
    for k in range(n_pts + 1):
        r = k / n_pts
        M = int(round(r * N))
        cm = CostModel(N, M, q, m, L)
        zi = zi_cost(cm)
        tmin = tree_min_cost(cm)
        rows.append((r, tmin, tree_max_cost(cm), zi, fi_cost(cm)))
        if first is None and tmin < zi:
            first = r
            if prev_r is None:
                crossover = r
            else:
                crossover = brentq(lambda x: tree_min_ratio(x, L) - 1.0, prev_r, r,
                                   xtol=1e-12)
        prev_r = r
    return CrossoverScan(L, rows, first, crossover)


def leaf_calls_for_pattern(k_present: int) -> int:
    """Leaf cell steps for a window holding ``k_present`` inputs, all leaves on:
    sum over non-empty sub-masks of their popcounts, ``k * 2^(k-1)``."""
    return k_present * 2 ** (k_present - 1) if k_present else 0


def expected_leaf_calls(L: int, r: float) -> float:
    """Mean leaf cell steps per window under i.i.d. missingness ``r``."""
    p = 1.0 - r
    return L * p * (1.0 + p) ** (L - 1)


PROFILE_COLUMNS = ("arch", "N", "M", "r", "L", "q", "m", "measured_cells",
                   "measured_combination", "formula_min", "formula_max")


def profile_row(arch, N, M, L, q, m, counter: MultCounter | None):
    cm = CostModel(N, M, q, m, L)
    r = cm.r if N else 0.0
    if arch == "tree":
        fmin, fmax = (tree_min_cost(cm) if N else 0.0), tree_max_cost(cm)
    elif arch == "zi":
        fmin = fmax = zi_cost(cm)
    else:
        fmin = fmax = fi_cost(cm)
    return {
        "arch": arch, "N": N, "M": M, "r": r, "L": L, "q": q, "m": m,
        "measured_cells": "" if counter is None else counter.cells,
        "measured_combination": "" if counter is None else counter.combination,
        "formula_min": fmin, "formula_max": fmax,
    }


def contiguous_block_layout(N: int, M: int, where: str = "end") -> np.ndarray:
    """Presence mask with the ``M`` missing slots forming one block."""
    present = np.ones(N, dtype=bool)
    if M:
        if where == "end":
            present[N - M:] = False
        else:
            present[:M] = False
    return present
