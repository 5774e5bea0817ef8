"""Desk-scale experiments on the synthetic noisy sine.

Both the scripts in ``scripts/`` and the acceptance suite call into here, so
the numbers they report come from one code path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .baselines import BaselineModel
from .data import (apply_scaler, fit_scaler, inject_missingness, make_next_value_targets,
                   split_60_40, synth_sine)
from .model import TreeLstmConfig, TreeLstmModel
from .trainer import TrainConfig, evaluate, train


@dataclass(frozen=True)
class SineSetup:
    n: int = 2000
    noise: float = 0.05
    q: int = 8
    L: int = 2
    learning_rate: float = 1e-3
    epochs: int = 200
    # every architecture gets the same update regime; see the README
    clip_norm: float | None = None
    update_every: int | None = None
    mask_seed_offset: int = 1000


def sine_task(r: float, seed: int, setup: SineSetup = SineSetup()):
    """Scaled (train, test) pair for next-value prediction at missingness ``r``."""
    seq = synth_sine(setup.n, setup.noise, seed)
    seq = inject_missingness(seq, r, seed + setup.mask_seed_offset)
    tr, te = split_60_40(make_next_value_targets(seq))
    sp = fit_scaler(tr)
    return apply_scaler(tr, sp), apply_scaler(te, sp)


def make_model(arch: str, seed: int, setup: SineSetup, m: int = 1):
    if arch == "tree":
        return TreeLstmModel.init(TreeLstmConfig(L=setup.L, q=setup.q, m=m, seed=seed))
    return BaselineModel.init(arch, setup.q, m, seed, score_from=setup.L)


@dataclass
class RunResult:
    arch: str
    r: float
    seed: int
    L: int
    initial_test_mse: float
    final_test_mse: float
    seconds: float


def run_one(arch: str, r: float, seed: int, setup: SineSetup = SineSetup()) -> RunResult:
    tr, te = sine_task(r, seed, setup)
    model = make_model(arch, seed, setup)
    cfg = TrainConfig(learning_rate=setup.learning_rate, epochs=setup.epochs, seed=seed,
                      update_every=setup.update_every, clip_norm=setup.clip_norm)
    initial = evaluate(model, te)
    t0 = time.perf_counter()
    reports = train(model, tr, te, cfg)
    return RunResult(arch, r, seed, setup.L, initial, reports[-1].test_mse,
                     time.perf_counter() - t0)


def directional_benchmark(ratios=(0.3, 0.7), seeds=range(5), setup: SineSetup = SineSetup(),
                          archs=("tree", "zi", "fi"), progress=None) -> list:
    out = []
    for r in ratios:
        for seed in seeds:
            for arch in archs:
                res = run_one(arch, r, seed, setup)
                out.append(res)
                if progress is not None:
                    progress(res)
    return out


def medians(results) -> dict:
    """``(arch, r) -> median final test MSE``."""
    groups = {}
    for res in results:
        groups.setdefault((res.arch, res.r), []).append(res.final_test_mse)
    return {k: float(np.median(v)) for k, v in groups.items()}


def capacity_sweep(Ls=(1, 2, 3, 4), r: float = 0.3, seed: int = 0,
                   setup: SineSetup = SineSetup(), progress=None) -> list:
    out = []
    for L in Ls:
        res = run_one("tree", r, seed, replace(setup, L=L))
        out.append(res)
        if progress is not None:
            progress(res)
    return out
