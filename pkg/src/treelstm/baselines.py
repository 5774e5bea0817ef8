"""Single-LSTM regressors on imputed streams: zero fill (ZI) and forward fill
with a presence indicator (FI)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cell import ChainTrace, LstmParams, LstmState, chain_backward, run_chain
from .data import MaskedSequence
from .numeric import gaussian_init, make_rng

KINDS = ("zi", "fi")


def impute_zero(seq: MaskedSequence) -> np.ndarray:
    return np.where(seq.present[:, None], seq.inputs, 0.0)


def impute_forward_fill(seq: MaskedSequence) -> np.ndarray:
    """Width ``m + 1``: last seen input (zeros before the first one) plus a
    presence indicator column."""
    n, m = seq.inputs.shape
    out = np.zeros((n, m + 1))
    last = np.zeros(m)
    for j in range(n):
        if seq.present[j]:
            last = seq.inputs[j]
            out[j, m] = 1.0
        out[j, :m] = last
    return out


def impute(kind: str, seq: MaskedSequence) -> np.ndarray:
    if kind == "zi":
        return impute_zero(seq)
    if kind == "fi":
        return impute_forward_fill(seq)
    raise ValueError(f"unknown baseline kind {kind!r}")


@dataclass
class BaselineCache:
    t0: int
    t1: int
    steps: np.ndarray
    chain: ChainTrace
    h: np.ndarray  # (T, q)
    d_hat: np.ndarray
    targets: np.ndarray
    has_target: np.ndarray
    final_state: LstmState


@dataclass
class BaselineModel:
    kind: str
    params: LstmParams
    w_hat: np.ndarray
    bptt_horizon: int = 64
    # steps before this index are not scored; set to the tree's L so both
    # architectures are compared over the same steps
    score_from: int = 0
    init_variance: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.w_hat.shape != (self.params.q + 1,):
            raise ValueError(f"w_hat shape {self.w_hat.shape}, expected {(self.params.q + 1,)}")

    @classmethod
    def init(cls, kind: str, q: int, m: int, seed: int = 0, variance: float = 1e-2,
             bptt_horizon: int = 64, score_from: int = 0) -> "BaselineModel":
        if kind not in KINDS:
            raise ValueError(f"unknown baseline kind {kind!r}")
        rng = make_rng(seed)
        width = m + 1 if kind == "fi" else m
        params = LstmParams.init(rng, q, width, variance)
        w_hat = gaussian_init(rng, 1, q + 1, variance)[0]
        return cls(kind, params, w_hat, bptt_horizon, score_from, variance, seed)

    @property
    def q(self) -> int:
        return self.params.q

    @property
    def m(self) -> int:
        """Width of the raw (un-imputed) input."""
        return self.params.m - 1 if self.kind == "fi" else self.params.m

    @property
    def first_step(self) -> int:
        return self.score_from

    def parameters(self) -> dict:
        return {"lstm.W": self.params.W, "lstm.R": self.params.R, "w_hat": self.w_hat}

    def copy(self) -> "BaselineModel":
        return BaselineModel(self.kind, self.params.copy(), self.w_hat.copy(),
                             self.bptt_horizon, self.score_from, self.init_variance, self.seed)

    def __eq__(self, other):
        return (isinstance(other, BaselineModel) and self.kind == other.kind
                and self.params == other.params and np.array_equal(self.w_hat, other.w_hat)
                and (self.bptt_horizon, self.score_from) == (other.bptt_horizon, other.score_from))

    def initial_state(self) -> LstmState:
        return LstmState.zeros(self.q)

    def step_range(self, seq) -> range:
        return range(0, len(seq))

    def forward(self, seq: MaskedSequence, t0: int, t1: int, state: LstmState,
                counter=None, dense=None) -> BaselineCache:
        """One LSTM step and one prediction per slot in ``[t0, t1)``."""
        if seq.m != self.m:
            raise ValueError(f"sequence input width {seq.m} != model input width {self.m}")
        dense = impute(self.kind, seq) if dense is None else dense
        chain = run_chain(self.params, dense[t0:t1], state, counter)
        h = chain.H[1:]
        d_hat = h @ self.w_hat[:-1] + self.w_hat[-1]
        if counter is not None:
            counter.add_head(self.q, t1 - t0)
        steps = np.arange(t0, t1)
        has = seq.has_target[steps] & (steps >= self.score_from)
        return BaselineCache(t0, t1, steps, chain, h, d_hat, seq.targets[steps], has,
                             chain.state(len(chain)))

    def backward(self, cache: BaselineCache, g) -> dict:
        g = np.asarray(g, dtype=np.float64)
        gw = np.empty_like(self.w_hat)
        gw[:-1] = g @ cache.h
        gw[-1] = g.sum()
        inj = g[:, None] * self.w_hat[:-1]
        gp, _, _ = chain_backward(self.params, cache.chain, inj, None, self.bptt_horizon)
        return {"lstm.W": gp.W, "lstm.R": gp.R, "w_hat": gw}


def baseline_forward(model: BaselineModel, dense: np.ndarray, counter=None) -> np.ndarray:
    """Predictions for every row of an already imputed stream."""
    if dense.ndim != 2 or dense.shape[1] != model.params.m:
        raise ValueError(
            f"imputed stream width {dense.shape[-1]} != LSTM input width {model.params.m}"
        )
    h = run_chain(model.params, dense, model.initial_state(), counter).H[1:]
    if counter is not None:
        counter.add_head(model.q, len(dense))
    return h @ model.w_hat[:-1] + model.w_hat[-1]
