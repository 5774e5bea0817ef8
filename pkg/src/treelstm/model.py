"""Tree-LSTM regressor for sequences with missing inputs.

Grid positions are 0-based time indices: slot ``t`` holds the input at time
``t * delta``.  The model emits one prediction per step ``t`` in ``[L, N)``.
At step ``t`` the main network consumes slot ``t - L`` (if present); the
window is slots ``t - L + 1 .. t``.  Each active leaf network starts from a
main-network state and reads the present window inputs at its pattern's
positions, oldest first.  Leaf outputs and the main output are mixed with a
masked softmax and fed to a linear head.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cell import (ChainTrace, LstmParams, LstmState, add_step_grads, cell_forward,
                   chain_backward, gate_backward, run_chain)
from .data import MaskedSequence
from .numeric import gaussian_init, make_rng, masked_softmax, masked_softmax_rows
from .presence import (active_set, index_of, leaf_positions_of_index,
                       pattern_of_index)

LEAF_INIT_CHOICES = ("after", "before")


@dataclass
class TreeLstmConfig:
    L: int = 2
    q: int = 8
    m: int = 1
    leaf_selection: list | None = None  # None: all 2^L - 1 leaves
    shared_combination: bool = False
    bptt_horizon: int = 64
    # "after": leaves start from the main state that includes slot t-L;
    # "before": from the state one main update earlier.
    leaf_init: str = "after"
    init_variance: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"window length L must be >= 1, got {self.L}")
        if self.q < 1 or self.m < 1:
            raise ValueError(f"q and m must be >= 1, got q={self.q}, m={self.m}")
        if self.bptt_horizon < 1:
            raise ValueError(f"bptt_horizon must be >= 1, got {self.bptt_horizon}")
        if self.leaf_init not in LEAF_INIT_CHOICES:
            raise ValueError(f"leaf_init must be one of {LEAF_INIT_CHOICES}")
        if self.leaf_selection is not None:
            sel = sorted(set(int(i) for i in self.leaf_selection))
            bad = [i for i in sel if not 1 <= i < (1 << self.L)]
            if bad:
                raise ValueError(f"leaf indices {bad} outside [1, {1 << self.L})")
            # an explicit list naming every leaf is the full configuration
            self.leaf_selection = None if sel == list(range(1, 1 << self.L)) else sel

    @property
    def leaves(self) -> list[int]:
        if self.leaf_selection is None:
            return list(range(1, 1 << self.L))
        return list(self.leaf_selection)

    @property
    def networks(self) -> list[int]:
        return [0] + self.leaves


@dataclass
class TreeLstmModel:
    config: TreeLstmConfig
    main: LstmParams
    leaves: dict  # leaf index -> LstmParams
    w_tilde: np.ndarray  # (n_networks, q + 2L), or (1, q + 2L) when shared
    w_hat: np.ndarray  # (q + 1,)

    kind = "tree"

    def __post_init__(self):
        cfg = self.config
        if sorted(self.leaves) != cfg.leaves:
            raise ValueError(
                f"leaf networks {sorted(self.leaves)} do not match config {cfg.leaves}"
            )
        rows = 1 if cfg.shared_combination else len(cfg.networks)
        if self.w_tilde.shape != (rows, cfg.q + 2 * cfg.L):
            raise ValueError(
                f"w_tilde shape {self.w_tilde.shape}, expected {(rows, cfg.q + 2 * cfg.L)}"
            )
        if self.w_hat.shape != (cfg.q + 1,):
            raise ValueError(f"w_hat shape {self.w_hat.shape}, expected {(cfg.q + 1,)}")
        for p in [self.main, *self.leaves.values()]:
            if (p.q, p.m) != (cfg.q, cfg.m):
                raise ValueError(f"LSTM params (q={p.q}, m={p.m}) do not match config")

    @classmethod
    def init(cls, config: TreeLstmConfig, rng=None) -> "TreeLstmModel":
        rng = make_rng(config.seed) if rng is None else rng
        q, m, var = config.q, config.m, config.init_variance
        main = LstmParams.init(rng, q, m, var)
        leaves = {i: LstmParams.init(rng, q, m, var) for i in config.leaves}
        rows = 1 if config.shared_combination else len(config.networks)
        w_tilde = gaussian_init(rng, rows, q + 2 * config.L, var)
        w_hat = gaussian_init(rng, 1, q + 1, var)[0]
        return cls(config, main, leaves, w_tilde, w_hat)

    @property
    def networks(self) -> list[int]:
        return self.config.networks

    @property
    def first_step(self) -> int:
        return self.config.L

    def parameters(self) -> dict:
        """Name -> array (live references; updating them updates the model)."""
        out = {"main.W": self.main.W, "main.R": self.main.R}
        for i in self.config.leaves:
            out[f"leaf{i}.W"] = self.leaves[i].W
            out[f"leaf{i}.R"] = self.leaves[i].R
        out["w_tilde"] = self.w_tilde
        out["w_hat"] = self.w_hat
        return out

    def copy(self) -> "TreeLstmModel":
        return TreeLstmModel(replace(self.config), self.main.copy(),
                             {i: p.copy() for i, p in self.leaves.items()},
                             self.w_tilde.copy(), self.w_hat.copy())

    def __eq__(self, other):
        if not isinstance(other, TreeLstmModel) or self.config != other.config:
            return False
        a, b = self.parameters(), other.parameters()
        return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)

    def w_tilde_for(self, col: int) -> np.ndarray:
        return self.w_tilde[0 if self.config.shared_combination else col]

    def initial_state(self) -> LstmState:
        return LstmState.zeros(self.config.q)

    # trainer protocol
    def forward(self, seq, t0, t1, state, counter=None):
        return forward_segment(self, seq, t0, t1, state, counter)

    def backward(self, cache, g):
        return backward_segment(self, cache, g)

    def step_range(self, seq) -> range:
        return range(self.config.L, len(seq))


def window_pattern(seq: MaskedSequence, t: int, L: int) -> tuple[int, ...]:
    """Presence bits of slots ``t-L+1 .. t``, oldest first."""
    if not L - 1 <= t < len(seq):
        raise IndexError(f"window end {t} out of range for L={L}, N={len(seq)}")
    return tuple(int(b) for b in seq.present[t - L + 1:t + 1])


@dataclass
class StepOutput:
    d_hat: float
    alpha: np.ndarray  # (2^L,)
    h_hat: np.ndarray
    pattern: tuple
    h_bar: dict  # network index -> output vector
    main_state: LstmState  # main state after consuming slot t - L
    leaf_traces: dict = field(default_factory=dict)


def step_forward(model: TreeLstmModel, seq: MaskedSequence, t: int,
                 state_before: LstmState, counter=None) -> StepOutput:
    """Single step computed directly, network by network.

    ``state_before`` must reflect exactly the present inputs at slots
    ``< t - L``; the step itself feeds slot ``t - L`` to the main network.
    """
    cfg = model.config
    L = cfg.L
    if not L <= t < len(seq):
        raise IndexError(f"step {t} outside [{L}, {len(seq)})")
    if seq.present[t - L]:
        after, _ = cell_forward(model.main, seq.inputs[t - L], state_before, counter)
    else:
        after = state_before
    init = after if cfg.leaf_init == "after" else state_before
    pattern = window_pattern(seq, t, L)
    act = [i for i in active_set(pattern) if i == 0 or i in model.leaves]
    h_bar = {0: after.h}
    traces = {}
    for i in act[1:]:
        s = init
        traces[i] = []
        for off in leaf_positions_of_index(i, L):
            s, tr = cell_forward(model.leaves[i], seq.inputs[t - L + 1 + off], s, counter)
            traces[i].append(tr)
        h_bar[i] = s.h
    pat = np.asarray(pattern, dtype=np.float64)
    logits = np.zeros(1 << L)
    for i in act:
        w = model.w_tilde_for(model.networks.index(i))
        h_tilde = np.concatenate([pat, np.asarray(pattern_of_index(i, L), float), h_bar[i]])
        logits[i] = w @ h_tilde
    alpha = masked_softmax(logits, act)
    h_hat = np.zeros(cfg.q)
    for i in act:
        h_hat = h_hat + alpha[i] * h_bar[i]
    d_hat = float(model.w_hat[:-1] @ h_hat + model.w_hat[-1])
    if counter is not None:
        counter.add_combination(cfg.q, cfg.L, len(act))
    return StepOutput(d_hat, alpha, h_hat, pattern, h_bar, after, traces)


@dataclass
class SegmentCache:
    """Everything the backward pass needs for steps ``[t0, t1)``."""

    t0: int
    t1: int
    steps: np.ndarray
    patterns: np.ndarray  # (T,) pattern indices
    bits: np.ndarray  # (T, L)
    main: ChainTrace  # main-network run; row k of H/C = state after k inputs
    k_after: np.ndarray
    k_init: np.ndarray
    leaf_runs: dict  # network column -> (rows, traces)
    h_bar: np.ndarray  # (T, n_networks, q)
    mask: np.ndarray  # (T, n_networks)
    alpha: np.ndarray  # (T, n_networks)
    h_hat: np.ndarray  # (T, q)
    d_hat: np.ndarray  # (T,)
    targets: np.ndarray
    has_target: np.ndarray
    final_state: LstmState

    def alpha_full(self, L: int, networks) -> np.ndarray:
        out = np.zeros((len(self.steps), 1 << L))
        out[:, networks] = self.alpha
        return out


def _net_bits(networks, L):
    return np.array([pattern_of_index(i, L) for i in networks], dtype=np.float64)


def forward_segment(model: TreeLstmModel, seq: MaskedSequence, t0: int, t1: int,
                    state0: LstmState, counter=None) -> SegmentCache:
    """Run steps ``[t0, t1)`` with leaves batched across steps.

    ``state0`` must reflect the present inputs at slots ``< t0 - L``.
    """
    cfg = model.config
    L, q = cfg.L, cfg.q
    if seq.m != cfg.m:
        raise ValueError(f"sequence input width {seq.m} != model input width {cfg.m}")
    if not (L <= t0 <= t1 <= len(seq)):
        raise IndexError(f"segment [{t0}, {t1}) outside [{L}, {len(seq)}]")
    pres = seq.present
    X = seq.inputs
    lo, hi = t0 - L, t1 - L
    main_slots = lo + np.flatnonzero(pres[lo:hi])
    chain = run_chain(model.main, X[main_slots], state0, counter)
    cnt = np.concatenate([[0], np.cumsum(pres[lo:hi])])
    steps = np.arange(t0, t1)
    k_after = cnt[steps - L - lo + 1]
    k_init = k_after if cfg.leaf_init == "after" else cnt[steps - L - lo]
    T = steps.size
    weights = 1 << np.arange(L - 1, -1, -1)
    if T:
        win = np.lib.stride_tricks.sliding_window_view(pres, L)
        bits = win[steps - L + 1].astype(np.float64)
    else:
        bits = np.zeros((0, L))
    pat = (bits.astype(np.int64) @ weights) if T else np.zeros(0, dtype=np.int64)
    Hs, Cs = chain.H, chain.C

    nets = cfg.networks
    n = len(nets)
    h_bar = np.zeros((T, n, q))
    mask = np.zeros((T, n), dtype=bool)
    h_bar[:, 0] = Hs[k_after]
    mask[:, 0] = True
    leaf_runs = {}
    for col, i in enumerate(nets[1:], 1):
        rows = np.flatnonzero((pat & i) == i)
        if rows.size == 0:
            continue
        s = LstmState(Cs[k_init[rows]], Hs[k_init[rows]])
        trs = []
        for off in leaf_positions_of_index(i, L):
            s, tr = cell_forward(model.leaves[i], X[steps[rows] - L + 1 + off], s, counter)
            trs.append(tr)
        h_bar[rows, col] = s.h
        mask[rows, col] = True
        leaf_runs[col] = (rows, trs)

    wt = np.broadcast_to(model.w_tilde, (n, q + 2 * L))
    nb = _net_bits(nets, L)
    logits = (bits @ wt[:, :L].T + (wt[:, L:2 * L] * nb).sum(axis=1)
              + np.einsum("tiq,iq->ti", h_bar, wt[:, 2 * L:]))
    alpha = masked_softmax_rows(logits, mask) if T else np.zeros((0, n))
    h_hat = np.einsum("ti,tiq->tq", alpha, h_bar)
    d_hat = h_hat @ model.w_hat[:-1] + model.w_hat[-1]
    if counter is not None:
        for a in mask.sum(axis=1):
            counter.add_combination(q, L, int(a))
    return SegmentCache(t0, t1, steps, pat, bits, chain, k_after, k_init,
                        leaf_runs, h_bar, mask, alpha, h_hat, d_hat,
                        seq.targets[steps], seq.has_target[steps], chain.state(len(chain)))


def backward_segment(model: TreeLstmModel, cache: SegmentCache, g) -> dict:
    """Gradients of ``sum_t g[t] * d_hat[t]`` w.r.t. every parameter."""
    cfg = model.config
    L, q = cfg.L, cfg.q
    nets = cfg.networks
    g = np.asarray(g, dtype=np.float64)
    grads = {k: np.zeros_like(v) for k, v in model.parameters().items()}
    grads["w_hat"][:-1] = g @ cache.h_hat
    grads["w_hat"][-1] = g.sum()
    d_hhat = g[:, None] * model.w_hat[:-1]
    alpha, h_bar = cache.alpha, cache.h_bar
    d_alpha = np.einsum("tq,tiq->ti", d_hhat, h_bar)
    d_hbar = alpha[:, :, None] * d_hhat[:, None, :]
    d_logit = alpha * (d_alpha - (alpha * d_alpha).sum(axis=1, keepdims=True))
    n = len(nets)
    wt = np.broadcast_to(model.w_tilde, (n, q + 2 * L))
    nb = _net_bits(nets, L)
    dwt = np.empty((n, q + 2 * L))
    dwt[:, :L] = d_logit.T @ cache.bits
    dwt[:, L:2 * L] = d_logit.sum(axis=0)[:, None] * nb
    dwt[:, 2 * L:] = np.einsum("ti,tiq->iq", d_logit, h_bar)
    grads["w_tilde"][:] = dwt.sum(axis=0, keepdims=True) if cfg.shared_combination else dwt
    d_hbar += d_logit[:, :, None] * wt[None, :, 2 * L:]

    K = len(cache.main)
    inj_h = np.zeros((K + 1, q))
    inj_c = np.zeros((K + 1, q))
    np.add.at(inj_h, cache.k_after, d_hbar[:, 0])
    for col, (rows, trs) in cache.leaf_runs.items():
        i = nets[col]
        p = model.leaves[i]
        gl = LstmParams(grads[f"leaf{i}.W"], grads[f"leaf{i}.R"])
        dh = d_hbar[rows, col]
        dc = np.zeros_like(dh)
        for tr in reversed(trs):
            da, dc = gate_backward(tr, dh, dc)
            add_step_grads(gl, tr, da)
            dh = da @ p.R
        np.add.at(inj_h, cache.k_init[rows], dh)
        np.add.at(inj_c, cache.k_init[rows], dc)
    gm, _, _ = chain_backward(model.main, cache.main, inj_h[1:], inj_c[1:],
                              cfg.bptt_horizon)
    grads["main.W"] += gm.W
    grads["main.R"] += gm.R
    return grads


@dataclass
class SequenceResult:
    cache: SegmentCache
    final_state: LstmState  # after every present input of the sequence
    L: int
    networks: list

    @property
    def d_hat(self):
        return self.cache.d_hat

    @property
    def steps(self):
        return self.cache.steps

    @property
    def alpha(self):
        return self.cache.alpha_full(self.L, self.networks)

    @property
    def main_states(self) -> ChainTrace:
        return self.cache.main

    def outputs(self) -> list:
        c = self.cache
        alpha = self.alpha
        outs = []
        for r, t in enumerate(c.steps):
            h_bar = {self.networks[col]: c.h_bar[r, col]
                     for col in np.flatnonzero(c.mask[r])}
            st = c.main.state(c.k_after[r])
            pattern = tuple(int(b) for b in c.bits[r])
            outs.append(StepOutput(float(c.d_hat[r]), alpha[r], c.h_hat[r], pattern,
                                   h_bar, st))
        return outs


def sequence_forward(model: TreeLstmModel, seq: MaskedSequence, counter=None) -> SequenceResult:
    """Full pass over ``seq``; the main network then consumes the trailing
    window so that the returned final state has seen every present input."""
    L = model.config.L
    if len(seq) < L + 1:
        raise ValueError(f"sequence of length {len(seq)} shorter than L+1={L + 1}")
    cache = forward_segment(model, seq, L, len(seq), model.initial_state(), counter)
    tail = len(seq) - L + np.flatnonzero(seq.present[len(seq) - L:])
    tail_run = run_chain(model.main, seq.inputs[tail], cache.final_state, counter)
    return SequenceResult(cache, tail_run.state(len(tail_run)), L, model.networks)


def sequence_backward(model: TreeLstmModel, result, dloss) -> dict:
    """``dloss[r]`` is the loss gradient w.r.t. the r-th prediction; it must
    be zero wherever the target is undefined."""
    cache = result.cache if isinstance(result, SequenceResult) else result
    return backward_segment(model, cache, dloss)


def total_loss(model: TreeLstmModel, seq: MaskedSequence) -> float:
    """Sum of 0.5 * (d - d_hat)^2 over steps with a defined target."""
    c = sequence_forward(model, seq).cache
    e = np.where(c.has_target, c.d_hat - c.targets, 0.0)
    return float(0.5 * (e ** 2).sum())


def loss_gradients(model: TreeLstmModel, seq: MaskedSequence):
    res = sequence_forward(model, seq)
    c = res.cache
    e = np.where(c.has_target, c.d_hat - c.targets, 0.0)
    return float(0.5 * (e ** 2).sum()), sequence_backward(model, res, e)


def grow_window(model: TreeLstmModel, rng=None) -> TreeLstmModel:
    """Return a model with window ``L + 1`` warm-started from ``model``.

    Prepending a 0 bit keeps a pattern's index, so leaf ``i`` of the old
    model becomes leaf ``i`` (pattern ``[0, p]``) of the new one.  Leaves
    whose first bit is 1 are fresh.  Inherited combination vectors get zeros
    in the two new pattern coordinates.
    """
    old = model.config
    L = old.L
    sel = None if old.leaf_selection is None else list(old.leaf_selection)
    cfg = replace(old, L=L + 1, leaf_selection=sel)
    rng = make_rng(cfg.seed + 1) if rng is None else rng
    q, m, var = cfg.q, cfg.m, cfg.init_variance
    leaves = {}
    for i in cfg.leaves:
        leaves[i] = model.leaves[i].copy() if i in model.leaves else LstmParams.init(rng, q, m, var)

    def pad(w):
        return np.concatenate([[0.0], w[:L], [0.0], w[L:2 * L], w[2 * L:]])

    if cfg.shared_combination:
        w_tilde = pad(model.w_tilde[0])[None, :]
    else:
        old_cols = {i: c for c, i in enumerate(old.networks)}
        rows = []
        for i in cfg.networks:
            if i in old_cols:
                rows.append(pad(model.w_tilde[old_cols[i]]))
            else:
                rows.append(gaussian_init(rng, 1, q + 2 * (L + 1), var)[0])
        w_tilde = np.array(rows)
    return TreeLstmModel(cfg, model.main.copy(), leaves, w_tilde, model.w_hat.copy())
