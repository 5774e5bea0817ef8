"""Vanilla LSTM cell (no peepholes) with a hand-derived backward step.

The four gate blocks are stacked in the order z, i, f, o.  Input weights
carry the bias as their last column, recurrent weights carry none.
All functions accept an optional leading batch axis on ``x``, ``h`` and ``c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import gaussian_init, sigmoid

GATES = ("z", "i", "f", "o")


@dataclass
class LstmParams:
    W: np.ndarray  # (4q, m+1)
    R: np.ndarray  # (4q, q)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        q4, q = self.R.shape
        if q4 != 4 * q or self.W.ndim != 2 or self.W.shape[0] != 4 * q:
            raise ValueError(
                f"LstmParams: inconsistent shapes W{self.W.shape} R{self.R.shape}"
            )

    @property
    def q(self) -> int:
        return self.R.shape[1]

    @property
    def m(self) -> int:
        return self.W.shape[1] - 1

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Views ``(W_name, R_name)`` of one gate block."""
        k = GATES.index(name)
        q = self.q
        return self.W[k * q:(k + 1) * q], self.R[k * q:(k + 1) * q]

    Wz = property(lambda self: self.gate("z")[0])
    Wi = property(lambda self: self.gate("i")[0])
    Wf = property(lambda self: self.gate("f")[0])
    Wo = property(lambda self: self.gate("o")[0])
    Rz = property(lambda self: self.gate("z")[1])
    Ri = property(lambda self: self.gate("i")[1])
    Rf = property(lambda self: self.gate("f")[1])
    Ro = property(lambda self: self.gate("o")[1])

    @classmethod
    def init(cls, rng, q: int, m: int, variance: float = 1e-2) -> "LstmParams":
        return cls(gaussian_init(rng, 4 * q, m + 1, variance),
                   gaussian_init(rng, 4 * q, q, variance))

    @classmethod
    def zeros(cls, q: int, m: int) -> "LstmParams":
        return cls(np.zeros((4 * q, m + 1)), np.zeros((4 * q, q)))

    def zeros_like(self) -> "LstmParams":
        return LstmParams.zeros(self.q, self.m)

    def copy(self) -> "LstmParams":
        return LstmParams(self.W.copy(), self.R.copy())

    def __eq__(self, other):
        return (isinstance(other, LstmParams)
                and np.array_equal(self.W, other.W)
                and np.array_equal(self.R, other.R))


@dataclass
class LstmState:
    c: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, q: int) -> "LstmState":
        return cls(np.zeros(q), np.zeros(q))

    def copy(self) -> "LstmState":
        return LstmState(self.c.copy(), self.h.copy())


@dataclass
class StepTrace:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    z: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    c: np.ndarray
    h: np.ndarray
    tanh_c: np.ndarray


def _preact(p: LstmParams, x, h):
    # shared by cell_forward and run_chain so both round identically
    return (x @ p.W[:, :-1].T + p.W[:, -1]) + h @ p.R.T


def cell_forward(p: LstmParams, x, s: LstmState, counter=None):
    """One forward step. Returns ``(new_state, trace)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.m or s.h.shape[-1] != p.q or s.c.shape != s.h.shape:
        raise ValueError(
            f"cell_forward: params (q={p.q}, m={p.m}) vs x{x.shape}, "
            f"h{s.h.shape}, c{s.c.shape}"
        )
    q = p.q
    a = _preact(p, x, s.h)
    z = np.tanh(a[..., :q])
    gates = sigmoid(a[..., q:])
    i = gates[..., :q]
    f = gates[..., q:2 * q]
    o = gates[..., 2 * q:]
    c = i * z + f * s.c
    tc = np.tanh(c)
    h = o * tc
    if counter is not None:
        counter.add_cells(q, p.m, 1 if x.ndim == 1 else x.shape[0])
    return LstmState(c, h), StepTrace(x, s.h, s.c, z, i, f, o, c, h, tc)


def gate_backward(tr: StepTrace, dh, dc):
    """Gradient w.r.t. the stacked gate pre-activations and ``c_prev``."""
    do = dh * tr.tanh_c
    dct = dc + dh * tr.o * (1.0 - tr.tanh_c ** 2)
    da = np.concatenate([
        dct * tr.i * (1.0 - tr.z ** 2),
        dct * tr.z * tr.i * (1.0 - tr.i),
        dct * tr.c_prev * tr.f * (1.0 - tr.f),
        do * tr.o * (1.0 - tr.o),
    ], axis=-1)
    return da, dct * tr.f


def cell_backward(p: LstmParams, tr: StepTrace, dh, dc):
    """Backward through one traced step.

    Returns ``(grads, dx, dh_prev, dc_prev)``; ``grads`` is an
    :class:`LstmParams` holding parameter gradients summed over any batch axis.
    """
    if tr.h.shape[-1] != p.q or tr.x.shape[-1] != p.m:
        raise ValueError(
            f"cell_backward: trace (q={tr.h.shape[-1]}, m={tr.x.shape[-1]}) "
            f"does not match params (q={p.q}, m={p.m})"
        )
    da, dc_prev = gate_backward(tr, dh, dc)
    da2 = np.atleast_2d(da)
    x2 = np.atleast_2d(tr.x)
    dW = np.empty_like(p.W)
    dW[:, :-1] = da2.T @ x2
    dW[:, -1] = da2.sum(axis=0)
    dR = da2.T @ np.atleast_2d(tr.h_prev)
    dx = da @ p.W[:, :-1]
    dh_prev = da @ p.R
    return LstmParams(dW, dR), dx, dh_prev, dc_prev


def add_step_grads(g: LstmParams, tr: StepTrace, da):
    """Accumulate parameter gradients of a traced step into ``g`` in place."""
    da2 = np.atleast_2d(da)
    g.W[:, :-1] += da2.T @ np.atleast_2d(tr.x)
    g.W[:, -1] += da2.sum(axis=0)
    g.R += da2.T @ np.atleast_2d(tr.h_prev)


@dataclass
class ChainTrace:
    """Stacked per-step caches of a sequential run, one row per step."""

    X: np.ndarray  # (K, m)
    H: np.ndarray  # (K+1, q); row 0 is the initial state
    C: np.ndarray  # (K+1, q)
    G: np.ndarray  # (K, 4q) activated gates z, i, f, o
    TC: np.ndarray  # (K, q) tanh(c)

    def __len__(self):
        return self.X.shape[0]

    def state(self, k: int) -> LstmState:
        return LstmState(self.C[k], self.H[k])


def run_chain(p: LstmParams, xs, s0: LstmState, counter=None) -> ChainTrace:
    """Feed the rows of ``xs`` through the cell one at a time.

    Row ``k`` of the returned ``H``/``C`` is the state after ``k`` inputs.
    """
    X = np.asarray(xs, dtype=np.float64).reshape(-1, p.m)
    K, q = X.shape[0], p.q
    H = np.empty((K + 1, q))
    C = np.empty((K + 1, q))
    G = np.empty((K, 4 * q))
    TC = np.empty((K, q))
    H[0] = s0.h
    C[0] = s0.c
    for k in range(K):
        a = _preact(p, X[k], H[k])
        g = G[k]
        g[:q] = np.tanh(a[:q])
        g[q:] = sigmoid(a[q:])
        C[k + 1] = g[q:2 * q] * g[:q] + g[2 * q:3 * q] * C[k]
        TC[k] = np.tanh(C[k + 1])
        H[k + 1] = g[3 * q:] * TC[k]
    if counter is not None and K:
        counter.add_cells(q, p.m, K)
    return ChainTrace(X, H, C, G, TC)


def chain_backward(p: LstmParams, tr: ChainTrace, inj_h, inj_c=None, horizon=None):
    """Backpropagate injected state gradients down a traced chain.

    ``inj_h[k]`` / ``inj_c[k]`` (shape ``(K, q)``) are gradients on the state
    after step ``k``.  Each injected gradient crosses at most ``horizon``
    steps (``None``: unlimited).

    Returns ``(grads, dh0, dc0)`` where ``dh0``/``dc0`` reach the initial state.
    """
    K = len(tr)
    q = p.q
    g = p.zeros_like()
    if K == 0:
        return g, np.zeros(q), np.zeros(q)
    inj_h = np.asarray(inj_h, dtype=np.float64)
    inj_c = np.zeros((K, q)) if inj_c is None else np.asarray(inj_c, dtype=np.float64)
    Z, I, F, O = (tr.G[:, j * q:(j + 1) * q] for j in range(4))
    TC = tr.TC
    # d(preact)/d(dct) for z, i, f and d(preact)/d(dh) for o
    fac = np.concatenate([I * (1.0 - Z ** 2), Z * I * (1.0 - I),
                          tr.C[:-1] * F * (1.0 - F), TC * O * (1.0 - O)], axis=1)
    dc_dh = O * (1.0 - TC ** 2)
    R = p.R
    DA = np.empty((K, 4 * q))
    if horizon is None or horizon >= K:
        dh = np.zeros(q)
        dc = np.zeros(q)
        for k in range(K - 1, -1, -1):
            dh = dh + inj_h[k]
            dct = dc + inj_c[k] + dh * dc_dh[k]
            da = np.concatenate((dct, dct, dct, dh)) * fac[k]
            DA[k] = da
            dc = dct * F[k]
            dh = da @ R
        dh0, dc0 = dh, dc
    else:
        if horizon < 1:
            raise ValueError(f"chain_backward: horizon must be >= 1, got {horizon}")
        # row a of the buffers has already crossed a steps
        bh = np.zeros((horizon, q))
        bc = np.zeros((horizon, q))
        for k in range(K - 1, -1, -1):
            bh[0] += inj_h[k]
            bc[0] += inj_c[k]
            dct = bc + bh * dc_dh[k]
            da = np.concatenate((dct, dct, dct, bh), axis=1) * fac[k]
            DA[k] = da.sum(axis=0)
            dc_prev = dct * F[k]
            dh_prev = da @ R
            bh[1:] = dh_prev[:-1]
            bc[1:] = dc_prev[:-1]
            bh[0] = 0.0
            bc[0] = 0.0
        dh0, dc0 = dh_prev.sum(axis=0), dc_prev.sum(axis=0)
    g.W[:, :-1] = DA.T @ tr.X
    g.W[:, -1] = DA.sum(axis=0)
    g.R[:] = DA.T @ tr.H[:-1]
    return g, dh0, dc0
