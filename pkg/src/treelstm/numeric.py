"""Small numeric kernels shared by the cell, the tree model and the tests."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; numpy keeps its stream stable across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


def affine(W: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Return ``W @ [x; 1]`` where the last column of ``W`` is the bias.

    ``x`` may carry leading batch axes, in which case the map is applied
    row-wise and the result has shape ``(..., rows)``.
    """
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or W.shape[1] != x.shape[-1] + 1:
        raise ValueError(
            f"affine: weight shape {W.shape} incompatible with input shape {x.shape}"
        )
    return x @ W[:, :-1].T + W[:, -1]


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def tanh(v):
    return np.tanh(v)


def masked_softmax(logits: np.ndarray, active: Iterable[int]) -> np.ndarray:
    """Softmax over ``active`` slots; all other slots are exactly zero."""
    logits = np.asarray(logits, dtype=np.float64)
    idx = np.asarray(sorted(set(int(i) for i in active)), dtype=np.intp)
    if idx.size == 0:
        raise ValueError("masked_softmax: active set is empty")
    if idx[0] < 0 or idx[-1] >= logits.shape[-1]:
        raise ValueError(
            f"masked_softmax: active indices {idx.tolist()} out of range for "
            f"{logits.shape[-1]} slots"
        )
    sel = logits[idx]
    e = np.exp(sel - sel.max())
    out = np.zeros_like(logits)
    out[idx] = e / e.sum()
    return out


def masked_softmax_rows(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise variant of :func:`masked_softmax` with a boolean mask.

    Every row of ``mask`` must have at least one ``True`` entry.
    """
    if not np.all(mask.any(axis=-1)):
        raise ValueError("masked_softmax_rows: a row has an empty active set")
    shifted = np.where(mask, logits, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def gaussian_init(
    rng: np.random.Generator, rows: int, cols: int, variance: float
) -> np.ndarray:
    if not variance > 0:
        raise ValueError(f"gaussian_init: variance must be positive, got {variance}")
    return rng.normal(0.0, np.sqrt(variance), size=(rows, cols))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], theta, h: float | Callable[[float], float] = 1e-6
) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``theta``.

    ``h`` is either a fixed step or a callable mapping the coordinate value
    to a step, e.g. ``lambda t: 1e-6 * max(1.0, abs(t))``.
    """
    theta = np.array(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    grad = np.zeros_like(flat)
    for j in range(flat.size):
        orig = flat[j]
        step = h(orig) if callable(h) else h
        flat[j] = orig + step
        fp = f(theta)
        flat[j] = orig - step
        fm = f(theta)
        flat[j] = orig
        grad[j] = (fp - fm) / (2.0 * step)
    return grad.reshape(theta.shape)
