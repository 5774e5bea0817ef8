"""Lossless JSON checkpoints.

Every float is stored with :meth:`float.hex`, so a save/load round trip is
bit-exact.  Matrices are row-major nested lists.
"""

from __future__ import annotations

import json

import numpy as np

from .baselines import BaselineModel
from .data import ScalerParams
from .model import TreeLstmConfig, TreeLstmModel

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def _enc(a: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 0:
        return float(a).hex()
    return [_enc(row) for row in a]


def _dec(obj, shape: tuple, name: str) -> np.ndarray:
    try:
        a = np.array(_dec_raw(obj), dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"tensor {name!r}: {exc}") from None
    if a.shape != shape:
        raise CheckpointShapeError(f"tensor {name!r} has shape {a.shape}, expected {shape}")
    return a


def _dec_raw(obj):
    if isinstance(obj, list):
        return [_dec_raw(v) for v in obj]
    if isinstance(obj, str):
        return float.fromhex(obj)
    raise TypeError(f"unexpected value {obj!r}")


def _header(model) -> dict:
    if isinstance(model, TreeLstmModel):
        c = model.config
        return {"format_version": FORMAT_VERSION, "kind": "tree", "L": c.L, "q": c.q, "m": c.m,
                "leaf_indices": c.leaves, "shared_combination": c.shared_combination,
                "init_variance": c.init_variance, "seed": c.seed,
                "bptt_horizon": c.bptt_horizon, "leaf_init": c.leaf_init}
    return {"format_version": FORMAT_VERSION, "kind": model.kind, "q": model.q, "m": model.m,
            "init_variance": model.init_variance, "seed": model.seed,
            "bptt_horizon": model.bptt_horizon, "score_from": model.score_from}


def dumps(model, scaler: ScalerParams | None = None) -> str:
    doc = {"header": _header(model),
           "tensors": {k: _enc(v) for k, v in model.parameters().items()}}
    if scaler is not None:
        doc["scaler"] = {"lo": _enc(scaler.lo), "hi": _enc(scaler.hi)}
    return json.dumps(doc, indent=1) + "\n"


def save(model, path, scaler: ScalerParams | None = None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(model, scaler))


def loads(text: str):
    """Returns ``(model, scaler_or_None)``."""
    try:
        doc = json.loads(text)
        head = doc["header"]
        tensors = doc["tensors"]
        version = head["format_version"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"not a checkpoint: {exc}") from None
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format {version!r} is not supported (expected {FORMAT_VERSION})"
        )
    try:
        kind = head["kind"]
        q, m = int(head["q"]), int(head["m"])
        if kind == "tree":
            cfg = TreeLstmConfig(L=int(head["L"]), q=q, m=m,
                                 leaf_selection=list(head["leaf_indices"]),
                                 shared_combination=bool(head["shared_combination"]),
                                 bptt_horizon=int(head["bptt_horizon"]),
                                 leaf_init=head["leaf_init"],
                                 init_variance=float(head["init_variance"]),
                                 seed=int(head["seed"]))
            model = TreeLstmModel.init(cfg)
        elif kind in ("zi", "fi"):
            model = BaselineModel.init(kind, q, m, int(head["seed"]),
                                       float(head["init_variance"]),
                                       int(head["bptt_horizon"]), int(head["score_from"]))
        else:
            raise CorruptCheckpointError(f"unknown model kind {kind!r}")
    except (KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"incomplete header: {exc}") from None
    except ValueError as exc:
        raise CorruptCheckpointError(f"invalid header: {exc}") from None
    params = model.parameters()
    if set(tensors) != set(params):
        raise CheckpointShapeError(
            f"tensor names {sorted(tensors)} do not match the model's {sorted(params)}"
        )
    for name, dest in params.items():
        dest[...] = _dec(tensors[name], dest.shape, name)
    scaler = None
    if "scaler" in doc:
        s = doc["scaler"]
        scaler = ScalerParams(_dec(s["lo"], (m,), "scaler.lo"), _dec(s["hi"], (m,), "scaler.hi"))
    return model, scaler


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(text)

