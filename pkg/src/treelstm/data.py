"""Masked sequences on a uniform grid, CSV I/O, masking, splitting, scaling."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .numeric import make_rng


class DataError(Exception):
    """Base class for data-loading problems."""


class RaggedRowError(DataError):
    pass


class NonNumericCellError(DataError):
    pass


class UnreadableFileError(DataError):
    pass


@dataclass
class MaskedSequence:
    """Grid of optional input vectors and optional scalar targets.

    Payloads of missing slots are placeholders and must never be read by a
    model; they are kept so that a sequence can be perturbed in tests.
    """

    inputs: np.ndarray  # (N, m)
    present: np.ndarray  # (N,) bool
    targets: np.ndarray = None  # (N,)
    has_target: np.ndarray = None  # (N,) bool

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.present = np.asarray(self.present, dtype=bool)
        n = self.inputs.shape[0]
        if self.targets is None:
            self.targets = np.zeros(n)
            self.has_target = np.zeros(n, dtype=bool)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.has_target is None:
            self.has_target = np.ones(n, dtype=bool)
        self.has_target = np.asarray(self.has_target, dtype=bool)
        if not (self.present.shape == (n,) == self.targets.shape == self.has_target.shape):
            raise ValueError("MaskedSequence: field lengths disagree")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_missing(self) -> int:
        return int((~self.present).sum())

    def arrival_gaps(self) -> np.ndarray:
        """Grid distance between consecutive present inputs."""
        return np.diff(np.flatnonzero(self.present))

    def slice(self, start: int, stop: int) -> "MaskedSequence":
        return MaskedSequence(self.inputs[start:stop].copy(), self.present[start:stop].copy(),
                              self.targets[start:stop].copy(), self.has_target[start:stop].copy())

    def copy(self) -> "MaskedSequence":
        return self.slice(0, len(self))

    @classmethod
    def complete(cls, values, targets=None) -> "MaskedSequence":
        values = np.asarray(values, dtype=np.float64)
        n = values.shape[0]
        if targets is None:
            return cls(values, np.ones(n, dtype=bool))
        targets = np.asarray(targets, dtype=np.float64)
        return cls(values, np.ones(n, dtype=bool), targets, np.ones(n, dtype=bool))


@dataclass
class CsvSchema:
    features: list = field(default_factory=lambda: [0])  # names or column indices
    target: object = None
    header: bool | None = None  # None: auto-detect


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise NonNumericCellError(f"row {row}, column {col}: non-numeric cell {cell!r}") from None
    if not math.isfinite(v):
        raise NonNumericCellError(f"row {row}, column {col}: non-finite value {cell!r}")
    return v


def _looks_numeric(row) -> bool:
    for cell in row:
        if cell.strip() == "":
            continue
        try:
            float(cell)
        except ValueError:
            return False
    return True


def load_csv(path, schema: CsvSchema | None = None) -> MaskedSequence:
    """One grid slot per row; an empty feature cell makes the whole slot missing."""
    schema = schema or CsvSchema()
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    header = schema.header
    if header is None:
        header = bool(rows) and not _looks_numeric(rows[0])
    names = rows[0] if header else None
    body = rows[1:] if header else rows
    first_row = 2 if header else 1

    def col(key):
        if isinstance(key, int):
            return key
        if names is None or key not in names:
            raise DataError(f"column {key!r} not found in {path}")
        return names.index(key)

    fcols = [col(k) for k in schema.features]
    tcol = None if schema.target is None else col(schema.target)
    width = len(names) if names is not None else (len(body[0]) if body else 0)
    n = len(body)
    inputs = np.zeros((n, len(fcols)))
    present = np.ones(n, dtype=bool)
    targets = np.zeros(n)
    has_target = np.zeros(n, dtype=bool)
    for j, row in enumerate(body):
        rownum = first_row + j
        if not row:  # a blank line is a slot with every cell empty
            row = [""] * width
        if len(row) != width:
            raise RaggedRowError(f"row {rownum}: expected {width} cells, found {len(row)}")
        cells = [row[c].strip() for c in fcols]
        if any(c == "" for c in cells):
            present[j] = False
        else:
            inputs[j] = [_parse_float(c, rownum, fc) for c, fc in zip(cells, fcols)]
        if tcol is not None and row[tcol].strip() != "":
            targets[j] = _parse_float(row[tcol].strip(), rownum, tcol)
            has_target[j] = True
    return MaskedSequence(inputs, present, targets, has_target)


def save_csv(seq: MaskedSequence, path, with_target: bool = False, header: bool = True):
    """Write ``seq`` in the same dialect :func:`load_csv` reads."""
    m = seq.m
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{k}" for k in range(m)] + (["target"] if with_target else []))
        for j in range(len(seq)):
            row = [repr(float(v)) for v in seq.inputs[j]] if seq.present[j] else [""] * m
            if with_target:
                row.append(repr(float(seq.targets[j])) if seq.has_target[j] else "")
            w.writerow(row)


def inject_missingness(seq: MaskedSequence, ratio: float, seed: int) -> MaskedSequence:
    """Delete exactly ``round(ratio * N)`` slots chosen uniformly at random.

    Rounding is half-up.  Slot payloads are kept as placeholders.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"missingness ratio must be in [0, 1], got {ratio}")
    n = len(seq)
    k = int(math.floor(ratio * n + 0.5))
    out = seq.copy()
    if k:
        drop = make_rng(seed).choice(n, size=k, replace=False)
        out.present[drop] = False
    return out


def split_60_40(seq: MaskedSequence):
    n = len(seq)
    if n < 5:
        raise ValueError(f"sequence too short to split: N={n}")
    cut = (6 * n) // 10
    return seq.slice(0, cut), seq.slice(cut, n)


def make_next_value_targets(seq: MaskedSequence) -> MaskedSequence:
    """Target of slot j is the first feature of slot j+1, when that slot exists."""
    n = len(seq)
    targets = np.zeros(n)
    has = np.zeros(n, dtype=bool)
    if n > 1:
        targets[:-1] = seq.inputs[1:, 0]
        has[:-1] = seq.present[1:]
    targets[~has] = 0.0
    return MaskedSequence(seq.inputs.copy(), seq.present.copy(), targets, has)


@dataclass
class ScalerParams:
    lo: np.ndarray
    hi: np.ndarray

    def forward(self, v, feature=slice(None)):
        lo, hi = self.lo[feature], self.hi[feature]
        span = hi - lo
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, 2.0 * (v - lo) / safe - 1.0, 0.0)

    def inverse(self, v, feature=slice(None)):
        lo, hi = self.lo[feature], self.hi[feature]
        return lo + (np.asarray(v) + 1.0) * (hi - lo) / 2.0


def fit_scaler(train: MaskedSequence) -> ScalerParams:
    vals = train.inputs[train.present]
    if vals.shape[0] == 0:
        raise ValueError("fit_scaler: training data has no present inputs")
    return ScalerParams(vals.min(axis=0), vals.max(axis=0))


def apply_scaler(seq: MaskedSequence, sp: ScalerParams, scale_targets: bool = True) -> MaskedSequence:
    """Map features onto [-1, 1]; targets share the first feature's map."""
    inputs = np.where(seq.present[:, None], sp.forward(seq.inputs), 0.0)
    targets = seq.targets
    if scale_targets:
        targets = np.where(seq.has_target, sp.forward(seq.targets, 0), 0.0)
    return MaskedSequence(inputs, seq.present.copy(), targets.copy(), seq.has_target.copy())


SINE_PERIOD = 40


def synth_sine(n: int, noise_std: float, seed: int) -> MaskedSequence:
    if n < 1:
        raise ValueError(f"synth_sine: N must be >= 1, got {n}")
    if noise_std < 0:
        raise ValueError(f"synth_sine: negative noise_std {noise_std}")
    j = np.arange(n)
    x = np.sin(2.0 * np.pi * j / SINE_PERIOD)
    if noise_std > 0:
        x = x + make_rng(seed).normal(0.0, noise_std, size=n)
    return MaskedSequence.complete(x[:, None])
