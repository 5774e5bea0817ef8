"""Presence patterns over a length-L window.

A pattern is a tuple of L bits ``(p_1, ..., p_L)``: ``p_1`` is the oldest
slot of the window and the most significant bit of the pattern's index,
``p_L`` the most recent slot.  ``"101"`` is the string form of index 5.
"""

from __future__ import annotations

from typing import Sequence

Pattern = tuple[int, ...]


def _check(p: Sequence[int]) -> Pattern:
    p = tuple(int(b) for b in p)
    if not p or any(b not in (0, 1) for b in p):
        raise ValueError(f"invalid presence pattern {p!r}")
    return p


def index_of(p: Sequence[int]) -> int:
    value = 0
    for b in _check(p):
        value = (value << 1) | b
    return value


def pattern_of_index(i: int, L: int) -> Pattern:
    if not 0 <= i < (1 << L):
        raise ValueError(f"index {i} out of range for L={L}")
    return tuple((i >> (L - 1 - j)) & 1 for j in range(L))


def to_string(p: Sequence[int]) -> str:
    return "".join(str(b) for b in _check(p))


def from_string(s: str) -> Pattern:
    if not s or set(s) - {"0", "1"}:
        raise ValueError(f"invalid pattern string {s!r}")
    return tuple(int(ch) for ch in s)


def is_strict_subpattern(q: Sequence[int], p: Sequence[int]) -> bool:
    q, p = _check(q), _check(p)
    if len(q) != len(p):
        raise ValueError(f"pattern lengths differ: {len(q)} vs {len(p)}")
    return q != p and all(a <= b for a, b in zip(q, p))


def submasks(mask: int) -> list[int]:
    """All sub-masks of ``mask`` in ascending order, 0 and ``mask`` included."""
    out = []
    s = mask
    while True:
        out.append(s)
        if s == 0:
            break
        s = (s - 1) & mask
    out.reverse()
    return out


def active_set(p: Sequence[int]) -> list[int]:
    """Indices of ``p`` and of all its strict subpatterns, ascending."""
    return submasks(index_of(p))


def leaf_positions(p: Sequence[int]) -> list[int]:
    """Window offsets (0 = oldest slot) of the set bits of ``p``."""
    return [j for j, b in enumerate(_check(p)) if b]


def leaf_positions_of_index(i: int, L: int) -> list[int]:
    return [j for j in range(L) if (i >> (L - 1 - j)) & 1]
