"""Longest-common-subsequence length with a compiled fast path.

The compiled kernel (litkg._lcs, built from Cython) is selected at import
when available; otherwise the pure-Python implementation of the same
two-row dynamic program is used. Both operate on integer-encoded
sequences so arbitrary hashable tokens are supported.
"""
from __future__ import annotations

from array import array
from typing import Hashable, Sequence

try:
    from litkg import _lcs as _native
except ImportError:
    _native = None

BACKEND = "compiled" if _native is not None else "python"


def _encode(a: Sequence[Hashable], b: Sequence[Hashable]) -> tuple[array, array]:
    ids: dict[Hashable, int] = {}
    enc_a = array("i", (ids.setdefault(tok, len(ids)) for tok in a))
    enc_b = array("i", (ids.setdefault(tok, len(ids)) for tok in b))
    return enc_a, enc_b


def lcs_length_python(a: Sequence[int], b: Sequence[int]) -> int:
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    prev = [0] * (m + 1)
    curr = [0] * (m + 1)
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                curr[j + 1] = prev[j] + 1
            elif prev[j + 1] >= curr[j]:
                curr[j + 1] = prev[j + 1]
            else:
                curr[j + 1] = curr[j]
        prev, curr = curr, prev
    return prev[m]


def lcs_length_native(a: Sequence[int], b: Sequence[int]) -> int:
    if _native is None:
        raise RuntimeError("compiled LCS kernel is not available")
    return _native.lcs_length(array("i", a), array("i", b))


def lcs_length(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """LCS length between two token sequences."""
    if not a or not b:
        return 0
    enc_a, enc_b = _encode(a, b)
    if _native is not None:
        return _native.lcs_length(enc_a, enc_b)
    return lcs_length_python(enc_a, enc_b)
