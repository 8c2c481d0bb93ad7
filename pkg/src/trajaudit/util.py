"""Shared helpers: keyed RNG streams and row label-encoding."""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_ints(key) -> list[int]:
    out = []
    for part in key:
        if isinstance(part, str):
            out.append(zlib.crc32(part.encode("utf-8")))
        else:
            out.append(int(part) & 0xFFFFFFFF)
    return out


def derive_rng(seed: int, *key) -> np.random.Generator:
    """Generator for an independent substream keyed by (seed, *key).

    Streams depend only on the key, never on call order, so parallel
    schedules reproduce serial results bit-for-bit.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF] + _key_to_ints(key)))


def derive_seed(seed: int, *key) -> int:
    """Stable integer seed for the (seed, *key) substream."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF] + _key_to_ints(key))
    return int(ss.generate_state(1)[0])


def encode_rows(matrix: np.ndarray) -> tuple[np.ndarray, int]:
    """Label-encode the rows of a 2-D array.

    Returns (codes, n_distinct) where equal rows share a code in
    [0, n_distinct).  Codes are assigned in lexicographic row order, so the
    encoding is deterministic.
    """
    matrix = np.ascontiguousarray(matrix)
    if matrix.ndim != 2:
        raise ValueError("encode_rows expects a 2-D array")
    void = matrix.view([("", matrix.dtype)] * matrix.shape[1]).ravel()
    _, codes = np.unique(void, return_inverse=True)
    return codes.astype(np.int64), int(codes.max()) + 1 if codes.size else 0


def combine_codes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Joint label codes for two aligned code arrays, recompacted to [0, m)."""
    if a.shape != b.shape:
        raise ValueError("code arrays must have equal length")
    hi = int(b.max()) + 1 if b.size else 1
    joint = a * hi + b
    _, codes = np.unique(joint, return_inverse=True)
    return codes.astype(np.int64)
