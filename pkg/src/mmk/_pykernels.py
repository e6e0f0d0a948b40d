"""Numpy implementations of the hot kernels.

These are the fallback backend when the compiled extension is not
available, and the reference the native backend is tested against. All
functions take C-contiguous float64 input (the dispatch layer coerces)
and are deterministic: accumulation orders are fixed.
"""

from __future__ import annotations

import numpy as np

PATCH = 16
HOG_BINS = 36
LBP_BINS = 59

_ROW_CHUNK = 8192


def _build_lbp_uniform_map() -> np.ndarray:
    """Map each of the 256 byte patterns to its histogram bin.

    Patterns with at most two circular 0/1 transitions are "uniform" and
    get bins 0..57 in ascending pattern order; everything else shares the
    final bin 58.
    """
    table = np.full(256, LBP_BINS - 1, dtype=np.int64)
    next_bin = 0
    for pattern in range(256):
        rotated = ((pattern << 1) | (pattern >> 7)) & 0xFF
        transitions = bin(pattern ^ rotated).count("1")
        if transitions <= 2:
            table[pattern] = next_bin
            next_bin += 1
    assert next_bin == LBP_BINS - 1
    return table


LBP_UNIFORM_MAP = _build_lbp_uniform_map()

# Clockwise 8-neighborhood starting at the top-left pixel; the first
# neighbor holds the most significant bit.
LBP_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1))


def rbf_values(x: np.ndarray, z: np.ndarray, gamma: float) -> np.ndarray:
    """(m, D) matrix of exp(-gamma * ||x_i - z_j||^2)."""
    xx = np.einsum("ij,ij->i", x, x)
    zz = np.einsum("ij,ij->i", z, z)
    d2 = xx[:, None] + zz[None, :] - 2.0 * (x @ z.T)
    np.maximum(d2, 0.0, out=d2)
    d2 *= -gamma
    return np.exp(d2, out=d2)


def nearest_center(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the euclidean-nearest center per row, ties to the lowest index.

    Returns (indices, squared distances). Rows are processed in chunks to
    bound the size of the distance block.
    """
    m = x.shape[0]
    idx = np.empty(m, dtype=np.int64)
    dmin = np.empty(m, dtype=np.float64)
    cc = np.einsum("ij,ij->i", centers, centers)
    for start in range(0, m, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, m)
        block = x[start:stop]
        d2 = block @ centers.T
        d2 *= -2.0
        d2 += cc[None, :]
        d2 += np.einsum("ij,ij->i", block, block)[:, None]
        np.maximum(d2, 0.0, out=d2)
        best = np.argmin(d2, axis=1)
        idx[start:stop] = best
        dmin[start:stop] = d2[np.arange(stop - start), best]
    return idx, dmin


def pool_sums(values: np.ndarray, ids: np.ndarray, n_groups: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-group column sums and sizes for group-labelled rows.

    Rows within a group accumulate in their original order (stable sort +
    reduceat), so results do not depend on scheduling.
    """
    n_cols = values.shape[1]
    sums = np.zeros((n_groups, n_cols), dtype=np.float64)
    counts = np.bincount(ids, minlength=n_groups).astype(np.int64)
    if values.shape[0] == 0:
        return sums, counts
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    sums[sorted_ids[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return sums, counts


def lbp_histogram(patch: np.ndarray) -> np.ndarray:
    """59-bin uniform-pattern histogram over the 14x14 patch interior.

    Each interior pixel votes once: its byte pattern sets bit (7 - k) when
    the k-th clockwise neighbor (starting top-left) is >= the center.
    """
    inner = patch[1:PATCH - 1, 1:PATCH - 1]
    codes = np.zeros(inner.shape, dtype=np.int64)
    for k, (dy, dx) in enumerate(LBP_OFFSETS):
        neighbor = patch[1 + dy:PATCH - 1 + dy, 1 + dx:PATCH - 1 + dx]
        codes |= (neighbor >= inner).astype(np.int64) << (7 - k)
    return np.bincount(LBP_UNIFORM_MAP[codes].ravel(), minlength=LBP_BINS)


def hog_histogram(patch: np.ndarray) -> np.ndarray:
    """36-bin gradient-orientation histogram over the 14x14 patch interior.

    Gradients come from central differences; each pixel's magnitude is
    split linearly between the two bin centers (at 5, 15, ..., 355
    degrees) bracketing its orientation, with circular wrap-around.
    """
    gx = 0.5 * (patch[1:-1, 2:] - patch[1:-1, :-2])
    gy = 0.5 * (patch[2:, 1:-1] - patch[:-2, 1:-1])
    mag = np.hypot(gx, gy).ravel()
    theta = np.mod(np.arctan2(gy, gx), 2.0 * np.pi).ravel()
    pos = theta * (HOG_BINS / (2.0 * np.pi)) - 0.5
    low = np.floor(pos)
    frac = pos - low
    low_bin = low.astype(np.int64) % HOG_BINS
    high_bin = (low_bin + 1) % HOG_BINS
    hist = np.zeros(HOG_BINS, dtype=np.float64)
    np.add.at(hist, low_bin, mag * (1.0 - frac))
    np.add.at(hist, high_bin, mag * frac)
    return hist
