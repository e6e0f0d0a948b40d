"""Backend dispatch for the hot kernels.

Two interchangeable implementations exist: a compiled extension
(``mmk._native``) and a numpy fallback (``mmk._pykernels``). The native
backend is preferred when it imported successfully; set ``MMK_BACKEND``
to ``native`` or ``numpy`` to force one. ``benchmarks/`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

PATCH = _pykernels.PATCH
HOG_BINS = _pykernels.HOG_BINS
LBP_BINS = _pykernels.LBP_BINS

BACKENDS: dict[str, object] = {"numpy": _pykernels}

try:
    from . import _native
except ImportError:
    _native = None
else:
    BACKENDS["native"] = _native


def _initial_backend() -> str:
    requested = os.environ.get("MMK_BACKEND", "").strip().lower()
    if not requested:
        return "native" if "native" in BACKENDS else "numpy"
    if requested not in BACKENDS:
        raise ValueError(
            f"MMK_BACKEND={requested!r} is not available; "
            f"choose from {sorted(BACKENDS)}"
        )
    return requested


_active_name = _initial_backend()
_active = BACKENDS[_active_name]


def get_backend() -> str:
    """Name of the backend currently serving kernel calls."""
    return _active_name


def set_backend(name: str) -> None:
    """Switch the active backend; raises if the name is not available."""
    global _active_name, _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}")
    _active_name = name
    _active = BACKENDS[name]


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(BACKENDS))


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {a.shape}")
    return a


def rbf_values(x, z, gamma: float) -> np.ndarray:
    """(m, D) matrix of exp(-gamma * ||x_i - z_j||^2)."""
    x = _as_matrix(x, "x")
    z = _as_matrix(z, "z")
    if x.shape[1] != z.shape[1]:
        raise ValueError(
            f"dimension mismatch: vectors have {x.shape[1]} components, "
            f"centers have {z.shape[1]}"
        )
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    return _active.rbf_values(x, z, float(gamma))


def nearest_center(x, centers) -> tuple[np.ndarray, np.ndarray]:
    """Per row: index of the nearest center (ties to lowest index) and its
    squared distance."""
    x = _as_matrix(x, "x")
    centers = _as_matrix(centers, "centers")
    if x.shape[1] != centers.shape[1]:
        raise ValueError(
            f"dimension mismatch: vectors have {x.shape[1]} components, "
            f"centers have {centers.shape[1]}"
        )
    return _active.nearest_center(x, centers)


def pool_sums(values, ids, n_groups: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-group column sums and group sizes for group-labelled rows."""
    values = _as_matrix(values, "values")
    ids = np.ascontiguousarray(ids, dtype=np.int64)
    if ids.shape != (values.shape[0],):
        raise ValueError("ids must be one id per row of values")
    if ids.size and (ids.min() < 0 or ids.max() >= n_groups):
        raise ValueError("group ids out of range")
    return _active.pool_sums(values, ids, n_groups)


def _as_patch(patch) -> np.ndarray:
    patch = np.ascontiguousarray(patch, dtype=np.float64)
    if patch.shape != (PATCH, PATCH):
        raise ValueError(f"patch must be {PATCH}x{PATCH}, got shape {patch.shape}")
    if not np.all(np.isfinite(patch)):
        raise ValueError("patch contains non-finite values")
    return patch


def lbp_histogram(patch) -> np.ndarray:
    """59-bin uniform-pattern histogram of a 16x16 patch (int64 counts)."""
    return _active.lbp_histogram(_as_patch(patch))


def hog_histogram(patch) -> np.ndarray:
    """36-bin soft-binned gradient-orientation histogram of a 16x16 patch."""
    return _active.hog_histogram(_as_patch(patch))
