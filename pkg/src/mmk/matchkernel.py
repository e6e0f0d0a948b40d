"""Kernel feature maps over descriptor sets, and their exact-sum oracle.

A base RBF kernel between descriptors is approximated on a finite basis Z
(the codebook centers): ``k(x, y) = k_Z(x)^T (K_ZZ + lam*I)^{-1} k_Z(y)``
where ``k_Z(x)_i = exp(-gamma ||x - z_i||^2)``. Factoring the inverse as
``G^T G`` turns each descriptor into an explicit vector ``phi(x) = G k_Z(x)``,
so a whole video becomes the concatenation of weighted per-voxel means of
``phi`` and the multiresolution kernel between two videos is a plain dot
product. ``mmk_exact`` evaluates the same kernel by direct double
summation over descriptor pairs, providing an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import kernels
from .codebook import Codebook, quantize, quantize_all
from .core import PyramidConfig, VideoDescriptorSet, pyramid_voxel_count, voxel_ids
from .errors import NumericalError

# Entrywise bound enforced on ||G^T G (K_ZZ + lam I) - I|| at construction.
WHITENING_TOL = 1e-6


def rbf(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    """Gaussian similarity exp(-gamma * ||x - y||^2), in (0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    diff = x - y
    return float(np.exp(-gamma * np.dot(diff, diff)))


def median_gamma(vectors: np.ndarray, *, seed: int = 0, max_points: int = 1000) -> float:
    """Bandwidth from the median heuristic: 1 / (2 * median_distance^2).

    The median pairwise euclidean distance is taken over a seeded uniform
    subsample of at most ``max_points`` vectors.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise ValueError("need at least two vectors to estimate a bandwidth")
    if vectors.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        keep = rng.choice(vectors.shape[0], size=max_points, replace=False)
        keep.sort()
        vectors = vectors[keep]
    median = float(np.median(pdist(vectors)))
    if median <= 0.0:
        raise NumericalError("median pairwise distance is zero; bandwidth undefined")
    return 1.0 / (2.0 * median * median)


@dataclass(frozen=True)
class KernelBasis:
    """Codebook centers with the Gram matrix and whitening factor.

    ``whitener`` is a matrix G with ``G^T G ~= (K_ZZ + lam*I)^{-1}``; the
    constructor enforces the reconstruction bound entrywise.
    """

    codebook: Codebook
    gamma: float
    lam: float
    kzz: np.ndarray       # (D, D), symmetric, unit diagonal
    whitener: np.ndarray  # (D, D)

    @property
    def size(self) -> int:
        return self.codebook.size

    @property
    def dim(self) -> int:
        return self.codebook.dim


def build_kernel_basis(cb: Codebook, gamma: float, lam: float | None = None) -> KernelBasis:
    """Construct the Gram matrix and its whitening factor for a codebook.

    ``lam`` defaults to ``1e-8 * trace(K_ZZ) / D`` to keep the regularized
    Gram invertible. The whitener comes from a symmetric eigendecomposition
    with eigenvalues floored away from zero; a reconstruction residual
    above WHITENING_TOL raises :class:`NumericalError`.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    kzz = kernels.rbf_values(cb.centers, cb.centers, gamma)
    kzz = 0.5 * (kzz + kzz.T)
    np.fill_diagonal(kzz, 1.0)
    d = cb.size
    if lam is None:
        lam = 1e-8 * float(np.trace(kzz)) / d
    elif lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")

    try:
        eigvals, eigvecs = np.linalg.eigh(kzz + lam * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if not (np.all(np.isfinite(eigvals)) and np.all(np.isfinite(eigvecs))):
        raise NumericalError("eigendecomposition produced non-finite values")

    floor = max(float(eigvals.max()) * d * np.finfo(np.float64).eps, lam)
    whitener = (eigvecs / np.sqrt(np.maximum(eigvals, floor))).T

    residual = whitener.T @ whitener @ (kzz + lam * np.eye(d)) - np.eye(d)
    worst = float(np.abs(residual).max())
    if worst > WHITENING_TOL:
        raise NumericalError(
            f"whitening residual {worst:.3e} exceeds {WHITENING_TOL:.0e}; "
            "the basis is too ill-conditioned, increase lam"
        )
    return KernelBasis(codebook=cb, gamma=gamma, lam=float(lam), kzz=kzz, whitener=whitener)


def basis_responses(vectors: np.ndarray, basis: KernelBasis) -> np.ndarray:
    """(m, D) matrix of base-kernel responses k_Z against the basis centers."""
    return kernels.rbf_values(vectors, basis.codebook.centers, basis.gamma)


def phi(x: np.ndarray, basis: KernelBasis) -> np.ndarray:
    """Feature map of one descriptor: G k_Z(x), a D-vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (basis.dim,):
        raise ValueError(f"descriptor has shape {x.shape}, basis expects ({basis.dim},)")
    return basis.whitener @ basis_responses(x[None, :], basis)[0]


def voxel_feature(vectors: np.ndarray, basis: KernelBasis) -> np.ndarray:
    """Mean of phi over a group of descriptors; an empty group gives zeros."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.size == 0:
        return np.zeros(basis.size)
    if vectors.ndim != 2 or vectors.shape[1] != basis.dim:
        raise ValueError(
            f"group has shape {vectors.shape}, basis expects (n, {basis.dim})"
        )
    return basis.whitener @ basis_responses(vectors, basis).mean(axis=0)


@dataclass(frozen=True)
class VideoFeatureMap:
    """Concatenated per-voxel features of one video.

    The vector stacks, for level i = 1..L and voxel j = 0..i^3-1 in order,
    the level-weighted mean feature of the descriptors in that voxel; its
    length is D * (L*(L+1)/2)^2.
    """

    values: np.ndarray
    levels: int
    basis_size: int
    weights: tuple[float, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        expected = self.basis_size * pyramid_voxel_count(self.levels)
        if values.shape != (expected,):
            raise ValueError(
                f"feature map has length {values.shape}, expected ({expected},)"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("feature map contains non-finite values")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]


def video_feature_map(video: VideoDescriptorSet, basis: KernelBasis,
                      pcfg: PyramidConfig) -> VideoFeatureMap:
    """Explicit multiresolution feature map of a video.

    Per level, base-kernel responses are pooled into per-voxel means,
    whitened, and scaled by the level weight; dot products of two such
    maps reproduce :func:`mmk_exact` up to floating-point error.
    """
    if len(video) and video.descriptor_dim != basis.dim:
        raise ValueError(
            f"descriptor dimension {video.descriptor_dim} does not match "
            f"basis dimension {basis.dim}"
        )
    responses = basis_responses(video.vectors, basis) if len(video) else None
    locs = video.locations
    blocks = []
    for level in range(1, pcfg.levels + 1):
        n_vox = level**3
        if responses is None:
            blocks.append(np.zeros((n_vox, basis.size)))
            continue
        ids = voxel_ids(locs, level)
        sums, counts = kernels.pool_sums(responses, ids, n_vox)
        means = np.where(counts[:, None] > 0, sums / np.maximum(counts[:, None], 1), 0.0)
        blocks.append(pcfg.weights[level - 1] * (means @ basis.whitener.T))
    return VideoFeatureMap(
        values=np.concatenate([b.ravel() for b in blocks]),
        levels=pcfg.levels,
        basis_size=basis.size,
        weights=pcfg.weights,
    )


def mmk_exact(x: VideoDescriptorSet, y: VideoDescriptorSet, basis: KernelBasis,
              pcfg: PyramidConfig) -> float:
    """Multiresolution match kernel by direct summation over descriptor pairs.

    For each level i and voxel j, the base-kernel values between all
    cross-video descriptor pairs inside the voxel are averaged and scaled
    by the squared level weight; voxels empty on either side contribute
    nothing. The per-pair kernel inverts the regularized Gram by a direct
    linear solve, independent of the whitening factor.
    """
    if len(x) == 0 or len(y) == 0:
        return 0.0
    if x.descriptor_dim != basis.dim or y.descriptor_dim != basis.dim:
        raise ValueError("descriptor dimensions do not match the basis")
    kx = basis_responses(x.vectors, basis)
    ky = basis_responses(y.vectors, basis)
    gram = basis.kzz + basis.lam * np.eye(basis.size)
    pair = kx @ np.linalg.solve(gram, ky.T)

    total = 0.0
    for level in range(1, pcfg.levels + 1):
        weight_sq = pcfg.weights[level - 1] ** 2
        ids_x = voxel_ids(x.locations, level)
        ids_y = voxel_ids(y.locations, level)
        for vox in range(level**3):
            in_x = np.flatnonzero(ids_x == vox)
            in_y = np.flatnonzero(ids_y == vox)
            if in_x.size == 0 or in_y.size == 0:
                continue
            block = pair[np.ix_(in_x, in_y)]
            total += weight_sq * float(block.sum()) / (in_x.size * in_y.size)
    return total


def delta(x: np.ndarray, y: np.ndarray, cb: Codebook) -> int:
    """1 when both descriptors quantize to the same codeword, else 0."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return int(quantize(x, cb) == quantize(y, cb))


def bof_histogram(video: VideoDescriptorSet, cb: Codebook) -> np.ndarray:
    """Normalized codeword histogram of a video; all-zero when it is empty."""
    if len(video) == 0:
        return np.zeros(cb.size)
    counts = np.bincount(quantize_all(video.vectors, cb), minlength=cb.size)
    return counts / len(video)


def bof_exact(x: VideoDescriptorSet, y: VideoDescriptorSet, cb: Codebook) -> float:
    """Bag-of-features similarity via the pairwise codeword-match count.

    Counts descriptor pairs quantizing to the same codeword and divides by
    |X|*|Y| once, so the result carries a single rounding step and matches
    the histogram-side computation bit for bit.
    """
    if len(x) == 0 or len(y) == 0:
        return 0.0
    qx = quantize_all(x.vectors, cb)
    qy = quantize_all(y.vectors, cb)
    matches = int(np.sum(qx[:, None] == qy[None, :]))
    return matches / (len(x) * len(y))
