"""K-means visual codebook: dictionary training and descriptor quantization.

One codebook plays both roles in the pipeline: the bag-of-features
dictionary (descriptors quantize to their nearest center) and the basis
anchoring the kernel feature map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import TrainingError


@dataclass(frozen=True)
class TrainMeta:
    """Provenance of a trained codebook."""

    seed: int
    iterations: int
    inertia: float
    inertia_history: tuple[float, ...] = ()


@dataclass(frozen=True)
class KMeansParams:
    size: int
    seed: int = 0
    max_iters: int = 100
    rel_tol: float = 1e-4
    sample_cap: int = 200_000

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"size must be >= 1, got {self.size}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol <= 0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.sample_cap < 1:
            raise ValueError(f"sample_cap must be >= 1, got {self.sample_cap}")


@dataclass(frozen=True)
class Codebook:
    """Cluster centers serving as quantization dictionary and kernel basis."""

    centers: np.ndarray  # (D, d) float64
    train_meta: TrainMeta | None = None

    def __post_init__(self):
        centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[0] < 1:
            raise ValueError(f"centers must be a non-empty (D, d) array, got {centers.shape}")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers contain non-finite values")
        centers = centers.copy()
        centers.flags.writeable = False
        object.__setattr__(self, "centers", centers)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def _kmeanspp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ initialization."""
    m = data.shape[0]
    centers = np.empty((k, data.shape[1]), dtype=np.float64)
    centers[0] = data[rng.integers(m)]
    d2 = np.sum((data - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        # total > 0 is guaranteed while fewer centers than distinct points
        centers[j] = data[rng.choice(m, p=d2 / total)]
        np.minimum(d2, np.sum((data - centers[j]) ** 2, axis=1), out=d2)
    return centers


def train_codebook(descriptors: np.ndarray, params: KMeansParams) -> Codebook:
    """Lloyd's k-means over pooled descriptors.

    Seeded k-means++ start, optional uniform subsampling when the pool
    exceeds ``sample_cap``, empty clusters reseeded to the point farthest
    from its assigned center, and a stop when the relative inertia
    decrease falls below ``rel_tol``. Inertia never increases between
    iterations. Deterministic for a fixed seed and input order.
    """
    data = np.ascontiguousarray(descriptors, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise TrainingError(f"need an (m, d) descriptor pool, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise TrainingError("descriptor pool contains non-finite values")

    rng = np.random.default_rng(params.seed)
    if data.shape[0] > params.sample_cap:
        keep = rng.choice(data.shape[0], size=params.sample_cap, replace=False)
        keep.sort()
        data = data[keep]

    k = params.size
    n_distinct = np.unique(data, axis=0).shape[0]
    if n_distinct < k:
        raise TrainingError(
            f"need at least {k} distinct descriptors to train, got {n_distinct}"
        )

    centers = _kmeanspp_init(data, k, rng)
    prev_inertia = np.inf
    iterations = 0
    inertia = np.inf
    history = []
    for iterations in range(1, params.max_iters + 1):
        assign, d2 = kernels.nearest_center(data, centers)
        counts = np.bincount(assign, minlength=k)
        while True:
            empties = np.flatnonzero(counts == 0)
            if empties.size == 0:
                break
            # reseeding can empty a singleton cluster, hence the loop
            far = int(np.argmax(d2))
            counts[assign[far]] -= 1
            assign[far] = empties[0]
            counts[empties[0]] = 1
            d2[far] = 0.0
        inertia = float(d2.sum())
        history.append(inertia)
        sums, _ = kernels.pool_sums(data, assign, k)
        centers = sums / counts[:, None]
        if np.isfinite(prev_inertia) and prev_inertia - inertia <= params.rel_tol * prev_inertia:
            break
        prev_inertia = inertia

    return Codebook(
        centers=centers,
        train_meta=TrainMeta(seed=params.seed, iterations=iterations,
                             inertia=inertia, inertia_history=tuple(history)),
    )


def quantize(x: np.ndarray, cb: Codebook) -> int:
    """Index of the euclidean-nearest center; exact ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cb.dim,):
        raise ValueError(f"descriptor has shape {x.shape}, codebook expects ({cb.dim},)")
    idx, _ = kernels.nearest_center(x[None, :], cb.centers)
    return int(idx[0])


def quantize_all(vectors: np.ndarray, cb: Codebook) -> np.ndarray:
    """Vectorized :func:`quantize` over the rows of an (m, d) array."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != cb.dim:
        raise ValueError(
            f"descriptors have shape {vectors.shape}, codebook expects (m, {cb.dim})"
        )
    idx, _ = kernels.nearest_center(vectors, cb.centers)
    return idx
