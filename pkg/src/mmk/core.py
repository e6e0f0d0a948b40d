"""Pyramid geometry: normalized locations, voxel indexing and partitioning.

A video is treated as a unit cuboid. At pyramid level ``i`` each axis is
split into ``i`` equal parts, giving ``i**3`` voxels per level; a pyramid
of ``L`` levels stacks the grids for levels ``1..L``. Descriptor locations
are normalized per video into ``[0, 1)`` so that voxel membership is a
pure function of the fractional position.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Largest double below 1.0; raw coordinates equal to the video extent are
# clamped here so every descriptor lands in the last cell.
BELOW_ONE = float(np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class VideoDims:
    """Pixel width/height and frame count of a video."""

    width: int
    height: int
    frames: int

    def __post_init__(self):
        for name in ("width", "height", "frames"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True)
class Location:
    """Normalized (u, v, w) position inside the unit cuboid, each in [0, 1)."""

    u: float
    v: float
    w: float

    def __post_init__(self):
        for name in ("u", "v", "w"):
            value = getattr(self, name)
            if not (0.0 <= value < 1.0):
                raise ValueError(f"{name} must lie in [0, 1), got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w], dtype=np.float64)


@dataclass(frozen=True)
class LocatedDescriptor:
    """A feature vector together with its normalized location."""

    loc: Location
    vec: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vec, dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError("descriptor vector must be one-dimensional")
        if not np.all(np.isfinite(vec)):
            raise ValueError("descriptor vector contains non-finite entries")
        object.__setattr__(self, "vec", vec)


def normalize_location(x: float, y: float, t: float, dims: VideoDims) -> Location:
    """Map raw pixel/frame coordinates into the unit cuboid.

    Coordinates at or beyond the extent clamp to just below 1 so that
    boundary points stay inside the last voxel.
    """
    if x < 0 or y < 0 or t < 0:
        raise ValueError(f"invalid location ({x}, {y}, {t}): coordinates must be >= 0")
    return Location(
        u=min(x / dims.width, BELOW_ONE),
        v=min(y / dims.height, BELOW_ONE),
        w=min(t / dims.frames, BELOW_ONE),
    )


def normalize_locations(xyz: np.ndarray, dims: VideoDims) -> np.ndarray:
    """Vectorized :func:`normalize_location` for an (m, 3) array of (x, y, t)."""
    xyz = np.asarray(xyz, dtype=np.float64)
    if xyz.ndim != 2 or xyz.shape[1] != 3:
        raise ValueError(f"expected an (m, 3) coordinate array, got shape {xyz.shape}")
    if xyz.size and xyz.min() < 0:
        bad = np.argwhere(xyz < 0)[0]
        raise ValueError(f"invalid location in row {bad[0]}: coordinates must be >= 0")
    extents = np.array([dims.width, dims.height, dims.frames], dtype=np.float64)
    return np.minimum(xyz / extents, BELOW_ONE)


def voxel_index(loc: Location, level: int) -> int:
    """Voxel id of a location at a pyramid level, in x-major order.

    The cell along each axis is ``floor(coord * level)`` clamped to the
    grid, and the flat id is ``cx*level**2 + cy*level + ct``.
    """
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    cx = min(int(loc.u * level), level - 1)
    cy = min(int(loc.v * level), level - 1)
    ct = min(int(loc.w * level), level - 1)
    return (cx * level + cy) * level + ct


def voxel_ids(locations: np.ndarray, level: int) -> np.ndarray:
    """Vectorized :func:`voxel_index` over an (m, 3) array of normalized locations."""
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    locations = np.asarray(locations, dtype=np.float64)
    cells = np.floor(locations * level).astype(np.int64)
    np.clip(cells, 0, level - 1, out=cells)
    return (cells[:, 0] * level + cells[:, 1]) * level + cells[:, 2]


def pyramid_voxel_count(levels: int) -> int:
    """Total number of voxels over levels 1..L, i.e. the sum of cubes."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    return sum(i**3 for i in range(1, levels + 1))


@dataclass(frozen=True)
class PyramidConfig:
    """Level count and the per-level scale applied to feature-map blocks.

    The induced kernel picks up the square of each scale, since scaling a
    feature block by ``w`` scales its dot products by ``w**2``.
    """

    levels: int
    weights: tuple[float, ...]

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != self.levels:
            raise ValueError(
                f"expected {self.levels} weights, got {len(weights)}"
            )
        if any(not np.isfinite(w) or w <= 0 for w in weights):
            raise ValueError("weights must be positive and finite")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def default(cls, levels: int) -> "PyramidConfig":
        """Doubling weights 2**i, favouring matches at finer resolutions."""
        return cls(levels=levels, weights=tuple(2.0**i for i in range(1, levels + 1)))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class VideoDescriptorSet:
    """All located descriptors of one video, stored column-wise.

    ``xyz`` holds the raw (x, y, t) coordinates exactly as ingested so the
    set can be re-serialized byte-identically; normalized locations are
    derived lazily. ``label`` is optional (None for unlabeled videos).
    """

    dims: VideoDims
    xyz: np.ndarray
    vectors: np.ndarray
    video_id: str = ""
    subject: int = 0
    label: int | None = None

    def __post_init__(self):
        xyz = _readonly(self.xyz)
        vectors = _readonly(self.vectors)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must have shape (m, 3), got {xyz.shape}")
        if vectors.ndim != 2:
            raise ValueError(f"vectors must have shape (m, d), got {vectors.shape}")
        if xyz.shape[0] != vectors.shape[0]:
            raise ValueError(
                f"{xyz.shape[0]} locations but {vectors.shape[0]} descriptor vectors"
            )
        if xyz.size and xyz.min() < 0:
            raise ValueError("raw coordinates must be >= 0")
        if not np.all(np.isfinite(xyz)) or not np.all(np.isfinite(vectors)):
            raise ValueError("descriptor data contains non-finite entries")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @property
    def descriptor_dim(self) -> int:
        return self.vectors.shape[1]

    @cached_property
    def locations(self) -> np.ndarray:
        """(m, 3) normalized locations in [0, 1)."""
        locs = normalize_locations(self.xyz, self.dims)
        locs.flags.writeable = False
        return locs

    def descriptors(self):
        """Iterate over the set as :class:`LocatedDescriptor` values."""
        for row, vec in zip(self.locations, self.vectors):
            yield LocatedDescriptor(Location(*map(float, row)), vec)


def partition(video: VideoDescriptorSet, levels: int) -> list[list[np.ndarray]]:
    """Ordered partition of a video's descriptors across pyramid levels.

    Returns one entry per level ``i = 1..levels``; each entry lists, for
    voxel ids ``0..i**3-1`` in order, the indices of the descriptors that
    fall inside that voxel. Every descriptor appears in exactly one voxel
    per level.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    locs = video.locations
    out = []
    for level in range(1, levels + 1):
        ids = voxel_ids(locs, level)
        n_vox = level**3
        order = np.argsort(ids, kind="stable")
        sorted_ids = ids[order]
        bounds = np.searchsorted(sorted_ids, np.arange(n_vox + 1))
        out.append([order[bounds[j]:bounds[j + 1]] for j in range(n_vox)])
    return out
