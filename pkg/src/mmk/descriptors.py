"""Depth-video ingestion, interest-point detection and patch descriptors.

Frames are binary (P5) PGM images, 8- or 16-bit, normalized to [0, 1] by
the maxval declared in their header. Two detector substitutes are
provided (a dense grid and a temporal-difference top-k detector), and two
patch descriptors: a 36-bin soft-binned gradient histogram and a 59-bin
uniform local-binary-pattern histogram, both over 16x16 windows.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from . import kernels
from .core import VideoDescriptorSet, VideoDims
from .errors import FormatError, IngestionError

PATCH_SIZE = kernels.PATCH
_HALF = PATCH_SIZE // 2

DETECTOR_MODES = ("dense-grid", "temporal-diff")
DESCRIPTOR_KINDS = ("hog", "lbp")


@dataclass(frozen=True)
class DepthVideo:
    """A stack of grayscale depth frames with values in [0, 1]."""

    frames: np.ndarray  # (T, H, W) float64

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 3 or 0 in frames.shape:
            raise ValueError(f"frames must be a non-empty (T, H, W) stack, got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames contain non-finite values")
        frames = frames.copy()
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)

    @property
    def dims(self) -> VideoDims:
        t, h, w = self.frames.shape
        return VideoDims(width=w, height=h, frames=t)


@dataclass(frozen=True)
class InterestPoint:
    """A pixel/frame coordinate with a detector response score."""

    x: int
    y: int
    t: int
    score: float = 0.0


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) PGM file; returns (integer image, maxval)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read frame {path}: {exc}") from exc

    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            pos = data.find(b"\n", pos)
            if pos < 0:
                break
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise FormatError(f"{path} is not a binary (P5) PGM file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM dimensions or maxval")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expect = width * height * dtype.itemsize
    raster = data[pos:pos + expect]
    if len(raster) != expect:
        raise IngestionError(f"{path}: truncated raster ({len(raster)} of {expect} bytes)")
    image = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return image.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    """Write a 2-D integer image as a binary (P5) PGM file."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in [1, 65535]")
    if image.min() < 0 or image.max() > maxval:
        raise ValueError("pixel values outside [0, maxval]")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + image.astype(dtype).tobytes())


def load_frames(directory) -> DepthVideo:
    """Load a directory of PGM frames (lexicographic filename order)."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.pgm"))
    if not paths:
        raise IngestionError(f"no .pgm frames found in {directory}")
    frames = []
    shape = None
    for path in paths:
        image, maxval = read_pgm(path)
        if shape is None:
            shape = image.shape
        elif image.shape != shape:
            raise FormatError(
                f"{path}: frame size {image.shape[::-1]} differs from first frame "
                f"{shape[::-1]}"
            )
        frames.append(image.astype(np.float64) / maxval)
    return DepthVideo(frames=np.stack(frames))


def detect_interest_points(video: DepthVideo, mode: str, *, stride: int | None = None,
                           top_k: int | None = None) -> list[InterestPoint]:
    """Select interest points from a depth video.

    ``dense-grid`` takes every (x, y) on the stride lattice in every
    frame, score 0. ``temporal-diff`` scores each pixel of frames t >= 1
    by the 3x3-mean-smoothed absolute difference to the previous frame and
    keeps the ``top_k`` strongest, ties broken by ascending (t, y, x).
    """
    t_dim, height, width = video.frames.shape
    if mode == "dense-grid":
        if stride is None or stride < 1:
            raise ValueError("dense-grid mode needs a stride >= 1")
        return [
            InterestPoint(x=x, y=y, t=t)
            for t in range(t_dim)
            for y in range(0, height, stride)
            for x in range(0, width, stride)
        ]
    if mode == "temporal-diff":
        if top_k is None or top_k < 1:
            raise ValueError("temporal-diff mode needs top_k >= 1")
        if t_dim < 2:
            return []
        diffs = np.abs(np.diff(video.frames, axis=0))
        response = uniform_filter(diffs, size=(1, 3, 3), mode="nearest").ravel()
        # flat C-order index ascends in (t, y, x), so a stable sort on the
        # negated response breaks ties exactly as required
        order = np.argsort(-response, kind="stable")[:min(top_k, response.size)]
        ts, ys, xs = np.unravel_index(order, diffs.shape)
        return [
            InterestPoint(x=int(x), y=int(y), t=int(t) + 1, score=float(response[i]))
            for i, t, y, x in zip(order, ts, ys, xs)
        ]
    raise ValueError(f"unknown detector mode {mode!r}; choose from {DETECTOR_MODES}")


def extract_patch(video: DepthVideo, point: InterestPoint) -> np.ndarray:
    """16x16 window with top-left at (x-8, y-8); borders clamp to the edge."""
    t_dim, height, width = video.frames.shape
    if not (0 <= point.x < width and 0 <= point.y < height and 0 <= point.t < t_dim):
        raise ValueError(f"interest point {point} outside video bounds")
    xs = np.clip(np.arange(point.x - _HALF, point.x + _HALF), 0, width - 1)
    ys = np.clip(np.arange(point.y - _HALF, point.y + _HALF), 0, height - 1)
    return video.frames[point.t][np.ix_(ys, xs)]


def hog_descriptor(patch: np.ndarray) -> np.ndarray:
    """36-component gradient-orientation descriptor of a 16x16 patch."""
    return kernels.hog_histogram(patch)


def lbp_descriptor(patch: np.ndarray) -> np.ndarray:
    """59-component uniform local-binary-pattern descriptor of a 16x16 patch."""
    return kernels.lbp_histogram(patch).astype(np.float64)


_DESCRIPTOR_FUNCS = {"hog": hog_descriptor, "lbp": lbp_descriptor}


def compute_video_descriptors(video: DepthVideo, points: list[InterestPoint],
                              kind: str, *, video_id: str = "", subject: int = 0,
                              label: int | None = None) -> VideoDescriptorSet:
    """Describe every interest point of a video with one descriptor kind."""
    try:
        func = _DESCRIPTOR_FUNCS[kind]
    except KeyError:
        raise ValueError(
            f"unknown descriptor kind {kind!r}; choose from {DESCRIPTOR_KINDS}"
        ) from None
    dim = kernels.HOG_BINS if kind == "hog" else kernels.LBP_BINS
    vectors = np.empty((len(points), dim), dtype=np.float64)
    xyz = np.empty((len(points), 3), dtype=np.float64)
    for i, point in enumerate(points):
        vectors[i] = func(extract_patch(video, point))
        xyz[i] = (point.x, point.y, point.t)
    return VideoDescriptorSet(dims=video.dims, xyz=xyz, vectors=vectors,
                              video_id=video_id, subject=subject, label=label)


def load_precomputed_descriptors(path) -> VideoDescriptorSet:
    """Read externally computed descriptors (e.g. SIFT) from a descriptor file."""
    from .io import read_descriptor_file

    return read_descriptor_file(path)
