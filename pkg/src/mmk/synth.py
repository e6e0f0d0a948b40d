"""Synthetic two-class gesture generator for order-sensitivity experiments.

Both classes move a blob through the same spatial positions and emit the
same prototype descriptors; they differ only in the order: class 0 visits
the left half of the frame before the right half, class 1 the reverse.
Plain codeword histograms therefore cannot separate the classes, while
any representation that keeps (x, t) structure can.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import VideoDescriptorSet, VideoDims


@dataclass(frozen=True)
class SynthConfig:
    samples_per_class: int = 40
    n_subjects: int = 4
    frames: int = 20
    frame_size: int = 64
    blob_radius: float = 3.0
    noise_sigma: float = 0.05
    descriptor_dim: int = 8
    n_prototypes: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.samples_per_class < 1 or self.n_subjects < 1:
            raise ValueError("samples_per_class and n_subjects must be >= 1")
        if self.frames < 2 or self.frame_size < 8:
            raise ValueError("need frames >= 2 and frame_size >= 8")
        if self.blob_radius < 0 or self.noise_sigma < 0:
            raise ValueError("blob_radius and noise_sigma must be >= 0")
        if self.descriptor_dim < 1 or self.n_prototypes < 1:
            raise ValueError("descriptor_dim and n_prototypes must be >= 1")


def synth_gestures(cfg: SynthConfig) -> list[VideoDescriptorSet]:
    """Generate the labeled two-class dataset, deterministic per seed.

    Each video emits one descriptor per frame: the frame's prototype
    vector (cycled from a fixed seeded bank) plus gaussian noise of scale
    ``noise_sigma``. At zero noise the descriptor multisets of the two
    classes are identical; only the blob locations differ.
    """
    rng = np.random.default_rng(cfg.seed)
    protos = rng.normal(size=(cfg.n_prototypes, cfg.descriptor_dim))
    size = float(cfg.frame_size)
    dims = VideoDims(width=cfg.frame_size, height=cfg.frame_size, frames=cfg.frames)
    # subjects differ by a vertical track offset
    if cfg.n_subjects > 1:
        subject_v = 0.25 + 0.4 * np.arange(cfg.n_subjects) / (cfg.n_subjects - 1)
    else:
        subject_v = np.array([0.45])

    half = cfg.frames // 2
    videos = []
    for label in (0, 1):
        for sample in range(cfg.samples_per_class):
            subject = sample % cfg.n_subjects
            xyz = np.empty((cfg.frames, 3))
            vectors = np.empty((cfg.frames, cfg.descriptor_dim))
            for t in range(cfg.frames):
                if t < half:
                    side, progress = 0, t / half
                else:
                    side, progress = 1, (t - half) / (cfg.frames - half)
                if label == 1:
                    side = 1 - side
                u = 0.08 + 0.34 * progress + 0.5 * side
                x = u * size + rng.uniform(-cfg.blob_radius, cfg.blob_radius)
                y = subject_v[subject] * size + rng.uniform(-cfg.blob_radius, cfg.blob_radius)
                xyz[t] = (
                    float(np.clip(x, 0.0, size - 1e-6)),
                    float(np.clip(y, 0.0, size - 1e-6)),
                    t,
                )
                vectors[t] = protos[t % cfg.n_prototypes]
                if cfg.noise_sigma > 0:
                    vectors[t] += cfg.noise_sigma * rng.normal(size=cfg.descriptor_dim)
            videos.append(VideoDescriptorSet(
                dims=dims,
                xyz=xyz,
                vectors=vectors,
                video_id=f"synth-c{label}-s{sample:03d}",
                subject=subject,
                label=label,
            ))
    return videos
