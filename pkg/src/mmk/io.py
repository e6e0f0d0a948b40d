"""Persistence formats.

Binary formats are little-endian with a 4-byte magic and a u32 version:

* descriptor file  ``MMKD``: m, d, dims(width,height,frames), then m
  records of f32 x, y, t followed by the f32 descriptor vector;
* codebook file    ``MMKC``: D, d, f64 gamma (0 when unset), f32 centers;
* feature file     ``MMKF``: count, dim, levels, basis size, then per
  video u32 label, u32 subject and the f32 feature vector.

Models and evaluation reports are line-oriented text with a fixed field
order (floats printed with repr, so write/read/write round-trips
byte-identically). Confusion matrices can additionally be exported as CSV.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .classify import EvalReport, FeatureDataset, LinearModel, TrainParams
from .codebook import Codebook
from .core import VideoDescriptorSet, VideoDims
from .errors import FormatError

MAGIC_DESCRIPTORS = b"MMKD"
MAGIC_CODEBOOK = b"MMKC"
MAGIC_FEATURES = b"MMKF"
FORMAT_VERSION = 1


def _read_exact(fh, n: int, path, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"{path}: truncated while reading {what}")
    return data


def _read_header(fh, path, magic: bytes, n_fields: int) -> tuple[int, ...]:
    got = _read_exact(fh, 4, path, "magic")
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    version, = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return struct.unpack(f"<{n_fields}I", _read_exact(fh, 4 * n_fields, path, "header"))


def write_descriptor_file(path, dset: VideoDescriptorSet) -> None:
    m, d = dset.vectors.shape
    dims = dset.dims
    record = np.hstack([dset.xyz, dset.vectors]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC_DESCRIPTORS)
        fh.write(struct.pack("<6I", FORMAT_VERSION, m, d,
                             dims.width, dims.height, dims.frames))
        fh.write(record.tobytes())


def read_descriptor_file(path, *, video_id: str = "", subject: int = 0,
                         label: int | None = None) -> VideoDescriptorSet:
    path = Path(path)
    with open(path, "rb") as fh:
        m, d, width, height, frames = _read_header(fh, path, MAGIC_DESCRIPTORS, 5)
        if d < 1 and m > 0:
            raise FormatError(f"{path}: descriptor dimension must be >= 1")
        try:
            dims = VideoDims(width=int(width), height=int(height), frames=int(frames))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        raw = _read_exact(fh, m * (3 + d) * 4, path, "descriptor records")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {m} records")
    records = np.frombuffer(raw, dtype="<f4").reshape(m, 3 + d).astype(np.float64)
    if not np.all(np.isfinite(records)):
        raise FormatError(f"{path}: non-finite values in descriptor records")
    if m and records[:, :3].min() < 0:
        raise FormatError(f"{path}: negative coordinates in descriptor records")
    return VideoDescriptorSet(
        dims=dims,
        xyz=records[:, :3],
        vectors=records[:, 3:],
        video_id=video_id or path.stem,
        subject=subject,
        label=label,
    )


def write_codebook_file(path, cb: Codebook, gamma: float | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC_CODEBOOK)
        fh.write(struct.pack("<3I", FORMAT_VERSION, cb.size, cb.dim))
        fh.write(struct.pack("<d", 0.0 if gamma is None else float(gamma)))
        fh.write(cb.centers.astype("<f4").tobytes())


def read_codebook_file(path) -> tuple[Codebook, float | None]:
    path = Path(path)
    with open(path, "rb") as fh:
        size, dim = _read_header(fh, path, MAGIC_CODEBOOK, 2)
        gamma, = struct.unpack("<d", _read_exact(fh, 8, path, "gamma"))
        raw = _read_exact(fh, size * dim * 4, path, "centers")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after centers")
    centers = np.frombuffer(raw, dtype="<f4").reshape(size, dim).astype(np.float64)
    if not np.all(np.isfinite(centers)):
        raise FormatError(f"{path}: non-finite center values")
    try:
        cb = Codebook(centers=centers)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return cb, (gamma if gamma > 0 else None)


def write_feature_file(path, ds: FeatureDataset) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC_FEATURES)
        fh.write(struct.pack("<5I", FORMAT_VERSION, len(ds), ds.dim,
                             ds.levels, ds.basis_size))
        for label, subject, row in zip(ds.labels, ds.subjects, ds.features):
            fh.write(struct.pack("<2I", int(label), int(subject)))
            fh.write(row.astype("<f4").tobytes())


def read_feature_file(path) -> FeatureDataset:
    path = Path(path)
    with open(path, "rb") as fh:
        count, dim, levels, basis_size = _read_header(fh, path, MAGIC_FEATURES, 4)
        labels = np.empty(count, dtype=np.int64)
        subjects = np.empty(count, dtype=np.int64)
        features = np.empty((count, dim), dtype=np.float64)
        for i in range(count):
            labels[i], subjects[i] = struct.unpack(
                "<2I", _read_exact(fh, 8, path, f"video {i} header"))
            raw = _read_exact(fh, dim * 4, path, f"video {i} features")
            features[i] = np.frombuffer(raw, dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} videos")
    if not np.all(np.isfinite(features)):
        raise FormatError(f"{path}: non-finite feature values")
    return FeatureDataset(features=features, labels=labels, subjects=subjects,
                          levels=int(levels), basis_size=int(basis_size))


def write_model_file(path, model: LinearModel) -> None:
    p = model.params
    lines = [
        f"mmk-model {FORMAT_VERSION}",
        "loss squared_hinge",
        f"C {p.C!r}",
        f"max_iters {p.max_iters}",
        f"grad_tol {p.grad_tol!r}",
        f"seed {p.seed}",
        f"dim {model.dim}",
        f"classes {len(model.labels)}",
    ]
    for i, label in enumerate(model.labels):
        lines.append(f"class {label}")
        lines.append(f"bias {model.biases[i]!r}")
        lines.append("weights " + " ".join(repr(v) for v in model.weights[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _fields(line: str, path, expected: str) -> list[str]:
    parts = line.split()
    if not parts or parts[0] != expected:
        raise FormatError(f"{path}: expected a '{expected}' line, got {line!r}")
    return parts[1:]


def read_model_file(path) -> LinearModel:
    path = Path(path)
    lines = path.read_text(encoding="ascii").splitlines()
    try:
        header = _fields(lines[0], path, "mmk-model")
        if header != [str(FORMAT_VERSION)]:
            raise FormatError(f"{path}: unsupported model version {header}")
        _fields(lines[1], path, "loss")
        params = TrainParams(
            C=float(_fields(lines[2], path, "C")[0]),
            max_iters=int(_fields(lines[3], path, "max_iters")[0]),
            grad_tol=float(_fields(lines[4], path, "grad_tol")[0]),
            seed=int(_fields(lines[5], path, "seed")[0]),
        )
        dim = int(_fields(lines[6], path, "dim")[0])
        n_classes = int(_fields(lines[7], path, "classes")[0])
        labels, weights, biases = [], [], []
        pos = 8
        for _ in range(n_classes):
            labels.append(int(_fields(lines[pos], path, "class")[0]))
            biases.append(float(_fields(lines[pos + 1], path, "bias")[0]))
            row = [float(v) for v in _fields(lines[pos + 2], path, "weights")]
            if len(row) != dim:
                raise FormatError(f"{path}: class {labels[-1]} has {len(row)} weights, "
                                  f"expected {dim}")
            weights.append(row)
            pos += 3
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed model file ({exc})") from exc
    return LinearModel(labels=tuple(labels), weights=np.array(weights),
                       biases=np.array(biases), params=params)


def write_eval_report(path, report: EvalReport) -> None:
    lines = [
        f"mmk-eval-report {FORMAT_VERSION}",
        f"protocol {report.protocol}",
        f"seed {report.seed}",
        f"runs {report.n_runs}",
        f"accuracy {report.accuracy!r}",
        f"mean_accuracy {report.mean_accuracy!r}",
        f"std_accuracy {report.std_accuracy!r}",
        "run_accuracies " + " ".join(repr(a) for a in report.run_accuracies),
        "labels " + " ".join(str(c) for c in report.labels),
    ]
    for row in report.confusion:
        lines.append("confusion " + " ".join(str(int(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_confusion_csv(path, report: EvalReport) -> None:
    """Confusion matrix as CSV: rows are true classes, columns predictions."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [str(c) for c in report.labels])
        for label, row in zip(report.labels, report.confusion):
            writer.writerow([str(label)] + [str(int(v)) for v in row])


def read_manifest(path) -> list[tuple[Path, int, int]]:
    """Read a dataset manifest CSV with columns path,label,subject.

    Paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["path", "label", "subject"]:
            raise FormatError(f"{path}: manifest must start with 'path,label,subject'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise FormatError(f"{path}:{lineno}: expected path,label,subject")
            try:
                label, subject = int(row[1]), int(row[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            if label < 0 or subject < 0:
                raise FormatError(f"{path}:{lineno}: label and subject must be >= 0")
            rows.append((path.parent / row[0], label, subject))
    if not rows:
        raise FormatError(f"{path}: manifest lists no videos")
    return rows


def write_manifest(path, rows) -> None:
    """Write (filename, label, subject) rows as a manifest CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "subject"])
        for name, label, subject in rows:
            writer.writerow([str(name), str(int(label)), str(int(subject))])


def load_manifest_videos(path) -> list[VideoDescriptorSet]:
    """Load every descriptor file referenced by a manifest, with its metadata."""
    videos = []
    for file_path, label, subject in read_manifest(path):
        videos.append(read_descriptor_file(file_path, subject=subject, label=label))
    return videos
