"""Command-line pipeline.

Subcommands: ``extract`` (PGM frames to a descriptor file), ``dict``
(descriptors to a codebook), ``featurize`` (descriptors + codebook to
feature maps), ``train``, ``eval``, ``kernel-check`` (audits the
feature-map/exact-kernel agreement), ``synth`` (two-class generator) and
``bench`` (featurization scaling and backend comparison).

Every flag can also come from a JSON config file (``--config``); explicit
command-line values win. ``MMK_THREADS`` caps the per-video worker count
(0 or unset means one worker per CPU).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io, kernels
from .classify import FeatureDataset, TrainParams, evaluate_loso, \
    evaluate_subject_split, train_linear_ovr
from .codebook import Codebook, KMeansParams, train_codebook
from .core import PyramidConfig, VideoDescriptorSet
from .descriptors import DESCRIPTOR_KINDS, DETECTOR_MODES, \
    compute_video_descriptors, detect_interest_points, load_frames
from .errors import MMKError
from .matchkernel import bof_histogram, build_kernel_basis, median_gamma, \
    mmk_exact, video_feature_map
from .synth import SynthConfig, synth_gestures


def _worker_count() -> int:
    raw = os.environ.get("MMK_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"MMK_THREADS must be an integer, got {raw!r}") from None
    return n if n > 0 else (os.cpu_count() or 1)


def _parallel_map(func, items):
    """Apply func over items with the configured worker cap, order preserved."""
    workers = min(_worker_count(), max(len(items), 1))
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


class _Config:
    """Merges argparse values (which win) over JSON config values."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.values = {}
        if getattr(args, "config", None):
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
            if not isinstance(loaded, dict):
                raise ValueError(f"{args.config}: config must be a JSON object")
            self.values = loaded

    def get(self, name: str, default=None):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.values:
            return self.values[name]
        return default


def _parse_weights(text: str | None, levels: int) -> PyramidConfig:
    if text in (None, "", "default"):
        return PyramidConfig.default(levels)
    weights = tuple(float(v) for v in str(text).replace(",", " ").split())
    return PyramidConfig(levels=levels, weights=weights)


def _resolve_gamma(spec, stored: float | None, videos, seed: int) -> float:
    """A fixed value, the stored codebook value, or the median heuristic."""
    if spec not in (None, "", "stored"):
        if str(spec).lower() == "median":
            pooled = np.vstack([v.vectors for v in videos if len(v)])
            return median_gamma(pooled, seed=seed)
        return float(spec)
    if stored is not None:
        return stored
    pooled = np.vstack([v.vectors for v in videos if len(v)])
    return median_gamma(pooled, seed=seed)


def _featurize_videos(videos, cb: Codebook, mode: str, pcfg: PyramidConfig | None,
                      gamma: float | None, lam: float | None) -> FeatureDataset:
    if mode == "bof":
        rows = _parallel_map(lambda v: bof_histogram(v, cb), videos)
        levels = 0
    elif mode == "mmk":
        basis = build_kernel_basis(cb, gamma, lam)
        rows = _parallel_map(lambda v: video_feature_map(v, basis, pcfg).values, videos)
        levels = pcfg.levels
    else:
        raise ValueError(f"unknown featurize mode {mode!r}; choose bof or mmk")
    labels = [v.label if v.label is not None else 0 for v in videos]
    subjects = [v.subject for v in videos]
    return FeatureDataset(features=np.vstack(rows), labels=np.array(labels),
                          subjects=np.array(subjects), levels=levels,
                          basis_size=cb.size)


def cmd_extract(args) -> int:
    cfg = _Config(args)
    detector = cfg.get("detector", "dense-grid")
    video = load_frames(cfg.get("frames_dir"))
    points = detect_interest_points(
        video, detector,
        stride=int(cfg.get("stride", 8)),
        top_k=int(cfg.get("top_k", 200)),
    )
    label = cfg.get("label")
    dset = compute_video_descriptors(
        video, points, cfg.get("descriptor", "hog"),
        subject=int(cfg.get("subject", 0)),
        label=None if label is None else int(label),
    )
    out = Path(cfg.get("output"))
    io.write_descriptor_file(out, dset)
    manifest = cfg.get("append_manifest")
    if manifest:
        manifest = Path(manifest)
        rows = []
        if manifest.exists():
            rows = [(p.name, l, s) for p, l, s in io.read_manifest(manifest)]
        rows.append((out.name, int(label) if label is not None else 0,
                     int(cfg.get("subject", 0))))
        io.write_manifest(manifest, rows)
    print(f"extract: {len(dset)} descriptors -> {out}")
    return 0


def cmd_dict(args) -> int:
    cfg = _Config(args)
    videos = io.load_manifest_videos(cfg.get("manifest"))
    pooled = np.vstack([v.vectors for v in videos if len(v)])
    params = KMeansParams(
        size=int(cfg.get("basis_size", 1000)),
        seed=int(cfg.get("seed", 0)),
        max_iters=int(cfg.get("max_iters", 100)),
        rel_tol=float(cfg.get("rel_tol", 1e-4)),
        sample_cap=int(cfg.get("sample_cap", 200_000)),
    )
    cb = train_codebook(pooled, params)
    gamma_spec = cfg.get("gamma", "median")
    gamma = None
    if str(gamma_spec).lower() == "median":
        gamma = median_gamma(pooled, seed=params.seed)
    elif str(gamma_spec).lower() not in ("none", "unset"):
        gamma = float(gamma_spec)
    io.write_codebook_file(cfg.get("output"), cb, gamma)
    meta = cb.train_meta
    print(f"dict: {cb.size} centers of dim {cb.dim} after {meta.iterations} "
          f"iterations (inertia {meta.inertia:.6g}) -> {cfg.get('output')}")
    return 0


def cmd_featurize(args) -> int:
    cfg = _Config(args)
    videos = io.load_manifest_videos(cfg.get("manifest"))
    cb, stored_gamma = io.read_codebook_file(cfg.get("codebook"))
    mode = cfg.get("mode", "mmk")
    pcfg = None
    gamma = None
    if mode == "mmk":
        levels = int(cfg.get("levels", 3))
        pcfg = _parse_weights(cfg.get("weights"), levels)
        gamma = _resolve_gamma(cfg.get("gamma"), stored_gamma, videos,
                               int(cfg.get("seed", 0)))
    lam = cfg.get("lam")
    ds = _featurize_videos(videos, cb, mode, pcfg, gamma,
                           None if lam is None else float(lam))
    io.write_feature_file(cfg.get("output"), ds)
    print(f"featurize: {len(ds)} videos, {ds.dim}-dim {mode} features "
          f"-> {cfg.get('output')}")
    return 0


def cmd_train(args) -> int:
    cfg = _Config(args)
    ds = io.read_feature_file(cfg.get("features"))
    params = TrainParams(C=float(cfg.get("C", 1.0)),
                         max_iters=int(cfg.get("max_iters", 100)),
                         seed=int(cfg.get("seed", 0)))
    model = train_linear_ovr(ds.features, ds.labels, params)
    io.write_model_file(cfg.get("output"), model)
    print(f"train: {len(model.labels)} classes on {len(ds)} videos "
          f"-> {cfg.get('output')}")
    return 0


def cmd_eval(args) -> int:
    cfg = _Config(args)
    ds = io.read_feature_file(cfg.get("features"))
    params = TrainParams(C=float(cfg.get("C", 1.0)),
                         max_iters=int(cfg.get("max_iters", 100)),
                         seed=int(cfg.get("seed", 0)))
    protocol = cfg.get("protocol", "loso")
    if protocol == "split":
        report = evaluate_subject_split(
            ds,
            n_train_subjects=int(cfg.get("train_subjects", 5)),
            n_runs=int(cfg.get("runs", 5)),
            seed=int(cfg.get("seed", 0)),
            params=params,
        )
    elif protocol == "loso":
        report = evaluate_loso(ds, params=params)
    else:
        raise ValueError(f"unknown protocol {protocol!r}; choose split or loso")
    io.write_eval_report(cfg.get("output"), report)
    csv_path = cfg.get("confusion_csv")
    if csv_path:
        io.write_confusion_csv(csv_path, report)
    print(f"eval: {protocol} accuracy {report.accuracy:.4f} "
          f"(mean over runs {report.mean_accuracy:.4f} +- {report.std_accuracy:.4f}) "
          f"-> {cfg.get('output')}")
    return 0


def cmd_kernel_check(args) -> int:
    cfg = _Config(args)
    videos = io.load_manifest_videos(cfg.get("manifest"))
    cb, stored_gamma = io.read_codebook_file(cfg.get("codebook"))
    levels = int(cfg.get("levels", 3))
    pcfg = _parse_weights(cfg.get("weights"), levels)
    seed = int(cfg.get("seed", 0))
    gamma = _resolve_gamma(cfg.get("gamma"), stored_gamma, videos, seed)
    lam = cfg.get("lam")
    basis = build_kernel_basis(cb, gamma, None if lam is None else float(lam))
    n_pairs = int(cfg.get("pairs", 20))
    tol = float(cfg.get("tol", 1e-6))

    rng = np.random.default_rng(seed)
    pairs = rng.integers(len(videos), size=(n_pairs, 2))
    maps = {}

    def feature(i):
        if i not in maps:
            maps[i] = video_feature_map(videos[i], basis, pcfg)
        return maps[i]

    worst = 0.0
    for i, j in pairs:
        exact = mmk_exact(videos[i], videos[j], basis, pcfg)
        dot = float(feature(int(i)).values @ feature(int(j)).values)
        deviation = abs(dot - exact) / max(1.0, abs(exact))
        worst = max(worst, deviation)
    print(f"kernel-check: max relative deviation {worst:.3e} over {n_pairs} pairs "
          f"(tolerance {tol:.0e})")
    if worst > tol:
        print(f"kernel-check: FAILED, deviation {worst:.3e} > {tol:.0e}",
              file=sys.stderr)
        return 1
    return 0


def cmd_synth(args) -> int:
    cfg = _Config(args)
    synth_cfg = SynthConfig(
        samples_per_class=int(cfg.get("samples_per_class", 40)),
        n_subjects=int(cfg.get("subjects", 4)),
        frames=int(cfg.get("frames", 20)),
        frame_size=int(cfg.get("frame_size", 64)),
        blob_radius=float(cfg.get("blob_radius", 3.0)),
        noise_sigma=float(cfg.get("sigma", 0.05)),
        descriptor_dim=int(cfg.get("descriptor_dim", 8)),
        seed=int(cfg.get("seed", 0)),
    )
    outdir = Path(cfg.get("outdir"))
    outdir.mkdir(parents=True, exist_ok=True)
    videos = synth_gestures(synth_cfg)
    rows = []
    for video in videos:
        name = f"{video.video_id}.mmkd"
        io.write_descriptor_file(outdir / name, video)
        rows.append((name, video.label, video.subject))
    io.write_manifest(outdir / "manifest.csv", rows)
    print(f"synth: {len(videos)} videos -> {outdir / 'manifest.csv'}")
    return 0


def _random_video(rng, m: int, dim: int) -> VideoDescriptorSet:
    from .core import VideoDims

    dims = VideoDims(width=64, height=64, frames=32)
    xyz = rng.uniform(0, (63.0, 63.0, 31.0), size=(m, 3))
    return VideoDescriptorSet(dims=dims, xyz=xyz,
                              vectors=rng.normal(size=(m, dim)))


def cmd_bench(args) -> int:
    cfg = _Config(args)
    sizes = [int(v) for v in str(cfg.get("sizes", "10000,20000")).split(",")]
    dim = int(cfg.get("dim", 64))
    basis_size = int(cfg.get("basis_size", 256))
    levels = int(cfg.get("levels", 3))
    repeats = int(cfg.get("repeats", 3))
    seed = int(cfg.get("seed", 0))
    backend_spec = cfg.get("backend", "active")
    if backend_spec == "both":
        names = list(kernels.available_backends())
    elif backend_spec == "active":
        names = [kernels.get_backend()]
    else:
        names = [backend_spec]

    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(basis_size, dim))
    videos = {m: _random_video(rng, m, dim) for m in sizes}
    pcfg = PyramidConfig.default(levels)

    previous = kernels.get_backend()
    status = 0
    try:
        for name in names:
            kernels.set_backend(name)
            basis = build_kernel_basis(Codebook(centers=centers), gamma=0.5 / dim)
            times = []
            for m in sizes:
                best = min(
                    _timed(video_feature_map, videos[m], basis, pcfg)
                    for _ in range(repeats)
                )
                times.append(best)
                print(f"bench[{name}]: m={m:>7d} featurize {best * 1e3:9.2f} ms")
            for a, b, ta, tb in zip(sizes, sizes[1:], times, times[1:]):
                print(f"bench[{name}]: m {a} -> {b}: time ratio {tb / ta:.2f}")
    finally:
        kernels.set_backend(previous)
    return status


def _timed(func, *args):
    start = time.perf_counter()
    func(*args)
    return time.perf_counter() - start


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file supplying defaults for any flag")
    p.add_argument("--seed", type=int, help="seed for all randomness (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmk",
        description="Multiresolution match kernels for video classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute descriptors for one video directory")
    p.add_argument("frames_dir", help="directory of PGM frames")
    p.add_argument("-o", "--output", required=True, help="descriptor file to write")
    p.add_argument("--descriptor", choices=DESCRIPTOR_KINDS)
    p.add_argument("--detector", choices=DETECTOR_MODES)
    p.add_argument("--stride", type=int, help="dense-grid stride (default 8)")
    p.add_argument("--top-k", type=int, dest="top_k",
                   help="temporal-diff point budget (default 200)")
    p.add_argument("--label", type=int)
    p.add_argument("--subject", type=int)
    p.add_argument("--append-manifest", dest="append_manifest",
                   help="manifest CSV to append this video to")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("dict", help="train a k-means codebook from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("-o", "--output", required=True, help="codebook file to write")
    p.add_argument("-D", "--basis-size", type=int, dest="basis_size",
                   help="number of centers (default 1000)")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--rel-tol", type=float, dest="rel_tol")
    p.add_argument("--sample-cap", type=int, dest="sample_cap")
    p.add_argument("--gamma", help="'median' (default), 'none', or a value to store")
    _add_common(p)
    p.set_defaults(func=cmd_dict)

    p = sub.add_parser("featurize", help="descriptor files + codebook -> feature maps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("-o", "--output", required=True, help="feature file to write")
    p.add_argument("--mode", choices=("bof", "mmk"))
    p.add_argument("-L", "--levels", type=int)
    p.add_argument("--weights", help="comma-separated per-level scales (default 2^i)")
    p.add_argument("--gamma", help="'median', 'stored' (default), or a value")
    p.add_argument("--lam", type=float, help="Gram regularization (default 1e-8)")
    _add_common(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a linear model from a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("-o", "--output", required=True, help="model file to write")
    p.add_argument("-C", type=float, dest="C")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run an evaluation protocol on a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("-o", "--output", required=True, help="report file to write")
    p.add_argument("--protocol", choices=("split", "loso"))
    p.add_argument("--train-subjects", type=int, dest="train_subjects")
    p.add_argument("--runs", type=int)
    p.add_argument("-C", type=float, dest="C")
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--confusion-csv", dest="confusion_csv",
                   help="also write the confusion matrix as CSV")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("kernel-check",
                       help="audit feature-map dot products against exact kernel sums")
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("-L", "--levels", type=int)
    p.add_argument("--weights")
    p.add_argument("--gamma")
    p.add_argument("--lam", type=float)
    p.add_argument("--pairs", type=int, help="number of sampled video pairs (default 20)")
    p.add_argument("--tol", type=float, help="max relative deviation (default 1e-6)")
    _add_common(p)
    p.set_defaults(func=cmd_kernel_check)

    p = sub.add_parser("synth", help="generate the two-class synthetic dataset")
    p.add_argument("--outdir", required=True)
    p.add_argument("--samples-per-class", type=int, dest="samples_per_class")
    p.add_argument("--subjects", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--frame-size", type=int, dest="frame_size")
    p.add_argument("--blob-radius", type=float, dest="blob_radius")
    p.add_argument("--sigma", type=float)
    p.add_argument("--descriptor-dim", type=int, dest="descriptor_dim")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="time featurization; compare kernel backends")
    p.add_argument("--sizes", help="comma-separated descriptor counts")
    p.add_argument("--dim", type=int)
    p.add_argument("-D", "--basis-size", type=int, dest="basis_size")
    p.add_argument("-L", "--levels", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--backend", help="active (default), numpy, native, or both")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MMKError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
