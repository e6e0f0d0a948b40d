"""Linear one-vs-rest classification and subject-based evaluation protocols.

The binary solver minimizes the L2-regularized squared hinge
``0.5*||w||^2 + C * sum_i max(0, 1 - y_i*(w.x_i + b))^2`` with a damped
Newton method (conjugate-gradient steps, Armijo backtracking), so the
objective is non-increasing and training is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError


@dataclass(frozen=True)
class TrainParams:
    C: float = 1.0
    max_iters: int = 100
    grad_tol: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.C <= 0:
            raise ValueError(f"C must be > 0, got {self.C}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.grad_tol <= 0:
            raise ValueError(f"grad_tol must be > 0, got {self.grad_tol}")


@dataclass(frozen=True)
class LinearModel:
    """Per-class weight vectors and biases; prediction is the max score."""

    labels: tuple[int, ...]
    weights: np.ndarray  # (n_classes, dim)
    biases: np.ndarray   # (n_classes,)
    params: TrainParams = field(default_factory=TrainParams)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        biases = np.asarray(self.biases, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] != len(self.labels):
            raise ValueError("one weight vector per class is required")
        if biases.shape != (len(self.labels),):
            raise ValueError("one bias per class is required")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(biases))):
            raise ValueError("model parameters contain non-finite values")
        object.__setattr__(self, "labels", tuple(int(c) for c in self.labels))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def squared_hinge_objective(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray,
                            C: float) -> float:
    """Objective value of the binary problem; y must be +-1."""
    margins = 1.0 - y * (x @ w + b)
    active = np.maximum(margins, 0.0)
    return 0.5 * float(w @ w) + C * float(active @ active)


def fit_binary(x: np.ndarray, y: np.ndarray, params: TrainParams,
               ) -> tuple[np.ndarray, float, list[float]]:
    """Train one binary squared-hinge classifier.

    Returns (weights, bias, per-iteration objective values). The first
    objective entry is the value at the zero start; subsequent entries
    never increase.
    """
    n, dim = x.shape
    C = params.C
    theta = np.zeros(dim + 1)  # weights then bias

    def split(t):
        return t[:dim], t[dim]

    def objective(t):
        w, b = split(t)
        return squared_hinge_objective(w, b, x, y, C)

    def gradient(t):
        w, b = split(t)
        r = 1.0 - y * (x @ w + b)
        act = r > 0
        coeff = np.where(act, y * r, 0.0)
        g = np.empty(dim + 1)
        g[:dim] = w - 2.0 * C * (x.T @ coeff)
        g[dim] = -2.0 * C * float(coeff.sum())
        return g, act

    def hess_vec(v, act):
        vw, vb = split(v)
        s = np.where(act, x @ vw + vb, 0.0)
        h = np.empty(dim + 1)
        h[:dim] = vw + 2.0 * C * (x.T @ s)
        h[dim] = 2.0 * C * float(s.sum())
        return h

    def cg_solve(g, act):
        # approximate Newton direction: H p = -g
        p = np.zeros(dim + 1)
        r = -g.copy()
        d = r.copy()
        rr = float(r @ r)
        tol_sq = max(1e-10 * rr, 1e-300)
        for _ in range(min(dim + 1, 250)):
            hd = hess_vec(d, act)
            dhd = float(d @ hd)
            if dhd <= 0:
                break
            alpha = rr / dhd
            p += alpha * d
            r -= alpha * hd
            rr_new = float(r @ r)
            if rr_new <= tol_sq:
                break
            d = r + (rr_new / rr) * d
            rr = rr_new
        return p

    fval = objective(theta)
    history = [fval]
    for _ in range(params.max_iters):
        g, act = gradient(theta)
        if float(np.linalg.norm(g)) <= params.grad_tol:
            break
        p = cg_solve(g, act)
        slope = float(g @ p)
        if slope >= 0:
            p = -g
            slope = -float(g @ g)
        step = 1.0
        for _ in range(40):
            cand = theta + step * p
            fcand = objective(cand)
            if fcand <= fval + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            break  # no acceptable step; numerically converged
        theta = cand
        fval = fcand
        history.append(fval)
    w, b = split(theta)
    return w, float(b), history


def train_linear_ovr(features: np.ndarray, labels: np.ndarray,
                     params: TrainParams | None = None) -> LinearModel:
    """One-vs-rest linear training over raw feature vectors."""
    params = params or TrainParams()
    x = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2:
        raise ValueError(f"features must be (n, dim), got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise ValueError("need exactly one label per feature vector")
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise TrainingError(f"need at least 2 classes to train, got {len(classes)}")
    weights = np.empty((len(classes), x.shape[1]))
    biases = np.empty(len(classes))
    for i, cls in enumerate(classes):
        target = np.where(y == cls, 1.0, -1.0)
        weights[i], biases[i], _ = fit_binary(x, target, params)
    return LinearModel(labels=classes, weights=weights, biases=biases, params=params)


def decision_scores(model: LinearModel, features: np.ndarray) -> np.ndarray:
    """(n, n_classes) matrix of per-class scores."""
    features = np.asarray(features, dtype=np.float64)
    single = features.ndim == 1
    if single:
        features = features[None, :]
    if features.shape[1] != model.dim:
        raise ValueError(
            f"feature dimension {features.shape[1]} does not match model "
            f"dimension {model.dim}"
        )
    scores = features @ model.weights.T + model.biases
    return scores[0] if single else scores


def predict(model: LinearModel, feature: np.ndarray) -> tuple[int, np.ndarray]:
    """Predicted label and per-class scores; ties go to the lowest class index."""
    scores = decision_scores(model, np.asarray(feature, dtype=np.float64))
    return model.labels[int(np.argmax(scores))], scores


def predict_batch(model: LinearModel, features: np.ndarray) -> np.ndarray:
    scores = decision_scores(model, features)
    picks = np.argmax(scores, axis=1)
    return np.asarray(model.labels, dtype=np.int64)[picks]


@dataclass(frozen=True)
class FeatureDataset:
    """Feature vectors with class labels and subject ids."""

    features: np.ndarray  # (n, dim) float64
    labels: np.ndarray    # (n,) int64
    subjects: np.ndarray  # (n,) int64
    levels: int = 0       # pyramid levels used (0 for plain histograms)
    basis_size: int = 0

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        subjects = np.asarray(self.subjects, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"features must be (n, dim), got {features.shape}")
        n = features.shape[0]
        if labels.shape != (n,) or subjects.shape != (n,):
            raise ValueError("labels and subjects must both have one entry per row")
        if not np.all(np.isfinite(features)):
            raise ValueError("features contain non-finite values")
        if n and (labels.min() < 0 or subjects.min() < 0):
            raise ValueError("labels and subjects must be >= 0")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subjects", subjects)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class EvalReport:
    """Pooled accuracy, per-run accuracies and the pooled confusion matrix."""

    protocol: str
    labels: tuple[int, ...]
    confusion: np.ndarray  # (C, C) int64, rows = true class
    accuracy: float
    run_accuracies: tuple[float, ...]
    mean_accuracy: float
    std_accuracy: float
    seed: int = 0

    @property
    def n_runs(self) -> int:
        return len(self.run_accuracies)


def _run_fold(train_mask: np.ndarray, ds: FeatureDataset, params: TrainParams,
              labels: tuple[int, ...], confusion: np.ndarray) -> float:
    model = train_linear_ovr(ds.features[train_mask], ds.labels[train_mask], params)
    test = ~train_mask
    predicted = predict_batch(model, ds.features[test])
    actual = ds.labels[test]
    index = {c: i for i, c in enumerate(labels)}
    for a, p in zip(actual, predicted):
        confusion[index[int(a)], index[int(p)]] += 1
    return float(np.mean(predicted == actual))


def _finalize(protocol: str, labels, confusion, run_accs, seed) -> EvalReport:
    total = int(confusion.sum())
    return EvalReport(
        protocol=protocol,
        labels=tuple(labels),
        confusion=confusion,
        accuracy=float(np.trace(confusion)) / total if total else 0.0,
        run_accuracies=tuple(run_accs),
        mean_accuracy=float(np.mean(run_accs)),
        std_accuracy=float(np.std(run_accs)),
        seed=seed,
    )


def evaluate_subject_split(ds: FeatureDataset, n_train_subjects: int, n_runs: int,
                           seed: int = 0, params: TrainParams | None = None) -> EvalReport:
    """Repeated random subject splits: train on n subjects, test on the rest.

    Each run draws a uniform subject split from the seeded generator; the
    report pools the confusion matrix over runs.
    """
    params = params or TrainParams()
    subjects = np.unique(ds.subjects)
    if subjects.size < n_train_subjects + 1:
        raise ValueError(
            f"need more than {n_train_subjects} subjects, got {subjects.size}"
        )
    if n_train_subjects < 1 or n_runs < 1:
        raise ValueError("n_train_subjects and n_runs must be >= 1")
    labels = tuple(int(c) for c in np.unique(ds.labels))
    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    rng = np.random.default_rng(seed)
    run_accs = []
    for _ in range(n_runs):
        chosen = rng.choice(subjects, size=n_train_subjects, replace=False)
        train_mask = np.isin(ds.subjects, chosen)
        run_accs.append(_run_fold(train_mask, ds, params, labels, confusion))
    return _finalize("split", labels, confusion, run_accs, seed)


def evaluate_loso(ds: FeatureDataset, params: TrainParams | None = None) -> EvalReport:
    """Leave-one-subject-out: one fold per subject, pooled over folds."""
    params = params or TrainParams()
    subjects = np.unique(ds.subjects)
    if subjects.size < 2:
        raise ValueError(f"need at least 2 subjects, got {subjects.size}")
    labels = tuple(int(c) for c in np.unique(ds.labels))
    confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
    run_accs = []
    for held_out in subjects:
        train_mask = ds.subjects != held_out
        run_accs.append(_run_fold(train_mask, ds, params, labels, confusion))
    return _finalize("loso", labels, confusion, run_accs, seed=0)
