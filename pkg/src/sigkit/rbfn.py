"""Gaussian radial basis function network with a linear output layer.

Two ways to fit it: exact interpolation (one hidden unit per training sample,
output weights from a ridge-regularized linear solve) and full-batch gradient
descent on the squared-error cost ``0.5 * sum(e**2)`` with respect to the
output weights, the centers and the per-unit widths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets

from .errors import (
    DimensionMismatch,
    DuplicateConflict,
    FileNotFound,
    NonFiniteCost,
    NonPositiveWidth,
    SingularSystem,
)
from .imagecore import atomic_write_bytes
from .validation import check_features, check_is_fitted_attr, check_vector

DEFAULT_SPREAD = 0.5
DEFAULT_RIDGE = 1e-8
DEFAULT_RATES = (1e-2, 1e-3, 1e-3)
DEFAULT_REJECT = 0.5
MODEL_FORMAT = 1


class _Rejected:
    """Sentinel returned by :func:`classify` when no score clears the threshold."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "Rejected"

    __str__ = __repr__

    def __reduce__(self):
        return (_Rejected, ())


REJECTED = _Rejected()


@dataclass(frozen=True, eq=False)
class RbfnModel:
    centers: np.ndarray   # (M, d)
    widths: np.ndarray    # (M,)
    weights: np.ndarray   # (M, L)
    class_labels: tuple
    spread: float = DEFAULT_SPREAD

    def __post_init__(self):
        centers = np.array(self.centers, dtype=np.float64, ndmin=2)
        widths = np.array(self.widths, dtype=np.float64).ravel()
        weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        labels = tuple(self.class_labels)
        m = centers.shape[0]
        if widths.shape != (m,):
            raise DimensionMismatch(f"{m} centers but {widths.size} widths")
        if weights.shape != (m, len(labels)):
            raise DimensionMismatch(f"weights {weights.shape}, expected ({m}, {len(labels)})")
        if not labels or len(set(labels)) != len(labels):
            raise ValueError("class labels must be unique and nonempty")
        if not np.all(widths > 0):
            raise NonPositiveWidth("all widths must be positive")
        for a in (centers, widths, weights):
            a.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "class_labels", labels)

    @property
    def n_units(self) -> int:
        return self.centers.shape[0]

    @property
    def n_features(self) -> int:
        return self.centers.shape[1]


@dataclass
class TrainState:
    epoch: int = 0
    mse: float = float("nan")
    learning_rates: tuple[float, float, float] = DEFAULT_RATES
    history: list[float] = field(default_factory=list)


def activation(x, center, width: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if x.shape != center.shape:
        raise DimensionMismatch(f"input {x.shape} vs center {center.shape}")
    if not width > 0:
        raise NonPositiveWidth(f"width must be positive, got {width}")
    d = x - center
    return float(np.exp(-np.dot(d.ravel(), d.ravel()) / (2.0 * width * width)))


def _sq_dists(X, centers):
    # direct differences rather than the expanded form: exact zeros matter
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nmd,nmd->nm", diff, diff)


def hidden_layer(model: RbfnModel, X) -> np.ndarray:
    """Gaussian responses, shape (n_samples, n_units)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(f"expected inputs of width {model.n_features}, got {X.shape}")
    return np.exp(-_sq_dists(X, model.centers) / (2.0 * model.widths ** 2))


def forward(model: RbfnModel, x) -> np.ndarray:
    """Output scores for one input; the output layer is linear."""
    x = check_vector(x, model.n_features)
    return hidden_layer(model, x[None, :])[0] @ model.weights


def scores(model: RbfnModel, X) -> np.ndarray:
    return hidden_layer(model, X) @ model.weights


def _split_samples(samples):
    X, y = [], []
    for vec, label in samples:
        X.append(np.asarray(vec, dtype=np.float64).ravel())
        y.append(label)
    if not X:
        raise ValueError("no samples")
    X = np.vstack(X)
    if not np.all(np.isfinite(X)):
        raise ValueError("feature vectors must be finite")
    return X, y


def one_hot(y, class_labels) -> np.ndarray:
    index = {c: i for i, c in enumerate(class_labels)}
    D = np.zeros((len(y), len(class_labels)))
    D[np.arange(len(y)), [index[c] for c in y]] = 1.0
    return D


def _sorted_labels(y) -> tuple:
    try:
        return tuple(sorted(set(y)))
    except TypeError:
        return tuple(dict.fromkeys(y))


def _check_duplicates(X, y):
    seen = {}
    for row, label in zip(X, y):
        key = row.tobytes()
        if key in seen and seen[key] != label:
            raise DuplicateConflict(
                f"identical feature vectors labelled {seen[key]!r} and {label!r}"
            )
        seen.setdefault(key, label)


def center_indices(n_samples: int, n_centers: int | None) -> np.ndarray:
    """Every ceil(N/M)-th sample; all of them when ``n_centers`` is None or >= N."""
    if n_centers is None or n_centers >= n_samples:
        return np.arange(n_samples)
    if n_centers < 1:
        raise ValueError("n_centers must be at least 1")
    return np.arange(0, n_samples, math.ceil(n_samples / n_centers))


def fit_exact(samples, spread: float = DEFAULT_SPREAD, *, ridge: float = DEFAULT_RIDGE,
              n_centers: int | None = None) -> RbfnModel:
    """Interpolating fit: centers at the samples, all widths ``spread``.

    Solves ``(G + ridge*I) w = D`` for one-hot targets ``D``. With fewer
    centers than samples the ridge normal equations are solved instead.
    """
    X, y = _split_samples(samples)
    if len(y) < 2:
        raise ValueError("need at least two samples")
    if not spread > 0:
        raise NonPositiveWidth(f"spread must be positive, got {spread}")
    _check_duplicates(X, y)
    labels = _sorted_labels(y)
    D = one_hot(y, labels)
    idx = center_indices(len(y), n_centers)
    centers = X[idx]
    widths = np.full(len(idx), float(spread))
    G = np.exp(-_sq_dists(X, centers) / (2.0 * spread * spread))
    if len(idx) == len(y):
        A, B = G + ridge * np.eye(len(y)), D
    else:
        A, B = G.T @ G + ridge * np.eye(len(idx)), G.T @ D
    try:
        W = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    return RbfnModel(centers, widths, W, labels, float(spread))


def init_model(samples, spread: float = DEFAULT_SPREAD, *, n_centers: int | None = None,
               seed: int | None = None, weight_scale: float = 0.0) -> RbfnModel:
    """Untrained network: centers on (a subset of) the samples, widths
    ``spread``, output weights zero or small seeded Gaussians."""
    X, y = _split_samples(samples)
    labels = _sorted_labels(y)
    idx = center_indices(len(y), n_centers)
    W = np.zeros((len(idx), len(labels)))
    if weight_scale > 0:
        W = np.random.default_rng(seed).normal(0.0, weight_scale, W.shape)
    return RbfnModel(X[idx], np.full(len(idx), float(spread)), W, labels, float(spread))


def cost_gradients(model: RbfnModel, X, D):
    """Cost ``0.5 * sum(e**2)`` and its gradients w.r.t. weights, centers, widths."""
    X = np.asarray(X, dtype=np.float64)
    diff = X[:, None, :] - model.centers[None, :, :]      # (N, M, d)
    r2 = np.einsum("nmd,nmd->nm", diff, diff)
    s2 = model.widths ** 2
    G = np.exp(-r2 / (2.0 * s2))                          # (N, M)
    E = D - G @ model.weights                             # (N, L)
    cost = 0.5 * float(np.sum(E * E))
    grad_w = -G.T @ E
    B = (E @ model.weights.T) * G                         # dcost/dG = -E w^T
    grad_t = -np.einsum("nm,nmd->md", B, diff) / s2[:, None]
    grad_s = -np.sum(B * r2, axis=0) / model.widths ** 3
    return cost, grad_w, grad_t, grad_s


def mse(model: RbfnModel, samples) -> float:
    """Mean over samples of the squared error summed over outputs (2*cost/N)."""
    X, y = _split_samples(samples)
    E = one_hot(y, model.class_labels) - scores(model, X)
    return float(np.sum(E * E) / len(y))


def train_gradient(model: RbfnModel, samples, rates=DEFAULT_RATES, epochs: int = 100
                   ) -> tuple[RbfnModel, TrainState]:
    """Full-batch gradient descent on all free parameters.

    ``rates`` are the step sizes for (weights, centers, widths); a zero rate
    freezes that group. ``history[k]`` is the MSE after ``k + 1`` epochs.
    """
    eta_w, eta_t, eta_s = (float(r) for r in rates)
    if min(eta_w, eta_t, eta_s) < 0 or max(eta_w, eta_t, eta_s) == 0:
        raise ValueError(f"rates must be non-negative and not all zero, got {rates}")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    X, y = _split_samples(samples)
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"expected inputs of width {model.n_features}, got {X.shape[1]}")
    D = one_hot(y, model.class_labels)
    n = len(y)

    W = model.weights.copy()
    T = model.centers.copy()
    S = model.widths.copy()
    state = TrainState(learning_rates=(eta_w, eta_t, eta_s))
    for epoch in range(1, epochs + 1):
        current = RbfnModel(T, S, W, model.class_labels, model.spread)
        _, gw, gt, gs = cost_gradients(current, X, D)
        W = W - eta_w * gw
        T = T - eta_t * gt
        S = S - eta_s * gs
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(T)) and np.all(np.isfinite(S))):
            raise NonFiniteCost(f"parameters became non-finite at epoch {epoch}; lower the rates")
        if not np.all(S > 0):
            raise NonFiniteCost(f"a width collapsed to {S.min():.3g} at epoch {epoch}; lower the rates")
        cost = 0.5 * float(np.sum((D - np.exp(-_sq_dists(X, T) / (2.0 * S ** 2)) @ W) ** 2))
        if not math.isfinite(cost):
            raise NonFiniteCost(f"cost is {cost} at epoch {epoch}; lower the rates")
        state.history.append(2.0 * cost / n)
        state.epoch = epoch
    state.mse = state.history[-1]
    return RbfnModel(T, S, W, model.class_labels, model.spread), state


def classify(model: RbfnModel, x, reject_threshold: float = DEFAULT_REJECT):
    """Label with the highest score, or ``REJECTED`` below the threshold.

    Ties go to the lowest class index.
    """
    out = forward(model, x)
    best = int(np.argmax(out))
    if out[best] < reject_threshold:
        return REJECTED
    return model.class_labels[best]


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x}")
    return f"{x:.17g}"


def _vec(v) -> str:
    return "[" + ", ".join(_num(a) for a in v) + "]"


def _mat(m) -> str:
    return "[\n    " + ",\n    ".join(_vec(row) for row in m) + "\n  ]"


def model_to_json(model: RbfnModel) -> str:
    labels = json.dumps([_plain(c) for c in model.class_labels])
    return (
        "{\n"
        f'  "format": {MODEL_FORMAT},\n'
        f'  "spread": {_num(model.spread)},\n'
        f'  "class_labels": {labels},\n'
        f'  "centers": {_mat(model.centers)},\n'
        f'  "widths": {_vec(model.widths)},\n'
        f'  "weights": {_mat(model.weights)}\n'
        "}\n"
    )


def _plain(label):
    if isinstance(label, np.generic):
        return label.item()
    return label


def model_from_json(text: str) -> RbfnModel:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    return RbfnModel(
        centers=np.array(doc["centers"], dtype=np.float64),
        widths=np.array(doc["widths"], dtype=np.float64),
        weights=np.array(doc["weights"], dtype=np.float64),
        class_labels=tuple(doc["class_labels"]),
        spread=float(doc["spread"]),
    )


def save_model(model: RbfnModel, path) -> None:
    atomic_write_bytes(path, model_to_json(model).encode("utf-8"))


def load_model(path) -> RbfnModel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFound(f"no such file: {path}") from None
    return model_from_json(text)


class RBFNClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn wrapper: exact interpolation, then optional gradient epochs.

    Parameters
    ----------
    spread : float
        Initial width of every Gaussian unit.
    ridge : float
        Diagonal term added to the interpolation matrix.
    n_centers : int or None
        Hidden-layer size; None puts a unit on every training sample.
    epochs : int
        Gradient-descent epochs run after the exact fit (0 skips refinement).
    rates : tuple of float
        Step sizes for weights, centers and widths.
    """

    def __init__(self, spread=DEFAULT_SPREAD, ridge=DEFAULT_RIDGE, n_centers=None,
                 epochs=0, rates=DEFAULT_RATES):
        self.spread = spread
        self.ridge = ridge
        self.n_centers = n_centers
        self.epochs = epochs
        self.rates = rates

    def fit(self, X, y):
        X = check_features(X)
        check_classification_targets(y)
        y = list(np.asarray(y).tolist())
        samples = list(zip(X, y))
        model = fit_exact(samples, self.spread, ridge=self.ridge, n_centers=self.n_centers)
        self.train_state_ = None
        if self.epochs:
            model, self.train_state_ = train_gradient(model, samples, self.rates, self.epochs)
        self.model_ = model
        self.classes_ = np.array(model.class_labels)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted_attr(self, "model_")
        return scores(self.model_, check_features(X, self.n_features_in_))

    def predict(self, X):
        out = self.decision_function(X)
        return self.classes_[np.argmax(out, axis=1)]
