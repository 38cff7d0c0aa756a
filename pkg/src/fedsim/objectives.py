"""Objective families, datasets, and batch evaluation.

Three hand-coded objective kinds share one evaluation surface:

- ``Quadratic``: f(w) = 0.5 (w-c)^T A (w-c), data-independent. Carries its
  exact smoothness constant and closed-form minimizer, so it doubles as the
  oracle family for the analysis checks.
- ``Logistic``: multinomial softmax cross-entropy, parameters are the
  flattened (features x classes) weight matrix. No intercept column, so the
  parameter count is exactly features*classes.
- ``SmallNet``: one tanh hidden layer + softmax readout. Smoothness is a
  declared configuration value, flagged as heuristic.

Losses are means over the evaluated batch plus (lam/2)*||w||^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer labels in [0, n_classes)."""

    features: np.ndarray  # (n, p) float64
    labels: np.ndarray  # (n,) int64
    n_classes: int
    name: str = ""

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if feats.ndim != 2:
            raise ConfigError(f"dataset '{self.name}': features must be 2-d, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise ConfigError(
                f"dataset '{self.name}': labels must be 1-d with one entry per row "
                f"({labels.shape} vs {feats.shape[0]} rows)"
            )
        if self.n_classes < 1:
            raise ConfigError(f"dataset '{self.name}': n_classes must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ConfigError(
                f"dataset '{self.name}': labels must lie in [0, {self.n_classes})"
            )
        if not np.isfinite(feats).all():
            bad = int(np.flatnonzero(~np.isfinite(feats).all(axis=1))[0])
            raise ConfigError(f"dataset '{self.name}': non-finite feature row at index {bad}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


def make_batch(data: Dataset, indices) -> np.ndarray:
    """Validated batch: non-empty, unique, in-range indices into ``data``."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ConfigError("batch must be a non-empty 1-d index list")
    if np.unique(idx).size != idx.size:
        raise ConfigError("batch indices must be unique")
    if idx.min() < 0 or idx.max() >= data.n:
        raise ConfigError(f"batch index out of range for dataset of size {data.n}")
    return idx


def _resolve_batch(data: Dataset, batch) -> np.ndarray:
    if batch is None:
        if data.n == 0:
            raise ConfigError("cannot evaluate on an empty dataset")
        return np.arange(data.n, dtype=np.int64)
    idx = np.asarray(batch, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ConfigError("batch must be a non-empty 1-d index list")
    if idx.min() < 0 or idx.max() >= data.n:
        raise ConfigError(f"batch index out of range for dataset of size {data.n}")
    return idx


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


@dataclass(frozen=True)
class Quadratic:
    """f(w) = 0.5 (w-c)^T A (w-c) + (lam/2)||w||^2; A is PSD.

    ``curvature`` may be a diagonal vector (d,) or a full matrix (d, d).
    Batch arguments are accepted for interface parity and ignored: every
    sample of the owning client sees the same loss.
    """

    curvature: np.ndarray
    center: np.ndarray
    lam: float = 0.0

    kind = "quadratic"
    heuristic_smoothness = False

    def __post_init__(self):
        a = np.asarray(self.curvature, dtype=np.float64)
        c = np.asarray(self.center, dtype=np.float64)
        object.__setattr__(self, "curvature", a)
        object.__setattr__(self, "center", c)
        if c.ndim != 1:
            raise ConfigError("quadratic center must be a vector")
        if a.ndim == 1:
            if a.shape != c.shape:
                raise ConfigError("diagonal curvature must match center length")
            if a.min() < 0:
                raise ConfigError("quadratic curvature must be positive semidefinite")
        elif a.ndim == 2:
            if a.shape != (c.size, c.size):
                raise ConfigError("curvature matrix must be (d, d) matching the center")
            if not np.allclose(a, a.T, atol=1e-12):
                raise ConfigError("curvature matrix must be symmetric")
            if np.linalg.eigvalsh(a).min() < -1e-10:
                raise ConfigError("quadratic curvature must be positive semidefinite")
        else:
            raise ConfigError("curvature must be a vector or a square matrix")
        if self.lam < 0:
            raise ConfigError("weight decay must be >= 0")

    @property
    def dim(self) -> int:
        return self.center.size

    def apply_curvature(self, v: np.ndarray) -> np.ndarray:
        if self.curvature.ndim == 1:
            return self.curvature * v
        return self.curvature @ v

    def raw_loss(self, w: np.ndarray) -> float:
        diff = w - self.center
        return 0.5 * float(diff @ self.apply_curvature(diff)) + 0.5 * self.lam * float(w @ w)

    def batch_loss(self, w, X, labels) -> float:
        return self.raw_loss(w)

    def batch_grad(self, w, X, labels) -> np.ndarray:
        return self.apply_curvature(w - self.center) + self.lam * w

    def lipschitz(self, data: Dataset | None = None) -> float:
        if self.curvature.ndim == 1:
            top = float(self.curvature.max())
        else:
            top = float(np.linalg.eigvalsh(self.curvature).max())
        return top + self.lam


@dataclass(frozen=True)
class Logistic:
    """Multinomial softmax cross-entropy over a flattened weight matrix."""

    n_features: int
    n_classes: int
    lam: float = 0.0

    kind = "logistic"
    heuristic_smoothness = False

    def __post_init__(self):
        if self.n_features < 1 or self.n_classes < 2:
            raise ConfigError("logistic needs >= 1 feature and >= 2 classes")
        if self.lam < 0:
            raise ConfigError("weight decay must be >= 0")

    @property
    def dim(self) -> int:
        return self.n_features * self.n_classes

    def _weights(self, w: np.ndarray) -> np.ndarray:
        if w.size != self.dim:
            raise ConfigError(f"parameter vector has size {w.size}, expected {self.dim}")
        return w.reshape(self.n_features, self.n_classes)

    def batch_loss(self, w, X, labels) -> float:
        W = self._weights(w)
        logp = _log_softmax(X @ W)
        nll = -logp[np.arange(X.shape[0]), labels]
        return float(nll.mean()) + 0.5 * self.lam * float(w @ w)

    def batch_grad(self, w, X, labels) -> np.ndarray:
        W = self._weights(w)
        logits = X @ W
        probs = np.exp(_log_softmax(logits))
        probs[np.arange(X.shape[0]), labels] -= 1.0
        g = X.T @ probs / X.shape[0]
        return g.ravel() + self.lam * w

    def predict(self, w, X) -> np.ndarray:
        return np.argmax(X @ self._weights(w), axis=1)

    def lipschitz(self, data: Dataset) -> float:
        # Softmax cross-entropy Hessian satisfies H <= (1/2) I_k kron (X^T X / n):
        # the per-class curvature diag(p) - p p^T is at most I/2 (tight at
        # p = (1/2, 1/2)), i.e. a per-class factor of 2 on the classic 1/4.
        second_moment = data.features.T @ data.features / data.n
        return 0.25 * 2.0 * float(np.linalg.eigvalsh(second_moment).max()) + self.lam


@dataclass(frozen=True)
class SmallNet:
    """One tanh hidden layer + softmax readout.

    Parameters are the flattened (W1, b1, W2, b2). The smoothness constant is
    not certified; ``declared_lipschitz`` is reported with a heuristic flag.
    """

    n_features: int
    hidden: int
    n_classes: int
    lam: float = 0.0
    declared_lipschitz: float = 10.0

    kind = "smallnet"
    heuristic_smoothness = True

    def __post_init__(self):
        if min(self.n_features, self.hidden) < 1 or self.n_classes < 2:
            raise ConfigError("smallnet needs >= 1 feature, >= 1 hidden unit, >= 2 classes")
        if self.lam < 0 or self.declared_lipschitz <= 0:
            raise ConfigError("smallnet needs lam >= 0 and declared_lipschitz > 0")

    @property
    def dim(self) -> int:
        p, h, k = self.n_features, self.hidden, self.n_classes
        return p * h + h + h * k + k

    def unpack(self, w: np.ndarray):
        p, h, k = self.n_features, self.hidden, self.n_classes
        if w.size != self.dim:
            raise ConfigError(f"parameter vector has size {w.size}, expected {self.dim}")
        o = 0
        W1 = w[o : o + p * h].reshape(p, h)
        o += p * h
        b1 = w[o : o + h]
        o += h
        W2 = w[o : o + h * k].reshape(h, k)
        o += h * k
        b2 = w[o : o + k]
        return W1, b1, W2, b2

    def _forward(self, w, X):
        W1, b1, W2, b2 = self.unpack(w)
        hidden = np.tanh(X @ W1 + b1)
        return hidden, hidden @ W2 + b2

    def batch_loss(self, w, X, labels) -> float:
        _, logits = self._forward(w, X)
        logp = _log_softmax(logits)
        nll = -logp[np.arange(X.shape[0]), labels]
        return float(nll.mean()) + 0.5 * self.lam * float(w @ w)

    def batch_grad(self, w, X, labels) -> np.ndarray:
        W1, b1, W2, b2 = self.unpack(w)
        n = X.shape[0]
        hidden = np.tanh(X @ W1 + b1)
        logits = hidden @ W2 + b2
        probs = np.exp(_log_softmax(logits))
        probs[np.arange(n), labels] -= 1.0
        probs /= n
        gW2 = hidden.T @ probs
        gb2 = probs.sum(axis=0)
        back = (probs @ W2.T) * (1.0 - hidden**2)
        gW1 = X.T @ back
        gb1 = back.sum(axis=0)
        g = np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])
        return g + self.lam * w

    def predict(self, w, X) -> np.ndarray:
        _, logits = self._forward(w, X)
        return np.argmax(logits, axis=1)

    def lipschitz(self, data: Dataset | None = None) -> float:
        return self.declared_lipschitz + self.lam


Objective = Quadratic | Logistic | SmallNet


def _first_bad_sample(obj, w, X, labels) -> int:
    for j in range(X.shape[0]):
        val = obj.batch_loss(w, X[j : j + 1], labels[j : j + 1])
        if not np.isfinite(val):
            return j
    return 0


def eval_loss(obj: Objective, w: np.ndarray, data: Dataset, batch=None) -> float:
    """Mean per-sample loss over the batch (full dataset when batch is None)."""
    w = np.asarray(w, dtype=np.float64)
    idx = _resolve_batch(data, batch)
    X, labels = data.features[idx], data.labels[idx]
    val = obj.batch_loss(w, X, labels)
    if not np.isfinite(val):
        bad = idx[_first_bad_sample(obj, w, X, labels)]
        raise NumericError(f"non-finite loss; first offending sample index {bad}")
    return val


def eval_grad(obj: Objective, w: np.ndarray, data: Dataset, batch=None) -> np.ndarray:
    """Gradient of ``eval_loss`` with respect to w."""
    w = np.asarray(w, dtype=np.float64)
    idx = _resolve_batch(data, batch)
    X, labels = data.features[idx], data.labels[idx]
    g = obj.batch_grad(w, X, labels)
    if not np.isfinite(g).all():
        bad = idx[_first_bad_sample(obj, w, X, labels)]
        raise NumericError(f"non-finite gradient; first offending sample index {bad}")
    return g


def lipschitz_bound(obj: Objective, data: Dataset | None = None) -> float:
    """Smoothness constant of eval_grad over the full dataset.

    Exact for Quadratic, a certified upper bound for Logistic, and the
    declared heuristic value for SmallNet (``obj.heuristic_smoothness``).
    """
    if isinstance(obj, Logistic):
        if data is None:
            raise ConfigError("logistic smoothness bound needs the dataset")
        return obj.lipschitz(data)
    return obj.lipschitz(data)


def quadratic_consensus_optimum(objectives: list[Quadratic]) -> tuple[np.ndarray, float]:
    """Exact minimizer and value of sum_i f_i for a quadratic ensemble."""
    if not objectives:
        raise ConfigError("need at least one objective")
    d = objectives[0].dim
    H = np.zeros((d, d))
    rhs = np.zeros(d)
    for obj in objectives:
        if not isinstance(obj, Quadratic) or obj.dim != d:
            raise ConfigError("consensus optimum needs quadratics of equal dimension")
        A = np.diag(obj.curvature) if obj.curvature.ndim == 1 else obj.curvature
        H += A + obj.lam * np.eye(d)
        rhs += A @ obj.center
    theta_star = np.linalg.solve(H, rhs)
    f_star = float(sum(obj.raw_loss(theta_star) for obj in objectives))
    return theta_star, f_star


def placeholder_dataset(name: str = "quadratic") -> Dataset:
    """Single-row stand-in dataset for data-independent objectives."""
    return Dataset(np.zeros((1, 1)), np.zeros(1, dtype=np.int64), 1, name=name)
