"""Desk-scale objectives ``F(x; xi)`` with exact gradients.

Three model kinds share one flat parameter layout convention:

``logistic``
    Binary logistic regression without bias, ``n = d``.
``mlp``
    ``tanh`` hidden layer of ``width`` units followed by a logistic output.
    Parameters are laid out as ``W1 (width x d) | b1 | w2 | b2`` so
    ``n = width * d + 2 * width + 1``.
``quadratic``
    ``F(x; xi) = 0.5 * sum_j a_j (x_j - b_xi_j)**2`` where ``b_xi`` is the
    feature row of sample ``xi`` and ``a`` is the model curvature. Its
    smoothness constant is ``max(a)`` and its gradient variance is known in
    closed form, which makes it the reference objective for bound checks.

Sample indices are 0-based internally and drawn i.i.d. with replacement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from abssgd.numeric import ContractViolation, RngStream

MODEL_KINDS = ("logistic", "mlp", "quadratic")


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        if feats.ndim != 2 or labels.ndim != 1:
            raise ContractViolation("features must be 2-D and labels 1-D")
        if feats.shape[0] != labels.shape[0] or feats.shape[0] < 1:
            raise ContractViolation(
                f"need D >= 1 rows with matching labels, got {feats.shape[0]} and {labels.shape[0]}"
            )
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True, eq=False)
class SampleBatch:
    indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64).reshape(-1))

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    @classmethod
    def full(cls, data: Dataset) -> "SampleBatch":
        return cls(np.arange(data.size))

    def __add__(self, other: "SampleBatch") -> "SampleBatch":
        return SampleBatch(np.concatenate([self.indices, other.indices]))


def sample_batch(data: Dataset, size: int, rng: RngStream) -> SampleBatch:
    """Draw ``size`` indices i.i.d. uniformly (with replacement)."""
    return SampleBatch(rng.generator.integers(0, data.size, size=size))


@dataclass(frozen=True)
class Model:
    kind: str
    features: int
    width: int = 0
    curvature: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ContractViolation(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.features < 1:
            raise ContractViolation("features must be >= 1")
        if self.kind == "mlp" and self.width < 1:
            raise ContractViolation("mlp needs width >= 1")
        if self.kind == "quadratic":
            curv = self.curvature if self.curvature is not None else (1.0,) * self.features
            if len(curv) != self.features or min(curv) <= 0:
                raise ContractViolation("quadratic curvature must have d positive entries")
            object.__setattr__(self, "curvature", tuple(float(c) for c in curv))

    @property
    def n(self) -> int:
        if self.kind == "mlp":
            return self.width * self.features + 2 * self.width + 1
        return self.features

    def init_params(self, rng: RngStream | None = None) -> np.ndarray:
        """Zero start for convex kinds; small random weights for the MLP."""
        if self.kind != "mlp":
            return np.zeros(self.n)
        if rng is None:
            raise ContractViolation("mlp initialisation needs an rng")
        g = rng.generator
        w1 = g.normal(0.0, 1.0 / np.sqrt(self.features), size=(self.width, self.features))
        w2 = g.normal(0.0, 1.0 / np.sqrt(self.width), size=self.width)
        return np.concatenate([w1.ravel(), np.zeros(self.width), w2, [0.0]])

    def _unpack(self, x):
        h, d = self.width, self.features
        w1 = x[: h * d].reshape(h, d)
        b1 = x[h * d : h * d + h]
        w2 = x[h * d + h : h * d + 2 * h]
        b2 = x[-1]
        return w1, b1, w2, b2

    def _check(self, x: np.ndarray, data: Dataset) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ContractViolation(f"parameter vector has shape {x.shape}, model expects ({self.n},)")
        if data.dim != self.features:
            raise ContractViolation(f"dataset has {data.dim} features, model expects {self.features}")
        return x

    def logits(self, x: np.ndarray, feats: np.ndarray) -> np.ndarray:
        if self.kind == "logistic":
            return feats @ x
        if self.kind == "mlp":
            w1, b1, w2, b2 = self._unpack(x)
            return np.tanh(feats @ w1.T + b1) @ w2 + b2
        raise ContractViolation("quadratic model has no logits")

    def sample_losses(self, x: np.ndarray, idx: np.ndarray, data: Dataset) -> np.ndarray:
        x = self._check(x, data)
        feats = data.features[idx]
        if self.kind == "quadratic":
            diff = x - feats
            return 0.5 * (diff * diff) @ np.asarray(self.curvature)
        z = self.logits(x, feats)
        y = data.labels[idx]
        return np.logaddexp(0.0, z) - y * z

    def sample_grads(self, x: np.ndarray, idx: np.ndarray, data: Dataset) -> np.ndarray:
        """Per-sample gradients, one row per index."""
        x = self._check(x, data)
        feats = data.features[idx]
        if self.kind == "quadratic":
            return (x - feats) * np.asarray(self.curvature)
        y = data.labels[idx]
        if self.kind == "logistic":
            r = _sigmoid(feats @ x) - y
            return r[:, None] * feats
        w1, b1, w2, b2 = self._unpack(x)
        hid = np.tanh(feats @ w1.T + b1)
        r = _sigmoid(hid @ w2 + b2) - y
        dpre = (r[:, None] * w2) * (1.0 - hid * hid)
        g_w1 = dpre[:, :, None] * feats[:, None, :]
        return np.concatenate(
            [g_w1.reshape(len(idx), -1), dpre, r[:, None] * hid, r[:, None]], axis=1
        )

    def batch_grad_sum(self, x: np.ndarray, idx: np.ndarray, data: Dataset) -> np.ndarray:
        x = self._check(x, data)
        if len(idx) == 0:
            return np.zeros(self.n)
        feats = data.features[idx]
        if self.kind == "quadratic":
            return np.asarray(self.curvature) * (len(idx) * x - feats.sum(axis=0))
        y = data.labels[idx]
        if self.kind == "logistic":
            return feats.T @ (_sigmoid(feats @ x) - y)
        w1, b1, w2, b2 = self._unpack(x)
        hid = np.tanh(feats @ w1.T + b1)
        r = _sigmoid(hid @ w2 + b2) - y
        dpre = (r[:, None] * w2) * (1.0 - hid * hid)
        return np.concatenate([(dpre.T @ feats).ravel(), dpre.sum(axis=0), hid.T @ r, [r.sum()]])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def generate_synthetic(
    d: int, D: int, noise: float, rng: RngStream, scale: float = 1.0
) -> tuple[Dataset, np.ndarray]:
    """Linearly separable binary data from a Gaussian teacher, then label flips.

    Returns the dataset and the teacher weights. Each label is flipped
    independently with probability ``noise``.
    """
    if d < 1 or D < 1 or noise < 0:
        raise ContractViolation("need d >= 1, D >= 1 and noise >= 0")
    g = rng.generator
    w_true = g.standard_normal(d)
    feats = scale * g.standard_normal((D, d))
    clean = (feats @ w_true > 0).astype(np.float64)
    flips = g.random(D) < noise
    labels = np.where(flips, 1.0 - clean, clean)
    return Dataset(feats, labels), w_true


def loss(model: Model, x: np.ndarray, batch: SampleBatch, data: Dataset) -> float:
    """Mean per-sample loss over ``batch``."""
    if batch.size == 0:
        raise ContractViolation("loss of an empty batch is undefined")
    return float(np.mean(model.sample_losses(x, batch.indices, data)))


def full_loss(model: Model, x: np.ndarray, data: Dataset) -> float:
    return float(np.mean(model.sample_losses(x, np.arange(data.size), data)))


def grad_sum(model: Model, x: np.ndarray, batch: SampleBatch, data: Dataset) -> np.ndarray:
    """Unnormalised sum of per-sample gradients over the batch."""
    return model.batch_grad_sum(x, batch.indices, data)


def full_gradient(model: Model, x: np.ndarray, data: Dataset) -> np.ndarray:
    return model.batch_grad_sum(x, np.arange(data.size), data) / data.size


def accuracy(model: Model, x: np.ndarray, data: Dataset) -> float:
    pred = (model.logits(x, data.features) > 0).astype(np.float64)
    return float(np.mean(pred == data.labels))


def estimate_sigma_sq(
    model: Model, x: np.ndarray, data: Dataset, samples: int, rng: RngStream
) -> float:
    """Monte-Carlo estimate of ``E ||g(x; xi) - grad f(x)||^2`` around the exact full gradient."""
    if samples < 2:
        raise ContractViolation("need at least 2 samples")
    idx = rng.generator.integers(0, data.size, size=samples)
    dev = model.sample_grads(x, idx, data) - full_gradient(model, x, data)
    return float(np.mean(np.einsum("ij,ij->i", dev, dev)))


def exact_sigma_sq(model: Model, x: np.ndarray, data: Dataset) -> float:
    """Exhaustive variance over every sample; exact for the uniform index distribution."""
    dev = model.sample_grads(x, np.arange(data.size), data) - full_gradient(model, x, data)
    return float(np.mean(np.einsum("ij,ij->i", dev, dev)))


def estimate_lipschitz(
    model: Model,
    data: Dataset,
    probes: int,
    radius: float,
    rng: RngStream,
    center: np.ndarray | None = None,
) -> float:
    """Largest observed ``||grad f(x) - grad f(y)|| / ||x - y||`` over random pairs.

    Both points of each pair are drawn uniformly from the ball of ``radius``
    around ``center`` (origin by default). The result is a lower estimate of
    the true smoothness constant.
    """
    if probes < 1 or radius <= 0:
        raise ContractViolation("need probes >= 1 and radius > 0")
    c = np.zeros(model.n) if center is None else np.asarray(center, dtype=np.float64)
    best = 0.0
    for _ in range(probes):
        x = c + _uniform_ball(model.n, radius, rng)
        y = c + _uniform_ball(model.n, radius, rng)
        dist = np.linalg.norm(x - y)
        if dist == 0.0:
            continue
        ratio = np.linalg.norm(full_gradient(model, x, data) - full_gradient(model, y, data)) / dist
        best = max(best, float(ratio))
    return best


def _uniform_ball(n: int, radius: float, rng: RngStream) -> np.ndarray:
    g = rng.generator
    v = g.standard_normal(n)
    v /= np.linalg.norm(v)
    return radius * g.random() ** (1.0 / n) * v


def minimize_full_batch(
    model: Model, data: Dataset, x0: np.ndarray, step: float, iters: int = 100_000, tol: float = 0.0
) -> np.ndarray:
    """Plain full-batch gradient descent; stops early once ``||grad||^2 <= tol``."""
    x = np.array(x0, dtype=np.float64)
    for _ in range(iters):
        g = full_gradient(model, x, data)
        if tol > 0 and float(g @ g) <= tol:
            break
        x -= step * g
    return x


def logistic_smoothness_bound(data: Dataset) -> float:
    """``lambda_max(X^T X / D) / 4``, an upper bound on the logistic-loss smoothness."""
    gram = data.features.T @ data.features / data.size
    return float(np.linalg.eigvalsh(gram)[-1]) / 4.0


def save_dataset_csv(data: Dataset, path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j + 1}" for j in range(data.dim)] + ["label"])
            for row, y in zip(data.features, data.labels):
                w.writerow([repr(float(v)) for v in row] + [repr(float(y))])
    except OSError as exc:
        raise OSError(f"{path}: {exc}") from exc


def load_dataset_csv(path) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2 or rows[0][-1] != "label":
        raise ContractViolation(f"{path}: expected a header ending in 'label' and at least one row")
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    return Dataset(body[:, :-1], body[:, -1])
