"""Fully-connected network, masked weighted cross-entropy, and a training loop.

The network is plain numpy: ReLU hidden layers and a final linear layer whose
width equals the head's input width. Gradients are hand-written backprop.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, NumericalError, RuleheadError
from .heads import Head
from .schema import ConceptSchema

log = logging.getLogger(__name__)

P_FLOOR = 1e-12


@dataclass
class Dataset:
    features: np.ndarray  # (n, a) float
    labels: np.ndarray  # (n, m+1) int, 1-based outcomes or -1

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 2 or len(self.features) != len(self.labels):
            raise DimensionMismatch(
                f"features {self.features.shape} and labels {self.labels.shape} do not line up"
            )

    def __len__(self):
        return len(self.features)

    def subset(self, idx) -> Dataset:
        return Dataset(self.features[idx], self.labels[idx])

    def check(self, schema: ConceptSchema):
        if self.labels.shape[1] != len(schema):
            raise DimensionMismatch(f"labels have {self.labels.shape[1]} columns, schema has {len(schema)} concepts")
        for i, n in enumerate(schema.sizes):
            col = self.labels[:, i]
            bad = (col != -1) & ((col < 1) | (col > n))
            if bad.any():
                raise DimensionMismatch(f"concept {i} has labels outside 1..{n}")

    def save(self, path):
        np.savez_compressed(path, features=self.features, labels=self.labels)

    @classmethod
    def load(cls, path) -> Dataset:
        try:
            with np.load(path) as z:
                return cls(z["features"], z["labels"])
        except (OSError, KeyError, ValueError) as e:
            raise RuleheadError(f"cannot read dataset {path}: {e}") from e


@dataclass
class TrainConfig:
    hidden: tuple = (64, 64)
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"  # or "sgd"
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    head: str = "as"
    weights: list | None = None  # per-concept loss weights; default 1 / #labelled
    input_dim: int | None = None  # if set, must match the data

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h <= 0 for h in self.hidden) or self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise RuleheadError("sizes, epochs, batch size and learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise RuleheadError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def load(cls, path) -> TrainConfig:
        try:
            return cls(**json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise RuleheadError(f"bad config {path}: {e}") from e

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def default_weights(dataset: Dataset) -> np.ndarray:
    counts = (dataset.labels != -1).sum(axis=0)
    return 1.0 / np.maximum(1, counts)


def _label_terms(p, labels, schema):
    """Per-concept (probability of the true outcome, labelled mask)."""
    probs, masks = [], []
    for i, sl in enumerate(schema.block_slices()):
        lab = labels[:, i]
        known = lab != -1
        idx = np.where(known, lab - 1, 0)
        probs.append(p[np.arange(len(p)), sl.start + idx])
        masks.append(known)
    return np.stack(probs, 1), np.stack(masks, 1)


def masked_ce_loss(p, labels, weights, schema: ConceptSchema, per_concept=False):
    """Summed, weighted cross-entropy that skips labels equal to -1."""
    p = np.atleast_2d(p)
    labels = np.atleast_2d(labels)
    probs, known = _label_terms(p, labels, schema)
    nll = -np.log(np.maximum(probs, P_FLOOR)) * known
    per = nll.sum(axis=0) * np.asarray(weights)
    return per if per_concept else float(per.sum())


def masked_ce_grad(p, labels, weights, schema: ConceptSchema):
    """d loss / d p, same shape as p."""
    p = np.atleast_2d(p)
    g = np.zeros_like(p)
    rows = np.arange(len(p))
    for i, sl in enumerate(schema.block_slices()):
        lab = labels[:, i]
        known = lab != -1
        idx = sl.start + np.where(known, lab - 1, 0)
        val = p[rows, idx]
        g[rows, idx] += np.where(known & (val > P_FLOOR), -weights[i] / np.maximum(val, P_FLOOR), 0.0)
    return g


class MLP:
    def __init__(self, sizes, rng):
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self):
        return self.weights + self.biases

    def forward(self, x):
        acts = [x]
        h = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < len(self.weights) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h, acts

    def backward(self, acts, g_out):
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        g = g_out
        for k in reversed(range(len(self.weights))):
            if k < len(self.weights) - 1:
                g = g * (acts[k + 1] > 0)
            gw[k] = acts[k].T @ g
            gb[k] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return gw + gb


class Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1**self.t
        c2 = 1 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params, lr, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.vel = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.vel):
            v *= self.momentum
            v -= self.lr * g
            p += v


@dataclass
class Model:
    net: MLP
    head: Head
    history: list = field(default_factory=list)  # one dict per epoch

    def predict_proba(self, features, batch=4096):
        out = []
        for start in range(0, len(features), batch):
            z, _ = self.net.forward(np.asarray(features[start : start + batch], dtype=float))
            out.append(self.head.forward(z)[0])
        return np.concatenate(out) if out else np.zeros((0, self.head.output_width))

    def predict(self, features):
        p = self.predict_proba(features)
        return np.stack([p[:, sl].argmax(axis=1) + 1 for sl in self.head.schema.block_slices()], axis=1)

    def loss_and_grads(self, x, labels, weights, scale=1.0):
        z, acts = self.net.forward(x)
        p, cache = self.head.forward(z)
        loss = masked_ce_loss(p, labels, weights, self.head.schema)
        g_p = masked_ce_grad(p, labels, weights, self.head.schema) * scale
        g_z = self.head.backward(cache, g_p)
        return loss, self.net.backward(acts, g_z), p

    def to_dict(self) -> dict:
        return {
            "head": self.head.kind,
            "head_input_width": self.head.input_width,
            "layers": [
                {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.net.weights, self.net.biases)
            ],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path, head: Head) -> Model:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            net = MLP.__new__(MLP)
            net.weights = [np.array(l["weights"], dtype=float).reshape(l["shape"]) for l in doc["layers"]]
            net.biases = [np.array(l["bias"], dtype=float) for l in doc["layers"]]
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as e:
            raise RuleheadError(f"cannot read checkpoint {path}: {e}") from e
        if net.sizes[-1] != head.input_width:
            raise DimensionMismatch(
                f"checkpoint output width {net.sizes[-1]} does not match head input width {head.input_width}"
            )
        return cls(net, head)

    def write_log(self, path):
        if not self.history:
            return
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.history[0]))
            w.writeheader()
            w.writerows(self.history)


def train(config: TrainConfig, dataset: Dataset, head: Head, callback=None) -> Model:
    """Minibatch training; deterministic given ``config.seed``.

    The loss is the summed weighted masked cross-entropy over the whole
    dataset. Each minibatch gradient is scaled by n / batch so it estimates
    the gradient of that total.
    """
    schema = head.schema
    dataset.check(schema)
    if config.input_dim is not None and config.input_dim != dataset.features.shape[1]:
        raise DimensionMismatch(
            f"config input_dim {config.input_dim} does not match data width {dataset.features.shape[1]}"
        )
    rng = np.random.default_rng(config.seed)
    sizes = [dataset.features.shape[1], *config.hidden, head.input_width]
    net = MLP(sizes, rng)
    model = Model(net, head)
    weights = np.asarray(config.weights if config.weights is not None else default_weights(dataset), dtype=float)
    if len(weights) != len(schema):
        raise DimensionMismatch(f"{len(weights)} concept weights for {len(schema)} concepts")
    params = net.params()
    opt = Adam(params, config.lr) if config.optimizer == "adam" else SGD(params, config.lr, config.momentum)
    n = len(dataset)
    names = [c.name for c in schema.concepts]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads, _ = model.loss_and_grads(
                dataset.features[idx], dataset.labels[idx], weights, scale=n / len(idx)
            )
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            if config.weight_decay:
                grads = [g + config.weight_decay * p for g, p in zip(grads, params)]
            opt.step(params, grads)
        p = model.predict_proba(dataset.features)
        per = masked_ce_loss(p, dataset.labels, weights, schema, per_concept=True)
        total = float(per.sum())
        if not np.isfinite(total):
            raise NumericalError(f"non-finite loss after epoch {epoch}")
        row = {"epoch": epoch, "loss": total}
        row.update({f"loss_{name}": float(v) for name, v in zip(names, per)})
        model.history.append(row)
        if callback is not None:
            callback(epoch, model, p)
        log.debug("epoch %d loss %.6f", epoch, total)
    return model


# --- metrics --------------------------------------------------------------------------


def macro_f1(y_true, y_pred, n_classes) -> float:
    """F1 averaged over outcomes present in either truth or prediction."""
    scores = []
    for k in range(1, n_classes + 1):
        tp = np.sum((y_pred == k) & (y_true == k))
        fp = np.sum((y_pred == k) & (y_true != k))
        fn = np.sum((y_pred != k) & (y_true == k))
        if tp + fp + fn == 0:
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)) if scores else 1.0


def evaluate_metrics(model: Model, dataset: Dataset) -> list[dict]:
    schema = model.head.schema
    pred = model.predict(dataset.features)
    rows = []
    for i, concept in enumerate(schema.concepts):
        known = dataset.labels[:, i] != -1
        if not known.any():
            continue
        y, yhat = dataset.labels[known, i], pred[known, i]
        rows.append(
            {
                "concept": concept.name,
                "accuracy": float(np.mean(y == yhat)),
                "f1": macro_f1(y, yhat, concept.size),
                "n": int(known.sum()),
            }
        )
    return rows
