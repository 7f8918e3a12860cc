"""Two-layer graph convolutional network in numpy with hand-written gradients.

hidden = ReLU(P X W0), logits = P hidden W1, where P is the propagation
matrix (normally the symmetric-normalized adjacency with self-loops).
Training minimizes softmax cross-entropy on the training nodes plus an L2
penalty, with Adam.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

CHECKPOINT_FORMAT = "spadegnn-gcn"
CHECKPOINT_VERSION = 1


class TrainingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GcnHyperparams:
    hidden: int = 16
    lr: float = 0.01
    weight_decay: float = 5e-4
    dropout: float = 0.5
    epochs: int = 200
    seed: int = 0
    # L2 on the first layer only, as in the reference GCN setup
    decay_all_layers: bool = False


@dataclass(frozen=True)
class GcnModel:
    w0: np.ndarray
    w1: np.ndarray
    hp: GcnHyperparams = field(default_factory=GcnHyperparams)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.w0.shape[0], self.w0.shape[1], self.w1.shape[1]


@dataclass
class TrainTrace:
    loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_model(d: int, h: int, c: int, seed: int = 0, hp: GcnHyperparams | None = None) -> GcnModel:
    if min(d, h, c) < 1:
        raise ValueError(f"dimensions must be >= 1, got d={d}, h={h}, c={c}")
    hp = replace(hp or GcnHyperparams(), hidden=h, seed=seed)
    rng = np.random.default_rng(seed)
    return GcnModel(glorot(rng, d, h), glorot(rng, h, c), hp)


def _check_shapes(m: GcnModel, a_hat, x: np.ndarray) -> None:
    n = a_hat.shape[0]
    if a_hat.shape != (n, n):
        raise ValueError(f"propagation matrix must be square, got {a_hat.shape}")
    if x.shape[0] != n:
        raise ValueError(f"feature matrix has {x.shape[0]} rows, graph has {n} nodes")
    if x.shape[1] != m.w0.shape[0]:
        raise ValueError(f"feature width {x.shape[1]} does not match W0 rows {m.w0.shape[0]}")


def forward(m: GcnModel, a_hat, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inference pass (no dropout). Returns (hidden embeddings, logits)."""
    _check_shapes(m, a_hat, x)
    hidden = np.maximum(a_hat @ (x @ m.w0), 0.0)
    logits = a_hat @ (hidden @ m.w1)
    return hidden, logits


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict(m: GcnModel, a_hat, x: np.ndarray) -> np.ndarray:
    """Argmax class per node; np.argmax already resolves ties to the lowest class."""
    return np.argmax(forward(m, a_hat, x)[1], axis=1)


def accuracy(pred: np.ndarray, labels: np.ndarray, ids: np.ndarray) -> float:
    ids = np.asarray(ids)
    if len(ids) == 0:
        return float("nan")
    return float(np.mean(pred[ids] == labels[ids]))


def _l2_penalty(w0, w1, hp: GcnHyperparams) -> float:
    total = 0.5 * hp.weight_decay * float(np.sum(w0 * w0))
    if hp.decay_all_layers:
        total += 0.5 * hp.weight_decay * float(np.sum(w1 * w1))
    return total


def loss_and_grads(
    w0: np.ndarray,
    w1: np.ndarray,
    a_hat,
    x: np.ndarray,
    labels: np.ndarray,
    train_ids: np.ndarray,
    hp: GcnHyperparams,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Training loss, its gradients w.r.t. W0 and W1, and the logits.

    ``masks`` are pre-scaled dropout multipliers for the input features and the
    hidden layer; ``None`` means dropout off. For a sparse ``x`` the input mask
    covers its stored entries only.
    """
    xd = _apply_input_mask(x, masks[0]) if masks is not None else x
    z1 = a_hat @ (xd @ w0)
    h = np.maximum(z1, 0.0)
    hd = h * masks[1] if masks is not None else h
    logits = a_hat @ (hd @ w1)

    p = softmax(logits[train_ids])
    y = labels[train_ids]
    nt = len(train_ids)
    loss = -float(np.mean(np.log(p[np.arange(nt), y] + 1e-300))) + _l2_penalty(w0, w1, hp)

    dlogits = np.zeros_like(logits)
    p[np.arange(nt), y] -= 1.0
    # repeated ids count twice, as they do in the loss
    np.add.at(dlogits, train_ids, p / nt)
    d_hw = a_hat.T @ dlogits
    g1 = hd.T @ d_hw
    dh = d_hw @ w1.T
    if masks is not None:
        dh = dh * masks[1]
    dz1 = dh * (z1 > 0)
    g0 = xd.T @ (a_hat.T @ dz1)
    g0 = g0 + hp.weight_decay * w0
    if hp.decay_all_layers:
        g1 = g1 + hp.weight_decay * w1
    return loss, np.asarray(g0), np.asarray(g1), np.asarray(logits)


def _apply_input_mask(x, mask):
    if sp.issparse(x):
        out = x.copy()
        out.data = out.data * mask
        return out
    return x * mask


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    if rate <= 0.0:
        return np.ones(shape)
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


def train(
    m: GcnModel,
    a_hat,
    x: np.ndarray,
    labels: np.ndarray,
    train_ids: np.ndarray,
    hp: GcnHyperparams | None = None,
) -> tuple[GcnModel, TrainTrace]:
    """Full-batch Adam on the cross-entropy of ``train_ids``.

    Dropout masks come from a generator seeded by ``hp.seed`` so repeated
    runs are bit-identical. Raises :class:`TrainingError` on a non-finite loss.
    """
    hp = hp or m.hp
    train_ids = np.asarray(train_ids, dtype=np.int64)
    if len(train_ids) == 0:
        raise ValueError("train_ids is empty")
    _check_shapes(m, a_hat, x)
    labels = np.asarray(labels)
    c = m.w1.shape[1]
    if labels[train_ids].min() < 0 or labels[train_ids].max() >= c:
        raise ValueError(f"training labels must lie in [0, {c})")

    # sparse inputs (bag-of-words features) take dropout on stored entries only
    x = sp.csr_matrix(x, dtype=np.float64) if sp.issparse(x) else np.asarray(x, dtype=np.float64)
    input_shape = x.data.shape if sp.issparse(x) else x.shape
    w = [m.w0.copy(), m.w1.copy()]
    mom = [np.zeros_like(p) for p in w]
    vel = [np.zeros_like(p) for p in w]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    rng = np.random.default_rng([hp.seed, 1])
    trace = TrainTrace()
    n, h = x.shape[0], w[0].shape[1]

    for epoch in range(1, hp.epochs + 1):
        masks = (_dropout_mask(rng, input_shape, hp.dropout), _dropout_mask(rng, (n, h), hp.dropout))
        loss, g0, g1, logits = loss_and_grads(w[0], w[1], a_hat, x, labels, train_ids, hp, masks)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}")
        trace.loss.append(loss)
        trace.train_accuracy.append(accuracy(np.argmax(logits, axis=1), labels, train_ids))
        for i, g in enumerate((g0, g1)):
            mom[i] = beta1 * mom[i] + (1 - beta1) * g
            vel[i] = beta2 * vel[i] + (1 - beta2) * g * g
            mhat = mom[i] / (1 - beta1**epoch)
            vhat = vel[i] / (1 - beta2**epoch)
            w[i] = w[i] - hp.lr * mhat / (np.sqrt(vhat) + eps)
        if not (np.isfinite(w[0]).all() and np.isfinite(w[1]).all()):
            raise TrainingError(f"non-finite parameters after epoch {epoch}")
    return GcnModel(w[0], w[1], hp), trace


def save_model(m: GcnModel, path) -> None:
    d, h, c = m.dims
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {"d": d, "h": h, "c": c},
        "hyperparams": asdict(m.hp),
        "seed": m.hp.seed,
        "w0": m.w0.ravel(order="C").tolist(),
        "w1": m.w1.ravel(order="C").tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> GcnModel:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    if obj.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a GCN checkpoint")
    if obj.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {obj.get('version')}")
    d, h, c = (obj["dims"][k] for k in ("d", "h", "c"))
    w0 = np.asarray(obj["w0"], dtype=np.float64).reshape(d, h)
    w1 = np.asarray(obj["w1"], dtype=np.float64).reshape(h, c)
    return GcnModel(w0, w1, GcnHyperparams(**obj["hyperparams"]))
