"""Softmax classification head trained with mini-batch SGD.

The head is either a single linear layer or linear -> ReLU -> linear. The
optimizer couples weight decay into the gradient and applies the classic
momentum rule ``v = momentum * v - lr * (grad + weight_decay * param)``;
the learning rate is multiplied by ``lr_drop_factor`` every
``lr_drop_period_epochs`` epochs. When a hidden layer exists it trains at
``learning_rate`` while the output layer trains at ``head_learning_rate``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DecomposedSet
from .errors import DataError, FormatError, TrainingDiverged

HEAD_MAGIC = b"DHED"
HEAD_VERSION = 1

PROB_FLOOR = 1e-12


@dataclass(eq=False)
class SoftmaxHead:
    """Parameters of the classification head. ``hidden == 0`` means linear."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray | None = None
    b2: np.ndarray | None = None

    @classmethod
    def init(cls, n_features: int, n_classes: int, hidden: int = 0, seed: int = 0):
        """Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases."""
        if n_features < 1 or n_classes < 1 or hidden < 0:
            raise DataError("invalid head dimensions")
        rng = np.random.default_rng(seed)

        def glorot(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        if hidden > 0:
            return cls(
                w1=glorot(n_features, hidden),
                b1=np.zeros(hidden),
                w2=glorot(hidden, n_classes),
                b2=np.zeros(n_classes),
            )
        return cls(w1=glorot(n_features, n_classes), b1=np.zeros(n_classes))

    @property
    def hidden(self) -> int:
        return 0 if self.w2 is None else self.w1.shape[1]

    @property
    def n_features(self) -> int:
        return self.w1.shape[0]

    @property
    def n_classes(self) -> int:
        return self.b1.shape[0] if self.w2 is None else self.b2.shape[0]

    def params(self) -> list[np.ndarray]:
        if self.w2 is None:
            return [self.w1, self.b1]
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "SoftmaxHead":
        return SoftmaxHead(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=None if self.w2 is None else self.w2.copy(),
            b2=None if self.b2 is None else self.b2.copy(),
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0001
    head_learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 100
    weight_decay: float = 0.0001
    momentum: float = 0.95
    lr_drop_factor: float = 0.95
    lr_drop_period_epochs: int = 5
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr_drop_period_epochs < 1:
            raise DataError("epochs, batch_size and lr_drop_period_epochs must be >= 1")
        if min(self.learning_rate, self.head_learning_rate, self.weight_decay,
               self.momentum) < 0:
            raise DataError("rates must be non-negative")
        if self.lr_drop_factor <= 0:
            raise DataError("lr_drop_factor must be positive")

    def lr_at(self, epoch: int) -> float:
        """Schedule multiplier applied to both learning rates (epoch is 1-based)."""
        return self.lr_drop_factor ** ((epoch - 1) // self.lr_drop_period_epochs)


# Longer-schedule variant: 256 epochs, stronger decay, heavier momentum.
LEGACY_PRESET = TrainConfig(
    learning_rate=0.0001,
    head_learning_rate=0.01,
    batch_size=64,
    epochs=256,
    weight_decay=0.001,
    momentum=0.9,
)


@dataclass(frozen=True)
class TrainHistory:
    """Per-epoch training curve; validation columns are None without a val set."""

    epochs: tuple[int, ...]
    lr: tuple[float, ...]
    train_loss: tuple[float, ...]
    train_acc: tuple[float, ...]
    val_loss: tuple[float, ...] | None
    val_acc: tuple[float, ...] | None

    def to_csv(self, path) -> None:
        cols = ["epoch", "lr", "train_loss", "train_acc"]
        if self.val_loss is not None:
            cols += ["val_loss", "val_acc"]
        lines = [",".join(cols)]
        for i, e in enumerate(self.epochs):
            row = [str(e), repr(self.lr[i]), repr(self.train_loss[i]),
                   repr(self.train_acc[i])]
            if self.val_loss is not None:
                row += [repr(self.val_loss[i]), repr(self.val_acc[i])]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _logits(head: SoftmaxHead, X: np.ndarray) -> np.ndarray:
    if head.w2 is None:
        return X @ head.w1 + head.b1
    h = np.maximum(X @ head.w1 + head.b1, 0.0)
    return h @ head.w2 + head.b2


def predict_proba(head: SoftmaxHead, X: np.ndarray) -> np.ndarray:
    """Softmax over the head's logits, stabilized by max subtraction."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != head.n_features:
        raise DataError(
            f"feature count {X.shape[1]} does not match head input {head.n_features}"
        )
    if not np.isfinite(X).all():
        raise DataError("input contains non-finite values")
    z = _logits(head, X)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Categorical cross-entropy, probabilities clamped to >= 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.shape[0]
    if labels.shape != (n,):
        raise DataError("labels must align with probability rows")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise DataError("label index out of range")
    picked = np.maximum(probs[np.arange(n), labels], PROB_FLOOR)
    return float(-np.log(picked).mean())


def _forward_backward(head: SoftmaxHead, X: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient per parameter."""
    n = X.shape[0]
    if head.w2 is None:
        z = X @ head.w1 + head.b1
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        delta = probs.copy()
        delta[np.arange(n), labels] -= 1.0
        delta /= n
        grads = [X.T @ delta, delta.sum(axis=0)]
    else:
        a = X @ head.w1 + head.b1
        h = np.maximum(a, 0.0)
        z = h @ head.w2 + head.b2
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        probs = e / e.sum(axis=1, keepdims=True)
        delta = probs.copy()
        delta[np.arange(n), labels] -= 1.0
        delta /= n
        dh = delta @ head.w2.T
        dh[a <= 0.0] = 0.0
        grads = [X.T @ dh, dh.sum(axis=0), h.T @ delta, delta.sum(axis=0)]
    picked = np.maximum(probs[np.arange(n), labels], PROB_FLOOR)
    loss = float(-np.log(picked).mean())
    return loss, grads


def accuracy(head: SoftmaxHead, X: np.ndarray, labels: np.ndarray) -> float:
    preds = np.argmax(predict_proba(head, X), axis=1)
    return float(np.mean(preds == labels))


def train(
    head: SoftmaxHead,
    train_set: DecomposedSet,
    val_set: DecomposedSet | None,
    cfg: TrainConfig,
) -> tuple[SoftmaxHead, TrainHistory]:
    """Train a copy of ``head`` with seeded mini-batch SGD.

    Per epoch: shuffle (seeded), walk sequential mini-batches (the last one
    may be short), then record loss/accuracy on the full train set and, when
    present, the validation set. Raises :class:`TrainingDiverged` if the loss
    goes non-finite.
    """
    X = train_set.features.astype(np.float64)
    y = train_set.sub_labels
    if y.max() >= head.n_classes:
        raise DataError("training labels exceed head output width")
    Xv = yv = None
    if val_set is not None and val_set.n > 0:
        Xv = val_set.features.astype(np.float64)
        yv = val_set.sub_labels

    head = head.copy()
    params = head.params()
    if head.w2 is None:
        base_lrs = [cfg.head_learning_rate] * 2
    else:
        base_lrs = [cfg.learning_rate] * 2 + [cfg.head_learning_rate] * 2
    velocity = [np.zeros_like(p) for p in params]

    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    hist_lr, hist_tl, hist_ta, hist_vl, hist_va = [], [], [], [], []

    for epoch in range(1, cfg.epochs + 1):
        factor = cfg.lr_at(epoch)
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = _forward_backward(head, X[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            for p, v, g, base in zip(params, velocity, grads, base_lrs):
                v *= cfg.momentum
                v -= (base * factor) * (g + cfg.weight_decay * p)
                p += v

        train_loss = cross_entropy(predict_proba(head, X), y)
        if not np.isfinite(train_loss) or not all(
            np.isfinite(p).all() for p in params
        ):
            raise TrainingDiverged(epoch)
        hist_lr.append(cfg.head_learning_rate * factor)
        hist_tl.append(train_loss)
        hist_ta.append(accuracy(head, X, y))
        if Xv is not None:
            hist_vl.append(cross_entropy(predict_proba(head, Xv), yv))
            hist_va.append(accuracy(head, Xv, yv))

    history = TrainHistory(
        epochs=tuple(range(1, cfg.epochs + 1)),
        lr=tuple(hist_lr),
        train_loss=tuple(hist_tl),
        train_acc=tuple(hist_ta),
        val_loss=tuple(hist_vl) if Xv is not None else None,
        val_acc=tuple(hist_va) if Xv is not None else None,
    )
    return head, history


def gradient_check(
    head: SoftmaxHead, X: np.ndarray, labels: np.ndarray, h: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    head = head.copy()
    _, grads = _forward_backward(head, X, labels)

    worst = 0.0
    for p, g in zip(head.params(), grads):
        flat = p.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = cross_entropy(predict_proba(head, X), labels)
            flat[i] = orig - h
            lm = cross_entropy(predict_proba(head, X), labels)
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            ga = g.ravel()[i]
            rel = abs(ga - fd) / max(1e-8, abs(ga) + abs(fd))
            worst = max(worst, rel)
    return worst


def write_head(head: SoftmaxHead, path) -> None:
    """Serialize head parameters (magic ``DHED``, little-endian float64)."""
    parts = [
        HEAD_MAGIC,
        struct.pack("<I", HEAD_VERSION),
        struct.pack("<QQQ", head.n_features, head.hidden, head.n_classes),
    ]
    for p in head.params():
        parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_head(path) -> SoftmaxHead:
    p = Path(path)
    if not p.exists():
        raise DataError(f"file not found: {p}")
    blob = p.read_bytes()
    if blob[:4] != HEAD_MAGIC:
        raise FormatError(f"bad magic: {p}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != HEAD_VERSION:
        raise FormatError(f"unsupported version {version}: {p}")
    m, hidden, c = struct.unpack("<QQQ", blob[8:32])
    shapes = [(m, hidden), (hidden,), (hidden, c), (c,)] if hidden else [(m, c), (c,)]
    need = 32 + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(blob) < need:
        raise FormatError(f"truncated payload: {p}")
    pos = 32
    arrays = []
    for s in shapes:
        count = int(np.prod(s))
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(s).copy())
        pos += 8 * count
    if hidden:
        return SoftmaxHead(w1=arrays[0], b1=arrays[1], w2=arrays[2], b2=arrays[3])
    return SoftmaxHead(w1=arrays[0], b1=arrays[1])
