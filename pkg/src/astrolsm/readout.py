"""Dense linear readout trained on spike counts.

Scores are linear in the raw counts; predictions are exponentially
normalized scores.  The loss is the per-component binary cross entropy
summed over classes and averaged over the batch, plus an L2 penalty on the
weight matrix.  Training uses adaptive-moment gradient descent on shuffled
mini-batches, keeps the parameter snapshot with the best validation
accuracy, and stops at the epoch cap or after a configurable patience
without improvement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

N_CLASSES = 10
LOG_FLOOR = 1e-12


@dataclass
class TrainSchedule:
    batch_size: int = 250
    lr: float = 0.1
    lambda_reg: float = 5e-10
    max_epochs: int = 5000
    patience: int | None = None   # epochs without val improvement; None = run to cap
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ReadoutModel:
    W: np.ndarray   # (classes, n_features)
    b: np.ndarray   # (classes,)
    mW: np.ndarray = None
    vW: np.ndarray = None
    mb: np.ndarray = None
    vb: np.ndarray = None
    step: int = 0

    @classmethod
    def zeros(cls, n_features: int, n_classes: int = N_CLASSES) -> "ReadoutModel":
        return cls(
            W=np.zeros((n_classes, n_features)),
            b=np.zeros(n_classes),
            mW=np.zeros((n_classes, n_features)),
            vW=np.zeros((n_classes, n_features)),
            mb=np.zeros(n_classes),
            vb=np.zeros(n_classes),
        )


def forward(model: ReadoutModel, counts: np.ndarray):
    """Class scores and normalized predictions for one batch (or one vector)."""
    x = np.atleast_2d(counts).astype(np.float64)
    scores = x @ model.W.T + model.b
    if not np.isfinite(scores).all():
        raise NumericalError("non-finite readout scores")
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    return scores, probs


def _bce(y: np.ndarray, probs: np.ndarray) -> float:
    """Mean over samples of the class-summed binary cross entropy."""
    p = np.clip(probs, LOG_FLOOR, 1.0 - LOG_FLOOR)
    per_sample = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).sum(axis=1)
    return float(per_sample.mean())


def one_hot(labels: np.ndarray, n_classes: int = N_CLASSES) -> np.ndarray:
    y = np.zeros((len(labels), n_classes))
    y[np.arange(len(labels)), labels] = 1.0
    return y


def loss(model: ReadoutModel, counts: np.ndarray, labels: np.ndarray,
         lambda_reg: float) -> float:
    """Batch loss: class-summed BCE plus (lambda/2m) * ||W||_F^2."""
    y = one_hot(np.asarray(labels))
    _, probs = forward(model, counts)
    m = len(y)
    reg = lambda_reg / (2.0 * m) * float((model.W ** 2).sum())
    return _bce(y, probs) + reg


def gradients(model: ReadoutModel, counts: np.ndarray, labels: np.ndarray,
              lambda_reg: float):
    """Analytic batch gradients of :func:`loss` w.r.t. W and b."""
    x = np.atleast_2d(counts).astype(np.float64)
    y = one_hot(np.asarray(labels))
    m = len(y)
    _, probs = forward(model, x)
    p = np.clip(probs, LOG_FLOOR, 1.0 - LOG_FLOOR)
    g = -y / p + (1.0 - y) / (1.0 - p)          # dL/dprob per sample
    inner = (g * probs).sum(axis=1, keepdims=True)
    dz = probs * (g - inner) / m                 # softmax Jacobian product
    dW = dz.T @ x + (lambda_reg / m) * model.W
    db = dz.sum(axis=0)
    return dW, db


def _adam_update(model: ReadoutModel, dW, db, sched: TrainSchedule) -> None:
    model.step += 1
    t = model.step
    b1, b2 = sched.beta1, sched.beta2
    model.mW = b1 * model.mW + (1 - b1) * dW
    model.vW = b2 * model.vW + (1 - b2) * dW * dW
    model.mb = b1 * model.mb + (1 - b1) * db
    model.vb = b2 * model.vb + (1 - b2) * db * db
    corr1 = 1 - b1 ** t
    corr2 = 1 - b2 ** t
    model.W -= sched.lr * (model.mW / corr1) / (np.sqrt(model.vW / corr2) + sched.eps)
    model.b -= sched.lr * (model.mb / corr1) / (np.sqrt(model.vb / corr2) + sched.eps)


def evaluate(model: ReadoutModel, counts: np.ndarray, labels: np.ndarray) -> float:
    """Accuracy by argmax over scores; ties resolve to the lowest class index."""
    scores, _ = forward(model, counts)
    return float((scores.argmax(axis=1) == np.asarray(labels)).mean())


@dataclass
class TrainResult:
    model: ReadoutModel
    best_epoch: int
    best_val_accuracy: float
    curve: list = field(default_factory=list)  # (epoch, train_loss, val_accuracy)


def train(train_counts: np.ndarray, train_labels: np.ndarray,
          val_counts: np.ndarray, val_labels: np.ndarray,
          schedule: TrainSchedule, rng: np.random.Generator,
          model: ReadoutModel | None = None) -> TrainResult:
    """Mini-batch training with best-validation-epoch snapshotting."""
    x = np.asarray(train_counts, dtype=np.float64)
    yl = np.asarray(train_labels)
    n = len(x)
    if schedule.batch_size < 1:
        raise ConfigError("batch size must be at least 1")
    model = model or ReadoutModel.zeros(x.shape[1])

    best = (-1.0, 0, model.W.copy(), model.b.copy())
    curve = []
    stale = 0
    for epoch in range(1, schedule.max_epochs + 1):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for b0 in range(0, n, schedule.batch_size):
            idx = perm[b0:b0 + schedule.batch_size]
            dW, db = gradients(model, x[idx], yl[idx], schedule.lambda_reg)
            _adam_update(model, dW, db, schedule)
            n_batches += 1
        epoch_loss = loss(model, x[perm[: min(n, 2000)]], yl[perm[: min(n, 2000)]],
                          schedule.lambda_reg)
        if not np.isfinite(epoch_loss):
            raise NumericalError(
                f"training diverged at epoch {epoch}: loss={epoch_loss}")
        val_acc = evaluate(model, val_counts, val_labels)
        curve.append((epoch, epoch_loss, val_acc))
        if val_acc > best[0]:
            best = (val_acc, epoch, model.W.copy(), model.b.copy())
            stale = 0
        else:
            stale += 1
            if schedule.patience is not None and stale >= schedule.patience:
                break

    out = ReadoutModel.zeros(x.shape[1])
    out.W[:] = best[2]
    out.b[:] = best[3]
    return TrainResult(model=out, best_epoch=best[1], best_val_accuracy=best[0],
                       curve=curve)
