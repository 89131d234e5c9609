"""Training: cross-entropy objective, AdamW with linear warmup/decay,
early stopping on validation macro-F1, metric evaluation, checkpoints.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, log_sum_exp
from .bundle import MAGIC, VERSION
from .config import TrainConfig
from .errors import DataError, DivergenceError, ShapeError
from .metrics import MetricsReport, compute_metrics
from .model import TecoModel
from .rng import Rng


def cross_entropy_loss(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], via log-sum-exp."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"logits {logits.shape} do not match {labels.shape[0]} labels")
    n = logits.shape[1]
    if labels.min() < 0 or labels.max() >= n:
        raise DataError(f"label out of range [0, {n})")
    onehot = np.zeros(logits.shape, dtype=logits.data.dtype)
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    lse = log_sum_exp(logits, axis=1)  # (B, 1)
    true_logit = (logits * Tensor(onehot)).sum(axis=1, keepdims=True)
    return (lse - true_logit).mean()


class AdamW:
    """Adam with decoupled weight decay (decay applies even at zero grad)."""

    def __init__(self, params, lr, weight_decay=0.0, betas=(0.9, 0.999),
                 eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr_scale: float = 1.0):
        self.t += 1
        lr = self.lr * lr_scale
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay > 0:
                p.data = p.data - lr * self.weight_decay * p.data


def linear_warmup_decay(step: int, total_steps: int, warmup_steps: int) -> float:
    """LR multiplier: 0 -> 1 over warmup, then linearly back to 0."""
    if warmup_steps > 0 and step < warmup_steps:
        return step / warmup_steps
    if total_steps <= warmup_steps:
        return 1.0
    return max(0.0, (total_steps - step) / (total_steps - warmup_steps))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_acc: float
    val_f1: float
    lr: float


@dataclass
class FitResult:
    best_state: dict
    best_val_f1: float
    best_epoch: int
    history: list[EpochStats] = field(default_factory=list)


def evaluate(model: TecoModel, records, batch_size: int = 8) -> MetricsReport:
    preds, labels = [], []
    for start in range(0, len(records), batch_size):
        batch = records[start:start + batch_size]
        logits = model.forward_batch(batch, mode="eval")
        preds.extend(np.argmax(logits.data, axis=1).tolist())
        labels.extend(r.label for r in batch)
    return compute_metrics(preds, labels, model.n_classes)


def _check_finite(model: TecoModel, loss_value: float):
    if np.isfinite(loss_value):
        bad = next((name for name in sorted(model.params)
                    if not np.isfinite(model.params[name].data).all()), None)
        if bad is None:
            return
    else:
        bad = next((name for name in sorted(model.params)
                    if not np.isfinite(model.params[name].data).all()),
                   "<loss>")
    raise DivergenceError(f"NaN/Inf detected; first bad parameter: {bad}")


def fit(model: TecoModel, train_records, valid_records, config: TrainConfig,
        seed: int) -> FitResult:
    """AdamW + linear warmup/decay; early-stops when validation macro-F1
    fails to improve for `patience` consecutive epochs; returns the best
    checkpoint seen."""
    config.validate()
    if not train_records or not valid_records:
        raise DataError("fit needs non-empty train and valid splits")
    rng = Rng(seed)
    opt = AdamW(model.parameters(), lr=config.lr,
                weight_decay=config.weight_decay)
    steps_per_epoch = (len(train_records) + config.batch_size - 1) \
        // config.batch_size
    total_steps = max(1, config.max_epochs * steps_per_epoch)
    warmup_steps = int(config.warmup_fraction * total_steps)

    best = FitResult(best_state=model.state_arrays(), best_val_f1=-1.0,
                     best_epoch=-1)
    stale = 0
    step = 0
    for epoch in range(config.max_epochs):
        order = rng.split().permutation(len(train_records))
        epoch_loss = 0.0
        drop_rng = rng.split()
        for start in range(0, len(order), config.batch_size):
            batch = [train_records[i] for i in order[start:start + config.batch_size]]
            model.zero_grad()
            logits = model.forward_batch(batch, mode="train", rng=drop_rng)
            loss = cross_entropy_loss(logits, [r.label for r in batch])
            loss.backward()
            lr_scale = linear_warmup_decay(step, total_steps, warmup_steps)
            opt.step(lr_scale)
            step += 1
            epoch_loss += float(loss.data) * len(batch)
            _check_finite(model, float(loss.data))
        report = evaluate(model, valid_records, config.eval_batch_size)
        stats = EpochStats(
            epoch=epoch,
            train_loss=epoch_loss / len(order),
            val_acc=report.acc,
            val_f1=report.macro_f1,
            lr=config.lr * linear_warmup_decay(step, total_steps, warmup_steps),
        )
        best.history.append(stats)
        if report.macro_f1 > best.best_val_f1:
            best.best_val_f1 = report.macro_f1
            best.best_epoch = epoch
            best.best_state = model.state_arrays()
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.load_state_arrays(best.best_state)
    return best


def history_csv(history: list[EpochStats]) -> str:
    lines = ["epoch,train_loss,val_acc,val_f1,lr"]
    for h in history:
        lines.append(f"{h.epoch},{h.train_loss:.6f},{h.val_acc:.6f},"
                     f"{h.val_f1:.6f},{h.lr:.8e}")
    return "\n".join(lines) + "\n"


# -- checkpoints ------------------------------------------------------------
# checkpoint.json maps parameter names to blob offset + shape; the blob
# carries the usual 16-byte header with rank 1 and the total float count.

def save_checkpoint(state: dict[str, np.ndarray], out_dir,
                    stem: str = "checkpoint"):
    os.makedirs(out_dir, exist_ok=True)
    blob_path = os.path.join(out_dir, f"{stem}.bin")
    manifest = {}
    offset = 16
    with open(blob_path, "wb") as fh:
        total = sum(int(a.size) for a in state.values())
        fh.write(struct.pack("<4sHHII", MAGIC, VERSION, 1, total, 1))
        for name in sorted(state):
            arr = np.ascontiguousarray(state[name], dtype="<f4")
            manifest[name] = {"offset": offset, "shape": list(arr.shape)}
            fh.write(arr.tobytes())
            offset += arr.nbytes
    with open(os.path.join(out_dir, f"{stem}.json"), "w") as fh:
        json.dump({"format": {"magic": "TECO", "version": VERSION},
                   "blob": f"{stem}.bin", "params": manifest},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(out_dir, stem: str = "checkpoint") -> dict[str, np.ndarray]:
    path = os.path.join(out_dir, f"{stem}.json")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"missing checkpoint manifest {path}: {exc}") from exc
    if doc.get("format", {}).get("version") != VERSION:
        raise DataError(f"checkpoint {path}: unknown version")
    blob_path = os.path.join(out_dir, doc["blob"])
    try:
        with open(blob_path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"missing checkpoint blob {blob_path}: {exc}") from exc
    magic, version, rank, total, _ = struct.unpack("<4sHHII", raw[:16])
    if magic != MAGIC or version != VERSION:
        raise DataError(f"checkpoint blob {blob_path}: bad header")
    state = {}
    for name, meta in doc["params"].items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["offset"]
        arr = np.frombuffer(raw[start:start + count * 4], dtype="<f4")
        if arr.size != count:
            raise DataError(f"checkpoint blob truncated at parameter {name}")
        state[name] = arr.reshape(shape).astype(np.float32)
    return state
