"""Loss, optimizer and the epoch loop with early stopping."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .model import Batch, ModelConfig, collate, forward, l2_weight_names
from .tensor import Tensor

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "dev_loss", "dev_token_acc", "dev_seq_acc", "seconds")


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 100
    lr: float = 0.01
    l2_penalty: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int = 3
    early_stopping: bool = True
    grad_clip_norm: float = 5.0
    workers: int = 1
    seed: int = 0

    def validate(self) -> list[str]:
        errs = []
        for name in ("epochs", "batch_size", "lr", "adam_eps", "early_stop_patience",
                     "grad_clip_norm", "workers"):
            if not getattr(self, name) > 0:
                errs.append(f"train.{name} must be positive, got {getattr(self, name)}")
        if self.l2_penalty < 0:
            errs.append(f"train.l2_penalty must be non-negative, got {self.l2_penalty}")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, name) < 1:
                errs.append(f"train.{name} must lie in [0, 1)")
        if self.early_stop_patience > self.epochs:
            errs.append("train.early_stop_patience must not exceed train.epochs")
        return errs

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# loss terms
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Sum over all k positions (PAD included) of -log p(gold); one value per example.

    Accepts (k, V) logits with (k,) targets, returning a scalar, or a batch
    (B, k, V) with (B, k), returning (B,).
    """
    targets = np.asarray(targets, dtype=np.int64)
    vocab = logits.shape[-1]
    if targets.size and (targets.max() >= vocab or targets.min() < 0):
        raise ValueError(f"target token id outside [0, {vocab})")
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    picked = T.log_softmax(logits) * onehot
    return -T.tsum(T.tsum(picked, axis=-1), axis=-1)


def l2_term(params, penalty: float = 0.01) -> Tensor:
    """penalty * sum of squared LSTM input/recurrent weights."""
    names = l2_weight_names(params)
    dtype = next(iter(params.values())).dtype
    total = Tensor(0.0, dtype=dtype)
    for name in names:
        w = params[name]
        total = total + T.tsum(w * w)
    return total * penalty


def batch_loss(params, cfg: ModelConfig, batch: Batch, l2_penalty: float,
               normalizer: int | None = None) -> Tensor:
    """Mean cross-entropy over the batch plus the L2 term."""
    trace = forward(params, cfg, batch)
    ce = cross_entropy(trace.logits, batch.phones)
    loss = T.tsum(ce) * (1.0 / (normalizer or len(batch)))
    if l2_penalty:
        loss = loss + l2_term(params, l2_penalty)
    return loss


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def _shard_gradients(param_data, cfg, batch, l2_penalty, normalizer):
    # replica leaves share read-only data but own their grads
    replica = {k: Tensor(v, requires_grad=True, name=k, dtype=v.dtype) for k, v in param_data.items()}
    with T.Tape():
        loss = batch_loss(replica, cfg, batch, l2_penalty, normalizer)
        T.backward(loss)
    grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in replica.items()}
    return float(loss.data), grads


def _slice(batch: Batch, lo, hi) -> Batch:
    return Batch(batch.target[lo:hi], batch.left[lo:hi], batch.right[lo:hi],
                 batch.text[lo:hi], batch.aux[lo:hi], batch.phones[lo:hi])


def compute_gradients(params, cfg: ModelConfig, batch: Batch, l2_penalty: float, workers: int = 1):
    """(loss, grads) for the batch-mean loss. Shards are summed when ``workers > 1``."""
    data = {k: p.data for k, p in params.items()}
    if workers <= 1 or len(batch) < 2:
        return _shard_gradients(data, cfg, batch, l2_penalty, len(batch))
    bounds = np.linspace(0, len(batch), min(workers, len(batch)) + 1).astype(int)
    jobs = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for j, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
            jobs.append(pool.submit(_shard_gradients, data, cfg, _slice(batch, lo, hi),
                                    l2_penalty if j == 0 else 0.0, len(batch)))
        results = [job.result() for job in jobs]
    loss = sum(r[0] for r in results)
    grads = {k: sum(r[1][k] for r in results) for k in data}
    return loss, grads


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale grads in place so their joint L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * np.asarray(scale, dtype=grads[k].dtype)
    return total


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig) -> None:
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name}")
    clip_global_norm(grads, config.grad_clip_norm)
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    corr1 = 1.0 - b1 ** state.step
    corr2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        p = params[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = config.lr * (m / corr1) / (np.sqrt(v / corr2) + config.adam_eps)
        p.data = (p.data - update).astype(p.dtype)


# ---------------------------------------------------------------------------
# evaluation helpers used during training
# ---------------------------------------------------------------------------

def token_accuracy(logits: np.ndarray, gold: np.ndarray, pad: int) -> tuple[int, int]:
    """(correct, total) over positions whose gold token is not PAD."""
    mask = gold != pad
    pred = logits.argmax(axis=-1)
    return int(((pred == gold) & mask).sum()), int(mask.sum())


def sequence_matches(tokens: np.ndarray, gold: np.ndarray, eops: int) -> np.ndarray:
    """Per-row: greedy output equals gold through the first gold EOPS."""
    out = np.zeros(len(gold), dtype=bool)
    for r in range(len(gold)):
        stop = np.flatnonzero(gold[r] == eops)
        end = int(stop[0]) + 1 if stop.size else gold.shape[1]
        out[r] = np.array_equal(tokens[r, :end], gold[r, :end])
    return out


def evaluate_examples(params, cfg: ModelConfig, examples, pad: int, eops: int,
                      batch_size: int = 100, greedy: bool = True) -> dict:
    """Mean CE, teacher-forced non-PAD token accuracy and greedy sequence accuracy."""
    correct = total = 0
    loss_sum = 0.0
    seq_ok = 0
    with T.no_grad():
        for lo in range(0, len(examples), batch_size):
            batch = collate(examples[lo:lo + batch_size], dtype=params["fuse.w1"].dtype)
            trace = forward(params, cfg, batch)
            loss_sum += float(cross_entropy(trace.logits, batch.phones).data.sum())
            c, t = token_accuracy(trace.logits.data, batch.phones, pad)
            correct += c
            total += t
            if greedy:
                g = forward(params, cfg, batch, mode="greedy", eops=eops, pad=pad)
                seq_ok += int(sequence_matches(g.tokens, batch.phones, eops).sum())
    count = max(1, len(examples))
    return {
        "loss": loss_sum / count,
        "token_acc": correct / total if total else float("nan"),
        "seq_acc": seq_ok / count if greedy else float("nan"),
    }


# ---------------------------------------------------------------------------
# epoch loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: dict            # name -> np.ndarray, best dev epoch
    history: list[dict]
    best_epoch: int
    stopped_early: bool = False


def snapshot(params) -> dict[str, np.ndarray]:
    return {k: np.array(p.data, copy=True) for k, p in params.items()}


def train(train_examples, dev_examples, cfg: ModelConfig, config: TrainConfig, params: dict,
          pad: int, eops: int, progress=None) -> TrainResult:
    """Adam on shuffled mini-batches; keeps the best dev token accuracy epoch."""
    if not train_examples:
        raise ValueError("training set is empty")
    use_dev = bool(dev_examples)
    if not use_dev:
        log.warning("dev set is empty: early stopping disabled, last epoch kept")
    shuffle_rng = np.random.default_rng([config.seed, 1])
    state = AdamState()
    history = []
    best_acc = -math.inf
    best = snapshot(params)
    best_epoch = 0
    stale = 0
    stopped = False
    dtype = params["fuse.w1"].dtype

    for epoch in range(1, config.epochs + 1):
        start = time.perf_counter()
        order = shuffle_rng.permutation(len(train_examples))
        losses = []
        for lo in range(0, len(order), config.batch_size):
            batch = collate([train_examples[i] for i in order[lo:lo + config.batch_size]], dtype=dtype)
            loss, grads = compute_gradients(params, cfg, batch, config.l2_penalty, config.workers)
            adam_step(params, grads, state, config)
            losses.append(loss)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)),
               "dev_loss": float("nan"), "dev_token_acc": float("nan"), "dev_seq_acc": float("nan")}
        if use_dev:
            metrics = evaluate_examples(params, cfg, dev_examples, pad, eops, config.batch_size)
            row.update(dev_loss=metrics["loss"], dev_token_acc=metrics["token_acc"],
                       dev_seq_acc=metrics["seq_acc"])
        row["seconds"] = time.perf_counter() - start
        history.append(row)
        if progress:
            progress(row)
        log.info("epoch %d loss %.4f dev_acc %.4f", epoch, row["train_loss"], row["dev_token_acc"])

        if not use_dev:
            best, best_epoch = snapshot(params), epoch
            continue
        if row["dev_token_acc"] > best_acc:
            best_acc, best, best_epoch, stale = row["dev_token_acc"], snapshot(params), epoch, 0
        else:
            stale += 1
            if config.early_stopping and stale >= config.early_stop_patience:
                stopped = True
                log.info("early stop after epoch %d (best %d)", epoch, best_epoch)
                break
    return TrainResult(best, history, best_epoch, stopped)


def _fmt(value) -> str:
    if isinstance(value, int):
        return str(value)
    return "nan" if math.isnan(value) else f"{value:.8g}"


def write_history(history, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([_fmt(row[c]) for c in HISTORY_COLUMNS])


def read_history(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "epoch" else float(v)) for k, v in r.items()} for r in rows]
