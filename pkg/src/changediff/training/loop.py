"""Adam + multi-step schedule training loop with best-checkpoint tracking."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Tuple

import numpy as np
import torch

from ..config import LossConfig, TrainConfig
from ..data.augment import augment
from ..data.split import stratified_split
from ..errors import DivergenceError
from ..losses import combined_loss
from ..metrics import EvalReport, confusion_matrix
from ..model import Checkpoint, normalize_image

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "val_score", "lr")


def set_determinism(seed: int):
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def batch_tensors(records, dtype=torch.float32, device=None):
    pre = normalize_image(np.stack([r.pre_image for r in records])).to(device=device, dtype=dtype)
    post = normalize_image(np.stack([r.post_image for r in records])).to(device=device, dtype=dtype)
    target = torch.from_numpy(np.stack([r.label_mask for r in records])).to(device)
    return pre, post, target


def iter_batches(records, batch_size) -> Iterator[list]:
    for i in range(0, len(records), batch_size):
        yield records[i:i + batch_size]


def selection_score(report: EvalReport) -> float:
    """xView2 score for damage tasks, aggregate F1 for binary change."""
    return report.score if report.num_classes > 2 else report.f1_class


@torch.no_grad()
def evaluate_model(model, records, batch_size=8, loss_config: Optional[LossConfig] = None,
                   mode=None) -> Tuple[EvalReport, Optional[float]]:
    """Accumulated-confusion report over ``records`` and the mean batch loss."""
    if not records:
        raise ValueError("cannot evaluate an empty dataset")
    was_training = model.training
    model.eval()
    c = model.config.num_classes
    param = next(model.parameters())
    total = np.zeros((c, c), dtype=np.int64)
    loss_sum, n = 0.0, 0
    for batch in iter_batches(records, batch_size):
        pre, post, target = batch_tensors(batch, param.dtype, param.device)
        logits = model(pre, post)
        if loss_config is not None:
            loss_sum += combined_loss(logits, target, loss_config).item() * len(batch)
            n += len(batch)
        pred = torch.argmax(logits, dim=1).cpu().numpy()
        total += confusion_matrix(pred, target.cpu().numpy(), c)
    model.train(was_training)
    report = EvalReport.from_confusion(total, mode=mode)
    return report, (loss_sum / n if n else None)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    val_score: Optional[float]
    lr: float
    seconds: float
    report: Optional[EvalReport] = None


@dataclass
class TrainHistory:
    epochs: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_checkpoint: Optional[Checkpoint] = None

    def __len__(self):
        return len(self.epochs)

    @property
    def lrs(self):
        return [e.lr for e in self.epochs]

    @property
    def train_losses(self):
        return [e.train_loss for e in self.epochs]

    def to_csv(self) -> str:
        """Deterministic columns only; wall times are exposed via :meth:`timings`."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for e in self.epochs:
            w.writerow([
                e.epoch,
                f"{e.train_loss:.6f}",
                "" if e.val_loss is None else f"{e.val_loss:.6f}",
                "" if e.val_score is None else f"{e.val_score:.6f}",
                f"{e.lr:.6e}",
            ])
        return buf.getvalue()

    def timings(self):
        return [{"epoch": e.epoch, "seconds": e.seconds} for e in self.epochs]


def split_dataset(dataset, val_fraction, seed):
    """Accepts ``(train, val)`` or a flat record list split by dominant class."""
    if isinstance(dataset, tuple) and len(dataset) == 2:
        return list(dataset[0]), list(dataset[1])
    records = list(dataset)
    if val_fraction <= 0:
        return records, []
    train, val, _ = stratified_split(records, (1.0 - val_fraction, val_fraction, 0.0), seed=seed)
    return train, val


def train(model, dataset, train_config: TrainConfig, loss_config: LossConfig,
          batch_size_eval: Optional[int] = None, callback=None) -> Tuple[Checkpoint, TrainHistory]:
    """Train ``model`` in place; returns the final checkpoint and the history.

    The history also carries the checkpoint with the best validation score.
    """
    if loss_config.num_classes != model.config.num_classes:
        raise ValueError(
            f"loss has {loss_config.num_classes} class weights, model predicts {model.config.num_classes} classes"
        )
    train_set, val_set = split_dataset(dataset, train_config.val_fraction, train_config.seed)
    if not train_set:
        raise ValueError("empty training set")
    set_determinism(train_config.seed)
    rng = np.random.default_rng(train_config.seed)
    param = next(model.parameters())
    opt = torch.optim.Adam(model.parameters(), lr=train_config.learning_rate)
    history = TrainHistory()
    best = -math.inf
    eval_bs = batch_size_eval or train_config.batch_size
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        lr = train_config.lr_at(epoch)
        for g in opt.param_groups:
            g["lr"] = lr
        model.train()
        order = rng.permutation(len(train_set))
        loss_sum = 0.0
        for batch_idx in iter_batches(order, train_config.batch_size):
            batch = [train_set[i] for i in batch_idx]
            if train_config.augment.any:
                batch = [augment(r, train_config.seed * 1_000_003 + epoch, train_config.augment) for r in batch]
            pre, post, target = batch_tensors(batch, param.dtype, param.device)
            logits = model(pre, post)
            loss = combined_loss(logits, target, loss_config)
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss {loss.item()} at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            loss_sum += loss.item() * len(batch)
        train_loss = loss_sum / len(train_set)
        report = val_loss = score = None
        if val_set:
            report, val_loss = evaluate_model(model, val_set, eval_bs, loss_config)
            score = selection_score(report)
        rec = EpochRecord(epoch, train_loss, val_loss, score, lr, time.perf_counter() - t0, report)
        history.epochs.append(rec)
        log.info("epoch %d lr %.2e train %.4f val %s score %s", epoch, lr, train_loss, val_loss, score)
        if score is not None and score > best:
            best = score
            history.best_epoch = epoch
            history.best_checkpoint = Checkpoint.from_model(model, loss_config, train_config, epoch=epoch)
        if callback is not None:
            callback(rec, model)
    final = Checkpoint.from_model(model, loss_config, train_config, epoch=train_config.epochs - 1)
    if history.best_checkpoint is None:
        history.best_checkpoint = final
        history.best_epoch = train_config.epochs - 1
    return final, history
