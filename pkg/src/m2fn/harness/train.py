from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch

from ..model import M2FN
from ..objectives import LossBatch, MetricReport, compute_loss, evaluate
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import PreparedData, split_by_image

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "best.ckpt"
EPOCH_LOG_NAME = "epochs.jsonl"


class NumericFailure(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainResult:
    checkpoint: Path
    epoch_log: List[dict]
    best_epoch: int
    model: M2FN = field(repr=False, default=None)


def set_seed(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2 ** 32)


def predict(model: M2FN, data: PreparedData, batch_size: int = 256) -> np.ndarray:
    model.eval()
    outs = []
    with torch.no_grad():
        for lo in range(0, len(data), batch_size):
            aux = data.aux[lo:lo + batch_size] if model.config.use_aux else None
            outs.append(model(data.images[lo:lo + batch_size], aux).double().numpy())
    return np.concatenate(outs)


def safe_evaluate(predictions, targets, mode) -> Optional[MetricReport]:
    try:
        return evaluate(predictions, targets, mode)
    except ValueError:
        # constant predictions early in training: correlation undefined
        return None


def _batch_loss(run: RunConfig, model: M2FN, data: PreparedData, idx):
    mode = model.config.output_mode
    aux = data.aux[idx] if model.config.use_aux else None
    pred = model(data.images[idx], aux)
    if mode == "regression":
        target = torch.as_tensor(data.ctr[idx], dtype=pred.dtype)
        weights = torch.as_tensor(data.impressions[idx], dtype=pred.dtype)
        batch = LossBatch(pred, target, weights, mode)
    else:
        target = torch.as_tensor(data.distributions[idx], dtype=pred.dtype)
        batch = LossBatch(pred, target, None, mode)
    return compute_loss(run.loss, batch)


def train(run: RunConfig, data: PreparedData, val: Optional[PreparedData] = None,
          extra: Optional[dict] = None) -> TrainResult:
    """Fit a model; keep the checkpoint with the best validation SPRC (mean).

    Without an explicit `val`, a hashed-image-id fraction of `data` is held
    out. A non-finite loss aborts with `NumericFailure`; the last good
    checkpoint (if any) stays on disk.
    """
    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / CHECKPOINT_NAME
    log_path = out_dir / EPOCH_LOG_NAME

    if val is None and run.val_fraction > 0:
        rest, held = split_by_image(data.image_ids, run.val_fraction)
        if held and len(rest) >= 2:
            data, val = data.subset(rest), data.subset(held)

    set_seed(run.seed)
    config = run.model.with_changes(aux_dim=int(data.aux.shape[1])) if run.model.use_aux else run.model
    model = M2FN(config)
    if run.optimizer == "adam":
        opt = torch.optim.Adam(model.parameters(), lr=run.learning_rate)
    else:
        opt = torch.optim.SGD(model.parameters(), lr=run.learning_rate, momentum=0.9)
    gen = torch.Generator().manual_seed(run.seed)
    mode = config.output_mode
    extra = dict(extra or data.meta)

    epoch_log: List[dict] = []
    best_score, best_epoch = -math.inf, -1
    log_path.write_text("")
    n = len(data)
    for epoch in range(run.epochs):
        model.train()
        perm = torch.randperm(n, generator=gen).numpy()
        total, seen = 0.0, 0
        for lo in range(0, n, run.batch_size):
            idx = perm[lo:lo + run.batch_size]
            if len(idx) < 2:
                continue
            loss = _batch_loss(run, model, data, idx)
            if not torch.isfinite(loss):
                entry = {"epoch": epoch, "loss": None, "aborted": "non-finite loss"}
                with open(log_path, "a") as f:
                    f.write(json.dumps(entry) + "\n")
                raise NumericFailure(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        entry = {"epoch": epoch, "loss": total / max(seen, 1)}
        if val is not None and len(val) >= 2:
            report = safe_evaluate(predict(model, val), val.targets(mode), mode)
            entry["val"] = report.to_dict() if report else None
            score = report.sprc_mean if report else -math.inf
        else:
            score = -entry["loss"]
        epoch_log.append(entry)
        with open(log_path, "a") as f:
            f.write(json.dumps(entry) + "\n")
        if score > best_score:
            best_score, best_epoch = score, epoch
            save_checkpoint(ckpt_path, model, extra)
        log.info("epoch %d loss %.6g score %.4f", epoch, entry["loss"], score)

    if best_epoch < 0:
        save_checkpoint(ckpt_path, model, extra)
        best_epoch = run.epochs - 1
    best, _ = load_checkpoint(ckpt_path)
    return TrainResult(ckpt_path, epoch_log, best_epoch, best)


def evaluate_model(model: M2FN, data: PreparedData) -> MetricReport:
    mode = model.config.output_mode
    return evaluate(predict(model, data), data.targets(mode), mode)


def evaluate_checkpoint(checkpoint, data: PreparedData, mode: Optional[str] = None) -> MetricReport:
    model, _ = load_checkpoint(checkpoint)
    if mode is not None and mode != model.config.output_mode:
        raise ValueError(f"checkpoint is {model.config.output_mode!r}, asked for {mode!r}")
    if model.config.use_aux and data.aux.shape[1] != model.config.aux_dim:
        raise ValueError(f"dataset aux width {data.aux.shape[1]} != checkpoint aux_dim {model.config.aux_dim}")
    return evaluate_model(model, data)


def read_epoch_log(path) -> List[dict]:
    with open(path) as f:
        return [json.loads(l) for l in f if l.strip()]
