"""Losses and ranking metrics for CTR regression and score-distribution models.

Loss functions take torch tensors so they can sit directly in a training
loop; metrics take anything array-like and return plain floats.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from scipy.stats import rankdata

NUM_BUCKETS = 10
KLD_FLOOR = 1e-12

REGRESSION = "regression"
DISTRIBUTION = "distribution"


@dataclass
class LossBatch:
    """Predictions, targets and (for regression) impression weights."""

    predictions: torch.Tensor
    targets: torch.Tensor
    weights: Optional[torch.Tensor] = None
    mode: str = REGRESSION

    def __post_init__(self):
        if self.mode not in (REGRESSION, DISTRIBUTION):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.predictions.shape != self.targets.shape:
            raise ValueError(
                f"predictions {tuple(self.predictions.shape)} and targets "
                f"{tuple(self.targets.shape)} differ in shape")
        if self.predictions.shape[0] < 1:
            raise ValueError("empty batch")
        if self.mode == REGRESSION and self.predictions.dim() != 1:
            raise ValueError("regression batch must be one scalar per instance")
        if self.mode == DISTRIBUTION and self.predictions.dim() != 2:
            raise ValueError("distribution batch must be N x K")
        if self.weights is not None:
            if self.weights.shape != (self.predictions.shape[0],):
                raise ValueError("weights must have one entry per instance")
            if bool((self.weights <= 0).any()):
                raise ValueError("weights must be positive")


def weighted_mse(predictions, targets, weights):
    """Impression-weighted squared error, averaged over N (not over total weight)."""
    return (weights * (predictions - targets) ** 2).sum() / predictions.shape[0]


def kld(predictions, targets, floor=KLD_FLOOR):
    """Mean KL(target || prediction) over the batch.

    Terms with a zero target contribute nothing. `floor` only guards the
    prediction inside the log.
    """
    if bool((targets < 0).any()) or bool((predictions < 0).any()):
        raise ValueError("distributions must be nonnegative")
    safe_t = torch.where(targets > 0, targets, torch.ones_like(targets))
    ratio = torch.log(safe_t) - torch.log(predictions.clamp_min(floor))
    terms = torch.where(targets > 0, targets * ratio, torch.zeros_like(targets))
    return terms.sum() / predictions.shape[0]


def emd(predictions, targets, r=2.0, tol=1e-4):
    """Earth mover's distance between ordered-bucket distributions (CDF form)."""
    if r < 1:
        raise ValueError("r must be >= 1")
    for name, t in (("predictions", predictions), ("targets", targets)):
        sums = t.detach().sum(dim=1)
        if bool(((sums - 1).abs() > tol).any()):
            raise ValueError(f"{name} rows must sum to 1 (tolerance {tol})")
    k = predictions.shape[1]
    diff = torch.cumsum(targets, dim=1) - torch.cumsum(predictions, dim=1)
    per_row = ((diff.abs() ** r).sum(dim=1) / k) ** (1.0 / r)
    return per_row.mean()


def loss_weighted_mse(batch: LossBatch):
    if batch.mode != REGRESSION:
        raise ValueError("weighted MSE needs a regression batch")
    if batch.weights is None:
        raise ValueError("weighted MSE needs impression weights")
    return weighted_mse(batch.predictions, batch.targets, batch.weights)


def loss_kld(batch: LossBatch, floor: float = KLD_FLOOR):
    if batch.mode != DISTRIBUTION:
        raise ValueError("KLD needs a distribution batch")
    return kld(batch.predictions, batch.targets, floor)


def loss_emd(batch: LossBatch, r: float = 2.0):
    if batch.mode != DISTRIBUTION:
        raise ValueError("EMD needs a distribution batch")
    return emd(batch.predictions, batch.targets, r)


LOSSES = {"wmse": loss_weighted_mse, "kld": loss_kld, "emd": loss_emd}
LOSS_MODES = {"wmse": REGRESSION, "kld": DISTRIBUTION, "emd": DISTRIBUTION}


def compute_loss(name: str, batch: LossBatch):
    try:
        fn = LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None
    return fn(batch)


# ---------------------------------------------------------------------------
# correlation metrics
# ---------------------------------------------------------------------------

def _as_pair(xs, ys):
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("correlation needs at least two points")
    return x, y


def pearson(xs, ys) -> float:
    x, y = _as_pair(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for constant input")
    r = float(dx @ dy) / (sx * sy)
    return max(-1.0, min(1.0, r))


def spearman(xs, ys) -> float:
    """Pearson correlation of mean-ranked values (ties share the average rank)."""
    x, y = _as_pair(xs, ys)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def distribution_moments(dists):
    """Mean and standard deviation of each row over bucket scores 1..K."""
    p = np.asarray(dists, dtype=np.float64)
    k = np.arange(1, p.shape[1] + 1, dtype=np.float64)
    mean = p @ k
    var = p @ (k ** 2) - mean ** 2
    return mean, np.sqrt(np.clip(var, 0.0, None))


@dataclass
class MetricReport:
    sprc_mean: float
    lcc_mean: float
    sprc_std: Optional[float] = None
    lcc_std: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: d.get(k) for k in ("sprc_mean", "lcc_mean", "sprc_std", "lcc_std")})

    @classmethod
    def from_json(cls, s: str) -> "MetricReport":
        return cls.from_dict(json.loads(s))


def evaluate(predictions, targets, mode: str) -> MetricReport:
    """SPRC/LCC of predicted against true scores.

    In distribution mode the correlations are computed twice: on the
    per-instance distribution means and on the per-instance standard
    deviations.
    """
    if mode == REGRESSION:
        p = np.asarray(predictions, dtype=np.float64).ravel()
        t = np.asarray(targets, dtype=np.float64).ravel()
        return MetricReport(spearman(p, t), pearson(p, t))
    if mode == DISTRIBUTION:
        pm, ps = distribution_moments(predictions)
        tm, ts = distribution_moments(targets)
        return MetricReport(spearman(pm, tm), pearson(pm, tm), spearman(ps, ts), pearson(ps, ts))
    raise ValueError(f"unknown mode {mode!r}")


def scalar_scores(outputs, mode: str) -> np.ndarray:
    """Collapse model outputs to one ranking score per instance."""
    if mode == REGRESSION:
        return np.asarray(outputs, dtype=np.float64).ravel()
    return distribution_moments(outputs)[0]


__all__: Sequence[str] = [
    "LossBatch", "MetricReport", "compute_loss", "distribution_moments", "emd",
    "evaluate", "kld", "loss_emd", "loss_kld", "loss_weighted_mse", "pearson",
    "scalar_scores", "spearman", "weighted_mse",
]
