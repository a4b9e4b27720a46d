"""Ten-bucket score distributions, including the log-normal CTR approximation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

log = logging.getLogger(__name__)

NUM_BUCKETS = 10


@dataclass(frozen=True)
class ScoreDistribution:
    buckets: tuple

    def __post_init__(self):
        b = np.asarray(self.buckets, dtype=np.float64)
        if b.shape != (NUM_BUCKETS,):
            raise ValueError(f"need {NUM_BUCKETS} buckets, got {b.shape}")
        if np.any(b < 0):
            raise ValueError("negative bucket mass")
        if abs(b.sum() - 1.0) > 1e-6:
            raise ValueError(f"buckets sum to {b.sum()}, not 1")

    @classmethod
    def from_counts(cls, counts) -> "ScoreDistribution":
        c = np.asarray(counts, dtype=np.float64)
        total = c.sum()
        if total <= 0:
            raise ValueError("all-zero counts")
        return cls(tuple(c / total))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.buckets, dtype=np.float64)

    @property
    def mean(self) -> float:
        return float(self.as_array() @ np.arange(1, NUM_BUCKETS + 1))

    @property
    def std(self) -> float:
        k = np.arange(1, NUM_BUCKETS + 1)
        p = self.as_array()
        return math.sqrt(max(0.0, float(p @ k ** 2) - self.mean ** 2))


def _point_mass(i: int) -> ScoreDistribution:
    b = [0.0] * NUM_BUCKETS
    b[i] = 1.0
    return ScoreDistribution(tuple(b))


def lognormal_distribution(ctr: float, impressions: int, bucket_edges: Sequence[float],
                           width: float = 1.0) -> ScoreDistribution:
    """Spread a point CTR over ten buckets with a log-normal centred (median) on it.

    The log-scale spread is width / sqrt(impressions), so well-observed
    instances get sharper distributions. Mass is integrated over the
    buckets and renormalised to the edge range.
    """
    edges = np.asarray(bucket_edges, dtype=np.float64)
    if edges.shape != (NUM_BUCKETS + 1,):
        raise ValueError(f"need {NUM_BUCKETS + 1} edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bucket edges must be strictly ascending")
    if impressions < 1:
        raise ValueError("impressions must be >= 1")
    if ctr < 0 or ctr > 1:
        raise ValueError("ctr must lie in [0, 1]")
    if ctr == 0:
        return _point_mass(0)
    if ctr > edges[-1]:
        log.warning("ctr %.6g above last bucket edge %.6g; all mass in top bucket", ctr, edges[-1])
        return _point_mass(NUM_BUCKETS - 1)

    sigma = width / math.sqrt(impressions)
    with np.errstate(divide="ignore"):
        z = (np.log(edges) - math.log(ctr)) / sigma
    # lower half via cdf, upper half via sf keeps tail differences accurate
    cdf = norm.cdf(z)
    sf = norm.sf(z)
    mass = np.where(z[1:] <= 0, cdf[1:] - cdf[:-1], sf[:-1] - sf[1:])
    mass = np.clip(mass, 0.0, None)
    total = mass.sum()
    if not total > 0:
        # all mass fell outside (underflow); put it in the nearest bucket
        i = int(np.clip(np.searchsorted(edges, ctr) - 1, 0, NUM_BUCKETS - 1))
        return _point_mass(i)
    return ScoreDistribution(tuple(mass / total))


def ctr_decile_edges(ctrs: Sequence[float]) -> np.ndarray:
    """Bucket edges at the deciles of a CTR sample: 0, q10, ..., q90, max."""
    c = np.asarray(ctrs, dtype=np.float64)
    if c.size == 0:
        raise ValueError("no CTRs")
    edges = np.empty(NUM_BUCKETS + 1)
    edges[0] = 0.0
    edges[1:NUM_BUCKETS] = np.quantile(c, np.arange(1, NUM_BUCKETS) / NUM_BUCKETS)
    edges[NUM_BUCKETS] = max(c.max(), 1e-12)
    for i in range(1, NUM_BUCKETS + 1):
        if edges[i] <= edges[i - 1]:
            edges[i] = np.nextafter(edges[i - 1], np.inf) if edges[i - 1] > 0 else 1e-12
    return edges
