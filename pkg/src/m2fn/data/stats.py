from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from scipy.stats import f as f_dist

log = logging.getLogger(__name__)

SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class AnovaResult:
    f_statistic: float
    p_value: float
    keep: bool
    excluded_levels: tuple = ()


def anova_screen(levels: Sequence[Hashable], ctrs: Sequence[float], alpha: float = SIGNIFICANCE) -> AnovaResult:
    """One-way ANOVA of CTR across attribute levels; keep the attribute when p < alpha.

    Levels observed only once carry no within-group information and are
    dropped with a warning.
    """
    if len(levels) != len(ctrs):
        raise ValueError("levels and ctrs differ in length")
    groups = defaultdict(list)
    for lvl, y in zip(levels, ctrs):
        groups[lvl].append(float(y))
    excluded = tuple(sorted((l for l, g in groups.items() if len(g) < 2), key=repr))
    if excluded:
        log.warning("excluding single-observation levels from ANOVA: %s", excluded)
    samples = [np.asarray(g) for l, g in groups.items() if len(g) >= 2]
    if len(samples) < 2:
        raise ValueError("ANOVA needs at least two levels with two or more observations each")

    n = sum(s.size for s in samples)
    k = len(samples)
    grand = np.concatenate(samples).mean()
    ss_between = sum(s.size * (s.mean() - grand) ** 2 for s in samples)
    ss_within = sum(((s - s.mean()) ** 2).sum() for s in samples)
    df_b, df_w = k - 1, n - k
    if ss_within == 0.0:
        f_stat = 0.0 if ss_between == 0.0 else float("inf")
        p = 1.0 if ss_between == 0.0 else 0.0
    else:
        f_stat = float((ss_between / df_b) / (ss_within / df_w))
        p = float(f_dist.sf(f_stat, df_b, df_w))
    return AnovaResult(f_stat, p, p < alpha, excluded)
