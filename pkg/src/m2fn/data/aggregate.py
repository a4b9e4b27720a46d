from __future__ import annotations

from collections import defaultdict
from typing import Dict, Iterable, List, Tuple

from .schema import AggregatedInstance, ClickLogRecord

Counts = Dict[tuple, List[int]]


def count_keys(records: Iterable[ClickLogRecord], start_index: int = 0) -> Counts:
    """Map each (image, attributes) key to [impressions, clicks].

    Validates every record; the error carries the offending record's index.
    Shards may be counted separately and combined with `merge_counts`.
    """
    counts: Counts = defaultdict(lambda: [0, 0])
    for i, rec in enumerate(records, start_index):
        rec.validate(i)
        c = counts[rec.key()]
        c[0] += 1
        c[1] += rec.clicked
    return dict(counts)


def merge_counts(*shards: Counts) -> Counts:
    out: Counts = {}
    for shard in shards:
        for key, (m, mc) in shard.items():
            cur = out.setdefault(key, [0, 0])
            cur[0] += m
            cur[1] += mc
    return out


def instances_from_counts(counts: Counts, min_impressions: int = 1) -> List[AggregatedInstance]:
    if min_impressions < 1:
        raise ValueError("min_impressions must be >= 1")
    out = [
        AggregatedInstance(key[0], key[1:], m, mc)
        for key, (m, mc) in counts.items()
        if m >= min_impressions
    ]
    out.sort(key=lambda a: (a.image_id, tuple(str(v) for v in a.attribute_tuple)))
    return out


def aggregate_logs(records: Iterable[ClickLogRecord], min_impressions: int = 1) -> List[AggregatedInstance]:
    """Group exposures by (image, attribute tuple) and compute CTR = clicks / impressions.

    Keys seen fewer than `min_impressions` times are dropped. Output is
    sorted by image id then attributes so it does not depend on input order.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    return instances_from_counts(count_keys(records), min_impressions)


def totals(instances: Iterable[AggregatedInstance]) -> Tuple[int, int]:
    m = mc = 0
    for inst in instances:
        m += inst.impressions
        mc += inst.clicks
    return m, mc
