"""AVA-style rating annotations: `image_id c1 ... c10 tag one;tag two` per line."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

from .distributions import NUM_BUCKETS, ScoreDistribution

log = logging.getLogger(__name__)

TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class AvaItem:
    image_id: str
    distribution: ScoreDistribution
    tags: Tuple[str, ...]
    split: str = "train"


def _hash_key(image_id: str) -> str:
    return hashlib.sha256(image_id.encode("utf-8")).hexdigest()


def split_ids(ids: Sequence[str], train_fraction: float = TRAIN_FRACTION):
    """Deterministic split: rank ids by hash, first round(n * fraction) go to train."""
    ordered = sorted(set(ids), key=lambda i: (_hash_key(i), i))
    n_train = int(round(len(ordered) * train_fraction))
    return set(ordered[:n_train]), set(ordered[n_train:])


def parse_ava_line(line: str, lineno: int = 0):
    parts = line.strip().split(maxsplit=NUM_BUCKETS + 1)
    if len(parts) < NUM_BUCKETS + 1:
        raise ValueError(f"line {lineno}: expected id and {NUM_BUCKETS} counts")
    try:
        counts = [int(c) for c in parts[1:NUM_BUCKETS + 1]]
    except ValueError:
        raise ValueError(f"line {lineno}: rating counts must be integers") from None
    if any(c < 0 for c in counts):
        raise ValueError(f"line {lineno}: negative rating count")
    tags = ()
    if len(parts) > NUM_BUCKETS + 1:
        tags = tuple(t.strip() for t in parts[NUM_BUCKETS + 1].split(";") if t.strip())
    return parts[0], counts, tags


def load_ava_style(path, train_fraction: float = TRAIN_FRACTION) -> List[AvaItem]:
    rows = []
    with open(Path(path), encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            image_id, counts, tags = parse_ava_line(line, lineno)
            if sum(counts) == 0:
                log.warning("line %d (%s): all-zero ratings, skipped", lineno, image_id)
                continue
            rows.append((image_id, ScoreDistribution.from_counts(counts), tags))
    train, _ = split_ids([r[0] for r in rows], train_fraction)
    return [AvaItem(i, d, t, "train" if i in train else "test") for i, d, t in rows]
