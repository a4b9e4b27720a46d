"""Auxiliary-attribute encoding: rare-level merging, one-hot blocks, text embeddings."""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple

import numpy as np

from .schema import CATEGORICAL_LEVELS, DOMCOL_LABELS, TEXT_FIELDS

log = logging.getLogger(__name__)

EMBED_DIM = 768
RARE_LEVEL_THRESHOLD = 50_000


def merge_rare_levels(
    level_histogram: Mapping[Hashable, int],
    threshold: int = RARE_LEVEL_THRESHOLD,
    order: Optional[Sequence[Hashable]] = None,
) -> Dict[Hashable, Hashable]:
    """Map each level to itself, or (if rare) to the closest frequent level.

    A level is rare when its impression count is below `threshold`. Distance
    is the position difference in `order` (default: sorted levels); ties go
    to the lower level. If no level reaches the threshold, everything is
    merged into the most frequent level and a warning is logged.
    """
    if not level_histogram:
        raise ValueError("empty level histogram")
    if order is None:
        order = sorted(level_histogram)
    pos = {lvl: i for i, lvl in enumerate(order)}
    missing = [lvl for lvl in level_histogram if lvl not in pos]
    if missing:
        raise ValueError(f"levels {missing} not in declared order")

    frequent = [lvl for lvl in order if level_histogram.get(lvl, 0) >= threshold]
    if not frequent:
        target = max(order, key=lambda l: (level_histogram.get(l, 0), -pos[l]))
        log.warning("all levels below %d impressions; merging into %r", threshold, target)
        return {lvl: target for lvl in level_histogram}

    mapping = {}
    for lvl in level_histogram:
        if level_histogram[lvl] >= threshold:
            mapping[lvl] = lvl
        else:
            mapping[lvl] = min(frequent, key=lambda f: (abs(pos[f] - pos[lvl]), pos[f]))
    return mapping


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic stand-in for a sentence encoder.

    Each text seeds a generator through SHA-256, so identical strings get
    identical vectors with components uniform in [-1, 1].
    """

    def __init__(self, seed: int = 0, dim: int = EMBED_DIM):
        self.seed = seed
        self.dim = dim
        self.provider_id = f"hash-v1-seed{seed}-dim{dim}"
        self._cache: Dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        vec = self._cache.get(text)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}\x00{text}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.uniform(-1.0, 1.0, self.dim).astype(np.float32)
            vec.setflags(write=False)
            self._cache[text] = vec
        return vec


class CachedEmbedder:
    """Look texts up in a precomputed table, falling back to another provider."""

    def __init__(self, table: np.ndarray, index: Mapping[str, int], fallback: Optional[EmbeddingProvider] = None,
                 provider_id: str = "cache"):
        self.table = table
        self.index = dict(index)
        self.fallback = fallback
        self.dim = table.shape[1]
        self.provider_id = provider_id

    def embed(self, text: str) -> np.ndarray:
        row = self.index.get(text_hash(text))
        if row is not None:
            return self.table[row]
        if self.fallback is None:
            raise KeyError(f"text not in embedding cache: {text[:40]!r}")
        return self.fallback.embed(text)


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_embedding_cache(path, texts: Iterable[str], embedder: EmbeddingProvider) -> None:
    """Binary table (u64 rows, u64 dim, float32 row-major, little-endian) plus a JSON sidecar."""
    path = Path(path)
    index: Dict[str, int] = {}
    rows: List[np.ndarray] = []
    for t in texts:
        h = text_hash(t)
        if h not in index:
            index[h] = len(rows)
            rows.append(np.asarray(embedder.embed(t), dtype=np.float32))
    dim = rows[0].shape[0] if rows else EMBED_DIM
    table = np.stack(rows) if rows else np.zeros((0, dim), np.float32)
    with open(path, "wb") as f:
        f.write(struct.pack("<QQ", table.shape[0], dim))
        f.write(table.astype("<f4").tobytes(order="C"))
    sidecar = Path(str(path) + ".json")
    sidecar.write_text(json.dumps(index, sort_keys=True))


def read_embedding_cache(path) -> Tuple[np.ndarray, Dict[str, int]]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated header")
    n, dim = struct.unpack_from("<QQ", raw, 0)
    expected = 16 + 4 * n * dim
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    table = np.frombuffer(raw, dtype="<f4", offset=16).reshape(n, dim).astype(np.float32)
    index = json.loads(Path(str(path) + ".json").read_text())
    return table, index


@dataclass(frozen=True)
class Block:
    name: str
    kind: str  # "onehot" | "text"
    width: int
    levels: Tuple = ()


@dataclass
class AuxLayout:
    """Ordered blocks making up the auxiliary vector."""

    blocks: List[Block]
    offsets: Dict[str, Tuple[int, int]] = field(init=False)

    def __post_init__(self):
        self.offsets = {}
        start = 0
        for b in self.blocks:
            self.offsets[b.name] = (start, start + b.width)
            start += b.width

    @property
    def dim(self) -> int:
        return sum(b.width for b in self.blocks)

    def block(self, name) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def onehot_blocks(self):
        return [b for b in self.blocks if b.kind == "onehot"]

    def to_dict(self) -> dict:
        return {"blocks": [{"name": b.name, "kind": b.kind, "width": b.width, "levels": list(b.levels)}
                           for b in self.blocks]}

    @classmethod
    def from_dict(cls, d) -> "AuxLayout":
        return cls([Block(b["name"], b["kind"], b["width"], tuple(b["levels"])) for b in d["blocks"]])


def realad_layout(categorical: Optional[Sequence[str]] = None, text: Sequence[str] = TEXT_FIELDS,
                  include_domcol: bool = True, embed_dim: int = EMBED_DIM) -> AuxLayout:
    """Layout for ad click data: one-hot per categorical attribute, dominant colour, text blocks."""
    names = list(CATEGORICAL_LEVELS) if categorical is None else list(categorical)
    blocks = [Block(n, "onehot", len(CATEGORICAL_LEVELS[n]), CATEGORICAL_LEVELS[n]) for n in names]
    if include_domcol:
        blocks.append(Block("domcol", "onehot", len(DOMCOL_LABELS), DOMCOL_LABELS))
    blocks += [Block(t, "text", embed_dim) for t in text]
    return AuxLayout(blocks)


def ava_layout(embed_dim: int = EMBED_DIM) -> AuxLayout:
    return AuxLayout([Block("tags", "text", embed_dim)])


def identity_merge_maps(layout: AuxLayout) -> Dict[str, Dict]:
    return {b.name: {lvl: lvl for lvl in b.levels} for b in layout.onehot_blocks()}


def encode_auxiliary(values: Mapping[str, object], merge_maps: Mapping[str, Mapping], embedder: EmbeddingProvider,
                     layout: AuxLayout) -> np.ndarray:
    """Encode one instance's attributes into a dense float32 vector.

    Categorical values pass through their merge map before one-hot encoding.
    An empty text field encodes as a zero block.
    """
    out = np.zeros(layout.dim, dtype=np.float32)
    for b in layout.blocks:
        lo, hi = layout.offsets[b.name]
        if b.kind == "onehot":
            if b.name not in merge_maps:
                raise ValueError(f"no merge map for attribute {b.name!r}")
            raw = values[b.name]
            try:
                merged = merge_maps[b.name][raw]
                idx = b.levels.index(merged)
            except (KeyError, ValueError):
                raise ValueError(f"unknown level {raw!r} for attribute {b.name!r}") from None
            out[lo + idx] = 1.0
        else:
            text = values.get(b.name) or ""
            if text:
                vec = np.asarray(embedder.embed(text), dtype=np.float32)
                if vec.shape != (b.width,):
                    raise ValueError(f"embedder returned {vec.shape} for block {b.name!r} of width {b.width}")
                if not np.all(np.isfinite(vec)):
                    raise ValueError(f"non-finite embedding for {b.name!r}")
                out[lo:hi] = vec
    return out


def build_merge_maps(instances, layout: AuxLayout, threshold: int = RARE_LEVEL_THRESHOLD) -> Dict[str, Dict]:
    """Impression-weighted level histograms per attribute, then `merge_rare_levels` on each.

    `instances` are dict-like attribute maps paired with impression counts.
    """
    maps = {}
    for b in layout.onehot_blocks():
        hist = {lvl: 0 for lvl in b.levels}
        for attrs, impressions in instances:
            v = attrs.get(b.name)
            if v in hist:
                hist[v] += impressions
        present = {k: v for k, v in hist.items() if v > 0}
        if not present:
            maps[b.name] = {lvl: lvl for lvl in b.levels}
            continue
        m = merge_rare_levels(present, threshold, order=b.levels)
        for lvl in b.levels:
            if lvl not in m:
                # never observed: route like a rare level
                m[lvl] = merge_rare_levels({**present, lvl: 0}, threshold, order=b.levels)[lvl]
        maps[b.name] = m
    return maps
