"""Turn aggregated instances (or AVA items) plus images into model-ready tensors."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
import torch

from ..data.color import ColorPalette, dominant_color
from ..data.distributions import ctr_decile_edges, lognormal_distribution
from ..data.encoding import AuxLayout, EmbeddingProvider, encode_auxiliary
from ..data.schema import AggregatedInstance


@dataclass
class PreparedData:
    images: torch.Tensor          # N x 3 x S x S, float32, roughly zero-centred
    aux: torch.Tensor             # N x D
    ctr: np.ndarray               # scalar target (CTR, or distribution mean for AVA)
    impressions: np.ndarray
    distributions: Optional[np.ndarray]  # N x 10 target distributions
    image_ids: List[str]
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.image_ids)

    def subset(self, idx) -> "PreparedData":
        idx = np.asarray(idx, dtype=np.int64)
        t = torch.as_tensor(idx)
        return PreparedData(
            self.images[t], self.aux[t], self.ctr[idx], self.impressions[idx],
            None if self.distributions is None else self.distributions[idx],
            [self.image_ids[i] for i in idx], dict(self.meta))

    def targets(self, mode: str) -> np.ndarray:
        if mode == "regression":
            return self.ctr
        if self.distributions is None:
            raise ValueError("dataset carries no target distributions")
        return self.distributions


def image_to_tensor(pixels: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(pixels, dtype=np.float32).transpose(2, 0, 1) / 255.0 - 0.5)


def hashed_fraction(image_id: str, salt: str = "") -> float:
    h = hashlib.sha256(f"{salt}{image_id}".encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") / 2 ** 64


def split_by_image(image_ids: Sequence[str], fraction: float, salt: str = "val"):
    """Indices (rest, held_out): an image goes to held_out when its hash falls below `fraction`."""
    held = [i for i, im in enumerate(image_ids) if hashed_fraction(im, salt) < fraction]
    held_set = set(held)
    rest = [i for i in range(len(image_ids)) if i not in held_set]
    return rest, held


class DominantColors:
    """Per-image dominant-colour cache."""

    def __init__(self, palette: Optional[ColorPalette] = None):
        self.palette = palette or ColorPalette()
        self._cache: Dict[str, str] = {}

    def __call__(self, image_id: str, pixels: np.ndarray) -> str:
        if image_id not in self._cache:
            self._cache[image_id] = dominant_color(pixels, self.palette)
        return self._cache[image_id]


def build_realad(instances: Sequence[AggregatedInstance], images: Mapping[str, np.ndarray], layout: AuxLayout,
                 merge_maps: Mapping, embedder: EmbeddingProvider, bucket_edges=None,
                 lognormal_width: float = 1.0, colors: Optional[DominantColors] = None) -> PreparedData:
    """Encode aggregated ad instances; dominant colour comes from each image's pixels."""
    if not instances:
        raise ValueError("no instances")
    colors = colors or DominantColors()
    needs_domcol = any(b.name == "domcol" for b in layout.blocks)
    img_cache: Dict[str, torch.Tensor] = {}
    imgs, auxs = [], []
    for inst in instances:
        pixels = images[inst.image_id]
        if inst.image_id not in img_cache:
            img_cache[inst.image_id] = image_to_tensor(pixels)
        imgs.append(img_cache[inst.image_id])
        values = inst.attributes
        if needs_domcol:
            values["domcol"] = colors(inst.image_id, pixels)
        auxs.append(encode_auxiliary(values, merge_maps, embedder, layout))
    ctr = np.array([i.ctr for i in instances], dtype=np.float64)
    impressions = np.array([i.impressions for i in instances], dtype=np.float64)
    dists = None
    if bucket_edges is not None:
        dists = np.stack([lognormal_distribution(c, int(m), bucket_edges, lognormal_width).as_array()
                          for c, m in zip(ctr, impressions)])
    return PreparedData(torch.stack(imgs), torch.from_numpy(np.stack(auxs)), ctr, impressions, dists,
                        [i.image_id for i in instances],
                        {"layout": layout.to_dict(), "bucket_edges": None if bucket_edges is None
                         else [float(e) for e in bucket_edges]})


def build_ava(items, images: Mapping[str, np.ndarray], layout: AuxLayout, embedder: EmbeddingProvider) -> PreparedData:
    """AVA-style items: the aux vector is the mean tag embedding (zeros when untagged)."""
    if not items:
        raise ValueError("no items")
    imgs, auxs, dists = [], [], []
    width = layout.blocks[0].width
    for it in items:
        imgs.append(image_to_tensor(images[it.image_id]))
        if it.tags:
            vec = np.mean([np.asarray(embedder.embed(t), dtype=np.float32) for t in it.tags], axis=0)
        else:
            vec = np.zeros(width, np.float32)
        auxs.append(vec.astype(np.float32))
        dists.append(it.distribution.as_array())
    dists = np.stack(dists)
    means = dists @ np.arange(1, dists.shape[1] + 1)
    return PreparedData(torch.stack(imgs), torch.from_numpy(np.stack(auxs)), means, np.ones(len(items)), dists,
                        [it.image_id for it in items], {"layout": layout.to_dict()})


def training_bucket_edges(instances: Sequence[AggregatedInstance]) -> np.ndarray:
    return ctr_decile_edges([i.ctr for i in instances])
