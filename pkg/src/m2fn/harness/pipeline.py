"""End-to-end data preparation shared by the CLI, the ablation runner and the tests."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..data.aggregate import aggregate_logs
from ..data.ava import load_ava_style
from ..data.encoding import (CachedEmbedder, HashEmbedder, ava_layout, build_merge_maps, read_embedding_cache,
                             realad_layout)
from ..data.io import load_image, read_aggregated
from ..data.schema import AggregatedInstance, CATEGORICAL_FIELDS, TEXT_FIELDS
from ..data.synthetic import PlantedEffects, generate_synthetic_dataset
from .config import RunConfig
from .dataset import DominantColors, PreparedData, build_ava, build_realad, split_by_image, training_bucket_edges

log = logging.getLogger(__name__)

TEST_FRACTION = 0.2


@dataclass
class Prepared:
    train: PreparedData
    test: Optional[PreparedData]
    extra: dict


def make_embedder(run: RunConfig):
    fallback = HashEmbedder(seed=0)
    if run.embedding_cache:
        table, index = read_embedding_cache(run.embedding_cache)
        return CachedEmbedder(table, index, fallback, provider_id=f"cache:{Path(run.embedding_cache).name}")
    return fallback


def _merge_maps_to_json(maps) -> dict:
    return {k: [[a, b] for a, b in sorted(v.items(), key=lambda kv: str(kv[0]))] for k, v in maps.items()}


def merge_maps_from_json(d) -> dict:
    return {k: {a: b for a, b in pairs} for k, pairs in d.items()}


def prepare_instances(train_instances: Sequence[AggregatedInstance], test_instances: Sequence[AggregatedInstance],
                      images: Mapping[str, np.ndarray], run: RunConfig, embedder=None) -> Prepared:
    """Encode ad instances with merge maps and bucket edges fitted on the training part only."""
    embedder = embedder or make_embedder(run)
    layout = realad_layout()
    maps = build_merge_maps([(i.attributes, i.impressions) for i in train_instances], layout,
                            run.rare_level_threshold)
    edges = training_bucket_edges(train_instances) if run.model.output_mode == "distribution" else None
    colors = DominantColors()
    kw = dict(layout=layout, merge_maps=maps, embedder=embedder, bucket_edges=edges,
              lognormal_width=run.lognormal_width, colors=colors)
    train = build_realad(train_instances, images, **kw)
    test = build_realad(test_instances, images, **kw) if test_instances else None
    extra = {"layout": layout.to_dict(), "merge_maps": _merge_maps_to_json(maps),
             "bucket_edges": None if edges is None else [float(e) for e in edges],
             "embedder": embedder.provider_id, "image_size": run.model.input_size}
    train.meta = dict(extra)
    if test is not None:
        test.meta = dict(extra)
    return Prepared(train, test, extra)


def split_instances(instances: Sequence[AggregatedInstance], fraction: float = TEST_FRACTION):
    rest, held = split_by_image([i.image_id for i in instances], fraction, salt="test")
    return [instances[i] for i in rest], [instances[i] for i in held]


def synthetic_prepared(run: RunConfig, n_instances: int, data_seed: int = 0,
                       effects: Optional[PlantedEffects] = None, test_fraction: float = TEST_FRACTION) -> Prepared:
    """Generate, aggregate, split by image and encode a synthetic dataset in memory."""
    synth = generate_synthetic_dataset(data_seed, n_instances, run.model.input_size, effects)
    records = [r for s in synth for r in s.records]
    images = {s.image_id: s.image.pixels for s in synth}
    instances = aggregate_logs(records, run.min_impressions)
    train, test = split_instances(instances, test_fraction)
    return prepare_instances(train, test, images, run)


def _rows_to_instances(rows) -> Tuple[List[AggregatedInstance], Dict[str, str]]:
    instances, paths = [], {}
    keys = CATEGORICAL_FIELDS + TEXT_FIELDS
    for row in rows:
        attrs = row["attributes"]
        tup = tuple(int(attrs[k]) if k in CATEGORICAL_FIELDS else str(attrs.get(k) or "") for k in keys)
        instances.append(AggregatedInstance(row["image_id"], tup, int(row["impressions"]), int(row["clicks"])))
        paths[row["image_id"]] = row.get("image_path") or row["image_id"]
    return instances, paths


def _load_images(paths: Mapping[str, str], image_dir: str, size: int) -> Dict[str, np.ndarray]:
    out = {}
    for image_id, p in paths.items():
        path = Path(p)
        if not path.is_absolute() and image_dir:
            path = Path(image_dir) / path.name
        if not path.exists() and image_dir:
            path = Path(image_dir) / f"{image_id}.png"
        out[image_id] = load_image(path, size)
    return out


def prepare_from_files(run: RunConfig) -> Prepared:
    """Load the dataset files named in `run`.

    Real-Ad style: aggregated JSON-lines (test split by image hash when no
    test file is given). AVA style: rating annotations with images named
    ``<image_id>.png`` / ``.jpg`` in `image_dir`.
    """
    if not run.train_path:
        raise FileNotFoundError("train_path is not set")
    size = run.model.input_size
    if run.dataset_kind == "ava":
        items = load_ava_style(run.train_path)
        ids = [it.image_id for it in items]
        images = {}
        for i in ids:
            for ext in (".png", ".jpg", ".jpeg"):
                p = Path(run.image_dir) / f"{i}{ext}"
                if p.exists():
                    images[i] = load_image(p, size)
                    break
            else:
                raise FileNotFoundError(f"no image for {i!r} in {run.image_dir!r}")
        embedder = make_embedder(run)
        layout = ava_layout()
        train = build_ava([it for it in items if it.split == "train"], images, layout, embedder)
        test_items = [it for it in items if it.split == "test"]
        test = build_ava(test_items, images, layout, embedder) if test_items else None
        extra = {"layout": layout.to_dict(), "embedder": embedder.provider_id, "image_size": size}
        return Prepared(train, test, extra)
    if run.dataset_kind != "realad":
        raise ValueError(f"unknown dataset_kind {run.dataset_kind!r}")
    train_inst, paths = _rows_to_instances(read_aggregated(run.train_path))
    train_inst = [i for i in train_inst if i.impressions >= run.min_impressions]
    if run.test_path:
        test_inst, test_paths = _rows_to_instances(read_aggregated(run.test_path))
        test_inst = [i for i in test_inst if i.impressions >= run.min_impressions]
        paths.update(test_paths)
    else:
        train_inst, test_inst = split_instances(train_inst)
    images = _load_images(paths, run.image_dir, size)
    return prepare_instances(train_inst, test_inst, images, run)


def prepare_eval_data(rows_path, extra: dict, run: RunConfig) -> PreparedData:
    """Encode an aggregated file with the merge maps and edges stored in a checkpoint."""
    from ..data.encoding import AuxLayout
    instances, paths = _rows_to_instances(read_aggregated(rows_path))
    images = _load_images(paths, run.image_dir, extra.get("image_size", run.model.input_size))
    edges = extra.get("bucket_edges")
    return build_realad(instances, images, AuxLayout.from_dict(extra["layout"]),
                        merge_maps_from_json(extra["merge_maps"]), make_embedder(run),
                        None if edges is None else np.asarray(edges), run.lognormal_width)
