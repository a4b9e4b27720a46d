"""Click-log and aggregated-dataset files."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Iterator, List, Optional

import numpy as np
from PIL import Image

from .schema import RECORD_FIELDS, AggregatedInstance, ClickLogRecord, MalformedRecord


def write_click_log(path, records: Iterable[ClickLogRecord]) -> int:
    path = Path(path)
    n = 0
    if path.suffix == ".jsonl":
        with open(path, "w", encoding="utf-8") as f:
            for r in records:
                f.write(json.dumps({k: getattr(r, k) for k in RECORD_FIELDS}) + "\n")
                n += 1
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(RECORD_FIELDS)
            for r in records:
                w.writerow([getattr(r, k) for k in RECORD_FIELDS])
                n += 1
    return n


def read_click_log(path) -> Iterator[ClickLogRecord]:
    """Yield records from a CSV (with header) or JSON-lines file."""
    path = Path(path)
    if path.suffix == ".jsonl":
        with open(path, encoding="utf-8") as f:
            for i, line in enumerate(f):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as e:
                    raise MalformedRecord(i, f"bad JSON: {e}") from None
                yield ClickLogRecord.from_mapping(row, i)
    else:
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.DictReader(f)
            missing = set(RECORD_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: header lacks {sorted(missing)}")
            for i, row in enumerate(reader):
                yield ClickLogRecord.from_mapping(row, i)


def write_aggregated(path, instances: Iterable[AggregatedInstance], image_dir: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            image_path = str(Path(image_dir) / f"{inst.image_id}.png") if image_dir else inst.image_id
            f.write(json.dumps({
                "image_id": inst.image_id,
                "image_path": image_path,
                "attributes": inst.attributes,
                "impressions": inst.impressions,
                "clicks": inst.clicks,
                "ctr": inst.ctr,
            }, sort_keys=True) + "\n")


def read_aggregated(path) -> List[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for i, line in enumerate(f):
            if line.strip():
                row = json.loads(line)
                for k in ("image_id", "attributes", "impressions", "clicks"):
                    if k not in row:
                        raise ValueError(f"{path}:{i + 1}: missing {k!r}")
                rows.append(row)
    return rows


def save_image(path, pixels: np.ndarray) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")


def load_image(path, size: Optional[int] = None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        return np.asarray(im, dtype=np.uint8).copy()
