"""Raster outputs: loss curves, ablation bar charts, heatmap overlays."""
from __future__ import annotations

import os
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .gradcam import Heatmap  # noqa: E402

# strip version/date metadata so reruns are byte-identical
_PNG_META = {"Software": None}


class NothingToPlot(ValueError):
    pass


def _out_dir(out_dir) -> Path:
    p = Path(out_dir)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"output directory {p} is not writable")
    return p


def plot_epoch_log(epoch_log: Sequence[dict], out_dir) -> List[Path]:
    if not epoch_log:
        raise NothingToPlot("empty epoch log")
    out = _out_dir(out_dir)
    epochs = [e["epoch"] for e in epoch_log]
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=100)
    ax.plot(epochs, [e.get("loss") if e.get("loss") is not None else np.nan for e in epoch_log], label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    vals = [(e["epoch"], e["val"]["sprc_mean"]) for e in epoch_log if e.get("val")]
    if vals:
        ax2 = ax.twinx()
        ax2.plot(*zip(*vals), color="tab:orange", label="val SPRC(m)")
        ax2.set_ylabel("SPRC (mean)")
    fig.tight_layout()
    path = out / "loss_curve.png"
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return [path]


def plot_ablation(rows, out_dir) -> List[Path]:
    rows = [r for r in rows if r.report is not None]
    if not rows:
        raise NothingToPlot("no successful ablation rows")
    out = _out_dir(out_dir)
    names = [r.name for r in rows]
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(rows) + 2), 3.5), dpi=100)
    ax.bar(x - 0.2, [r.report.sprc_mean for r in rows], 0.4, label="SPRC(m)")
    ax.bar(x + 0.2, [r.report.lcc_mean for r in rows], 0.4, label="LCC(m)")
    ax.set_xticks(x, names, rotation=45, ha="right")
    ax.legend()
    fig.tight_layout()
    path = out / "ablation.png"
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)
    return [path]


def heatmap_overlay(heatmap: Heatmap, image: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Blend a jet-coloured heatmap onto an H x W x 3 uint8 image; same size as the image."""
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape[:2]
    cam = heatmap.resized(h, w)
    colored = (matplotlib.colormaps["jet"](cam)[..., :3] * 255.0)
    blended = (1 - alpha) * img.astype(np.float64) + alpha * colored
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def plot_heatmap(heatmap: Heatmap, image: np.ndarray, out_dir, stem: str = "gradcam") -> List[Path]:
    if heatmap.values.size == 0:
        raise NothingToPlot("empty heatmap")
    out = _out_dir(out_dir)
    path = out / f"{stem}_{heatmap.layer_name}.png"
    Image.fromarray(heatmap_overlay(heatmap, image)).save(path, format="PNG")
    return [path]
