"""Dominant colour labelling with K-means and a robust (MCD) Mahalanobis metric."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from sklearn.cluster import KMeans
from sklearn.covariance import MinCovDet

from .schema import DOMCOL_LABELS

DEFAULT_ANCHORS: Dict[str, Optional[Tuple[int, int, int]]] = {
    "black": (0, 0, 0),
    "blue": (0, 0, 255),
    "brown": (139, 69, 19),
    "green": (0, 128, 0),
    "grey": (128, 128, 128),
    "multiple": None,
    "pink": (255, 192, 203),
    "red": (255, 0, 0),
    "white": (255, 255, 255),
    "yellow": (255, 255, 0),
}


@dataclass(frozen=True)
class ColorPalette:
    anchors: Dict[str, Optional[Tuple[int, int, int]]] = field(default_factory=lambda: dict(DEFAULT_ANCHORS))
    dominance_threshold: float = 0.4

    def __post_init__(self):
        if tuple(sorted(self.anchors)) != DOMCOL_LABELS:
            raise ValueError(f"palette labels must be exactly {DOMCOL_LABELS}")
        if not 0.0 < self.dominance_threshold < 1.0:
            raise ValueError("dominance_threshold must be in (0, 1)")

    def concrete(self):
        names = [n for n in DOMCOL_LABELS if self.anchors[n] is not None]
        return names, np.array([self.anchors[n] for n in names], dtype=np.float64)


# Floor added to the robust covariance diagonal (RGB units squared); keeps it
# invertible when the image holds only a handful of distinct colours.
COV_RIDGE = 25.0


def _nearest_euclidean(color, palette):
    names, anchors = palette.concrete()
    return names[int(np.argmin(((anchors - color) ** 2).sum(axis=1)))]


MCD_MAX_SAMPLES = 500


def robust_covariance(pixels: np.ndarray, seed: int = 0) -> np.ndarray:
    """MCD covariance of (at most MCD_MAX_SAMPLES of) the pixels, plus a ridge."""
    if pixels.shape[0] > MCD_MAX_SAMPLES:
        rng = np.random.default_rng(seed + 1)
        pixels = pixels[np.sort(rng.choice(pixels.shape[0], MCD_MAX_SAMPLES, replace=False))]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            cov = MinCovDet(random_state=seed).fit(pixels).covariance_
        except ValueError:
            cov = np.cov(pixels, rowvar=False)
    cov = np.atleast_2d(np.nan_to_num(cov))
    return cov + COV_RIDGE * np.eye(3)


def dominant_color(image, palette: Optional[ColorPalette] = None, k: int = 5,
                   n_samples: int = 10_000, seed: int = 0) -> str:
    """Palette label covering the largest share of the image's pixel clusters.

    K-means centroids are matched to palette anchors by Mahalanobis distance
    under the MCD covariance of the pixels; the shares of clusters matched to
    the same anchor are pooled. Returns "multiple" when no anchor reaches the
    palette's dominance threshold. Pixels are put in a canonical order before
    sampling, so any permutation of the same pixels yields the same label.
    """
    palette = palette or ColorPalette()
    if k < 2:
        raise ValueError("k must be >= 2")
    px = np.asarray(image)
    if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] * px.shape[1] == 0:
        raise ValueError(f"expected a non-empty H x W x 3 image, got shape {px.shape}")
    px = px.reshape(-1, 3).astype(np.float64)

    px = px[np.lexsort(px.T[::-1])]
    if px.shape[0] > n_samples:
        rng = np.random.default_rng(seed)
        px = px[np.sort(rng.choice(px.shape[0], n_samples, replace=False))]

    uniq, counts = np.unique(px, axis=0, return_counts=True)
    if uniq.shape[0] == 1:
        return _nearest_euclidean(uniq[0], palette)

    k_eff = min(k, uniq.shape[0])
    km = KMeans(n_clusters=k_eff, n_init=4, random_state=seed)
    labels = km.fit_predict(uniq, sample_weight=counts)
    share = np.bincount(labels, weights=counts, minlength=k_eff) / counts.sum()

    cov_inv = np.linalg.inv(robust_covariance(px, seed))
    names, anchors = palette.concrete()
    d = anchors[None, :, :] - km.cluster_centers_[:, None, :]
    dist = np.einsum("cij,jk,cik->ci", d, cov_inv, d)
    cluster_label = np.argmin(dist, axis=1)
    # clusters that land on the same palette colour count together
    label_share = np.bincount(cluster_label, weights=share, minlength=len(names))
    best = int(np.argmax(label_share))
    if label_share[best] < palette.dominance_threshold:
        return "multiple"
    return names[best]
