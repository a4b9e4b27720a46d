"""Synthetic ad-image click data with planted, known effects.

Each image has a flat background colour, an optional text box at the top
or bottom, and an optional "character" sprite. Click probability is
additive in:

* background colour (a boosted subset of colours),
* an age x text-position interaction (older users prefer top text, younger
  users bottom text) that is invisible to an image-only model,
* time of day (peak hours),
* sprite presence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .color import DEFAULT_ANCHORS
from .schema import CATEGORICAL_LEVELS, ClickLogRecord

BACKGROUNDS = tuple(n for n, rgb in DEFAULT_ANCHORS.items() if rgb is not None)
PEAK_HOURS = frozenset({2, 3, 4, 9, 10, 11, 12, 15, 16, 17})
SPRITE_RGB = (200, 40, 200)

_WORDS = ("play", "now", "free", "win", "hero", "quest", "rank", "gold", "event", "new",
          "legend", "battle", "join", "gift", "today", "limited", "puzzle", "star", "team", "sale")


@dataclass(frozen=True)
class PlantedEffects:
    base_rate: float = 0.08
    color: float = 0.05
    boosted_colors: Tuple[str, ...] = ("red", "yellow")
    age_text: float = 0.04
    older_age_from: int = 5
    time: float = 0.04
    sprite: float = 0.03

    def click_probability(self, background: str, text_position: Optional[str], has_sprite: bool,
                          age: int, hour: int) -> float:
        p = self.base_rate
        if background in self.boosted_colors:
            p += self.color
        if text_position is not None:
            older = age >= self.older_age_from
            p += self.age_text if older == (text_position == "top") else -self.age_text
        if hour in PEAK_HOURS:
            p += self.time
        if has_sprite:
            p += self.sprite
        return min(max(p, 0.0), 1.0)


@dataclass
class SyntheticImage:
    image_id: str
    pixels: np.ndarray
    background: str
    text_position: Optional[str]
    has_sprite: bool
    title: str
    desc: str
    ocr: str


@dataclass
class SyntheticInstance:
    image: SyntheticImage
    records: List[ClickLogRecord]
    probability: float
    attributes: dict = field(default_factory=dict)

    @property
    def image_id(self) -> str:
        return self.image.image_id


def _phrase(rng, n):
    return " ".join(rng.choice(_WORDS, size=n))


def render_image(rng, size, background, text_position, has_sprite) -> np.ndarray:
    rgb = np.array(DEFAULT_ANCHORS[background], dtype=np.float64)
    img = rgb + rng.normal(0.0, 6.0, size=(size, size, 3))
    if text_position is not None:
        ink = 0.0 if rgb.mean() > 127 else 255.0
        r0 = int(round(size * (0.08 if text_position == "top" else 0.72)))
        r1 = r0 + max(2, int(round(size * 0.2)))
        c0, c1 = int(size * 0.1), int(math.ceil(size * 0.9))
        img[r0:r1, c0:c1] = 255.0 - ink
        # glyph-like vertical strokes
        img[r0 + 1:r1 - 1, c0 + 1:c1 - 1:2] = ink
    if has_sprite:
        s = max(2, int(round(size * 0.25)))
        mid = size // 2 - s // 2
        r = mid + int(rng.integers(-size // 10, size // 10 + 1))
        c = mid + int(rng.integers(-size // 5, size // 5 + 1))
        img[r:r + s, c:c + s] = SPRITE_RGB
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_synthetic_dataset(seed: int, n_instances: int, image_size: int = 32,
                               planted_effects: Optional[PlantedEffects] = None,
                               instances_per_image: int = 4, impressions: Tuple[int, int] = (100, 400),
                               text_rate: float = 0.8, sprite_rate: float = 0.5) -> List[SyntheticInstance]:
    """Generate `n_instances` (image, exposure records) pairs; fully determined by `seed`."""
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    effects = planted_effects or PlantedEffects()
    rng = np.random.default_rng(seed)
    n_images = math.ceil(n_instances / instances_per_image)

    images = []
    for i in range(n_images):
        bg = str(rng.choice(BACKGROUNDS))
        text_pos = (str(rng.choice(["top", "bottom"])) if rng.random() < text_rate else None)
        sprite = bool(rng.random() < sprite_rate)
        images.append(SyntheticImage(
            image_id=f"img{i:05d}",
            pixels=render_image(rng, image_size, bg, text_pos, sprite),
            background=bg, text_position=text_pos, has_sprite=sprite,
            title=_phrase(rng, 3), desc=_phrase(rng, 6),
            ocr=_phrase(rng, 2) if text_pos is not None else "",
        ))

    out: List[SyntheticInstance] = []
    seen = set()
    lo, hi = impressions
    for j in range(n_instances):
        img = images[j // instances_per_image]
        while True:
            attrs = {name: int(rng.choice(levels)) for name, levels in CATEGORICAL_LEVELS.items()}
            key = (img.image_id,) + tuple(attrs.values())
            if key not in seen:
                seen.add(key)
                break
        p = effects.click_probability(img.background, img.text_position, img.has_sprite,
                                      attrs["age"], attrs["time"])
        m = int(rng.integers(lo, hi + 1))
        clicks = rng.random(m) < p
        records = [ClickLogRecord(image_id=img.image_id, title=img.title, desc=img.desc, ocr=img.ocr,
                                  clicked=int(c), **attrs) for c in clicks]
        out.append(SyntheticInstance(img, records, p, attrs))
    return out
