"""Click-log record types and the categorical value sets of the ad attributes."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, Tuple

# Ordered level sets; order is also the ordinal order used for rare-level merging.
CATEGORICAL_LEVELS: Dict[str, Tuple[int, ...]] = {
    "gender": (1, 2),
    "age": tuple(range(1, 10)),
    "month": tuple(range(1, 13)),
    "weekday": tuple(range(1, 8)),
    "time": tuple(range(0, 24)),
    "position": (1, 2, 3, 4),
    "cate2": (1, 2, 3, 4),
    "cate3": tuple(range(1, 10)),
}
CATEGORICAL_FIELDS = tuple(CATEGORICAL_LEVELS)
TEXT_FIELDS = ("title", "desc", "ocr")

DOMCOL_LABELS = (
    "black", "blue", "brown", "green", "grey",
    "multiple", "pink", "red", "white", "yellow",
)


class MalformedRecord(ValueError):
    def __init__(self, index, message):
        super().__init__(f"record {index}: {message}")
        self.index = index


@dataclass(frozen=True, slots=True)
class ClickLogRecord:
    """One ad exposure."""

    image_id: str
    gender: int
    age: int
    month: int
    weekday: int
    time: int
    position: int
    cate2: int
    cate3: int
    title: str
    desc: str
    ocr: str
    clicked: int

    def key(self) -> tuple:
        return (self.image_id,) + self.attribute_tuple()

    def attribute_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in CATEGORICAL_FIELDS + TEXT_FIELDS)

    def validate(self, index=None):
        for name in CATEGORICAL_FIELDS:
            v = getattr(self, name)
            if v not in CATEGORICAL_LEVELS[name]:
                raise MalformedRecord(index, f"{name}={v!r} outside {CATEGORICAL_LEVELS[name]}")
        if self.clicked not in (0, 1):
            raise MalformedRecord(index, f"clicked={self.clicked!r} is not 0/1")

    @classmethod
    def from_mapping(cls, row, index=None) -> "ClickLogRecord":
        """Build from a dict of strings or values (CSV row / JSON object)."""
        kwargs = {}
        try:
            for f in fields(cls):
                raw = row[f.name]
                if f.name in CATEGORICAL_FIELDS or f.name == "clicked":
                    if isinstance(raw, bool):
                        raw = int(raw)
                    if isinstance(raw, float) and not raw.is_integer():
                        raise ValueError(f"{f.name}={raw!r} is not an integer")
                    kwargs[f.name] = int(raw)
                else:
                    kwargs[f.name] = "" if raw is None else str(raw)
        except KeyError as e:
            raise MalformedRecord(index, f"missing field {e.args[0]!r}") from None
        except (TypeError, ValueError) as e:
            raise MalformedRecord(index, str(e)) from None
        return cls(**kwargs)


RECORD_FIELDS = tuple(f.name for f in fields(ClickLogRecord))


@dataclass(frozen=True)
class AggregatedInstance:
    """Unique (image, attribute tuple) with its impression and click counts."""

    image_id: str
    attribute_tuple: tuple
    impressions: int
    clicks: int

    @property
    def ctr(self) -> float:
        return self.clicks / self.impressions

    @property
    def attributes(self) -> dict:
        return dict(zip(CATEGORICAL_FIELDS + TEXT_FIELDS, self.attribute_tuple))

    def expand(self):
        """Re-expand into one record per impression (clicks first)."""
        attrs = self.attributes
        for i in range(self.impressions):
            yield ClickLogRecord(image_id=self.image_id, clicked=int(i < self.clicks), **attrs)
