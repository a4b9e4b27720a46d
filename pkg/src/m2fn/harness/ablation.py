"""Ablation grids: module on/off switches and CBN block placement."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from ..objectives import MetricReport
from .config import RunConfig
from .dataset import PreparedData
from .train import evaluate_model, train

log = logging.getLogger(__name__)

Delta = Tuple[str, dict]


def _switches(aux, low, att, high) -> dict:
    return dict(use_aux=aux, use_cbn=low, use_attention=att, use_high_fusion=high)


# aux / low-level / attention / high-level, as in the module ablation rows
MODULE_GRID: List[Delta] = [
    ("xxxx", _switches(False, False, False, False)),
    ("Oxxx", _switches(True, False, False, False)),
    ("OOxx", _switches(True, True, False, False)),
    ("OxOx", _switches(True, False, True, False)),
    ("OxxO", _switches(True, False, False, True)),
    ("OOOx", _switches(True, True, True, False)),
    ("OOxO", _switches(True, True, False, True)),
    ("OOOO", _switches(True, True, True, True)),
]

BLOCK_MASK_GRID: List[Delta] = [
    ("{" + ",".join(map(str, m)) + "}", dict(use_cbn=True, cbn_block_mask=m))
    for m in [(1, 1, 1, 1, 1), (0, 0, 0, 0, 1), (0, 0, 1, 1, 1), (0, 0, 1, 0, 0), (1, 1, 1, 0, 0), (1, 0, 0, 0, 0)]
]


@dataclass
class AblationRow:
    name: str
    config: dict
    report: Optional[MetricReport]
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "config": self.config,
                "report": None if self.report is None else self.report.to_dict(), "error": self.error}


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "row"


def run_ablation_grid(base: RunConfig, grid: Sequence[Delta], train_data: PreparedData,
                      test_data: PreparedData) -> List[AblationRow]:
    """Train and test one model per grid entry, same seed and data for all.

    A failing entry is recorded with its error and the grid carries on.
    Rows come back ranked by test SPRC (mean), failures last.
    """
    if not grid:
        raise ValueError("empty ablation grid")
    rows = []
    for i, (name, delta) in enumerate(grid):
        try:
            run = base.with_model(**delta).with_changes(out_dir=str(Path(base.out_dir) / f"{i:02d}_{_slug(name)}"))
            result = train(run, train_data)
            rows.append(AblationRow(name, run.model.to_dict(), evaluate_model(result.model, test_data)))
        except Exception as e:  # recorded per row
            log.warning("ablation row %s failed: %s", name, e)
            rows.append(AblationRow(name, dict(delta), None, f"{type(e).__name__}: {e}"))
    return rank_rows(rows)


def rank_rows(rows: Sequence[AblationRow]) -> List[AblationRow]:
    return sorted(rows, key=lambda r: (r.report is None, -(r.report.sprc_mean if r.report else 0.0)))


def write_table(rows: Sequence[AblationRow], path) -> None:
    Path(path).write_text("".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in rows))


def format_table(rows: Sequence[AblationRow]) -> str:
    lines = [f"{'config':<14}{'SPRC(m)':>9}{'LCC(m)':>9}{'SPRC(s)':>9}{'LCC(s)':>9}"]
    for r in rows:
        if r.report is None:
            lines.append(f"{r.name:<14}  failed: {r.error}")
            continue
        cells = [r.report.sprc_mean, r.report.lcc_mean, r.report.sprc_std, r.report.lcc_std]
        lines.append(f"{r.name:<14}" + "".join(f"{'-':>9}" if c is None else f"{c:>9.3f}" for c in cells))
    return "\n".join(lines)
