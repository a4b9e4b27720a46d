"""Run configuration and its flat ``key = value`` file format."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict

from ..model import ModelConfig, desk_config
from ..objectives import LOSS_MODES

FULL_SCALE = dict(backbone_scale="full", cbn_hidden=256, att_hidden=512, high_hidden=512, head_hidden=4096)


@dataclass
class RunConfig:
    train_path: str = ""
    test_path: str = ""
    image_dir: str = ""
    dataset_kind: str = "realad"  # realad | ava
    embedding_cache: str = ""
    model: ModelConfig = field(default_factory=lambda: desk_config(aux_dim=1))
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    batch_size: int = 128
    epochs: int = 20
    seed: int = 0
    loss: str = "wmse"
    out_dir: str = "runs/default"
    min_impressions: int = 1
    rare_level_threshold: int = 50_000
    val_fraction: float = 0.1
    lognormal_width: float = 1.0

    def __post_init__(self):
        if self.loss not in LOSS_MODES:
            raise ValueError(f"loss must be one of {sorted(LOSS_MODES)}")
        if LOSS_MODES[self.loss] != self.model.output_mode:
            raise ValueError(f"loss {self.loss!r} does not fit output_mode {self.model.output_mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch norm)")

    def with_model(self, **changes) -> "RunConfig":
        return replace(self, model=self.model.with_changes(**changes))

    def with_changes(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_flat(self) -> Dict[str, Any]:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "model"}
        d.update(self.model.to_dict())
        return d


_RUN_KEYS = {f.name: f for f in fields(RunConfig) if f.name != "model"}
_MODEL_KEYS = {f.name: f for f in fields(ModelConfig)}


def _parse_value(raw: str, template: Any):
    raw = raw.strip()
    if isinstance(template, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    if isinstance(template, tuple):
        return tuple(int(x) for x in raw.replace("{", "").replace("}", "").split(",") if x.strip())
    return raw


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(str(x) for x in v)
    return str(v)


def parse_run_config(text: str, base: RunConfig = None) -> RunConfig:
    base = base or RunConfig()
    run_vals: Dict[str, Any] = {}
    model_vals: Dict[str, Any] = {}
    scale = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in _RUN_KEYS:
            run_vals[key] = _parse_value(raw, getattr(base, key))
        elif key in _MODEL_KEYS:
            if key == "backbone_scale":
                scale = raw
            model_vals[key] = _parse_value(raw, getattr(base.model, key))
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    model = base.model
    if scale == "full":
        model = model.with_changes(**FULL_SCALE)
    model = model.with_changes(**model_vals)
    return replace(base, model=model, **run_vals)


def load_run_config(path, base: RunConfig = None) -> RunConfig:
    return parse_run_config(Path(path).read_text(encoding="utf-8"), base)


def format_run_config(run: RunConfig) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in run.to_flat().items())


def full_scale(run: RunConfig) -> RunConfig:
    """224x224 VGG-19 backbone, full hidden sizes, batch 128, 100 epochs."""
    return replace(run, model=run.model.with_changes(**FULL_SCALE), batch_size=128, epochs=100)
