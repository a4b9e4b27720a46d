from .ablation import BLOCK_MASK_GRID, MODULE_GRID, AblationRow, run_ablation_grid
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_run_config, parse_run_config
from .gradcam import Heatmap, gradcam, gradcam_map
from .train import NumericFailure, evaluate_checkpoint, predict, train

__all__ = [
    "AblationRow", "BLOCK_MASK_GRID", "Heatmap", "MODULE_GRID", "NumericFailure", "RunConfig",
    "evaluate_checkpoint", "gradcam", "gradcam_map", "load_checkpoint", "load_run_config",
    "parse_run_config", "predict", "run_ablation_grid", "save_checkpoint", "train",
]
