"""Multi-step modality fusion network for ad and aesthetic image assessment."""
from .model import M2FN, ModelConfig, desk_config

__version__ = "0.1.0"
__all__ = ["M2FN", "ModelConfig", "desk_config"]
