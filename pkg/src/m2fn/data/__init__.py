from .aggregate import aggregate_logs
from .ava import AvaItem, load_ava_style
from .color import ColorPalette, dominant_color
from .distributions import ScoreDistribution, ctr_decile_edges, lognormal_distribution
from .encoding import (AuxLayout, HashEmbedder, encode_auxiliary, merge_rare_levels, read_embedding_cache,
                       realad_layout, write_embedding_cache)
from .schema import AggregatedInstance, ClickLogRecord, MalformedRecord
from .stats import anova_screen
from .synthetic import PlantedEffects, generate_synthetic_dataset

__all__ = [
    "AggregatedInstance", "AuxLayout", "AvaItem", "ClickLogRecord", "ColorPalette", "HashEmbedder",
    "MalformedRecord", "PlantedEffects", "ScoreDistribution", "aggregate_logs", "anova_screen",
    "ctr_decile_edges", "dominant_color", "encode_auxiliary", "generate_synthetic_dataset",
    "load_ava_style", "lognormal_distribution", "merge_rare_levels", "read_embedding_cache",
    "realad_layout", "write_embedding_cache",
]
