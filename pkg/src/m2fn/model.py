"""Multi-step modality fusion network.

Image features and an auxiliary attribute vector are mixed at three points:
conditional batch norm inside the early conv blocks, a spatial soft
attention over the last feature map, and a tanh-gated elementwise product
near the output head. Every step can be switched off for ablations.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

REGRESSION = "regression"
DISTRIBUTION = "distribution"
NUM_BUCKETS = 10

# (convs per block, channels per block, pool after block, input size)
SCALES = {
    "full": ((2, 2, 4, 4, 4), (64, 128, 256, 512, 512), (1, 1, 1, 1, 1), 224),
    "tiny": ((1, 1, 1, 1, 1), (16, 32, 64, 64, 64), (1, 1, 1, 0, 0), 32),
}


@dataclass
class ModelConfig:
    use_aux: bool = True
    use_cbn: bool = True
    use_attention: bool = True
    use_high_fusion: bool = True
    cbn_block_mask: Tuple[int, ...] = (1, 0, 0, 0, 0)
    cbn_granularity: str = "first"  # "first": first conv of a masked block; "block": every conv in it
    cbn_hidden: int = 256
    att_hidden: int = 512
    high_hidden: int = 512
    head_hidden: int = 4096
    output_mode: str = REGRESSION
    backbone_scale: str = "full"
    aux_dim: int = 0
    dropout: float = 0.0

    def __post_init__(self):
        self.cbn_block_mask = tuple(int(bool(b)) for b in self.cbn_block_mask)
        if len(self.cbn_block_mask) != 5:
            raise ValueError("cbn_block_mask needs one flag per backbone block (5)")
        if not self.use_cbn:
            self.cbn_block_mask = (0, 0, 0, 0, 0)
        if self.output_mode not in (REGRESSION, DISTRIBUTION):
            raise ValueError(f"output_mode must be {REGRESSION!r} or {DISTRIBUTION!r}")
        if self.backbone_scale not in SCALES:
            raise ValueError(f"backbone_scale must be one of {sorted(SCALES)}")
        if self.cbn_granularity not in ("first", "block"):
            raise ValueError("cbn_granularity must be 'first' or 'block'")
        if not self.use_aux and (self.use_cbn or self.use_attention or self.use_high_fusion):
            raise ValueError("CBN, attention and high-level fusion all need auxiliary input (use_aux)")
        if self.use_aux and self.aux_dim < 1:
            raise ValueError("aux_dim must be set when use_aux is on")

    @property
    def input_size(self) -> int:
        return SCALES[self.backbone_scale][3]

    @property
    def n_outputs(self) -> int:
        return 1 if self.output_mode == REGRESSION else NUM_BUCKETS

    def with_changes(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cbn_block_mask"] = list(self.cbn_block_mask)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["cbn_block_mask"] = tuple(d.get("cbn_block_mask", (1, 0, 0, 0, 0)))
        return cls(**d)


def desk_config(**overrides) -> ModelConfig:
    """Small tiny-scale settings that train in minutes on a CPU."""
    base = dict(backbone_scale="tiny", cbn_hidden=64, att_hidden=64, high_hidden=128, head_hidden=256)
    base.update(overrides)
    return ModelConfig(**base)


class ConditionalBatchNorm2d(nn.Module):
    """Batch norm whose per-channel scale and shift get per-instance offsets from an MLP.

    With ``aux_dim=None`` this is ordinary batch norm. The offset MLPs end in
    a zero-initialised layer, so a freshly built module behaves exactly like
    plain batch norm with the same base parameters.
    """

    def __init__(self, channels: int, aux_dim: Optional[int] = None, hidden: int = 64,
                 eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))
        self.register_buffer("num_batches_tracked", torch.tensor(0, dtype=torch.long))
        self.conditioned = aux_dim is not None
        if self.conditioned:
            self.gamma_mlp = self._delta_mlp(aux_dim, hidden, channels)
            self.beta_mlp = self._delta_mlp(aux_dim, hidden, channels)

    @staticmethod
    def _delta_mlp(aux_dim, hidden, channels):
        mlp = nn.Sequential(nn.Linear(aux_dim, hidden), nn.ReLU(), nn.Linear(hidden, channels))
        nn.init.zeros_(mlp[2].weight)
        nn.init.zeros_(mlp[2].bias)
        return mlp

    def forward(self, x, aux=None):
        if self.training:
            if x.shape[0] < 2:
                raise ValueError("batch statistics need a batch of at least 2 in training mode")
            mean = x.mean(dim=(0, 2, 3))
            var = x.var(dim=(0, 2, 3), unbiased=False)
            with torch.no_grad():
                n = x.numel() / x.shape[1]
                self.running_mean.lerp_(mean.detach(), self.momentum)
                self.running_var.lerp_(var.detach() * n / max(n - 1, 1), self.momentum)
                self.num_batches_tracked += 1
        else:
            mean, var = self.running_mean, self.running_var
        xhat = (x - mean[None, :, None, None]) / torch.sqrt(var[None, :, None, None] + self.eps)
        gamma = self.weight.expand(x.shape[0], -1)
        beta = self.bias.expand(x.shape[0], -1)
        if self.conditioned:
            if aux is None:
                raise ValueError("conditional batch norm needs the auxiliary vector")
            if aux.shape[0] != x.shape[0]:
                raise ValueError(f"aux batch {aux.shape[0]} != feature batch {x.shape[0]}")
            gamma = gamma + self.gamma_mlp(aux)
            beta = beta + self.beta_mlp(aux)
        return xhat * gamma[:, :, None, None] + beta[:, :, None, None]


def cbn_modulate(features, aux, norm: ConditionalBatchNorm2d, training: bool):
    norm.train(training)
    return norm(features, aux)


class ConvBlock(nn.Module):
    def __init__(self, in_ch, out_ch, n_convs, pool, cond_flags, aux_dim, cbn_hidden):
        super().__init__()
        self.convs = nn.ModuleList()
        self.norms = nn.ModuleList()
        for i in range(n_convs):
            self.convs.append(nn.Conv2d(in_ch if i == 0 else out_ch, out_ch, 3, padding=1))
            self.norms.append(ConditionalBatchNorm2d(out_ch, aux_dim if cond_flags[i] else None, cbn_hidden))
        self.pool = nn.MaxPool2d(2) if pool else nn.Identity()

    def forward(self, x, aux=None):
        for conv, norm in zip(self.convs, self.norms):
            x = F.relu(norm(conv(x), aux))
        return self.pool(x)


class Backbone(nn.Module):
    """Five VGG-style conv blocks with batch norm; masked blocks use conditional batch norm."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        counts, channels, pools, size = SCALES[config.backbone_scale]
        self.blocks = nn.ModuleList()
        in_ch = 3
        for b, (n, ch, pool) in enumerate(zip(counts, channels, pools)):
            masked = bool(config.cbn_block_mask[b])
            flags = [masked and (i == 0 or config.cbn_granularity == "block") for i in range(n)]
            self.blocks.append(ConvBlock(in_ch, ch, n, pool, flags, config.aux_dim, config.cbn_hidden))
            in_ch = ch
        self.out_channels = in_ch
        self.out_size = size // (2 ** sum(pools))

    def forward(self, x, aux=None):
        for block in self.blocks:
            x = block(x, aux)
        return x


class SpatialAttention(nn.Module):
    """Softmax attention over feature-map locations, conditioned on the aux vector.

    The aux vector is tiled to every location and concatenated with the
    channel vector there; an affine-ReLU-affine map gives one logit per
    location.
    """

    def __init__(self, channels: int, aux_dim: int, hidden: int):
        super().__init__()
        self.channels = channels
        self.embed = nn.Linear(channels + aux_dim, hidden)
        self.score = nn.Linear(hidden, 1)

    def forward(self, features, aux):
        n, c, w, h = features.shape
        if c != self.channels or aux.shape[0] != n:
            raise ValueError(f"shape mismatch: features {tuple(features.shape)}, aux {tuple(aux.shape)}")
        loc = features.flatten(2).transpose(1, 2)  # N x WH x C
        # affine of the concatenation, with the aux half computed once per instance
        w_img, w_aux = self.embed.weight[:, :c], self.embed.weight[:, c:]
        hidden = loc @ w_img.T + (aux @ w_aux.T + self.embed.bias)[:, None, :]
        logits = self.score(F.relu(hidden)).squeeze(-1)  # N x WH
        alpha = torch.softmax(logits, dim=1)
        attended = features * alpha.view(n, 1, w, h)
        return attended, alpha


def spatial_attention(features, aux, attention: SpatialAttention):
    return attention(features, aux)


class HighLevelFusion(nn.Module):
    def __init__(self, image_dim: int, aux_dim: int, hidden: int):
        super().__init__()
        self.image_fc = nn.Linear(image_dim, hidden)
        self.aux_fc = nn.Linear(aux_dim, hidden)

    def forward(self, attended, aux):
        flat = attended.flatten(1)
        return torch.tanh(self.image_fc(flat)) * torch.tanh(self.aux_fc(aux))


def high_level_fusion(attended, aux, fusion: HighLevelFusion):
    return fusion(attended, aux)


class M2FN(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = Backbone(config)
        c, s = self.backbone.out_channels, self.backbone.out_size
        flat = c * s * s
        self.attention = SpatialAttention(c, config.aux_dim, config.att_hidden) if config.use_attention else None
        if config.use_high_fusion:
            self.fusion = HighLevelFusion(flat, config.aux_dim, config.high_hidden)
            head_in = config.high_hidden
        else:
            self.project = nn.Linear(flat, config.high_hidden)
            head_in = config.high_hidden + (config.aux_dim if config.use_aux else 0)
        hh = config.head_hidden
        self.head = nn.Sequential(
            nn.Linear(head_in, hh), nn.ReLU(), nn.Dropout(config.dropout),
            nn.Linear(hh, hh), nn.ReLU(), nn.Dropout(config.dropout),
            nn.Linear(hh, config.n_outputs),
        )

    def spatial_layers(self) -> Dict[str, nn.Module]:
        """Modules whose outputs are spatial maps, by name (for Grad-CAM)."""
        layers = {f"block{i + 1}": b for i, b in enumerate(self.backbone.blocks)}
        if self.attention is not None:
            layers["attention"] = self.attention
        return layers

    def forward(self, images, aux=None, return_attention: bool = False):
        cfg = self.config
        if cfg.use_aux:
            if aux is None:
                raise ValueError("this configuration needs an auxiliary vector batch")
            if aux.shape != (images.shape[0], cfg.aux_dim):
                raise ValueError(f"aux must be {images.shape[0]} x {cfg.aux_dim}, got {tuple(aux.shape)}")
        else:
            aux = None
        x = self.backbone(images, aux if cfg.use_cbn else None)
        alpha = None
        if self.attention is not None:
            x, alpha = self.attention(x, aux)
        if cfg.use_high_fusion:
            z = self.fusion(x, aux)
        else:
            z = self.project(x.flatten(1))
            if cfg.use_aux:
                z = torch.cat([z, aux], dim=1)
        out = self.head(z)
        if cfg.output_mode == REGRESSION:
            out = out.squeeze(1)
        else:
            out = torch.softmax(out, dim=1)
        return (out, alpha) if return_attention else out
