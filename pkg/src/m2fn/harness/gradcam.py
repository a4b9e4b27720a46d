from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class Heatmap:
    values: np.ndarray  # W x H in [0, 1]
    layer_name: str
    target: Union[str, int]

    def resized(self, height: int, width: int) -> np.ndarray:
        """Bilinear upsampling to image resolution, re-normalised so the peak stays at 1."""
        t = torch.as_tensor(self.values, dtype=torch.float64)[None, None]
        up = F.interpolate(t, size=(height, width), mode="bilinear", align_corners=False)[0, 0].numpy()
        return _max_normalise(np.clip(up, 0.0, None))


def _max_normalise(cam: np.ndarray) -> np.ndarray:
    peak = cam.max() if cam.size else 0.0
    if peak <= 0:
        return np.zeros_like(cam)
    return np.clip(cam / peak, 0.0, 1.0)


def gradcam_map(activations, gradients) -> np.ndarray:
    """Channel weights = spatially averaged gradients; map = ReLU(sum_c weight_c * A_c), max-normalised."""
    a = np.asarray(activations, dtype=np.float64)
    g = np.asarray(gradients, dtype=np.float64)
    if a.shape != g.shape or a.ndim != 3:
        raise ValueError("activations and gradients must both be C x W x H")
    weights = g.mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, a, axes=1), 0.0)
    return _max_normalise(cam)


def _spatial_layers(model: nn.Module):
    if hasattr(model, "spatial_layers"):
        return model.spatial_layers()
    return dict(model.named_modules())


def gradcam(model: nn.Module, image: torch.Tensor, aux: Optional[torch.Tensor], layer_name: str,
            target: Union[str, int, None] = None) -> Heatmap:
    """Grad-CAM heatmap of one instance at a named spatial layer.

    `target` selects the scalar being explained: None/"score" for a
    regression output, or a bucket index for a distribution output (None
    there means the most probable bucket).
    """
    layers = _spatial_layers(model)
    if layer_name not in layers:
        raise ValueError(f"unknown layer {layer_name!r}; spatial layers: {sorted(layers)}")
    captured = {}

    def hook(_module, _inp, out):
        out = out[0] if isinstance(out, tuple) else out
        captured["act"] = out

    handle = layers[layer_name].register_forward_hook(hook)
    was_training = model.training
    model.eval()
    try:
        x = image.unsqueeze(0) if image.dim() == 3 else image
        a = None if aux is None else (aux.unsqueeze(0) if aux.dim() == 1 else aux)
        out = model(x, a) if a is not None else model(x)
    finally:
        handle.remove()
        model.train(was_training)
    act = captured.get("act")
    if act is None or act.dim() != 4:
        raise ValueError(f"layer {layer_name!r} has no spatial output; spatial layers: {sorted(layers)}")
    out = out.reshape(out.shape[0], -1)
    if out.shape[1] == 1:
        score, tgt = out[0, 0], "score"
    else:
        idx = int(torch.argmax(out[0])) if target is None else int(target)
        score, tgt = out[0, idx], idx
    (grad,) = torch.autograd.grad(score, act, allow_unused=True)
    if grad is None:
        grad = torch.zeros_like(act)
    cam = gradcam_map(act[0].detach().numpy(), grad[0].detach().numpy())
    return Heatmap(cam, layer_name, tgt)
