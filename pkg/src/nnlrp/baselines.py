"""Occlusion and gradient-sensitivity attribution maps."""
from dataclasses import dataclass

import numpy as np

from .autodiff import check_target, input_gradient
from .graph import forward


@dataclass(frozen=True)
class OcclusionConfig:
    patch_h: int = 2
    patch_w: int = 2
    stride: int = 1
    fill: float = 0.0


def _starts(extent, patch, stride):
    starts = list(range(0, extent - patch + 1, stride))
    if starts[-1] != extent - patch:
        starts.append(extent - patch)  # keep the far border covered
    return starts


def occlusion_map(net, image, target_index, cfg=OcclusionConfig()):
    """Mean drop of the target score over every patch covering a pixel."""
    target = check_target(net, target_index)
    image = np.asarray(image, dtype=np.float64)
    _, h, w = image.shape
    if cfg.patch_h > h or cfg.patch_w > w or min(cfg.patch_h, cfg.patch_w) < 1:
        raise ValueError(f"patch {cfg.patch_h}x{cfg.patch_w} does not fit image {h}x{w}")
    if cfg.stride < 1:
        raise ValueError("stride must be >= 1")
    base = forward(net, image).logits[target]
    total = np.zeros((h, w))
    count = np.zeros((h, w))
    for top in _starts(h, cfg.patch_h, cfg.stride):
        for left in _starts(w, cfg.patch_w, cfg.stride):
            occluded = image.copy()
            occluded[:, top:top + cfg.patch_h, left:left + cfg.patch_w] = cfg.fill
            drop = base - forward(net, occluded).logits[target]
            total[top:top + cfg.patch_h, left:left + cfg.patch_w] += drop
            count[top:top + cfg.patch_h, left:left + cfg.patch_w] += 1
    return np.where(count > 0, total / np.maximum(count, 1), 0.0)


def sensitivity_map(net, image, target_index):
    """Channel sum of the absolute input gradient of the target score."""
    grad = input_gradient(net, image, target_index)
    if grad.ndim != 3:
        raise ValueError(f"sensitivity map needs (C, H, W) input, got {grad.shape}")
    return np.abs(grad).sum(axis=0)
