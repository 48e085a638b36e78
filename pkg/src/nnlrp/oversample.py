"""Ten-crop oversampled prediction: four corners, center, and their mirrors."""
from dataclasses import dataclass

import numpy as np

from .graph import forward

CROP_NAMES = ("top_left", "top_right", "bottom_left", "bottom_right", "center")


class CropError(ValueError):
    pass


@dataclass
class OversampleResult:
    mean: np.ndarray
    crops: np.ndarray  # (10, n_outputs), unmirrored crops first
    boxes: list  # (name, top, left, height, width, mirrored)
    emitted: str  # "probabilities" or "logits"


def crop_boxes(height, width, crop_h, crop_w):
    if crop_h > height or crop_w > width:
        raise CropError(f"crop {crop_h}x{crop_w} larger than image {height}x{width}")
    if crop_h < 1 or crop_w < 1:
        raise CropError(f"empty crop {crop_h}x{crop_w}")
    anchors = [(0, 0), (0, width - crop_w), (height - crop_h, 0),
               (height - crop_h, width - crop_w),
               ((height - crop_h) // 2, (width - crop_w) // 2)]
    return [(name, top, left) for name, (top, left) in zip(CROP_NAMES, anchors)]


def resize_bilinear(img, height, width):
    """Half-pixel-centred bilinear resampling of a (C, H, W) array."""
    c, h, w = img.shape
    if (h, w) == (height, width):
        return img.copy()

    def axis(n_in, n_out):
        pos = np.clip((np.arange(n_out) + 0.5) * n_in / n_out - 0.5, 0, n_in - 1)
        lo = np.floor(pos).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(h, height)
    x0, x1, fx = axis(w, width)
    rows = img[:, y0, :] * (1 - fy)[None, :, None] + img[:, y1, :] * fy[None, :, None]
    return rows[:, :, x0] * (1 - fx) + rows[:, :, x1] * fx


def ten_crops(image, crop_h, crop_w, out_h=None, out_w=None):
    """Crops in order: 5 unmirrored, then the same 5 flipped left-right."""
    image = np.asarray(image, dtype=np.float64)
    _, height, width = image.shape
    out_h, out_w = out_h or crop_h, out_w or crop_w
    crops, boxes = [], []
    for mirrored in (False, True):
        for name, top, left in crop_boxes(height, width, crop_h, crop_w):
            patch = image[:, top:top + crop_h, left:left + crop_w]
            if mirrored:
                patch = patch[:, :, ::-1]
            crops.append(np.ascontiguousarray(resize_bilinear(patch, out_h, out_w)))
            boxes.append((name, top, left, crop_h, crop_w, mirrored))
    return crops, boxes


def predict_oversampled(net, image, crop_fraction=0.875):
    """Average of the sink output over ten crops.

    The crop extent is ``round(crop_fraction * image extent)`` and each crop
    is resized to the network input when sizes differ.  With
    ``crop_fraction=None`` crops are taken at the network input size.
    """
    image = np.asarray(image, dtype=np.float64)
    c, in_h, in_w = net.input_shape
    if image.ndim != 3 or image.shape[0] != c:
        raise CropError(f"image shape {image.shape} incompatible with input {net.input_shape}")
    _, height, width = image.shape
    if crop_fraction is None:
        crop_h, crop_w = in_h, in_w
    else:
        if not 0 < crop_fraction <= 1:
            raise CropError(f"crop_fraction must lie in (0, 1], got {crop_fraction}")
        crop_h = int(np.floor(crop_fraction * height + 0.5))
        crop_w = int(np.floor(crop_fraction * width + 0.5))
    crops, boxes = ten_crops(image, crop_h, crop_w, in_h, in_w)
    outs = np.stack([forward(net, crop).output for crop in crops])
    emitted = "probabilities" if net.logit_node != net.sink else "logits"
    # shifted mean: identical crop outputs average to exactly that output
    mean = outs[0] + (outs - outs[0]).mean(axis=0)
    return OversampleResult(mean, outs, boxes, emitted)
