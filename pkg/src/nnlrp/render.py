"""Zero-centred red/white/blue heatmap rendering plus PPM and CSV I/O."""
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

NEUTRAL = (255, 255, 255)
WARM = (255, 0, 0)
COLD = (0, 0, 255)


@dataclass
class Heatmap:
    grid: np.ndarray
    mode: str = "symmetric"  # or "fixed"
    lo: float = -1.0
    hi: float = 1.0
    colormap: str = "bwr"

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2 or self.grid.size == 0:
            raise ValueError(f"heatmap grid must be a nonempty 2-D array, got {self.grid.shape}")
        if not np.all(np.isfinite(self.grid)):
            raise ValueError("heatmap grid holds non-finite values")
        if self.mode not in ("symmetric", "fixed"):
            raise ValueError(f"unknown normalization {self.mode!r}")
        if self.mode == "fixed" and not self.lo < 0 < self.hi:
            raise ValueError("fixed range must straddle zero")
        if self.colormap != "bwr":
            raise ValueError(f"unknown colormap {self.colormap!r}")


def _magnitude(h):
    """|value| mapped to [0, 1] on each side of zero."""
    g = h.grid
    if h.mode == "symmetric":
        m = np.max(np.abs(g))
        if m == 0:
            return np.zeros_like(g)
        return np.abs(g) / m
    return np.clip(np.where(g >= 0, g / h.hi, g / h.lo), 0.0, 1.0)


def render(h, scale=1):
    """RGB uint8 image (H*scale, W*scale, 3); 0 is exactly white."""
    # snapping to 12 digits absorbs last-ulp noise from rescaling
    level = np.rint(255 * np.round(_magnitude(h), 12))
    fade = (255 - level).astype(np.uint8)  # 255 at zero
    full = np.full(fade.shape, 255, dtype=np.uint8)
    pos = h.grid > 0
    r = np.where(pos, full, fade)
    b = np.where(h.grid < 0, full, fade)
    img = np.stack([r, fade, b], axis=-1)
    if scale != 1:
        scale = int(scale)
        if scale < 1:
            raise ValueError("scale must be a positive integer")
        img = img.repeat(scale, axis=0).repeat(scale, axis=1)
    return img


def ppm_bytes(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("PPM output needs an (H, W, 3) uint8 image")
    height, width = img.shape[:2]
    return f"P6\n{width} {height}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def csv_text(grid):
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(np.asarray(grid, dtype=np.float64)), fmt="%.17g", delimiter=",")
    return buf.getvalue()


def write_image(img, path, fmt="PPM"):
    """PPM takes a rendered RGB image; CSV takes the raw 2-D grid."""
    fmt = fmt.upper()
    if fmt == "PPM":
        Path(path).write_bytes(ppm_bytes(img))
    elif fmt == "CSV":
        Path(path).write_text(csv_text(img))
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))


class PPMError(ValueError):
    pass


def read_ppm(path):
    """Binary P6 file to an (H, W, 3) uint8 array (maxval 255 only)."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PPMError("truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise PPMError(f"not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PPMError("malformed PPM header") from None
    if maxval != 255:
        raise PPMError(f"only maxval 255 supported, got {maxval}")
    pixels = data[pos + 1:]
    if len(pixels) != width * height * 3:
        raise PPMError(f"expected {width * height * 3} pixel bytes, got {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
