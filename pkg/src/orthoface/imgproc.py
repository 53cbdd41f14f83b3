"""Pixel-level primitives: color conversion, equalization, scaling, thresholding,
morphology and Canny edge detection with double-threshold hysteresis linking.

All operations are pure functions over immutable Raster values. Conventions
documented here and relied on elsewhere:

* YCbCr uses the full-range BT.601 matrix.
* Rounding of intermediate float intensities is round-half-up.
* Erosion treats out-of-bounds structuring-element positions as foreground
  (the mask ends at the frame, it is not surrounded by background), dilation
  treats them as background. This is the adjoint convention, the one under
  which opening/closing are idempotent and anti-extensive/extensive.
* Canny thresholds apply to the raw Sobel magnitude, not a rescaled one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ImageIOError, InvalidInputError


class Semantics(Enum):
    RGB = "rgb"
    YCBCR = "ycbcr"
    GRAY = "gray"
    BINARY = "binary"
    EDGE = "edge"


_THREE_PLANE = {Semantics.RGB, Semantics.YCBCR}
_TWO_LEVEL = {Semantics.BINARY, Semantics.EDGE}


@dataclass(frozen=True)
class Raster:
    """Single- or three-plane 8-bit image with explicit plane semantics.

    ``data`` is (height, width) for one plane or (height, width, 3),
    row-major uint8, frozen (writeable=False) so values can be shared freely.
    """

    width: int
    height: int
    planes: int
    data: np.ndarray
    semantics: Semantics

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.uint8)
        expect = (self.height, self.width) if self.planes == 1 else (self.height, self.width, self.planes)
        if self.planes not in (1, 3):
            raise InvalidInputError(f"planes must be 1 or 3, got {self.planes}")
        if arr.shape != expect:
            raise InvalidInputError(f"data shape {arr.shape} != {expect}")
        if (self.semantics in _THREE_PLANE) != (self.planes == 3):
            raise InvalidInputError(f"{self.semantics} incompatible with {self.planes} plane(s)")
        if self.semantics in _TWO_LEVEL and arr.size and not np.isin(arr, (0, 255)).all():
            raise InvalidInputError(f"{self.semantics} raster must contain only 0 and 255")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr, semantics: Semantics) -> "Raster":
        arr = np.asarray(arr)
        planes = 1 if arr.ndim == 2 else arr.shape[2]
        return cls(arr.shape[1], arr.shape[0], planes, arr.astype(np.uint8), semantics)

    def plane(self, i: int) -> np.ndarray:
        return self.data if self.planes == 1 else self.data[:, :, i]

    def with_semantics(self, semantics: Semantics) -> "Raster":
        return Raster(self.width, self.height, self.planes, self.data, semantics)


@dataclass(frozen=True)
class RegionOfInterest:
    """Inclusive pixel rectangle [x0, x1] x [y0, y1]."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            raise InvalidInputError(f"bad ROI ({self.x0},{self.y0})-({self.x1},{self.y1})")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    @property
    def center(self):
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def contains(self, x, y) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def clipped(self, width: int, height: int) -> "RegionOfInterest":
        return RegionOfInterest(
            max(0, self.x0), max(0, self.y0), min(width - 1, self.x1), min(height - 1, self.y1)
        )

    def require_inside(self, img: Raster):
        if self.x1 >= img.width or self.y1 >= img.height:
            raise InvalidInputError(f"ROI {self} exceeds {img.width}x{img.height} image")


@dataclass(frozen=True)
class StructuringElement:
    """Odd-sized binary mask with center anchor; default 3x3 all-ones."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim != 2 or m.shape[0] % 2 == 0 or m.shape[1] % 2 == 0:
            raise InvalidInputError(f"structuring element must be odd-sized 2D, got {m.shape}")
        if not m.any():
            raise InvalidInputError("structuring element has no set pixel")
        if not m[m.shape[0] // 2, m.shape[1] // 2]:
            raise InvalidInputError("structuring element anchor must be set")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)

    @classmethod
    def box(cls, size: int = 3) -> "StructuringElement":
        return cls(np.ones((size, size), dtype=bool))

    def offsets(self):
        """Set positions as (dy, dx) offsets relative to the anchor."""
        cy, cx = self.mask.shape[0] // 2, self.mask.shape[1] // 2
        ys, xs = np.nonzero(self.mask)
        return [(int(y - cy), int(x - cx)) for y, x in zip(ys, xs)]


def _round_half_up(arr: np.ndarray) -> np.ndarray:
    return np.floor(arr + 0.5)


def _to_u8(arr: np.ndarray) -> np.ndarray:
    return np.clip(_round_half_up(arr), 0, 255).astype(np.uint8)


# Full-range BT.601 (rows: Y, Cb, Cr; columns: R, G, B).
BT601 = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)


def rgb_to_ycbcr(img: Raster) -> Raster:
    """Convert an RGB raster to full-range BT.601 YCbCr."""
    if img.semantics is not Semantics.RGB or img.planes != 3:
        raise InvalidInputError("rgb_to_ycbcr expects a 3-plane RGB raster")
    rgb = img.data.astype(np.float64)
    out = np.tensordot(rgb, BT601.T, axes=([2], [0]))
    out[:, :, 1] += 128.0
    out[:, :, 2] += 128.0
    return Raster.from_array(_to_u8(out), Semantics.YCBCR)


def equalization_lut(hist: np.ndarray) -> np.ndarray:
    """CDF-remap lookup table for a 256-bin histogram.

    Returns the identity table when the histogram is a single occupied bin
    (the remap denominator would be zero).
    """
    hist = np.asarray(hist, dtype=np.int64)
    if hist.shape != (256,):
        raise InvalidInputError("histogram must have 256 bins")
    total = int(hist.sum())
    if total == 0:
        return np.arange(256, dtype=np.uint8)
    cdf = np.cumsum(hist)
    cdf_min = int(cdf[np.nonzero(hist)[0][0]])
    if total == cdf_min:
        return np.arange(256, dtype=np.uint8)
    lut = _round_half_up(255.0 * (cdf - cdf_min) / (total - cdf_min))
    return np.clip(lut, 0, 255).astype(np.uint8)


def equalize_histogram(img: Raster) -> Raster:
    """Histogram-equalize a single-plane raster (constant images pass through)."""
    if img.planes != 1:
        raise InvalidInputError("equalize_histogram expects a single-plane raster")
    hist = np.bincount(img.data.ravel(), minlength=256)
    lut = equalization_lut(hist)
    return Raster.from_array(lut[img.data], img.semantics)


def bilinear_resize(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample with half-pixel-center alignment and edge clamping."""
    in_h, in_w = plane.shape
    if out_h == in_h and out_w == in_w:
        return plane.copy()
    src = plane.astype(np.float64)
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.clip(np.floor(ys), 0, in_h - 1).astype(int)
    x0 = np.clip(np.floor(xs), 0, in_w - 1).astype(int)
    y1 = np.clip(y0 + 1, 0, in_h - 1)
    x1 = np.clip(x0 + 1, 0, in_w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - wx) + src[np.ix_(y0, x1)] * wx
    bot = src[np.ix_(y1, x0)] * (1 - wx) + src[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def normalize_scale(img: Raster, target_roi_height: int, roi: RegionOfInterest):
    """Resample the whole image so the ROI height becomes target_roi_height.

    Returns (resampled raster, applied scale factor).
    """
    if target_roi_height < 8:
        raise InvalidInputError(f"target_roi_height must be >= 8, got {target_roi_height}")
    roi.require_inside(img)
    if roi.height <= 0:
        raise InvalidInputError("degenerate ROI with zero height")
    scale = target_roi_height / roi.height
    if scale == 1.0:
        return img, 1.0
    out_h = max(1, int(round(img.height * scale)))
    out_w = max(1, int(round(img.width * scale)))
    if img.planes == 1:
        out = _to_u8(bilinear_resize(img.data, out_h, out_w))
    else:
        out = np.stack(
            [_to_u8(bilinear_resize(img.data[:, :, p], out_h, out_w)) for p in range(img.planes)],
            axis=2,
        )
    return Raster.from_array(out, img.semantics), scale


@dataclass(frozen=True)
class BinarizeResult:
    mask: Raster
    threshold: int
    degenerate: bool


def otsu_threshold(hist: np.ndarray):
    """Smallest threshold maximizing between-class variance; foreground is >= t.

    Returns (threshold, degenerate) where degenerate means no threshold
    separates two non-empty classes.
    """
    hist = np.asarray(hist, dtype=np.float64)
    total = hist.sum()
    values = np.arange(256, dtype=np.float64)
    best_t, best_var = 0, -1.0
    for t in range(256):
        w0 = hist[:t].sum()
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            var = 0.0
        else:
            mu0 = (values[:t] * hist[:t]).sum() / w0
            mu1 = (values[t:] * hist[t:]).sum() / w1
            var = (w0 / total) * (w1 / total) * (mu0 - mu1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t, best_var <= 0.0


def binarize(img: Raster, method: str = "otsu", threshold: int | None = None,
             bright_foreground: bool = True) -> BinarizeResult:
    """Threshold a single-plane raster; foreground maps to 255.

    method is "otsu" or "fixed" (fixed requires ``threshold``). With the
    default polarity a pixel is foreground iff intensity >= threshold.
    Otsu on a constant image yields an all-zero mask with ``degenerate`` set.
    """
    if img.planes != 1:
        raise InvalidInputError("binarize expects a single-plane raster")
    if method == "fixed":
        if threshold is None:
            raise InvalidInputError("fixed thresholding requires a threshold value")
        t, degenerate = int(threshold), False
        if not 0 <= t <= 255:
            raise InvalidInputError(f"threshold {t} outside [0, 255]")
    elif method == "otsu":
        t, degenerate = otsu_threshold(np.bincount(img.data.ravel(), minlength=256))
    else:
        raise InvalidInputError(f"unknown binarize method {method!r}")
    if degenerate:
        mask = np.zeros_like(img.data)
    else:
        fg = img.data >= t if bright_foreground else img.data < t
        mask = np.where(fg, 255, 0).astype(np.uint8)
    return BinarizeResult(Raster.from_array(mask, Semantics.BINARY), t, degenerate)


def _shift(m: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    """out[y, x] = m[y + dy, x + dx], out-of-range positions take ``fill``."""
    h, w = m.shape
    out = np.full_like(m, fill)
    dy0, dy1 = max(0, -dy), h + min(0, -dy)
    dx0, dx1 = max(0, -dx), w + min(0, -dx)
    sy0, sy1 = max(0, dy), h + min(0, dy)
    sx0, sx1 = max(0, dx), w + min(0, dx)
    if dy1 > dy0 and dx1 > dx0:
        out[dy0:dy1, dx0:dx1] = m[sy0:sy1, sx0:sx1]
    return out


def _dilate(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    out = np.zeros_like(mask)
    for dy, dx in se.offsets():
        out |= _shift(mask, -dy, -dx, False)
    return out


def _erode(mask: np.ndarray, se: StructuringElement) -> np.ndarray:
    # out-of-frame SE positions count as foreground: only in-frame pixels constrain
    out = np.ones_like(mask)
    for dy, dx in se.offsets():
        out &= _shift(mask, dy, dx, True)
    return out


def morph(mask: Raster, se: StructuringElement | None = None, mode: str = "open") -> Raster:
    """Morphological opening or closing of a binary raster."""
    if mask.semantics not in _TWO_LEVEL or mask.planes != 1:
        raise InvalidInputError("morph expects a binary raster")
    if se is None:
        se = StructuringElement.box(3)
    m = mask.data > 0
    if mode == "open":
        out = _dilate(_erode(m, se), se)
    elif mode == "close":
        out = _erode(_dilate(m, se), se)
    else:
        raise InvalidInputError(f"unknown morph mode {mode!r}")
    return Raster.from_array(np.where(out, 255, 0), mask.semantics)


def gaussian_kernel_1d(sigma: float = 1.0, size: int = 5) -> np.ndarray:
    half = size // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _convolve2d_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    py, px = kh // 2, kw // 2
    padded = np.pad(img, ((py, py), (px, px)), mode="edge")
    out = np.zeros_like(img, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i:i + img.shape[0], j:j + img.shape[1]]
    return out


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)

# Quantized gradient axes (dx, dy): 0, 45, 90, 135 degrees.
_NMS_AXES = [(1, 0), (1, 1), (0, 1), (-1, 1)]


def sobel_gradients(img: Raster):
    """(magnitude, gx, gy) of the Gaussian-smoothed image, replicate borders."""
    if img.planes != 1:
        raise InvalidInputError("gradients expect a single-plane raster")
    g = gaussian_kernel_1d(1.0, 5)
    smooth = _convolve2d_replicate(_convolve2d_replicate(img.data.astype(np.float64), g[None, :]), g[:, None])
    gx = _convolve2d_replicate(smooth, SOBEL_X)
    gy = _convolve2d_replicate(smooth, SOBEL_Y)
    return np.hypot(gx, gy), gx, gy


def _nms(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Thin to local maxima along the quantized gradient axis.

    A pixel survives when strictly greater than the neighbor at -axis and
    at least equal to the one at +axis; the asymmetry keeps plateau edges
    one pixel wide.
    """
    h, w = mag.shape
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    sector = np.floor((angle + 22.5) / 45.0).astype(int) % 4
    padded = np.pad(mag, 1, mode="constant")
    keep = np.zeros((h, w), dtype=bool)
    for s, (ax, ay) in enumerate(_NMS_AXES):
        prev = padded[1 - ay:1 - ay + h, 1 - ax:1 - ax + w]
        nxt = padded[1 + ay:1 + ay + h, 1 + ax:1 + ax + w]
        keep |= (sector == s) & (mag > prev) & (mag >= nxt)
    keep &= mag > 0
    return keep


def _hysteresis(candidates: np.ndarray, strong: np.ndarray) -> np.ndarray:
    """Keep strong pixels and weak candidates 8-connected to a strong pixel."""
    h, w = candidates.shape
    keep = strong & candidates
    seen = keep.copy()
    queue = deque(zip(*np.nonzero(keep)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and candidates[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((ny, nx))
    return seen


def canny_edges(img: Raster, low: float, high: float) -> Raster:
    """Canny edges: Gaussian(sigma=1, 5x5) -> Sobel -> 4-direction NMS ->
    double-threshold hysteresis over 8-connectivity.

    low/high apply to the raw Sobel magnitude of the smoothed image.
    """
    if not (0 <= low < high <= 255):
        raise InvalidInputError(f"need 0 <= low < high <= 255, got {low}, {high}")
    mag, gx, gy = sobel_gradients(img)
    ridge = _nms(mag, gx, gy)
    weak = ridge & (mag >= low)
    strong = ridge & (mag >= high)
    keep = _hysteresis(weak, strong)
    return Raster.from_array(np.where(keep, 255, 0), Semantics.EDGE)


# --- PGM (P5) / PPM (P6) io, maxval 255, bit-exact round-trip ---------------

def _read_token(buf: bytes, pos: int):
    n = len(buf)
    while pos < n:
        c = buf[pos:pos + 1]
        if c == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageIOError("truncated PNM header")
    return buf[start:pos], pos


def pnm_from_bytes(buf: bytes) -> Raster:
    try:
        magic, pos = _read_token(buf, 0)
        if magic not in (b"P5", b"P6"):
            raise ImageIOError(f"unsupported PNM magic {magic!r}")
        w, pos = _read_token(buf, pos)
        h, pos = _read_token(buf, pos)
        maxval, pos = _read_token(buf, pos)
        w, h, maxval = int(w), int(h), int(maxval)
    except (ValueError, ImageIOError) as exc:
        raise ImageIOError(f"bad PNM header: {exc}") from exc
    if maxval != 255:
        raise ImageIOError(f"only maxval 255 supported, got {maxval}")
    if w <= 0 or h <= 0:
        raise ImageIOError(f"bad PNM dimensions {w}x{h}")
    pos += 1  # single whitespace after maxval
    planes = 1 if magic == b"P5" else 3
    need = w * h * planes
    raw = buf[pos:pos + need]
    if len(raw) != need:
        raise ImageIOError(f"truncated PNM payload: expected {need} bytes, got {len(raw)}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape((h, w) if planes == 1 else (h, w, 3))
    return Raster.from_array(arr, Semantics.GRAY if planes == 1 else Semantics.RGB)


def pnm_to_bytes(img: Raster) -> bytes:
    magic = b"P5" if img.planes == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + img.data.tobytes()


def read_pnm(path) -> Raster:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc}") from exc
    try:
        return pnm_from_bytes(buf)
    except ImageIOError as exc:
        raise ImageIOError(f"{path}: {exc}") from exc


def write_pnm(img: Raster, path):
    try:
        with open(path, "wb") as fh:
            fh.write(pnm_to_bytes(img))
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc
