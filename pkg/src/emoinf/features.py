"""21-dimensional visual feature extraction from decoded pixel grids.

Layout of the feature vector:

====  =====================================================
slot  meaning
====  =====================================================
0-14  five dominant colors, each as (hue/360, saturation, value),
      ordered by descending cluster population
15    mean brightness (HSV value channel)
16    mean saturation
17    brightness contrast (population standard deviation)
18    saturation contrast
19    cool color ratio: fraction of pixels with hue in [30, 110] degrees
20    clear color ratio: fraction of pixels with brightness > 0.7
====  =====================================================

All statistics are pixel-set quantities, so every feature is invariant to
pixel ordering; the color clustering is seeded and starts from sorted pixels
to keep that true.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import FEATURE_DIM

KMEANS_K = 5
KMEANS_MAX_ITER = 50
KMEANS_TOL = 1e-6
CLUSTER_SAMPLE_LIMIT = 10_000
COOL_HUE_LOW = 30.0
COOL_HUE_HIGH = 110.0
CLEAR_VALUE_THRESHOLD = 0.7


@dataclass(frozen=True)
class PixelGrid:
    """A decoded RGB image: row-major (height*width, 3) array of 0..255 ints."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.width * self.height, 3):
            raise ValueError(
                f"pixel array shape {px.shape} does not match "
                f"{self.width}x{self.height} image"
            )
        if px.min() < 0 or px.max() > 255:
            raise ValueError("pixel channels must lie in [0, 255]")
        object.__setattr__(self, "pixels", px)


def rgb_to_hsv(r: float, g: float, b: float) -> tuple[float, float, float]:
    """Standard hexcone RGB -> HSV for 0..255 channels.

    Returns hue in [0, 360) degrees (0 for grays), saturation and value in
    [0, 1].
    """
    arr = _rgb_to_hsv_array(np.array([[r, g, b]], dtype=np.float64))
    h, s, v = arr[0]
    return float(h), float(s), float(v)


def _rgb_to_hsv_array(pixels: np.ndarray) -> np.ndarray:
    """Vectorized hexcone conversion; input (n,3) in 0..255, output (n,3)."""
    scaled = pixels / 255.0
    r, g, b = scaled[:, 0], scaled[:, 1], scaled[:, 2]
    maxc = scaled.max(axis=1)
    minc = scaled.min(axis=1)
    span = maxc - minc

    v = maxc
    s = np.where(maxc > 0, span / np.where(maxc > 0, maxc, 1.0), 0.0)

    # hue by dominant channel; gray pixels (span == 0) keep hue 0
    safe_span = np.where(span > 0, span, 1.0)
    h = np.zeros(len(pixels))
    is_r = (maxc == r) & (span > 0)
    is_g = (maxc == g) & (span > 0) & ~is_r
    is_b = (span > 0) & ~is_r & ~is_g
    h = np.where(is_r, (g - b) / safe_span, h)
    h = np.where(is_g, 2.0 + (b - r) / safe_span, h)
    h = np.where(is_b, 4.0 + (r - g) / safe_span, h)
    h = (h * 60.0) % 360.0
    return np.column_stack([h, s, v])


def _embed(hsv: np.ndarray) -> np.ndarray:
    """Map HSV to (cos h, sin h, s, v) so hue distance wraps correctly."""
    rad = np.deg2rad(hsv[:, 0])
    return np.column_stack([np.cos(rad), np.sin(rad), hsv[:, 1], hsv[:, 2]])


def _center_to_hsv(center: np.ndarray) -> tuple[float, float, float]:
    h = np.rad2deg(np.arctan2(center[1], center[0])) % 360.0
    s = float(np.clip(center[2], 0.0, 1.0))
    v = float(np.clip(center[3], 0.0, 1.0))
    return float(h), s, v


def dominant_colors(img: PixelGrid, k: int = KMEANS_K, seed: int = 0) -> np.ndarray:
    """Five dominant HSV colors by seeded k-means, flattened to 15 values.

    Pixels are embedded on the hue circle for clustering, then cluster
    centers are reported as (hue/360, s, v) triples ordered by descending
    population (ties by ascending hue). Images with fewer distinct colors
    than k repeat the largest cluster's color to fill all five slots.
    """
    hsv = _rgb_to_hsv_array(img.pixels)
    pts = _embed(hsv)

    # sort, then subsample: makes both steps independent of pixel order
    order = np.lexsort((hsv[:, 2], hsv[:, 1], hsv[:, 0]))
    pts = pts[order]
    rng = np.random.default_rng(seed)
    if len(pts) > CLUSTER_SAMPLE_LIMIT:
        keep = rng.choice(len(pts), size=CLUSTER_SAMPLE_LIMIT, replace=False)
        pts = pts[np.sort(keep)]
    shuffle = rng.permutation(len(pts))
    pts = pts[shuffle]

    centers = _farthest_point_init(pts, k)
    assign = _nearest(pts, centers)
    for _ in range(KMEANS_MAX_ITER):
        new_centers = centers.copy()
        for c in range(k):
            members = pts[assign == c]
            if len(members):
                new_centers[c] = members.mean(axis=0)
        move = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        assign = _nearest(pts, centers)
        if move < KMEANS_TOL:
            break

    counts = np.bincount(assign, minlength=k)
    colors = []
    for c in range(k):
        if counts[c] == 0:
            continue
        h, s, v = _center_to_hsv(centers[c])
        colors.append((int(counts[c]), h, s, v))
    colors.sort(key=lambda item: (-item[0], item[1]))
    while len(colors) < k:
        colors.append(colors[0])

    out = np.empty(3 * k)
    for i, (_, h, s, v) in enumerate(colors[:k]):
        out[3 * i:3 * i + 3] = (h / 360.0, s, v)
    return out


def _nearest(pts: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1)  # argmin ties resolve to the lowest center index


def _farthest_point_init(pts: np.ndarray, k: int) -> np.ndarray:
    centers = [pts[0]]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        idx = int(d2.argmax())
        centers.append(pts[idx])
        d2 = np.minimum(d2, ((pts - pts[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def brightness_saturation_stats(img: PixelGrid) -> tuple[float, float, float, float]:
    """(mean value, mean saturation, value std, saturation std) over all pixels.

    Contrast is the population standard deviation of the channel.
    """
    hsv = _rgb_to_hsv_array(img.pixels)
    return (
        float(hsv[:, 2].mean()),
        float(hsv[:, 1].mean()),
        float(hsv[:, 2].std()),
        float(hsv[:, 1].std()),
    )


def cool_color_ratio(img: PixelGrid) -> float:
    """Fraction of pixels whose hue falls in the cool band [30, 110] degrees."""
    h = _rgb_to_hsv_array(img.pixels)[:, 0]
    return float(np.mean((h >= COOL_HUE_LOW) & (h <= COOL_HUE_HIGH)))


def clear_color_ratio(img: PixelGrid) -> float:
    """Fraction of pixels with brightness strictly greater than 0.7."""
    v = _rgb_to_hsv_array(img.pixels)[:, 2]
    return float(np.mean(v > CLEAR_VALUE_THRESHOLD))


def extract_features(img: PixelGrid, seed: int = 0) -> np.ndarray:
    """Compose the full 21-dimensional feature vector for one image."""
    out = np.empty(FEATURE_DIM)
    out[0:15] = dominant_colors(img, seed=seed)
    out[15:19] = brightness_saturation_stats(img)
    out[19] = cool_color_ratio(img)
    out[20] = clear_color_ratio(img)
    return out


# -- portable pixmap (P6) I/O ----------------------------------------------


def read_ppm(path) -> PixelGrid:
    """Read a binary P6 PPM with maxval <= 255."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PPM header")
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ValueError(f"{path}: non-numeric PPM header fields")
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"{path}: unsupported maxval {maxval} (need 1..255)")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raw = data[pos:pos + need]
    if len(raw) < need:
        raise ValueError(f"{path}: truncated pixel data ({len(raw)} of {need} bytes)")
    px = np.frombuffer(raw, dtype=np.uint8).astype(np.float64).reshape(-1, 3)
    if maxval != 255:
        px = np.round(px * (255.0 / maxval))
    return PixelGrid(width, height, px)


def write_ppm(img: PixelGrid, path) -> None:
    """Write a binary P6 PPM (maxval 255)."""
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(np.asarray(np.round(img.pixels), dtype=np.uint8).tobytes())
