"""Image transformations and the 50-entry defense policy table.

Images are float64 (C, H, W) arrays in [0, 1], C in {1, 3}.  Thirteen
operations are supported, each driven by an integer magnitude 0..9 that maps
linearly onto the op's parameter range.  Geometric ops (rotate, shearY,
translateX/Y) resample bilinearly, fill uncovered pixels with black, and
draw their direction sign from the caller's rng; everything else is
deterministic.  Histogram ops (autocontrast, equalize, posterize) work on
256-bin histograms of the 8-bit quantized image and pass constant channels
through unchanged.

A policy is a short ordered chain of (op, magnitude) steps, written in the
dash notation "3-1-7" when its steps come from the standard table.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

TRANSFORM_NAMES = (
    "invert", "contrast", "rotate", "translateX", "translateY", "sharpness",
    "shearY", "autocontrast", "equalize", "posterize", "color", "brightness",
    "solarize",
)

_GEOMETRIC = ("rotate", "shearY", "translateX", "translateY")

# luminance weights for RGB -> gray (ITU-R 601)
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class TransformSpec:
    """One operation with its magnitude 0..9."""

    op: str
    magnitude: int

    def __post_init__(self):
        if self.op not in TRANSFORM_NAMES:
            raise ValueError(f"unknown transform '{self.op}'")
        if not 0 <= int(self.magnitude) <= 9:
            raise ValueError(f"magnitude {self.magnitude} outside 0..9")


@dataclass(frozen=True)
class Policy:
    """Ordered chain of transform steps, applied left to right.

    indices records the table positions the policy was built from, when it
    was; that is what the dash notation prints.
    """

    specs: tuple
    indices: tuple | None = None

    def __post_init__(self):
        if not self.specs:
            raise ValueError("a policy needs at least one transform")

    def __len__(self):
        return len(self.specs)

    def notation(self) -> str:
        if self.indices is not None:
            return "-".join(str(i) for i in self.indices)
        return "+".join(f"{s.op}:{s.magnitude}" for s in self.specs)

    def op_names(self) -> frozenset:
        return frozenset(s.op for s in self.specs)

    def op_mag_pairs(self) -> frozenset:
        return frozenset((s.op, s.magnitude) for s in self.specs)


_TABLE_ROWS = (
    ("invert", 7), ("contrast", 6), ("rotate", 2), ("translateX", 9),
    ("sharpness", 1), ("sharpness", 3), ("shearY", 2), ("translateY", 2),
    ("autocontrast", 5), ("equalize", 2), ("shearY", 5), ("posterize", 5),
    ("color", 3), ("brightness", 5), ("sharpness", 9), ("brightness", 9),
    ("equalize", 5), ("equalize", 1), ("contrast", 7), ("sharpness", 5),
    ("color", 5), ("translateX", 5), ("equalize", 7), ("autocontrast", 8),
    ("translateY", 3), ("sharpness", 6), ("brightness", 6), ("color", 8),
    ("solarize", 0), ("invert", 0), ("equalize", 0), ("autocontrast", 0),
    ("equalize", 8), ("equalize", 4), ("color", 5), ("equalize", 5),
    ("autocontrast", 4), ("solarize", 4), ("brightness", 3), ("color", 0),
    ("solarize", 1), ("autocontrast", 0), ("translateY", 3),
    ("translateY", 4), ("autocontrast", 1), ("solarize", 1), ("equalize", 5),
    ("invert", 1), ("translateY", 3), ("autocontrast", 1),
)

_DEFAULT_TABLE = tuple(TransformSpec(op, m) for op, m in _TABLE_ROWS)


def default_table() -> tuple:
    """The standard 50-entry table of candidate transformations."""
    return _DEFAULT_TABLE


def parse_policy(notation: str, table=None, max_len: int | None = None) -> Policy:
    """Parse dash notation like "3-1-7" against a policy table.

    Indices may repeat.  max_len bounds the chain length when given.
    """
    table = _DEFAULT_TABLE if table is None else tuple(table)
    parts = notation.strip().split("-")
    try:
        idx = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"bad policy notation '{notation}'") from None
    if not idx:
        raise ValueError("empty policy notation")
    if max_len is not None and len(idx) > max_len:
        raise ValueError(f"policy '{notation}' longer than {max_len} steps")
    for i in idx:
        if not 0 <= i < len(table):
            raise ValueError(
                f"policy index {i} outside table of {len(table)} entries")
    return Policy(specs=tuple(table[i] for i in idx), indices=idx)


# ---------------------------------------------------------------------------
# helpers

def _check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"expected (C, H, W) with C in {{1, 3}}, "
                         f"got shape {img.shape}")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_seed(root: int, x, y=None) -> int:
    """Derive a per-sample seed from the root seed and the sample content.

    Hashing content instead of dataset position keeps per-sample
    randomness attached to the sample itself, so scores and training runs
    are invariant to dataset reordering.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root)).encode())
    h.update(np.ascontiguousarray(x, dtype=np.float64).tobytes())
    if y is not None:
        h.update(str(int(y)).encode())
    return int.from_bytes(h.digest(), "little")


def _gray(img: np.ndarray) -> np.ndarray:
    if img.shape[0] == 1:
        return img[0]
    return np.einsum("c,chw->hw", _LUMA, img)


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.int64)


def _blend(img: np.ndarray, neutral, factor: float) -> np.ndarray:
    # factor 1 returns img; 0 collapses onto the neutral image
    return np.clip(neutral + factor * (img - neutral), 0.0, 1.0)


def _enhance_factor(magnitude: int) -> float:
    return 0.1 + (magnitude / 9.0) * 1.8


def _affine_sample(img: np.ndarray, coeffs) -> np.ndarray:
    """Bilinear resample; coeffs (a..f) map output (x, y) to input
    coordinates x_in = a x + b y + c, y_in = d x + e y + f.  Samples
    falling outside the frame contribute black."""
    a, b, c, d, e, f = coeffs
    ch, h, w = img.shape
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    xin = a * xs + b * ys + c
    yin = d * xs + e * ys + f
    x0 = np.floor(xin)
    y0 = np.floor(yin)
    fx = xin - x0
    fy = yin - y0
    out = np.zeros_like(img)
    corners = ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
               (0, 1, (1 - fx) * fy), (1, 1, fx * fy))
    for dx, dy, wgt in corners:
        xi = (x0 + dx).astype(np.int64)
        yi = (y0 + dy).astype(np.int64)
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = img[:, np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        out += wgt[None] * np.where(valid[None], vals, 0.0)
    return np.clip(out, 0.0, 1.0)


def _sign(rng: np.random.Generator) -> float:
    return 1.0 if rng.integers(0, 2) == 1 else -1.0


# ---------------------------------------------------------------------------
# the thirteen operations

def _t_invert(img, m, rng):
    return 1.0 - img


def _t_contrast(img, m, rng):
    return _blend(img, _gray(img).mean(), _enhance_factor(m))


def _t_brightness(img, m, rng):
    # conventional enhancement: blend toward black
    return _blend(img, 0.0, _enhance_factor(m))


def _t_color(img, m, rng):
    if img.shape[0] == 1:
        return img.copy()
    return _blend(img, _gray(img)[None], _enhance_factor(m))


_SMOOTH = np.array([[1.0, 1.0, 1.0],
                    [1.0, 5.0, 1.0],
                    [1.0, 1.0, 1.0]]) / 13.0


def _t_sharpness(img, m, rng):
    ch, h, w = img.shape
    if h < 3 or w < 3:
        return img.copy()
    smooth = img.copy()
    # interior gets the 3x3 smoothing kernel; the 1-pixel border passes via
    # the copy above, so the blend leaves border pixels untouched
    acc = np.zeros((ch, h - 2, w - 2))
    for dy in range(3):
        for dx in range(3):
            acc += _SMOOTH[dy, dx] * img[:, dy:dy + h - 2, dx:dx + w - 2]
    smooth[:, 1:-1, 1:-1] = acc
    return _blend(img, smooth, _enhance_factor(m))


def _t_rotate(img, m, rng):
    theta = _sign(rng) * (m / 9.0) * np.deg2rad(30.0)
    if theta == 0.0:
        return img.copy()
    ch, h, w = img.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    cos, sin = np.cos(theta), np.sin(theta)
    # inverse rotation about the image center
    return _affine_sample(img, (cos, -sin, cx - cos * cx + sin * cy,
                                sin, cos, cy - sin * cx - cos * cy))


def _t_shear_y(img, m, rng):
    s = _sign(rng) * (m / 9.0) * 0.3
    if s == 0.0:
        return img.copy()
    return _affine_sample(img, (1.0, 0.0, 0.0, s, 1.0, 0.0))


def _t_translate_x(img, m, rng):
    shift = _sign(rng) * (m / 9.0) * 0.4 * img.shape[2]
    if shift == 0.0:
        return img.copy()
    return _affine_sample(img, (1.0, 0.0, shift, 0.0, 1.0, 0.0))


def _t_translate_y(img, m, rng):
    shift = _sign(rng) * (m / 9.0) * 0.4 * img.shape[1]
    if shift == 0.0:
        return img.copy()
    return _affine_sample(img, (1.0, 0.0, 0.0, 0.0, 1.0, shift))


def _t_autocontrast(img, m, rng):
    out = img.copy()
    for c in range(img.shape[0]):
        hist = np.bincount(_quantize(img[c:c + 1]).ravel(), minlength=256)
        nonzero = np.nonzero(hist)[0]
        lo, hi = int(nonzero[0]), int(nonzero[-1])
        if hi <= lo:
            continue  # constant channel passes through
        out[c] = np.clip((img[c] - lo / 255.0) * (255.0 / (hi - lo)), 0.0, 1.0)
    return out


def _t_equalize(img, m, rng):
    out = img.copy()
    for c in range(img.shape[0]):
        q = _quantize(img[c:c + 1])[0]
        hist = np.bincount(q.ravel(), minlength=256)
        nonzero = np.nonzero(hist)[0]
        if len(nonzero) <= 1:
            continue  # constant channel passes through
        step = (hist.sum() - hist[nonzero[-1]]) // 255
        if step == 0:
            continue
        # integer LUT: cumulative count before each bin, half-step rounding
        cumsum = np.concatenate(([0], np.cumsum(hist)[:-1]))
        lut = np.clip((step // 2 + cumsum) // step, 0, 255)
        out[c] = lut[q] / 255.0
    return out


def _t_posterize(img, m, rng):
    bits = 8 - int(round((m / 9.0) * 4))
    q = _quantize(img)
    keep = (q >> (8 - bits)) << (8 - bits)
    return keep / 255.0


def _t_solarize(img, m, rng):
    threshold = 1.0 - m / 9.0
    return np.where(img > threshold, 1.0 - img, img)


_OPS = {
    "invert": _t_invert,
    "contrast": _t_contrast,
    "rotate": _t_rotate,
    "translateX": _t_translate_x,
    "translateY": _t_translate_y,
    "sharpness": _t_sharpness,
    "shearY": _t_shear_y,
    "autocontrast": _t_autocontrast,
    "equalize": _t_equalize,
    "posterize": _t_posterize,
    "color": _t_color,
    "brightness": _t_brightness,
    "solarize": _t_solarize,
}


def apply_transform(image, spec: TransformSpec, rng=0) -> np.ndarray:
    """Apply one transform.  rng (seed or Generator) only feeds the
    direction sign of geometric ops; everything else is deterministic."""
    img = _check_image(image)
    out = _OPS[spec.op](img, spec.magnitude, _as_rng(rng))
    return np.ascontiguousarray(out)


def apply_policy(image, policy: Policy, rng=0) -> np.ndarray:
    """Apply a policy chain left to right under one rng stream."""
    img = _check_image(image)
    gen = _as_rng(rng)
    for spec in policy.specs:
        img = _OPS[spec.op](img, spec.magnitude, gen)
    return np.ascontiguousarray(img)
