"""On-disk formats: raw tensor files and 8-bit PNG images.

Tensor files carry float32 payloads behind a tiny self-describing header:
magic "ATSR", format version u16, rank u16, then one u32 per extent, all
little-endian, followed by the row-major payload.  Images round-trip
through 8-bit grayscale or RGB PNG with v/255 scaling.
"""

from __future__ import annotations

import struct

import numpy as np
from PIL import Image

MAGIC = b"ATSR"
VERSION = 1
_MAX_ELEMENTS = 1 << 31


def save_tensor(arr, path) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HH", VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r} in '{path}'")
    if len(blob) < 8:
        raise ValueError(f"truncated header in '{path}'")
    version, rank = struct.unpack_from("<HH", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    off = 8 + 4 * rank
    if len(blob) < off:
        raise ValueError(f"truncated extent list in '{path}'")
    extents = struct.unpack_from(f"<{rank}I", blob, 8)
    count = 1
    for e in extents:
        count *= e
    if count > _MAX_ELEMENTS:
        raise ValueError(f"extents {extents} overflow the element budget")
    if len(blob) - off < 4 * count:
        raise ValueError(f"truncated payload in '{path}': expected "
                         f"{4 * count} bytes, found {len(blob) - off}")
    flat = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
    return flat.reshape(extents).astype(np.float32)


def save_image(arr, path) -> None:
    """Write a (C, H, W) tensor in [0, 1] as an 8-bit PNG."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (C, H, W) with C in {{1, 3}}, "
                         f"got {arr.shape}")
    q = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[0] == 1:
        img = Image.fromarray(q[0], mode="L")
    else:
        img = Image.fromarray(np.moveaxis(q, 0, 2), mode="RGB")
    img.save(path, format="PNG")


def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale or RGB PNG as (C, H, W) in [0, 1]."""
    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        raise ValueError(f"unsupported colour type '{img.mode}' in "
                         f"'{path}'; need 8-bit L or RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    if arr.ndim == 2:
        return arr[None]
    return np.moveaxis(arr, 2, 0)


def side_by_side(panels, gap: int = 1) -> np.ndarray:
    """Concatenate (C, H, W) panels along width with white separators."""
    panels = [np.asarray(p, dtype=np.float64) for p in panels]
    c, h = panels[0].shape[0], panels[0].shape[1]
    for p in panels:
        if p.shape != panels[0].shape:
            raise ValueError("side_by_side panels must share one shape")
    sep = np.ones((c, h, gap))
    out = []
    for i, p in enumerate(panels):
        if i:
            out.append(sep)
        out.append(np.clip(p, 0.0, 1.0))
    return np.concatenate(out, axis=2)
