"""Synthetic image datasets with class-conditioned structure.

Each class owns a smooth low-frequency prototype image; samples are the
prototype plus seeded pixel noise, clipped to [0, 1].  Prototypes drawn
uniformly are far apart relative to the noise, so small models separate
the classes easily.  A dataset is a list of (image, label) pairs with
images shaped (C, H, W) in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class DatasetSpec:
    classes: int = 4
    per_class: int = 32
    shape: tuple = (1, 8, 8)
    noise: float = 0.12
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.per_class < 1:
            raise ValueError("per_class must be >= 1")
        if len(self.shape) != 3 or self.shape[0] not in (1, 3):
            raise ValueError(f"shape must be (C, H, W) with C in {{1, 3}}, "
                             f"got {self.shape}")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def class_prototype(spec: DatasetSpec, label: int) -> np.ndarray:
    """Smooth per-class template: coarse random grid upsampled 2x."""
    c, h, w = spec.shape
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, label)))
    ch, cw = math.ceil(h / 2), math.ceil(w / 2)
    coarse = rng.uniform(0.0, 1.0, size=(c, ch, cw))
    return np.kron(coarse, np.ones((1, 2, 2)))[:, :h, :w]


def synth_dataset(spec: DatasetSpec) -> list:
    """Class-major list of (image, label); exact per-class counts."""
    protos = [class_prototype(spec, k) for k in range(spec.classes)]
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 10_000)))
    out = []
    for k in range(spec.classes):
        for _ in range(spec.per_class):
            x = protos[k] + rng.normal(0.0, spec.noise, size=spec.shape)
            out.append((np.clip(x, 0.0, 1.0), k))
    return out


def stack_dataset(dataset):
    """(xs, ys) arrays for batched evaluation."""
    xs = np.stack([x for x, _ in dataset])
    ys = np.array([y for _, y in dataset], dtype=np.int64)
    return xs, ys


@dataclass(frozen=True)
class FolderSpec:
    """A dataset laid out as <folder>/<class name>/*.png."""

    folder: str


def load_image_folder(folder) -> list:
    """Labels follow the sorted class-directory order."""
    from .io import load_image

    root = Path(folder)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise ValueError(f"no class directories under '{folder}'")
    out = []
    for label, cdir in enumerate(class_dirs):
        files = sorted(cdir.glob("*.png"))
        if not files:
            raise ValueError(f"no PNG files in '{cdir}'")
        out.extend((load_image(f), label) for f in files)
    return out


def load_dataset(spec) -> list:
    """Materialize either dataset spec kind as (image, label) pairs."""
    if isinstance(spec, FolderSpec):
        return load_image_folder(spec.folder)
    return synth_dataset(spec)
