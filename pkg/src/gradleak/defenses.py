"""Baseline gradient defenses: layer-wise pruning and additive noise.

These act on the shared GradientVector after local computation and before
aggregation, unlike the transformation policies which act on the inputs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .models import GradientVector


@dataclass(frozen=True)
class DefenseSpec:
    """kind prune uses ratio; gaussian/laplacian use scale.

    Gaussian scale is read as the variance of N(0, scale); set
    scale_is_std to interpret it as the standard deviation instead.
    Laplacian scale is the distribution's b parameter.
    """

    kind: str
    ratio: float = 0.0
    scale: float = 0.0
    scale_is_std: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("prune", "gaussian", "laplacian"):
            raise ValueError(f"unknown defense '{self.kind}'")
        if self.kind == "prune" and not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"prune ratio {self.ratio} outside [0, 1]")
        if self.kind in ("gaussian", "laplacian") and self.scale <= 0.0:
            raise ValueError("noise scale must be > 0")


def _layer_seed(root: int, name: str) -> int:
    h = hashlib.blake2b(f"{int(root)}:{name}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def prune_gradients(gv: GradientVector, ratio: float) -> GradientVector:
    """Zero all but the ceil((1-ratio)*n) largest-magnitude entries,
    independently per layer.  Ties keep the lower flat index."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"prune ratio {ratio} outside [0, 1]")
    out = {}
    for name, v in gv.layers.items():
        flat = v.ravel()
        keep = math.ceil((1.0 - ratio) * flat.size)
        kept = np.zeros_like(flat)
        if keep > 0:
            # stable sort on descending magnitude keeps lower indices first
            order = np.argsort(-np.abs(flat), kind="stable")[:keep]
            kept[order] = flat[order]
        out[name] = kept.reshape(v.shape)
    return GradientVector(layers=out)


def noise_gradients(gv: GradientVector, spec: DefenseSpec) -> GradientVector:
    """Add i.i.d. noise to every entry; each layer gets its own stream
    derived from (seed, layer name) so layer order cannot matter."""
    out = {}
    for name, v in gv.layers.items():
        rng = np.random.default_rng(_layer_seed(spec.seed, name))
        if spec.kind == "gaussian":
            std = spec.scale if spec.scale_is_std else math.sqrt(spec.scale)
            noise = rng.normal(0.0, std, size=v.shape)
        elif spec.kind == "laplacian":
            noise = rng.laplace(0.0, spec.scale, size=v.shape)
        else:
            raise ValueError(f"'{spec.kind}' is not a noise defense")
        out[name] = v + noise
    return GradientVector(layers=out)


def apply_defense(gv: GradientVector, spec: DefenseSpec) -> GradientVector:
    if spec.kind == "prune":
        return prune_gradients(gv, spec.ratio)
    return noise_gradients(gv, spec)
