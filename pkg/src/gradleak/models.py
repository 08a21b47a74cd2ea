"""Small classification models with hand-rolled forward passes.

Three architectures, all built from the traced tensor ops so that model
gradients stay differentiable: an MLP, a plain ConvNet (conv/relu/pool
stages and a two-layer head), and a small residual net.  Parameters live in
plain dicts of float64 arrays; gradients are carried around as
:class:`GradientVector` so defenses and aggregation can treat them as one
object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Graph, Tensor


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description.

    arch is one of "mlp", "convnet", "smallresnet".  input_shape is (C, H, W).
    hidden is the MLP widths; channels the per-stage conv widths (the resnet
    uses channels[0] throughout); fc_width the ConvNet head width; blocks the
    number of residual blocks.
    """

    arch: str = "convnet"
    input_shape: tuple = (1, 8, 8)
    classes: int = 4
    hidden: tuple = (16,)
    channels: tuple = (4, 8)
    fc_width: int = 32
    blocks: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("mlp", "convnet", "smallresnet"):
            raise ValueError(f"unknown architecture '{self.arch}'")
        if len(self.input_shape) != 3:
            raise ValueError(f"input_shape must be (C, H, W), got "
                             f"{self.input_shape}")
        if self.classes < 2:
            raise ValueError("need at least two classes")
        c, h, w = self.input_shape
        if self.arch == "convnet":
            if not self.channels:
                raise ValueError("convnet needs at least one conv stage")
            factor = 2 ** len(self.channels)
            if h % factor or w % factor:
                raise ValueError(
                    f"input {h}x{w} not divisible by pooling factor {factor}")
        if self.arch == "smallresnet":
            if not self.channels:
                raise ValueError("smallresnet needs a stem width")
            if h % 2 or w % 2:
                raise ValueError("smallresnet input extents must be even")


@dataclass
class ModelParams:
    """Named parameter arrays in a fixed order.  Treated as immutable;
    updates build a new instance."""

    layers: dict = field(default_factory=dict)

    def names(self):
        return list(self.layers)

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.layers.items()})

    def updated(self, deltas: dict, scale: float = 1.0) -> "ModelParams":
        """New params with layers[k] + scale * deltas[k]."""
        return ModelParams({k: v + scale * deltas[k]
                            for k, v in self.layers.items()})


@dataclass
class GradientVector:
    """Per-layer gradient arrays keyed like the model parameters."""

    layers: dict = field(default_factory=dict)

    def flatten(self) -> np.ndarray:
        return flatten_grads(self)

    def copy(self) -> "GradientVector":
        return GradientVector({k: v.copy() for k, v in self.layers.items()})

    def scaled(self, c: float) -> "GradientVector":
        return GradientVector({k: v * c for k, v in self.layers.items()})


def flatten_grads(gv: GradientVector) -> np.ndarray:
    """Concatenate all layers into one 1-D vector, layer order preserved."""
    return np.concatenate([v.ravel() for v in gv.layers.values()])


def unflatten_grads(flat: np.ndarray, like) -> GradientVector:
    """Inverse of flatten_grads; `like` supplies names and shapes."""
    layers = like.layers if hasattr(like, "layers") else like
    flat = np.asarray(flat, dtype=np.float64)
    total = sum(v.size for v in layers.values())
    if flat.ndim != 1 or flat.size != total:
        raise ValueError(f"flat vector has {flat.size} entries, expected {total}")
    out, pos = {}, 0
    for name, v in layers.items():
        out[name] = flat[pos:pos + v.size].reshape(v.shape).copy()
        pos += v.size
    return GradientVector(out)


# ---------------------------------------------------------------------------
# layer shape bookkeeping

def _layer_shapes(cfg: ModelConfig) -> list:
    """Ordered (name, shape, fan_in) triples for every parameter tensor."""
    c, h, w = cfg.input_shape
    shapes = []

    def linear(name, nin, nout):
        shapes.append((f"{name}.weight", (nin, nout), nin))
        shapes.append((f"{name}.bias", (nout,), nin))

    def conv(name, cin, cout):
        shapes.append((f"{name}.weight", (cout, cin, 3, 3), cin * 9))
        shapes.append((f"{name}.bias", (cout,), cin * 9))

    if cfg.arch == "mlp":
        nin = c * h * w
        for i, width in enumerate(cfg.hidden):
            linear(f"fc{i}", nin, width)
            nin = width
        linear(f"fc{len(cfg.hidden)}", nin, cfg.classes)
    elif cfg.arch == "convnet":
        cin = c
        for i, cout in enumerate(cfg.channels):
            conv(f"conv{i}", cin, cout)
            cin = cout
        factor = 2 ** len(cfg.channels)
        flat = cin * (h // factor) * (w // factor)
        linear("fc0", flat, cfg.fc_width)
        linear("fc1", cfg.fc_width, cfg.classes)
    else:  # smallresnet
        width = cfg.channels[0]
        conv("stem", c, width)
        for b in range(cfg.blocks):
            conv(f"block{b}.conv0", width, width)
            conv(f"block{b}.conv1", width, width)
        flat = width * (h // 2) * (w // 2)
        linear("head", flat, cfg.classes)
    return shapes


def init_model(cfg: ModelConfig) -> ModelParams:
    """Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases.

    Draw order follows the layer order, one rng stream seeded by cfg.seed,
    so the same config always yields the same parameters.
    """
    rng = np.random.default_rng(cfg.seed)
    layers = {}
    for name, shape, fan_in in _layer_shapes(cfg):
        if name.endswith(".bias"):
            layers[name] = np.zeros(shape)
        else:
            lim = math.sqrt(6.0 / fan_in)
            layers[name] = rng.uniform(-lim, lim, size=shape)
    return ModelParams(layers)


def param_tensors(graph: Graph, params: ModelParams) -> dict:
    """Register every parameter as a leaf of the given graph."""
    return {name: graph.leaf(v) for name, v in params.layers.items()}


# ---------------------------------------------------------------------------
# forward passes

def _linear(x: Tensor, pt: dict, name: str) -> Tensor:
    w = pt[f"{name}.weight"]
    b = pt[f"{name}.bias"]
    n = x.shape[0]
    ones = x.graph.leaf(np.ones((n, 1)))
    return T.add(T.matmul(x, w), T.matmul(ones, T.reshape(b, (1, b.shape[0]))))


def _conv_relu(x: Tensor, pt: dict, name: str) -> Tensor:
    return T.relu(T.bias_add(T.conv2d(x, pt[f"{name}.weight"], padding=1),
                             pt[f"{name}.bias"]))


def forward(cfg: ModelConfig, pt: dict, x: Tensor) -> Tensor:
    """Logits for a batch.  x is a traced (N, C, H, W) tensor; pt maps
    parameter names to leaves of the same graph."""
    if len(x.shape) != 4:
        raise ValueError(f"forward expects (N, C, H, W), got {x.shape}")
    if x.shape[1:] != tuple(cfg.input_shape):
        raise ValueError(f"input shape {x.shape[1:]} does not match "
                         f"config {tuple(cfg.input_shape)}")
    n = x.shape[0]

    if cfg.arch == "mlp":
        h = T.reshape(x, (n, x.data.size // n))
        for i in range(len(cfg.hidden)):
            h = T.relu(_linear(h, pt, f"fc{i}"))
        return _linear(h, pt, f"fc{len(cfg.hidden)}")

    if cfg.arch == "convnet":
        h = x
        for i in range(len(cfg.channels)):
            h = T.avgpool2x2(_conv_relu(h, pt, f"conv{i}"))
        h = T.reshape(h, (n, h.data.size // n))
        h = T.relu(_linear(h, pt, "fc0"))
        return _linear(h, pt, "fc1")

    # smallresnet
    h = _conv_relu(x, pt, "stem")
    for b in range(cfg.blocks):
        inner = _conv_relu(h, pt, f"block{b}.conv0")
        inner = T.bias_add(
            T.conv2d(inner, pt[f"block{b}.conv1.weight"], padding=1),
            pt[f"block{b}.conv1.bias"])
        h = T.relu(T.add(inner, h))
    h = T.avgpool2x2(h)
    h = T.reshape(h, (n, h.data.size // n))
    return _linear(h, pt, "head")


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ValueError(f"expected (C, H, W) or (N, C, H, W), got {x.shape}")
    return x


def logits(cfg: ModelConfig, params: ModelParams, x) -> np.ndarray:
    """Untraced convenience forward; returns the logit array."""
    g = Graph()
    pt = param_tensors(g, params)
    return forward(cfg, pt, g.leaf(_as_batch(x))).data


def predict(cfg: ModelConfig, params: ModelParams, x) -> np.ndarray:
    return np.argmax(logits(cfg, params, x), axis=1)


def accuracy(cfg: ModelConfig, params: ModelParams, xs, ys) -> float:
    """Fraction of correct argmax predictions over a sample set."""
    xs = _as_batch(np.asarray(xs))
    ys = np.asarray(ys)
    return float(np.mean(predict(cfg, params, xs) == ys))


# ---------------------------------------------------------------------------
# loss and gradients

def traced_loss(cfg: ModelConfig, pt: dict, x: Tensor, labels) -> Tensor:
    """Mean cross-entropy loss tensor for a traced batch."""
    return T.cross_entropy(forward(cfg, pt, x), labels)


def loss_gradients(cfg: ModelConfig, params: ModelParams, x, labels):
    """Loss and parameter gradients for one batch.

    Returns (loss_value, GradientVector).  This is the object a participant
    would share in collaborative training, and what the attacker sees.
    """
    g = Graph()
    pt = param_tensors(g, params)
    xt = g.leaf(_as_batch(x))
    loss = traced_loss(cfg, pt, xt, labels)
    grads = T.backward(loss, list(pt.values()))
    names = list(pt)
    return loss.item(), GradientVector(
        {name: grad.data.copy() for name, grad in zip(names, grads)})


def param_count(cfg: ModelConfig) -> int:
    return sum(math.prod(s) for _, s, _ in _layer_shapes(cfg))
