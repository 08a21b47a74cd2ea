"""Gradient inversion: reconstruct a training sample from its gradient.

The attacker holds a captured GradientVector and optimizes a dummy image
(and optionally a dummy soft label) so the dummy's model gradient matches
the captured one under a chosen distance, plus a small total-variation
prior.  Six classic variants come from crossing {adam, sgd, lbfgs} with
{l2, l1, cosine}.  Everything runs on the traced tensor engine because the
objective's gradient is a gradient of gradients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import models as M
from . import tensor as T
from .optim import LBFGS, SGD, Adam, step_lr
from .tensor import Graph, Tensor


@dataclass
class AttackConfig:
    optimizer: str = "adam"        # adam | sgd | lbfgs
    distance: str = "cosine"       # l2 | l1 | cosine
    iterations: int = 4800
    tv_weight: float = 1e-4
    init: str = "gaussian"         # gaussian | black | from_image
    init_image: np.ndarray | None = None
    label_mode: str = "known"      # known | optimize_soft
    restarts: int = 1
    lr: float = 0.1
    momentum: float = 0.0          # sgd only
    seed: int = 0
    record_layer_trace: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd", "lbfgs"):
            raise ValueError(f"unknown optimizer '{self.optimizer}'")
        if self.distance not in ("l2", "l1", "cosine"):
            raise ValueError(f"unknown distance '{self.distance}'")
        if self.init not in ("gaussian", "black", "from_image"):
            raise ValueError(f"unknown init '{self.init}'")
        if self.label_mode not in ("known", "optimize_soft"):
            raise ValueError(f"unknown label mode '{self.label_mode}'")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be >= 0")


def lbfgs_preset(**overrides) -> AttackConfig:
    """The L-BFGS variant runs 300 iterations with 16 restarts."""
    base = dict(optimizer="lbfgs", iterations=300, restarts=16)
    base.update(overrides)
    return AttackConfig(**base)


@dataclass
class AttackResult:
    reconstruction: np.ndarray
    final_distance: float
    final_objective: float
    psnr: float | None
    loss_trace: list
    best_restart: int
    soft_label: np.ndarray | None = None
    psnr_trace: list | None = None
    layer_trace: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# objective pieces

def total_variation(x: Tensor) -> Tensor:
    """Anisotropic TV of a (C, H, W) tensor: sum of |horizontal diffs|
    plus |vertical diffs| over all channels."""
    if len(x.shape) != 3:
        raise ValueError(f"total_variation expects (C, H, W), got {x.shape}")
    c, h, w = x.shape
    terms = []
    if w > 1:
        dh = T.sub(T.slice_nd(x, (0, 0, 1), (c, h, w)),
                   T.slice_nd(x, (0, 0, 0), (c, h, w - 1)))
        terms.append(T.sum(T.absolute(dh)))
    if h > 1:
        dv = T.sub(T.slice_nd(x, (0, 1, 0), (c, h, w)),
                   T.slice_nd(x, (0, 0, 0), (c, h - 1, w)))
        terms.append(T.sum(T.absolute(dv)))
    if not terms:
        return T.scalar_mul(T.sum(x), 0.0)
    return terms[0] if len(terms) == 1 else T.add(terms[0], terms[1])


def _flat_tensor(g, graph: Graph | None) -> Tensor:
    """Coerce a gradient-ish argument to a flat 1-D Tensor."""
    if isinstance(g, Tensor):
        return T.flatten(g) if len(g.shape) != 1 else g
    if isinstance(g, (list, tuple)) and g and isinstance(g[0], Tensor):
        return T.concat([T.flatten(t) for t in g])
    if isinstance(g, M.GradientVector):
        arr = g.flatten()
    else:
        arr = np.asarray(g, dtype=np.float64).ravel()
    return (graph if graph is not None else Graph()).leaf(arr)


def gradient_distance(g1, g2, kind: str = "cosine") -> Tensor:
    """Distance between two gradient vectors as a scalar Tensor.

    Accepts GradientVectors, flat arrays, traced Tensors, or sequences of
    traced per-layer Tensors; traced inputs keep the result differentiable.
    l2 is the squared Euclidean distance, l1 the absolute-difference sum,
    cosine is 1 - <a,b>/(|a||b|).
    """
    graph = None
    for g in (g1, g2):  # adopt whichever operand is already traced
        if isinstance(g, Tensor):
            graph = graph or g.graph
        elif isinstance(g, (list, tuple)) and g and isinstance(g[0], Tensor):
            graph = graph or g[0].graph
    a = _flat_tensor(g1, graph)
    b = _flat_tensor(g2, a.graph)
    if a.graph is not b.graph:
        raise ValueError("gradient operands live on different graphs")
    if a.shape != b.shape:
        raise ValueError(f"gradient vectors differ in length: "
                         f"{a.shape} vs {b.shape}")
    if kind == "l2":
        d = T.sub(a, b)
        return T.sum(T.mul(d, d))
    if kind == "l1":
        return T.sum(T.absolute(T.sub(a, b)))
    if kind == "cosine":
        na = float(np.linalg.norm(a.data))
        nb = float(np.linalg.norm(b.data))
        if na == 0.0:
            raise ValueError("cosine distance undefined: first operand has "
                             "zero norm")
        if nb == 0.0:
            raise ValueError("cosine distance undefined: second operand has "
                             "zero norm")
        return T.sub(1.0, T.mul(T.dot(a, b), T.pow_const(
            T.mul(T.l2_norm(a), T.l2_norm(b)), -1.0)))
    raise ValueError(f"unknown distance '{kind}'")


def make_init(kind: str, shape, rng: np.random.Generator,
              image: np.ndarray | None = None) -> np.ndarray:
    """Starting image for an attack or an interpolation path."""
    shape = tuple(shape)
    if kind == "gaussian":
        return np.clip(rng.standard_normal(shape), 0.0, 1.0)
    if kind == "black":
        return np.zeros(shape)
    if kind == "from_image":
        if image is None:
            raise ValueError("init 'from_image' needs init_image")
        img = np.asarray(image, dtype=np.float64)
        if img.shape != shape:
            raise ValueError(f"init image shape {img.shape} != {shape}")
        return img.copy()
    raise ValueError(f"unknown init '{kind}'")


def _evaluate(model_cfg, params, x_nd, z_nd, label, target_flat, cfg,
              want_layers: bool):
    """One traced objective evaluation.

    Returns (objective, distance, grad_x, grad_z, layer_sims).  grad_z is
    None in known-label mode; layer_sims maps layer name to the cosine
    similarity of that layer's dummy gradient against the target (nan for
    zero-norm layers).
    """
    g = Graph()
    pt = M.param_tensors(g, params)
    xt = g.leaf(x_nd)
    zt = None
    if cfg.label_mode == "optimize_soft":
        zt = g.leaf(z_nd)
        labels = T.softmax(zt)
    else:
        labels = label
    loss = M.traced_loss(model_cfg, pt, xt, labels)
    grads = T.backward(loss, list(pt.values()))
    gflat = T.concat([T.flatten(t) for t in grads])
    dist = gradient_distance(gflat, g.leaf(target_flat), cfg.distance)
    obj = dist
    if cfg.tv_weight > 0:
        tv = total_variation(T.reshape(xt, x_nd.shape[1:]))
        obj = T.add(dist, T.scalar_mul(tv, cfg.tv_weight))

    wrt = [xt] if zt is None else [xt, zt]
    gs = T.backward(obj, wrt)
    grad_x = gs[0].data
    grad_z = gs[1].data if zt is not None else None

    layer_sims = {}
    if want_layers:
        names = list(pt)
        pos = 0
        for name, gt in zip(names, grads):
            size = gt.data.size
            tgt = target_flat[pos:pos + size]
            pos += size
            dn = np.linalg.norm(gt.data)
            tn = np.linalg.norm(tgt)
            if dn == 0.0 or tn == 0.0:
                layer_sims[name] = float("nan")
            else:
                layer_sims[name] = float(
                    np.dot(gt.data.ravel(), tgt) / (dn * tn))
    return obj.item(), dist.item(), grad_x, grad_z, layer_sims


def objective_value_and_input_grad(model_cfg, params, x, label,
                                   target: M.GradientVector,
                                   cfg: AttackConfig):
    """Objective and its gradient w.r.t. the dummy image.  Exposed for the
    finite-difference correctness check of the double backward."""
    x_nd = np.asarray(x, dtype=np.float64)
    if x_nd.ndim == 3:
        x_nd = x_nd[None]
    obj, _, gx, _, _ = _evaluate(model_cfg, params, x_nd, None, label,
                                 target.flatten(), cfg, want_layers=False)
    return obj, gx


def _divergence(err: Exception) -> bool:
    return isinstance(err, FloatingPointError) or "non-finite" in str(err)


# ---------------------------------------------------------------------------
# the attack proper

def reconstruct(model_cfg: M.ModelConfig, params: M.ModelParams,
                target: M.GradientVector, cfg: AttackConfig,
                label=None, reference: np.ndarray | None = None) -> AttackResult:
    """Run the inversion attack against a captured gradient.

    label is the known class id (None in optimize_soft mode).  reference,
    when given, is the attacked image (after any defense transform) used
    only for PSNR reporting.  Restarts are independent; the result is the
    restart with the lowest final objective, ties broken by restart index.
    """
    from .metrics import psnr as _psnr

    if cfg.label_mode == "known" and label is None:
        raise ValueError("known-label attack needs a label")
    if cfg.label_mode == "optimize_soft" and label is not None:
        raise ValueError("optimize_soft ignores labels; pass None")

    target_flat = target.flatten()
    shape = tuple(model_cfg.input_shape)
    best = None

    for r in range(cfg.restarts):
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, r)))
        out = _run_restart(model_cfg, params, target_flat, cfg, label,
                           reference, rng, _psnr)
        if out is None:
            warnings.warn(f"attack restart {r} diverged; discarded")
            continue
        if best is None or out["objective"] < best["objective"]:
            best = dict(out, restart=r)

    if best is None:
        raise RuntimeError("all attack restarts diverged")

    result = AttackResult(
        reconstruction=best["x"],
        final_distance=best["distance"],
        final_objective=best["objective"],
        psnr=None if reference is None else float(
            _psnr(best["x"], reference)),
        loss_trace=best["trace"],
        best_restart=best["restart"],
        soft_label=best["soft_label"],
        psnr_trace=best["psnr_trace"],
        layer_trace=best["layer_trace"],
    )
    return result


def _run_restart(model_cfg, params, target_flat, cfg, label, reference,
                 rng, psnr_fn):
    """One independent optimization run; None signals divergence."""
    classes = model_cfg.classes
    x = make_init(cfg.init, model_cfg.input_shape, rng, cfg.init_image)[None]
    z = (rng.standard_normal((1, classes))
         if cfg.label_mode == "optimize_soft" else None)

    trace: list = []
    psnr_trace: list = [] if reference is not None else None
    layer_curves: dict = {}
    best_obj = np.inf
    best_psnr = None

    def record(it, obj, layers, ximg):
        nonlocal best_obj, best_psnr
        trace.append(obj)
        if obj < best_obj:
            best_obj = obj
            if reference is not None:
                best_psnr = float(psnr_fn(ximg, reference))
        if psnr_trace is not None:
            psnr_trace.append(best_psnr)
        for name, sim in layers.items():
            layer_curves.setdefault(name, []).append((it, sim))

    try:
        if cfg.optimizer == "lbfgs":
            x, z = _lbfgs_loop(model_cfg, params, target_flat, cfg, label,
                               x, z, record)
        else:
            opt_x = Adam(cfg.lr) if cfg.optimizer == "adam" \
                else SGD(cfg.lr, cfg.momentum)
            opt_z = (Adam(cfg.lr) if cfg.optimizer == "adam"
                     else SGD(cfg.lr, cfg.momentum)) if z is not None else None
            for it in range(cfg.iterations):
                obj, _, gx, gz, layers = _evaluate(
                    model_cfg, params, x, z, label, target_flat, cfg,
                    cfg.record_layer_trace)
                record(it, obj, layers, x[0])
                lr = step_lr(cfg.lr, it, cfg.iterations)
                opt_x.lr = lr
                x = np.clip(opt_x.update(x, gx), 0.0, 1.0)
                if z is not None:
                    opt_z.lr = lr
                    z = opt_z.update(z, gz)
        final_obj, final_dist, _, _, _ = _evaluate(
            model_cfg, params, x, z, label, target_flat, cfg, False)
    except (ValueError, FloatingPointError) as err:
        if _divergence(err):
            return None
        raise

    soft = None
    if z is not None:
        zz = (z - z.max()).ravel()
        soft = np.exp(zz) / np.exp(zz).sum()
    return {
        "x": x[0].copy(),
        "objective": final_obj,
        "distance": final_dist,
        "trace": trace,
        "psnr_trace": psnr_trace,
        "layer_trace": layer_curves,
        "soft_label": soft,
    }


def _lbfgs_loop(model_cfg, params, target_flat, cfg, label, x, z, record):
    """L-BFGS drives a flat vector holding the image (and soft logits)."""
    img_size = x.size
    flat = x.ravel().copy() if z is None else np.concatenate(
        [x.ravel(), z.ravel()])
    layer_box = [{}]

    def unpack(v):
        xi = v[:img_size].reshape(x.shape)
        zi = v[img_size:].reshape(1, -1) if z is not None else None
        return xi, zi

    def f(v):
        xi, zi = unpack(v)
        obj, _, gx, gz, layers = _evaluate(
            model_cfg, params, xi, zi, label, target_flat, cfg,
            cfg.record_layer_trace)
        layer_box[0] = layers
        g = gx.ravel() if gz is None else np.concatenate(
            [gx.ravel(), gz.ravel()])
        return obj, g

    opt = LBFGS()
    for it in range(cfg.iterations):
        obj0, g0 = f(flat)
        record(it, obj0, layer_box[0], unpack(flat)[0][0])
        opt.prime(flat, obj0, g0)
        flat = opt.step(f, flat)
        flat[:img_size] = np.clip(flat[:img_size], 0.0, 1.0)
    xi, zi = unpack(flat)
    return xi, zi
