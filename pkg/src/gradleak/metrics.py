"""Scores that drive the defense search, plus reconstruction metrics.

Two scores rank candidate policies without running a single full attack or
training job.  The privacy score is the mean gradient similarity along a
straight path from a random image to the transformed target: flat-low
curves mean an attacker gets no signal until very close to the optimum, so
lower is safer.  The accuracy score is an eigenvalue functional of the
correlation matrix of per-sample input Jacobians on an untrained model, a
training-free proxy for how well the network will fit transformed data.

Sign convention: the raw accuracy functional mean(log(s+eps) + 1/(s+eps))
is >= 1 for any spectrum, yet useful thresholds in the literature are
negative, so accuracy_score returns the NEGATED mean: larger = better, the
ideal decorrelated batch scores about -1, and a collapsed batch scores
hugely negative.  Every consumer in this package follows that convention.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import models as M
from .transforms import Policy, apply_policy, sample_seed


@dataclass(frozen=True)
class GradSimCurve:
    """Similarity samples (i, GradSim(x'(i), T(x))) along one path."""

    samples: tuple

    def __post_init__(self):
        ivals = [i for i, _ in self.samples]
        if any(b <= a for a, b in zip(ivals, ivals[1:])):
            raise ValueError("path positions must be strictly increasing")
        for _, s in self.samples:
            if not np.isfinite(s) or not -1.0 - 1e-9 <= s <= 1.0 + 1e-9:
                raise ValueError(f"similarity {s} outside [-1, 1]")


@dataclass(frozen=True)
class ScoredPolicy:
    """A policy with its evaluated scores and the seed that produced them."""

    policy: Policy
    s_pri: float
    s_acc: float
    seed: int = 0

    def __post_init__(self):
        if not -1.0 - 1e-6 <= self.s_pri <= 1.0 + 1e-6:
            raise ValueError(f"s_pri {self.s_pri} outside [-1, 1]")
        if self.s_acc > -1.0 + 1e-3:
            raise ValueError(f"s_acc {self.s_acc} above the -1 ceiling")


# ---------------------------------------------------------------------------
# reconstruction metrics

def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for [0,1] images, peak 1.0.

    Zero MSE returns the cap value 100 dB so CSV output stays finite.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return 100.0
    return min(100.0, 10.0 * np.log10(1.0 / mse))


def pearson(xs, ys) -> float:
    """Pearson correlation coefficient of two equal-length sequences."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValueError(f"pearson needs equal-length vectors, got "
                         f"{xs.shape} and {ys.shape}")
    if xs.size < 3:
        raise ValueError("pearson needs at least 3 points")
    if xs.std() == 0.0 or ys.std() == 0.0:
        raise ValueError("pearson undefined for zero-variance input")
    return float(np.corrcoef(xs, ys)[0, 1])


# ---------------------------------------------------------------------------
# gradient similarity

def _flat_gradient(model_cfg, params, x, y) -> np.ndarray:
    _, gv = M.loss_gradients(model_cfg, params, x, [int(y)])
    return gv.flatten()


def grad_sim(model_cfg, params: M.ModelParams, x1, x2, y) -> float:
    """Cosine similarity of the parameter gradients two same-label inputs
    induce.  1 means the gradients point the same way; the attacker's
    objective landscape is exactly this quantity."""
    g1 = _flat_gradient(model_cfg, params, x1, y)
    g2 = _flat_gradient(model_cfg, params, x2, y)
    n1, n2 = np.linalg.norm(g1), np.linalg.norm(g2)
    if n1 == 0.0 or n2 == 0.0:
        raise ValueError("grad_sim undefined: zero-norm gradient")
    return float(np.dot(g1, g2) / (n1 * n2))


def grad_sim_curve(model_cfg, params, x0, xt, y, points: int = 8,
                   include_end: bool = False) -> GradSimCurve:
    """GradSim along x'(i) = (1-i) x0 + i xt at i = j/points.

    include_end adds the i=1 point (similarity 1 by construction) for
    plotting; scoring never includes it.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    gt = _flat_gradient(model_cfg, params, xt, y)
    nt = np.linalg.norm(gt)
    if nt == 0.0:
        raise ValueError("grad_sim_curve undefined: target gradient is zero")
    samples = []
    stops = list(range(points)) + ([points] if include_end else [])
    for j in stops:
        i = j / points
        gi = _flat_gradient(model_cfg, params, (1 - i) * x0 + i * xt, y)
        ni = np.linalg.norm(gi)
        if ni == 0.0:
            raise ValueError(f"zero-norm gradient at path position {i}")
        samples.append((i, float(np.dot(gi, gt) / (ni * nt))))
    return GradSimCurve(samples=tuple(samples))


# ---------------------------------------------------------------------------
# privacy score

def privacy_score(policy: Policy | None, model_cfg, params_s: M.ModelParams,
                  dataset, k: int = 8, seed: int = 0,
                  init: str = "gaussian") -> float:
    """Mean GradSim between path points and the transformed target.

    policy None scores the undefended identity baseline.

    For each sample x the path runs from a start image x0 (the attack's
    clamped gaussian init by default; "target" forces x0 = T(x), which
    collapses the path and scores 1) to T(x), probed at i = j/k for
    j = 0..k-1, on the semi-trained model.  Per-sample randomness
    (transform signs, x0) is seeded by the sample's content, so the score
    does not depend on dataset order.  Degenerate zero-gradient
    evaluations are skipped with a warning.
    """
    from .attack import make_init

    if k < 1:
        raise ValueError("k must be >= 1")
    if not dataset:
        raise ValueError("privacy_score needs a non-empty dataset")
    sims = []
    skipped = 0
    for x, y in dataset:
        x = np.asarray(x, dtype=np.float64)
        rng = np.random.default_rng(sample_seed(seed, x, y))
        tx = apply_policy(x, policy, rng) if policy is not None else x
        x0 = tx if init == "target" else make_init(init, x.shape, rng)
        gt = _flat_gradient(model_cfg, params_s, tx, y)
        nt = np.linalg.norm(gt)
        if nt == 0.0:
            skipped += k
            continue
        for j in range(k):
            i = j / k
            gi = _flat_gradient(model_cfg, params_s, (1 - i) * x0 + i * tx, y)
            ni = np.linalg.norm(gi)
            if ni == 0.0:
                skipped += 1
                continue
            sims.append(np.dot(gi, gt) / (ni * nt))
    if skipped:
        warnings.warn(f"privacy_score skipped {skipped} degenerate "
                      "zero-gradient evaluations")
    if not sims:
        raise ValueError("privacy_score: every evaluation was degenerate")
    # fsum is exactly rounded, so the mean is identical under reordering
    return math.fsum(sims) / len(sims)


# ---------------------------------------------------------------------------
# accuracy score

def _canonical_order(rows) -> list:
    """Indices that sort samples by a content digest.

    Both scores are set functions of their batch, but float reductions and
    the eigensolver are sensitive to row order at the last bit; fixing a
    canonical order makes reordering the input a bitwise no-op.
    """
    def key(i):
        return hashlib.blake2b(
            np.ascontiguousarray(rows[i], dtype=np.float64).tobytes(),
            digest_size=16).digest()

    return sorted(range(len(rows)), key=key)


def spectrum_score(sigma, eps: float = 1e-5) -> float:
    """Negated eigenvalue functional -(1/N) sum[log(s+eps) + 1/(s+eps)].

    Closed forms worth remembering: a perfectly decorrelated batch (all
    eigenvalues 1) scores about -1.00000, the best possible value; two
    identical rows give eigenvalues {2, 0} and the zero eigenvalue's
    1/eps term drags the score to about -49995.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    return float(-np.mean(np.log(sigma + eps) + 1.0 / (sigma + eps)))


def jacobian_score(model_cfg, params: M.ModelParams, xs,
                   eps: float = 1e-5) -> float:
    """One-round accuracy score of a transformed batch (negated form).

    Rows of J are the gradients of the summed logits w.r.t. each input;
    their correlation spectrum feeds spectrum_score.
    """
    from . import tensor as T

    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 4:
        raise ValueError(f"expected a batch (N, C, H, W), got {xs.shape}")
    n = xs.shape[0]

    g = T.Graph()
    pt = M.param_tensors(g, params)
    xt = g.leaf(xs)
    total = T.sum(M.forward(model_cfg, pt, xt))
    (dx,) = T.backward(total, [xt])
    jac = dx.data.reshape(n, -1)
    if not np.all(np.isfinite(jac)):
        raise ValueError("non-finite Jacobian")

    if n == 1:
        sigma = np.array([1.0])  # degenerate 1x1 correlation
    else:
        jac = jac[_canonical_order(jac)]
        stds = jac.std(axis=1)
        if np.any(stds == 0.0):
            raise ValueError("degenerate constant Jacobian row; correlation "
                             "matrix undefined")
        corr = np.corrcoef(jac)
        sigma = np.linalg.eigvalsh(corr)
    return spectrum_score(sigma, eps)


def accuracy_score(model_cfg, params_r: M.ModelParams, xs, ys,
                   rounds: int = 10, lr: float = 0.1,
                   eps: float = 1e-5) -> float:
    """Accuracy score averaged over optimization rounds.

    Each round scores the current model on the fixed transformed batch,
    then takes one SGD step on the cross-entropy loss; the mean of the
    per-round scores is returned.  params_r should be a fresh random init.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = [int(v) for v in ys]
    order = _canonical_order([np.append(x.ravel(), y)
                              for x, y in zip(xs, ys)])
    xs = xs[order]
    ys = [ys[i] for i in order]
    params = params_r
    scores = []
    for _ in range(rounds):
        scores.append(jacobian_score(model_cfg, params, xs, eps))
        _, gv = M.loss_gradients(model_cfg, params, xs, ys)
        params = params.updated(gv.layers, scale=-lr)
    return math.fsum(scores) / len(scores)


def transform_batch(policy: Policy | None, batch, seed: int = 0) -> list:
    """Apply a policy to every (x, y) sample with content-derived seeds.

    Returns a list of (transformed x, y).  policy None means identity.
    """
    out = []
    for x, y in batch:
        x = np.asarray(x, dtype=np.float64)
        if policy is None:
            out.append((x, y))
        else:
            rng = np.random.default_rng(sample_seed(seed, x, y))
            out.append((apply_policy(x, policy, rng), y))
    return out


def policy_accuracy_score(policy: Policy | None, model_cfg,
                          params_r: M.ModelParams, batch, seed: int = 0,
                          rounds: int = 10, lr: float = 0.1) -> float:
    """accuracy_score of a batch after applying a policy to each sample."""
    txy = transform_batch(policy, batch, seed)
    xs = np.stack([x for x, _ in txy])
    ys = [y for _, y in txy]
    return accuracy_score(model_cfg, params_r, xs, ys, rounds=rounds, lr=lr)


# ---------------------------------------------------------------------------
# layerwise attack introspection

def layerwise_gradsim_trace(model_cfg, params, target, attack_cfg,
                            label=None, reference=None):
    """Per-layer similarity curves recorded during a reconstruction.

    Runs the attack with layer recording enabled and returns
    (curves, AttackResult) where curves maps layer name to a list of
    (iteration, cosine) pairs; zero-norm layers record nan.
    """
    from dataclasses import replace

    from .attack import reconstruct

    cfg = replace(attack_cfg, record_layer_trace=True)
    result = reconstruct(model_cfg, params, target, cfg, label=label,
                         reference=reference)
    return result.layer_trace, result
