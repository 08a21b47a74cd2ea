"""Desk-scale collaborative training with an honest-but-curious adversary.

Participants hold disjoint shards, compute batch-mean gradients on shared
parameters, optionally pass them through a gradient defense, and a central
aggregator averages and applies an SGD-with-momentum update.  An adversary
hook can capture any participant's shared (post-defense) gradient, which is
exactly what the inversion attack consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import models as M
from .defenses import DefenseSpec, _layer_seed, apply_defense
from .models import GradientVector, ModelParams
from .optim import step_lr


@dataclass(frozen=True)
class TrainConfig:
    participants: int = 10
    epochs: int = 10
    batch_size: int = 8
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    defense: object = None   # DefenseSpec, Policy, or PolicySet
    seed: int = 0

    def __post_init__(self):
        if self.participants < 1:
            raise ValueError("participants must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class RoundLog:
    round_index: int
    epoch: int
    lr: float
    train_loss: float
    grad_norms: list
    update_norm: float
    eval_accuracy: float | None = None


@dataclass
class TrainState:
    params: ModelParams
    momentum: dict = field(default_factory=dict)


class AdversaryHook:
    """Captures shared gradients for chosen (round, participant) pairs.

    rounds/participants None means capture everything.  Stored gradients
    are post-defense, pre-aggregation: the attacker's actual view.
    """

    def __init__(self, rounds=None, participants=None):
        self.rounds = None if rounds is None else set(int(r) for r in rounds)
        self.participants = (None if participants is None
                             else set(int(p) for p in participants))
        self._store = {}
        self.batches = {}

    def wants(self, rnd: int, pid: int) -> bool:
        return ((self.rounds is None or rnd in self.rounds)
                and (self.participants is None or pid in self.participants))

    def observe(self, rnd: int, pid: int, gv: GradientVector, batch):
        if self.wants(rnd, pid):
            self._store[(rnd, pid)] = gv.copy()
            self.batches[(rnd, pid)] = [(x.copy(), y) for x, y in batch]

    def captured(self, rnd: int, pid: int) -> GradientVector:
        if not self.wants(rnd, pid):
            raise ValueError(f"adversary hook not armed for round {rnd} "
                             f"participant {pid}")
        if (rnd, pid) not in self._store:
            raise ValueError(f"nothing captured yet for round {rnd} "
                             f"participant {pid}")
        return self._store[(rnd, pid)]


def shard_dataset(dataset, participants: int, seed: int = 0) -> list:
    """Seeded shuffle, then equal contiguous shards; remainder dropped."""
    n = len(dataset)
    if n < participants:
        raise ValueError(f"dataset of {n} samples cannot feed "
                         f"{participants} participants")
    order = np.random.default_rng(seed).permutation(n)
    per = n // participants
    return [[dataset[i] for i in order[p * per:(p + 1) * per]]
            for p in range(participants)]


def _preprocess_fn(defense, seed: int):
    """Per-sample input transform when the defense is a policy (set)."""
    if defense is None or isinstance(defense, DefenseSpec):
        return None
    from .search import hybrid_apply           # localized: search sits above
    from .transforms import Policy, apply_policy, sample_seed

    if isinstance(defense, Policy):
        return lambda x, y: apply_policy(
            x, defense, np.random.default_rng(sample_seed(seed, x, y)))
    return lambda x, y: hybrid_apply(defense, x, y, seed=seed)


def _aggregate(gvs) -> GradientVector:
    out = {}
    for name in gvs[0].layers:
        arrs = [gv.layers[name] for gv in gvs]
        if all(np.array_equal(arrs[0], a) for a in arrs[1:]):
            # mean of identical vectors is the vector itself; the naive
            # sum/K double-rounds and can be off by one ulp
            out[name] = arrs[0].copy()
        else:
            out[name] = np.mean(arrs, axis=0)
    return GradientVector(layers=out)


def run_round(model_cfg, state: TrainState, shards, cfg: TrainConfig,
              lr: float, rnd: int, epoch: int = 0,
              hook: AdversaryHook | None = None):
    """One federated round; returns (new state, RoundLog)."""
    pre = _preprocess_fn(cfg.defense, cfg.seed)
    grads = []
    losses = []
    norms = []
    for pid, shard in enumerate(shards):
        rng = np.random.default_rng(np.random.SeedSequence(
            (cfg.seed, rnd, pid)))
        take = min(cfg.batch_size, len(shard))
        idx = rng.choice(len(shard), size=take, replace=False)
        batch = [shard[i] for i in idx]
        if pre is not None:
            batch = [(pre(x, y), y) for x, y in batch]
        xs = np.stack([x for x, _ in batch])
        ys = [y for _, y in batch]
        loss, gv = M.loss_gradients(model_cfg, state.params, xs, ys)
        if isinstance(cfg.defense, DefenseSpec):
            per_round = replace(cfg.defense, seed=_layer_seed(
                cfg.defense.seed, f"round{rnd}:p{pid}"))
            gv = apply_defense(gv, per_round)
        flat = gv.flatten()
        if not np.all(np.isfinite(flat)):
            raise RuntimeError(f"round {rnd} aborted: non-finite gradient "
                               f"from participant {pid}")
        if hook is not None:
            hook.observe(rnd, pid, gv, batch)
        grads.append(gv)
        losses.append(loss)
        norms.append(float(np.linalg.norm(flat)))

    agg = _aggregate(grads)
    new_momentum = {}
    deltas = {}
    update_sq = 0.0
    for name, g in agg.layers.items():
        d = g + cfg.weight_decay * state.params.layers[name]
        v = cfg.momentum * state.momentum.get(name, 0.0) + d
        new_momentum[name] = v
        deltas[name] = v
        update_sq += float(np.sum((lr * v) ** 2))
    new_params = state.params.updated(deltas, scale=-lr)
    log = RoundLog(round_index=rnd, epoch=epoch, lr=lr,
                   train_loss=float(np.mean(losses)), grad_norms=norms,
                   update_norm=float(np.sqrt(update_sq)))
    return TrainState(params=new_params, momentum=new_momentum), log


def run_training(model_cfg, dataset, eval_set, cfg: TrainConfig,
                 hook: AdversaryHook | None = None):
    """Full training loop.

    Returns (final params, per-epoch eval accuracies, round logs).  The
    global LR schedule decays by 0.1 at 3/8, 5/8, 7/8 of all rounds.
    """
    shards = shard_dataset(dataset, cfg.participants, cfg.seed)
    state = TrainState(params=M.init_model(model_cfg))
    rounds_per_epoch = max(1, len(shards[0]) // cfg.batch_size)
    total = cfg.epochs * rounds_per_epoch
    accs = []
    logs = []
    for epoch in range(cfg.epochs):
        for r in range(rounds_per_epoch):
            rnd = epoch * rounds_per_epoch + r
            lr = step_lr(cfg.lr, rnd, total)
            state, log = run_round(model_cfg, state, shards, cfg, lr, rnd,
                                   epoch=epoch, hook=hook)
            logs.append(log)
        ex = [x for x, _ in eval_set]
        ey = [y for _, y in eval_set]
        acc = M.accuracy(model_cfg, state.params, np.stack(ex), ey)
        accs.append(acc)
        logs[-1].eval_accuracy = acc
    return state.params, accs, logs
