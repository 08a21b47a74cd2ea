"""Random search for privacy-preserving transformation policies.

The search draws candidate policies from the transform table, filters them
by the training-free accuracy score (cheap, computed first), evaluates the
privacy score only for survivors, and keeps the n candidates with the
smallest privacy score.  A hybrid strategy then picks operation-disjoint
policies from the ranked result and applies a per-sample random member.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import models as M
from .federated import TrainConfig, run_training
from .metrics import ScoredPolicy, policy_accuracy_score, privacy_score
from .transforms import Policy, apply_policy, default_table, sample_seed


@dataclass(frozen=True)
class SearchConfig:
    c_max: int = 1500
    n: int = 10
    k: int = 3
    t_acc: float = -85.0
    seed: int = 0
    # evaluation knobs, desk-scale defaults
    pri_samples: int = 100
    pri_k: int = 8
    acc_batch: int = 32
    acc_rounds: int = 10
    acc_lr: float = 0.1

    def __post_init__(self):
        if not self.c_max >= self.n >= 1:
            raise ValueError("need c_max >= n >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class PolicySet:
    """Ranked search output; eligible flags are set by assemble_hybrid."""

    policies: tuple
    eligible: tuple | None = None
    stats: dict = field(default_factory=dict)
    records: tuple = ()

    def __len__(self):
        return len(self.policies)

    def __iter__(self):
        return iter(self.policies)

    def notations(self) -> list:
        return [sp.policy.notation() for sp in self.policies]


def semi_train(model_cfg, dataset, fraction: float = 0.1, epochs: int = 50,
               train_cfg: TrainConfig | None = None, seed: int = 0):
    """Train M^s on a seeded fraction of the dataset, single node."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    if len(dataset) < 10:
        raise ValueError("semi_train needs at least 10 samples")
    rng = np.random.default_rng(seed)
    m = max(1, int(round(fraction * len(dataset))))
    idx = rng.choice(len(dataset), size=m, replace=False)
    subset = [dataset[i] for i in idx]
    base = train_cfg if train_cfg is not None else TrainConfig()
    from dataclasses import replace

    cfg = replace(base, participants=1, epochs=epochs, defense=None,
                  seed=seed)
    params, _, _ = run_training(model_cfg, subset, subset, cfg)
    return params


def sample_policy(rng: np.random.Generator, k: int, table=None) -> Policy:
    """Length uniform on 1..k, indices uniform with replacement."""
    table = default_table() if table is None else table
    length = int(rng.integers(1, k + 1))
    idx = tuple(int(i) for i in rng.integers(0, len(table), size=length))
    return Policy(specs=tuple(table[i] for i in idx), indices=idx)


def search(cfg: SearchConfig, model_cfg, params_s, params_r, dataset,
           table=None) -> PolicySet:
    """Algorithm: draw, score S_acc, filter, score S_pri, keep n smallest.

    Runs exactly c_max draws, then keeps drawing only while fewer than n
    distinct candidates are accepted, up to 10*c_max total; repeated index
    tuples reuse memoized scores.  S_pri is never evaluated for a filtered
    candidate (stats["spri_evals"] counts evaluations).
    """
    table = default_table() if table is None else table
    data_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    policy_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 2)))

    n_data = len(dataset)
    pri_idx = data_rng.choice(n_data, size=min(cfg.pri_samples, n_data),
                              replace=False)
    acc_idx = data_rng.choice(n_data, size=min(cfg.acc_batch, n_data),
                              replace=False)
    pri_data = [dataset[i] for i in pri_idx]
    acc_data = [dataset[i] for i in acc_idx]

    hard_cap = 10 * cfg.c_max
    memo = {}       # index tuple -> (s_acc, s_pri, failed)
    accepted = {}   # index tuple -> (ScoredPolicy, first accepted draw)
    records = []
    spri_evals = 0
    filtered = 0
    draws = 0

    while not (draws >= cfg.c_max and len(accepted) >= cfg.n):
        if draws >= hard_cap:
            rate = len(accepted) / draws
            raise RuntimeError(
                f"policy search exhausted {draws} draws (10*c_max) with "
                f"{len(accepted)} accepted of {len(memo)} distinct "
                f"candidates; acceptance rate {rate:.4f}, "
                f"t_acc={cfg.t_acc}")
        pol = sample_policy(policy_rng, cfg.k, table)
        key = pol.indices
        draw = draws
        draws += 1

        if key not in memo:
            s_acc = s_pri = None
            failed = False
            try:
                s_acc = policy_accuracy_score(
                    pol, model_cfg, params_r, acc_data, seed=cfg.seed,
                    rounds=cfg.acc_rounds, lr=cfg.acc_lr)
                if s_acc >= cfg.t_acc:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        s_pri = privacy_score(
                            pol, model_cfg, params_s, pri_data,
                            k=cfg.pri_k, seed=cfg.seed)
                    spri_evals += 1
            except (ValueError, FloatingPointError) as err:
                failed = True
                warnings.warn(f"policy {pol.notation()} rejected: {err}")
            memo[key] = (s_acc, s_pri, failed)
        s_acc, s_pri, failed = memo[key]

        ok = not failed and s_acc is not None and s_acc >= cfg.t_acc \
            and s_pri is not None
        if not ok and not failed:
            filtered += 1
        records.append((draw, pol.notation(), s_acc, s_pri, ok))
        if ok and key not in accepted:
            accepted[key] = (ScoredPolicy(policy=pol, s_pri=s_pri,
                                          s_acc=s_acc, seed=cfg.seed), draw)

    ranked = sorted(accepted.values(), key=lambda t: (t[0].s_pri, t[1]))
    top = tuple(sp for sp, _ in ranked[:cfg.n])
    stats = {"draws": draws, "distinct": len(memo),
             "accepted": len(accepted), "filtered": filtered,
             "spri_evals": spri_evals}
    return PolicySet(policies=top, stats=stats, records=tuple(records))


def exhaustive_policies(table, k: int):
    """Every ordered index tuple of length 1..k; the search-space oracle."""
    out = []
    stack = [()]
    for _ in range(k):
        stack = [t + (i,) for t in stack for i in range(len(table))]
        out.extend(stack)
    return [Policy(specs=tuple(table[i] for i in t), indices=t)
            for t in sorted(out, key=lambda t: (len(t), t))]


def assemble_hybrid(candidates, m: int = 2,
                    strictness: str = "op_mag") -> PolicySet:
    """Greedy scan keeping operation-disjoint policies, at most m.

    strictness "op_mag" treats (op, magnitude) pairs as the unit of
    overlap (two policies may share an op at different magnitudes);
    "op" forbids sharing an operation name at all.
    """
    if strictness not in ("op_mag", "op"):
        raise ValueError(f"unknown strictness '{strictness}'")
    if m < 1:
        raise ValueError("m must be >= 1")
    pols = list(candidates.policies if isinstance(candidates, PolicySet)
                else candidates)
    kept = []
    flags = []
    used = set()
    for sp in pols:
        if len(kept) == m:
            flags.append(False)
            continue
        pol = sp.policy if isinstance(sp, ScoredPolicy) else sp
        sig = (pol.op_mag_pairs() if strictness == "op_mag"
               else pol.op_names())
        if sig & used:
            flags.append(False)
            continue
        used |= sig
        kept.append(sp)
        flags.append(True)
    if len(kept) < m:
        warnings.warn(f"only {len(kept)} mutually disjoint policies "
                      f"available, wanted {m}")
    return PolicySet(policies=tuple(kept), eligible=tuple(True
                                                          for _ in kept))


def hybrid_apply(pset, image, y=None, seed: int = 0) -> np.ndarray:
    """Uniformly pick a member policy per sample, then apply it.

    The pick and the transform randomness both derive from the sample's
    content, so each sample sees the same member every time.
    """
    members = [sp.policy if isinstance(sp, ScoredPolicy) else sp
               for sp in (pset.policies if isinstance(pset, PolicySet)
                          else pset)]
    if not members:
        raise ValueError("hybrid_apply needs a non-empty policy set")
    image = np.asarray(image, dtype=np.float64)
    rng = np.random.default_rng(sample_seed(seed, image, y))
    # a singleton set must match apply_policy exactly, so skip the pick
    j = int(rng.integers(len(members))) if len(members) > 1 else 0
    return apply_policy(image, members[j], rng)
