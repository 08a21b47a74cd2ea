"""Command-line experiment driver.

Every subcommand reads one YAML experiment config, derives everything from
its root seed, and writes a deterministic report directory: the config
snapshot, CSV tables, and PNG side-by-sides where images are involved.
Failures exit nonzero with a single "error: ..." line on stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import models as M
from .attack import reconstruct
from .config import ExperimentConfig, dump_config, load_config
from .data import load_dataset
from .defenses import DefenseSpec, apply_defense
from .federated import AdversaryHook, run_training
from .io import save_image, save_tensor, side_by_side
from .metrics import (pearson, policy_accuracy_score, privacy_score,
                      transform_batch)
from .search import (assemble_hybrid, sample_policy, search as search_run,
                     semi_train)
from .transforms import Policy, parse_policy

REPORT_ROOT_ENV = "GRADLEAK_REPORT_ROOT"


# ---------------------------------------------------------------------------
# report plumbing

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _prepare(args, command: str):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    root = os.environ.get(REPORT_ROOT_ENV, cfg.output_dir)
    out = Path(root) / f"{command}-seed{cfg.seed}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(dump_config(cfg))
    return cfg, out


def _pick_sample(dataset, index: int):
    if not 0 <= index < len(dataset):
        raise ValueError(f"sample index {index} outside dataset of "
                         f"{len(dataset)}")
    return dataset[index]


def _input_policy(args, cfg: ExperimentConfig):
    """The input-side transform: an explicit --policy wins over config."""
    if getattr(args, "policy", None):
        return parse_policy(args.policy)
    if isinstance(cfg.defense, Policy):
        return cfg.defense
    return None


def _resolved_ops(pol: Policy) -> str:
    return "[" + ", ".join(f"{s.op}/{s.magnitude}" for s in pol.specs) + "]"


def _capture_gradient(cfg: ExperimentConfig, params, tx, y):
    _, gv = M.loss_gradients(cfg.model, params, tx[None], [y])
    if isinstance(cfg.defense, DefenseSpec):
        gv = apply_defense(gv, cfg.defense)
    return gv


def _attack_once(cfg: ExperimentConfig, params, gv, tx, y, **overrides):
    acfg = cfg.attack
    if acfg.init == "from_image":
        acfg = replace(acfg, init_image=tx)
    if overrides:
        acfg = replace(acfg, **overrides)
    label = y if acfg.label_mode == "known" else None
    return reconstruct(cfg.model, params, gv, acfg, label=label,
                       reference=tx)


# ---------------------------------------------------------------------------
# subcommands

def cmd_attack(args) -> int:
    cfg, out = _prepare(args, "attack")
    dataset = load_dataset(cfg.dataset)
    params = M.init_model(cfg.model)
    x0, y = _pick_sample(dataset, args.sample_index)
    pol = _input_policy(args, cfg)
    tx = transform_batch(pol, [(x0, y)], cfg.seed)[0][0]
    gv = _capture_gradient(cfg, params, tx, y)
    save_tensor(gv.flatten(), out / "captured-gradient.atsr")

    res = _attack_once(cfg, params, gv, tx, y)
    mse = float(np.mean((res.reconstruction - tx) ** 2))

    rows = [(i, obj, res.psnr_trace[i]) for i, obj in
            enumerate(res.loss_trace)]
    _write_csv(out / "attack.csv", ["iteration", "objective", "psnr"], rows)
    _write_csv(out / "summary.csv",
               ["final_objective", "final_distance", "mse", "psnr",
                "best_restart"],
               [(res.final_objective, res.final_distance, mse, res.psnr,
                 res.best_restart)])
    save_image(x0, out / "original.png")
    save_image(tx, out / "transformed.png")
    save_image(np.clip(res.reconstruction, 0, 1), out / "reconstructed.png")
    save_image(side_by_side([x0, tx, np.clip(res.reconstruction, 0, 1)]),
               out / "side_by_side.png")
    print(f"attack: objective {res.final_objective!r}, mse {mse!r}, "
          f"psnr {res.psnr!r} (iteration 0 psnr {res.psnr_trace[0]!r}), "
          f"report {out}")
    return 0


def cmd_transform(args) -> int:
    cfg, out = _prepare(args, "transform")
    pol = parse_policy(args.policy)
    if args.image:
        from .io import load_image

        x0, y = load_image(args.image), 0
    else:
        dataset = load_dataset(cfg.dataset)
        x0, y = _pick_sample(dataset, args.sample_index)
    tx = transform_batch(pol, [(x0, y)], cfg.seed)[0][0]
    save_image(x0, out / "original.png")
    save_image(tx, out / "transformed.png")
    save_image(side_by_side([x0, tx]), out / "side_by_side.png")
    _write_csv(out / "transform.csv", ["step", "op", "magnitude"],
               [(i, s.op, s.magnitude) for i, s in enumerate(pol.specs)])
    print(f"transform: policy {args.policy} resolves to "
          f"{_resolved_ops(pol)}, report {out}")
    return 0


def cmd_train(args) -> int:
    cfg, out = _prepare(args, "train")
    dataset = load_dataset(cfg.dataset)
    eval_set = dataset[3::4]
    train_set = [s for i, s in enumerate(dataset) if i % 4 != 3]
    hook = AdversaryHook()
    params, accs, logs = run_training(cfg.model, train_set, eval_set,
                                      cfg.train, hook=hook)
    _write_csv(out / "train.csv",
               ["round", "epoch", "lr", "train_loss", "update_norm",
                "eval_accuracy"],
               [(g.round_index, g.epoch, g.lr, g.train_loss, g.update_norm,
                 g.eval_accuracy) for g in logs])
    _write_csv(out / "accuracy.csv", ["epoch", "eval_accuracy"],
               list(enumerate(accs)))
    save_tensor(np.concatenate([params.layers[k].ravel()
                                for k in params.layers]),
                out / "params.atsr")
    final = accs[-1] if accs else float("nan")
    print(f"train: {cfg.train.epochs} epochs, {len(logs)} rounds, "
          f"final eval accuracy {final!r}, report {out}")
    return 0


def _baseline_grid(args):
    grid = [("none", "", None)]
    for r in args.ratios:
        grid.append(("prune", r, DefenseSpec(kind="prune", ratio=r)))
    for s in args.scales:
        grid.append(("gaussian", s, DefenseSpec(kind="gaussian", scale=s)))
        grid.append(("laplacian", s, DefenseSpec(kind="laplacian", scale=s)))
    return grid


def cmd_baseline(args) -> int:
    cfg, out = _prepare(args, "baseline")
    dataset = load_dataset(cfg.dataset)
    params = M.init_model(cfg.model)
    x0, y = _pick_sample(dataset, args.sample_index)
    _, clean = M.loss_gradients(cfg.model, params, x0[None], [y])

    rows = []
    for kind, param, spec in _baseline_grid(args):
        gv = clean if spec is None else apply_defense(clean, spec)
        res = _attack_once(cfg, params, gv, x0, y)
        mse = float(np.mean((res.reconstruction - x0) ** 2))
        rows.append((kind, param, mse, res.psnr, res.final_distance))
        print(f"baseline {kind} {param}: mse {mse!r}, psnr {res.psnr!r}")
    _write_csv(out / "baseline.csv",
               ["defense", "parameter", "mse", "psnr", "final_distance"],
               rows)
    print(f"baseline: {len(rows)} settings, report {out}")
    return 0


def _scoring_context(cfg: ExperimentConfig):
    """Shared S_pri/S_acc setup: semi-trained and random-init models."""
    dataset = load_dataset(cfg.dataset)
    params_s = semi_train(cfg.model, dataset, fraction=_semi_fraction(cfg),
                          epochs=cfg.train.epochs, train_cfg=cfg.train,
                          seed=cfg.seed)
    params_r = M.init_model(replace(cfg.model, seed=cfg.model.seed + 1))
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 1)))
    s = cfg.search
    pri = [dataset[i] for i in rng.choice(
        len(dataset), size=min(s.pri_samples, len(dataset)), replace=False)]
    acc = [dataset[i] for i in rng.choice(
        len(dataset), size=min(s.acc_batch, len(dataset)), replace=False)]
    return dataset, params_s, params_r, pri, acc


def _semi_fraction(cfg: ExperimentConfig) -> float:
    # 10 samples is the semi_train floor; small synthetic sets use more
    n = (cfg.dataset.classes * cfg.dataset.per_class
         if hasattr(cfg.dataset, "per_class") else 100)
    return max(0.1, min(1.0, 10.0 / max(n, 1)))


def cmd_score_policy(args) -> int:
    cfg, out = _prepare(args, "score-policy")
    pol = parse_policy(args.policy)
    _, params_s, params_r, pri, acc = _scoring_context(cfg)
    s = cfg.search
    s_pri = privacy_score(pol, cfg.model, params_s, pri, k=s.pri_k,
                          seed=cfg.seed)
    s_acc = policy_accuracy_score(pol, cfg.model, params_r, acc,
                                  seed=cfg.seed, rounds=s.acc_rounds,
                                  lr=s.acc_lr)
    _write_csv(out / "score.csv", ["policy", "s_pri", "s_acc"],
               [(args.policy, s_pri, s_acc)])
    print(f"score-policy {args.policy} {_resolved_ops(pol)}: "
          f"s_pri {s_pri!r}, s_acc {s_acc!r}, report {out}")
    return 0


def cmd_search(args) -> int:
    cfg, out = _prepare(args, "search")
    dataset, params_s, params_r, _, _ = _scoring_context(cfg)
    result = search_run(cfg.search, cfg.model, params_s, params_r, dataset)
    _write_csv(out / "policies.csv",
               ["draw", "policy", "s_acc", "s_pri", "accepted"],
               result.records)
    _write_csv(out / "ranked.csv", ["rank", "policy", "s_pri", "s_acc"],
               [(i, sp.policy.notation(), sp.s_pri, sp.s_acc)
                for i, sp in enumerate(result.policies)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        hybrid = assemble_hybrid(result.policies, m=args.hybrid_size)
    _write_csv(out / "hybrid.csv", ["policy", "s_pri", "s_acc"],
               [(sp.policy.notation(), sp.s_pri, sp.s_acc)
                for sp in hybrid.policies])
    for i, sp in enumerate(result.policies):
        print(f"rank {i}: {sp.policy.notation()} s_pri {sp.s_pri!r} "
              f"s_acc {sp.s_acc!r}")
    stats = result.stats
    print(f"search: {stats['draws']} draws, {stats['distinct']} distinct, "
          f"{stats['accepted']} accepted, hybrid "
          f"{[sp.policy.notation() for sp in hybrid.policies]}, "
          f"report {out}")
    return 0


def cmd_correlate(args) -> int:
    cfg, out = _prepare(args, "correlate")
    dataset, params_s, _, pri, _ = _scoring_context(cfg)
    attack_params = M.init_model(cfg.model)
    x0, y = _pick_sample(dataset, args.sample_index)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 3)))

    rows = []
    pris, psnrs = [], []
    for i in range(args.policies):
        pol = sample_policy(rng, cfg.search.k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            s_pri = privacy_score(pol, cfg.model, params_s, pri,
                                  k=cfg.search.pri_k, seed=cfg.seed)
        tx = transform_batch(pol, [(x0, y)], cfg.seed)[0][0]
        gv = _capture_gradient(cfg, attack_params, tx, y)
        res = _attack_once(cfg, attack_params, gv, tx, y)
        rows.append((pol.notation(), s_pri, res.psnr))
        pris.append(s_pri)
        psnrs.append(res.psnr)
        print(f"policy {pol.notation()}: s_pri {s_pri!r}, "
              f"psnr {res.psnr!r}")
    r = pearson(np.array(pris), np.array(psnrs))
    _write_csv(out / "correlate.csv", ["policy", "s_pri", "psnr"], rows)
    _write_csv(out / "pearson.csv", ["n", "pearson_r"],
               [(len(rows), r)])
    print(f"correlate: n {len(rows)}, pearson r {r!r}, report {out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="gradleak",
        description="gradient inversion attacks and transformation-policy "
                    "defenses on a shared experiment config")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="YAML experiment config path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config root seed")

    p = sub.add_parser("attack", help="invert one captured gradient")
    common(p)
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--policy", default=None,
                   help="transform the input first (dash notation)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("transform", help="apply a policy to one image")
    common(p)
    p.add_argument("--policy", required=True, help="dash notation, e.g. 3-1-7")
    p.add_argument("--image", default=None, help="PNG path; default dataset")
    p.add_argument("--sample-index", type=int, default=0)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", help="run collaborative training")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="attack across baseline defenses")
    common(p)
    p.add_argument("--sample-index", type=int, default=0)
    p.add_argument("--ratios", type=lambda s: [float(v) for v in s.split(",")],
                   default=[0.7, 0.95, 0.99], help="prune ratios")
    p.add_argument("--scales", type=lambda s: [float(v) for v in s.split(",")],
                   default=[1e-2], help="noise variances / b parameters")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("score-policy", help="S_pri and S_acc of one policy")
    common(p)
    p.add_argument("--policy", required=True)
    p.set_defaults(func=cmd_score_policy)

    p = sub.add_parser("search", help="random policy search")
    common(p)
    p.add_argument("--hybrid-size", type=int, default=2)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("correlate", help="privacy score vs attack PSNR")
    common(p)
    p.add_argument("--policies", type=int, default=30)
    p.add_argument("--sample-index", type=int, default=0)
    p.set_defaults(func=cmd_correlate)
    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as err:
        msg = " ".join(str(err).split()) or type(err).__name__
        print(f"error: {type(err).__name__}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
