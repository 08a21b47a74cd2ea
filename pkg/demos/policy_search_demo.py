"""Desk-scale run of the two-score policy search.

Semi-trains the scoring model on a fraction of a synthetic dataset, draws
random augmentation policies, filters them by the accuracy score and ranks
survivors by the privacy score, then assembles the greedy hybrid set.

Usage:
    python3 demos/policy_search_demo.py --draws 60 --keep 5
"""

import argparse
import time

from gradleak import (DatasetSpec, ModelConfig, SearchConfig, assemble_hybrid,
                      search, semi_train, synth_dataset)
from gradleak.models import init_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=60, help="c_max")
    ap.add_argument("--keep", type=int, default=5, help="n survivors")
    ap.add_argument("--k", type=int, default=2, help="ops per policy")
    ap.add_argument("--t-acc", type=float, default=-85.0)
    ap.add_argument("--hybrid", type=int, default=2, help="hybrid size m")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    dataset = synth_dataset(DatasetSpec(classes=4, per_class=16,
                                        shape=(1, 8, 8), noise=0.05, seed=0))
    mcfg = ModelConfig(arch="convnet", input_shape=(1, 8, 8), classes=4,
                       channels=(8,), fc_width=32, seed=0)

    # M^s: lightly trained copy for the privacy score; M^r: untrained
    params_s = semi_train(mcfg, dataset, fraction=0.25, epochs=10,
                          seed=args.seed)
    params_r = init_model(mcfg)

    cfg = SearchConfig(c_max=args.draws, n=args.keep, k=args.k,
                       t_acc=args.t_acc, seed=args.seed,
                       pri_samples=16, pri_k=4, acc_batch=16,
                       acc_rounds=2, acc_lr=0.1)
    t0 = time.time()
    pset = search(cfg, mcfg, params_s, params_r, dataset)
    stats = pset.stats
    print(f"search: {stats['draws']} draws, {stats['distinct']} distinct, "
          f"{stats['accepted']} accepted, {time.time() - t0:.1f}s")

    print(f"\ntop {len(pset)} policies by privacy score "
          f"(threshold t_acc={args.t_acc}):")
    for rank, sp in enumerate(pset.policies, start=1):
        ops = ", ".join(f"{s.op}/{s.magnitude}" for s in sp.policy.specs)
        print(f"  #{rank} {sp.policy.notation()}: s_pri {sp.s_pri:+.4f}  "
              f"s_acc {sp.s_acc:+.2f}  [{ops}]")

    hybrid = assemble_hybrid(pset, m=args.hybrid)
    print(f"\ngreedy hybrid ({len(hybrid)} members, op-disjoint scan):")
    for sp in hybrid.policies:
        ops = ", ".join(f"{s.op}/{s.magnitude}" for s in sp.policy.specs)
        print(f"  {sp.policy.notation()}: {ops}")


if __name__ == "__main__":
    main()
