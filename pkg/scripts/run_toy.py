"""Train on the 2-D toy data with no target labels and report what the rules recover.

Usage:
    python scripts/run_toy.py [--head as] [--n 2000] [--epochs 200] [--seed 0]

Prints target accuracy under the equivalence rule, and the share of points in
the right-middle region where the implication rule pushes Pr(y=2) to >= 0.5.
"""
import argparse

import numpy as np

from rulehead.compiler import HEAD_KINDS, build_head, compile_rules
from rulehead.experiments import TOY_IFF, TOY_IMPLICATION, TOY_SCHEMA, gen_toy, mask_labels
from rulehead.nn import TrainConfig, train
from rulehead.rule_dsl import parse_rules


def fit(rule_text, head, train_set, cfg):
    compiled = compile_rules(TOY_SCHEMA, parse_rules(rule_text, TOY_SCHEMA), head=head)
    return train(cfg, train_set, build_head(compiled))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--head", choices=HEAD_KINDS, default="as")
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = TrainConfig(hidden=(64, 64), epochs=args.epochs, seed=args.seed)
    train_set = mask_labels(gen_toy(args.n, args.seed), [0.0, 1.0, 1.0, 1.0], args.seed)
    test_set = gen_toy(args.n, args.seed + 1)
    x = test_set.features

    model = fit(TOY_IFF, args.head, train_set, cfg)
    acc = np.mean(model.predict(x)[:, 0] == test_set.labels[:, 0])
    print(f"iff rule, {args.head} head: y accuracy {acc:.3f}")

    model = fit(TOY_IMPLICATION, args.head, train_set, cfg)
    region = (x[:, 0] > 0.55) & (x[:, 1] > 0.3) & (x[:, 1] < 0.7)
    p = model.predict_proba(x)[:, 1]
    print(f"implication rule, {args.head} head: Pr(y=2) >= 0.5 on {np.mean(p[region] >= 0.5):.3f} of the region")
    print(f"  mean Pr(y=2) inside {p[region].mean():.3f}, outside {p[~region].mean():.3f}")


if __name__ == "__main__":
    main()
