"""Compile rules into concept heads, then train, evaluate and sweep.

Exit codes: 0 ok, 1 usage, 2 compile/config error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import compiler
from .errors import RuleheadError
from .experiments import (
    DIGITS_RULE,
    DIGITS_SCHEMA,
    SWEEP_CONFIG,
    SWEEP_HEADS,
    gen_colored_digits,
    run_sweep,
    summarize,
    write_results,
    write_toy,
)
from .nn import Dataset, Model, TrainConfig, evaluate_metrics, train
from .rule_dsl import load_rules
from .schema import ConceptSchema

log = logging.getLogger("rulehead")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def cmd_compile(args):
    schema = ConceptSchema.load(args.schema)
    rule = load_rules(args.rules, schema)
    compiled = compiler.compile_rules(
        schema, rule, head=args.head, reduce=args.reduce, budget=args.budget, clause_budget=args.clause_budget
    )
    compiler.save(compiled, args.out)
    print(json.dumps(compiled.report(), indent=2))


def cmd_train(args):
    compiled = compiler.load(args.artifacts)
    config = TrainConfig.load(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config.seed = args.seed
    head = compiler.build_head(compiled, config.head if args.head is None else args.head)
    data = Dataset.load(args.data)
    model = train(config, data, head)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "checkpoint.json")
    model.write_log(out / "train_log.csv")
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"final loss {model.history[-1]['loss']:.6g}; wrote {out / 'checkpoint.json'}")


def _print_metrics(rows):
    print(f"{'concept':<16}{'accuracy':>10}{'f1':>10}{'n':>8}")
    for r in rows:
        print(f"{r['concept']:<16}{r['accuracy']:>10.4f}{r['f1']:>10.4f}{r['n']:>8d}")


def cmd_eval(args):
    compiled = compiler.load(args.artifacts)
    head_kind = args.head or json.loads(Path(args.checkpoint).read_text(encoding="utf-8")).get("head")
    head = compiler.build_head(compiled, head_kind)
    model = Model.load(args.checkpoint, head)
    data = Dataset.load(args.data)
    data.check(head.schema)
    rows = evaluate_metrics(model, data)
    _print_metrics(rows)
    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["concept", "accuracy", "f1", "n"])
            w.writeheader()
            w.writerows(rows)


def cmd_sweep(args):
    if args.schema or args.rules:
        if not (args.schema and args.rules and args.data):
            raise RuleheadError("--schema, --rules and --data go together")
        schema = ConceptSchema.load(args.schema)
        rule_text = Path(args.rules).read_text(encoding="utf-8")
        data = Dataset.load(args.data)
    else:
        schema, rule_text = DIGITS_SCHEMA, DIGITS_RULE
        data = gen_colored_digits(args.images, args.labels, args.n, args.data_seed)
    config = TrainConfig.load(args.config) if args.config else SWEEP_CONFIG
    rows = run_sweep(data, schema, rule_text, args.fractions, args.seeds, args.heads, config, args.jobs)
    write_results(rows, args.out)
    for (head, fraction), f1 in summarize(rows).items():
        print(f"{head:<12} fraction={fraction:<6g} mean F1={f1:.4f}")


def cmd_gen_toy(args):
    write_toy(args.out, args.n, args.seed)
    print(f"wrote toy dataset to {args.out}")


def cmd_gen_digits(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data = gen_colored_digits(args.images, args.labels, args.n, args.seed)
    data.save(out / "data.npz")
    DIGITS_SCHEMA.save(out / "schema.json")
    (out / "digits.rules").write_text(DIGITS_RULE, encoding="utf-8")
    print(f"wrote {len(data)} coloured digits to {out}")


def build_parser():
    ap = _Parser(prog="rulehead", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compile", help="compile a schema and rules into head artifacts")
    p.add_argument("schema")
    p.add_argument("rules")
    p.add_argument("--head", choices=compiler.HEAD_KINDS, default="as")
    p.add_argument("--reduce", action="store_true", help="compress outcomes the rules never distinguish")
    p.add_argument("--budget", type=int, default=2**24, help="joint-state enumeration budget")
    p.add_argument("--clause-budget", type=int, default=10_000)
    p.add_argument("--out", default="artifacts")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("train", help="train a network with a compiled head")
    p.add_argument("artifacts")
    p.add_argument("data", help=".npz with 'features' and 'labels'")
    p.add_argument("config", nargs="?", help="JSON training config")
    p.add_argument("--head", choices=compiler.HEAD_KINDS + ("independent",))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="per-concept accuracy and macro-F1")
    p.add_argument("artifacts")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.add_argument("--head", choices=compiler.HEAD_KINDS + ("independent",))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="F1 versus labelled fraction for three heads")
    p.add_argument("--images", default="data/mnist5k/images-idx3-ubyte.gz")
    p.add_argument("--labels", default="data/mnist5k/labels-idx1-ubyte.gz")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--schema")
    p.add_argument("--rules")
    p.add_argument("--data")
    p.add_argument("--fractions", type=float, nargs="+", default=[0.01, 0.05, 0.1, 0.5])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--heads", nargs="+", choices=SWEEP_HEADS, default=list(SWEEP_HEADS))
    p.add_argument("--config")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-toy", help="write the 2-D toy dataset, schema and rule files")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="toy")
    p.set_defaults(func=cmd_gen_toy)

    p = sub.add_parser("gen-digits", help="write the coloured-digit dataset from IDX files")
    p.add_argument("--images", default="data/mnist5k/images-idx3-ubyte.gz")
    p.add_argument("--labels", default="data/mnist5k/labels-idx1-ubyte.gz")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="digits")
    p.set_defaults(func=cmd_gen_digits)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("RULEHEAD_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except RuleheadError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
