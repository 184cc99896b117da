"""Synthetic datasets, label masking and the labelled-fraction sweep."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .compiler import build_head, compile_rules
from .errors import RuleheadError
from .heads import IndependentHead
from .idx import read_images, read_labels
from .nn import Dataset, TrainConfig, evaluate_metrics, train
from .rule_dsl import TRUE, parse_rules
from .schema import ConceptSchema

log = logging.getLogger(__name__)

# --- toy 2-D example -------------------------------------------------------------------

TOY_SCHEMA = ConceptSchema.from_dict(
    {
        "concepts": [
            {"name": "y", "values": ["1", "2"]},
            {"name": "c1", "values": ["1", "2"]},
            {"name": "c2", "values": ["1", "2", "3"]},
            {"name": "c3", "values": ["1", "2", "3"]},
        ]
    }
)
TOY_IMPLICATION = "IF c1 = 2 AND c2 = 2 THEN y = 2\n"
TOY_IFF = "y = 2 <-> (c1 = 2 AND c2 = 2)\n"
STRIPES = (0.25, 0.75)


def _stripe(v):
    """1 below 0.25, 2 on [0.25, 0.75), 3 from 0.75 up."""
    return 1 + (v >= STRIPES[0]).astype(np.int64) + (v >= STRIPES[1]).astype(np.int64)


def toy_concepts(x: np.ndarray) -> np.ndarray:
    """Concept labels (y, c1, c2, c3) for points in the unit square."""
    x = np.atleast_2d(x)
    c1 = 1 + (x[:, 0] > 0.5).astype(np.int64)
    c2 = _stripe(x[:, 1])
    c3 = _stripe(np.maximum(x[:, 0], x[:, 1]))
    y = np.where((c1 == 2) & (c2 == 2), 2, 1)
    return np.stack([y, c1, c2, c3], axis=1)


def gen_toy(n: int, seed: int = 0) -> Dataset:
    x = np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, 2))
    return Dataset(x, toy_concepts(x))


def write_toy(out_dir, n: int, seed: int = 0) -> Dataset:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = gen_toy(n, seed)
    data.save(out / "data.npz")
    TOY_SCHEMA.save(out / "schema.json")
    (out / "implication.rules").write_text(TOY_IMPLICATION, encoding="utf-8")
    (out / "iff.rules").write_text(TOY_IFF, encoding="utf-8")
    return data


# --- coloured digits -------------------------------------------------------------------

DIGITS_SCHEMA = ConceptSchema.from_dict(
    {
        "concepts": [
            {"name": "y", "values": ["1", "2"]},
            {"name": "digit", "values": ["1", "2", "3", "4", "5", "6", "7", "8", "9", "0"]},
            {"name": "color", "values": ["white", "blue"]},
        ]
    }
)
DIGITS_RULE = (
    "y = 1 <-> ((digit IN {1, 3, 5, 7, 9} AND color = blue) OR "
    "(digit IN {0, 2, 4, 6, 8} AND color = white))\n"
)


def digit_outcome(digit):
    """Digit 0 is outcome 10 so outcomes stay 1-based."""
    digit = np.asarray(digit)
    return np.where(digit == 0, 10, digit)


def digits_target(digit, color):
    """y = 1 for odd blue or even white digits, else 2."""
    digit = np.asarray(digit)
    odd = digit % 2 == 1
    blue = np.asarray(color) == 2
    return np.where(odd == blue, 1, 2)


def colorize(images: np.ndarray, color: np.ndarray) -> np.ndarray:
    """Two channels per pixel: white digits light both, blue only the second."""
    img = images.reshape(len(images), -1).astype(float) / 255.0
    first = np.where((color == 1)[:, None], img, 0.0)
    return np.concatenate([first, img], axis=1)


def gen_colored_digits(images_path, labels_path, n: int = 5000, seed: int = 0) -> Dataset:
    images = read_images(images_path)
    labels = read_labels(labels_path)
    if len(images) != len(labels):
        raise RuleheadError(f"{len(images)} images but {len(labels)} labels")
    if n > len(images):
        raise RuleheadError(f"asked for {n} images, only {len(images)} available")
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(images), size=n, replace=False))
    digit = labels[pick].astype(np.int64)
    color = 1 + rng.integers(0, 2, size=n)
    y = digits_target(digit, color)
    return Dataset(colorize(images[pick], color), np.stack([y, digit_outcome(digit), color], axis=1))


# --- label handling --------------------------------------------------------------------


def mask_labels(dataset: Dataset, fraction, seed: int = 0) -> Dataset:
    """Keep ceil(fraction * n) labels per concept, chosen independently; the rest become -1.

    ``fraction`` is a scalar or one value per concept.
    """
    n, k = dataset.labels.shape
    fractions = np.broadcast_to(np.asarray(fraction, dtype=float), (k,))
    rng = np.random.default_rng(seed)
    labels = dataset.labels.copy()
    for i, f in enumerate(fractions):
        if not 0.0 <= f <= 1.0:
            raise ValueError(f"fraction {f} outside [0, 1]")
        keep = math.ceil(f * n - 1e-9)
        hidden = rng.permutation(n)[keep:]
        labels[hidden, i] = -1
    return Dataset(dataset.features.copy(), labels)


def train_test_split(dataset: Dataset, test_fraction=0.2, seed: int = 0):
    """Seeded split, stratified by the target concept when it is labelled."""
    rng = np.random.default_rng(seed)
    y = dataset.labels[:, 0]
    test = []
    for value in np.unique(y):
        members = np.flatnonzero(y == value)
        members = rng.permutation(members)
        test.extend(members[: int(round(test_fraction * len(members)))])
    test = np.sort(np.array(test, dtype=np.int64))
    train_idx = np.setdiff1d(np.arange(len(dataset)), test)
    return dataset.subset(train_idx), dataset.subset(test)


# --- sweep -----------------------------------------------------------------------------

SWEEP_HEADS = ("as", "joint", "independent")
SWEEP_CONFIG = TrainConfig(hidden=(128,), epochs=30, batch_size=64, lr=1e-3)
RESULT_FIELDS = ["head", "fraction", "seed", "concept", "f1", "accuracy"]


def make_sweep_head(kind: str, schema: ConceptSchema, rule_text: str):
    if kind == "as":
        return build_head(compile_rules(schema, parse_rules(rule_text, schema), head="as"))
    if kind == "joint":
        return build_head(compile_rules(schema, TRUE, head="as"))
    if kind == "independent":
        return IndependentHead(schema)
    raise ValueError(f"unknown sweep head {kind!r}")


def run_one(dataset, schema, rule_text, kind, fraction, seed, config):
    train_set, test_set = train_test_split(dataset, 0.2, seed)
    train_set = mask_labels(train_set, fraction, seed)
    head = make_sweep_head(kind, schema, rule_text)
    model = train(replace(config, seed=seed, head=kind), train_set, head)
    metrics = evaluate_metrics(model, test_set)[0]  # the target concept
    row = {
        "head": kind,
        "fraction": fraction,
        "seed": seed,
        "concept": metrics["concept"],
        "f1": metrics["f1"],
        "accuracy": metrics["accuracy"],
    }
    log.info("%s", row)
    return row


def _run_one_star(args):
    return run_one(*args)


def run_sweep(
    dataset: Dataset,
    schema: ConceptSchema,
    rule_text: str,
    fractions,
    seeds,
    heads=SWEEP_HEADS,
    config: TrainConfig = SWEEP_CONFIG,
    jobs: int = 1,
) -> list[dict]:
    """F1 on the target for every (head, fraction, seed), test split 80/20."""
    dataset.check(schema)
    tasks = [
        (dataset, schema, rule_text, kind, float(f), int(s), config)
        for f in fractions
        for s in seeds
        for kind in heads
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one_star, tasks))
    return [run_one(*t) for t in tasks]


def write_results(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in RESULT_FIELDS})


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["fraction"] = float(r["fraction"])
        r["seed"] = int(r["seed"])
        r["f1"] = float(r["f1"])
        r["accuracy"] = float(r["accuracy"])
    return rows


def summarize(rows) -> dict:
    """Mean F1 per (head, fraction)."""
    groups = {}
    for r in rows:
        groups.setdefault((r["head"], r["fraction"]), []).append(r["f1"])
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}
