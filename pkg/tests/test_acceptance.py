"""One test per acceptance criterion; each records a PASS/FAIL summary line."""
import os
import time
from pathlib import Path

import numpy as np
import pytest

from helpers import all_states, random_ast, random_schema
from rulehead.compiler import build_head, compile_rules
from rulehead.errors import UnsatisfiableRule
from rulehead.experiments import (
    DIGITS_RULE,
    DIGITS_SCHEMA,
    SWEEP_CONFIG,
    TOY_IFF,
    TOY_IMPLICATION,
    TOY_SCHEMA,
    gen_colored_digits,
    gen_toy,
    mask_labels,
    run_sweep,
    summarize,
)
from rulehead.heads import head_backward
from rulehead.logic import cnf_satisfied_batch, rule_to_cnf
from rulehead.nn import TrainConfig, train
from rulehead.polytope import clauses_to_inequalities, contains, lp_max
from rulehead.rule_dsl import parse_rules
from rulehead.schema import ConceptSchema
from rulehead.state_space import (
    admissible_bits,
    admissible_mask,
    enumerate_states,
    expand_compressed_marginals,
    expand_mask,
    marginalize,
    reduce_schema,
    vertex_matrix,
)

ROOT = Path(__file__).resolve().parents[1]
MNIST = ROOT / "data" / "mnist5k"
HEADS = ("base", "as", "vertex", "constraints")


def _compilable(rng, n, depth=4, max_concepts=4, max_outcomes=4):
    """``n`` random satisfiable (schema, rule) pairs."""
    out = []
    while len(out) < n:
        schema = random_schema(rng, max_concepts, max_outcomes)
        rule = random_ast(rng, schema, depth)
        try:
            rule_to_cnf(rule, schema)
        except UnsatisfiableRule:
            continue
        if admissible_bits(rule, schema).any():
            out.append((schema, rule))
    return out


def test_1_mask_equals_cnf(record):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad = 0
    for _ in range(200):
        schema = random_schema(rng, 4, 4)
        ast = random_ast(rng, schema, 5)
        direct = admissible_bits(ast, schema)
        try:
            cnf = rule_to_cnf(ast, schema)
        except UnsatisfiableRule:
            bad += int(direct.any())
            continue
        bad += int(not np.array_equal(direct, cnf_satisfied_batch(cnf, enumerate_states(schema))))
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 30
    record("1 mask/CNF equivalence", ok, f"mismatches={bad}/200 time={elapsed:.1f}s (<30s)")
    assert ok


def test_2_woodpecker(record, wood, wood_rule):
    mask = admissible_mask(wood_rule, wood)
    cnf = rule_to_cnf(wood_rule, wood)
    sys = clauses_to_inequalities(cnf, wood)
    inadmissible = sorted(int(k) + 1 for k in np.flatnonzero(~mask.bits))
    checks = {
        "t": wood.n_states == 12,
        "d": mask.count == 10,
        "inadmissible": inadmissible == [8, 9],
        "cnf": cnf.clauses == (frozenset({(0, 1), (1, 2), (2, 1)}),),
        "row": sys.ahat.tolist() == [[1, 0, 0, 1, 1, 0, 0]] and sys.b[0] == 1,
    }
    ok = all(checks.values())
    record("2 woodpecker ground truth", ok, " ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
    assert ok


def test_3_h_equals_v(record):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_v, worst_lp = 0.0, 0.0
    for schema, rule in _compilable(rng, 50):
        compiled = compile_rules(schema, rule, head="vertex")
        sys, V = compiled.system, compiled.V
        worst_v = max(worst_v, float(np.max(sys.b[:, None] - sys.A @ V)), float(np.max(np.abs(sys.Q @ V - 1))))
        for c in rng.normal(size=(50, schema.n_marginals)):
            value, _ = lp_max(sys, c)
            worst_lp = max(worst_lp, abs(value - float(np.max(c @ V))))
    elapsed = time.perf_counter() - start
    ok = worst_v <= 1e-9 and worst_lp <= 1e-6 and elapsed < 120
    record("3 H=V equivalence", ok, f"vertex violation={worst_v:.1e} lp gap={worst_lp:.1e} time={elapsed:.1f}s (<120s)")
    assert ok


def test_4_head_feasibility(record, wood, wood_rule):
    rng = np.random.default_rng(4)
    cases = [(wood, wood_rule), (TOY_SCHEMA, parse_rules(TOY_IFF, TOY_SCHEMA))] + _compilable(rng, 3)
    worst = {"block": 0.0, "neg": 0.0, "member": True, "vertex_vs_as": 0.0}
    for schema, rule in cases:
        sys = compile_rules(schema, rule, head="constraints").system
        outputs = {}
        z_shared = rng.normal(scale=3.0, size=(10_000, admissible_mask(rule, schema).count))
        for kind in HEADS:
            head = build_head(compile_rules(schema, rule, head=kind), kind)
            z = z_shared if kind in ("as", "vertex") else rng.normal(scale=3.0, size=(10_000, head.input_width))
            p = head(z)
            outputs[kind] = p
            for sl in schema.block_slices():
                worst["block"] = max(worst["block"], float(np.max(np.abs(p[:, sl].sum(axis=1) - 1))))
            worst["neg"] = min(worst["neg"], float(p.min()))
            worst["member"] &= bool(contains(sys, p, tol=1e-6).all())
        worst["vertex_vs_as"] = max(worst["vertex_vs_as"], float(np.max(np.abs(outputs["as"] - outputs["vertex"]))))
    ok = worst["block"] <= 1e-9 and worst["neg"] >= -1e-12 and worst["member"] and worst["vertex_vs_as"] <= 1e-12
    record(
        "4 head feasibility",
        ok,
        f"block err={worst['block']:.1e} min={worst['neg']:.1e} member={worst['member']} "
        f"|vertex-as|={worst['vertex_vs_as']:.1e}",
    )
    assert ok


def _rel_fd_error(head, z, g, h=1e-5):
    analytic = head_backward(head, z, g)
    numeric = np.zeros_like(z)
    for idx in np.ndindex(z.shape):
        zp, zm = z.copy(), z.copy()
        zp[idx] += h
        zm[idx] -= h
        numeric[idx] = (np.sum(g * head(zp)) - np.sum(g * head(zm))) / (2 * h)
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-8))


def _non_degenerate(head, z):
    """For the constraints head, keep points whose bounding row is unique and whose gate is not saturated."""
    if head.kind != "constraints":
        return True
    ray = head.ray
    _, (u, norm, alpha, row, live, rates) = ray.forward(z[:, :-1], np.ones(len(z)))
    if not live.all():
        return False
    steps = np.where((rates < -1e-12) & ray.active, ray.slack / -np.where(rates < 0, rates, -1), np.inf)
    steps = np.sort(steps, axis=1)
    return bool(np.all(steps[:, 1] - steps[:, 0] > 1e-3 * steps[:, 0]))


def test_5_gradients(record, wood, wood_rule):
    rng = np.random.default_rng(5)
    worst = {}
    cases = [(wood, wood_rule), (TOY_SCHEMA, parse_rules(TOY_IFF, TOY_SCHEMA))]
    for kind in HEADS:
        errs = []
        for schema, rule in cases:
            head = build_head(compile_rules(schema, rule, head=kind), kind)
            done = 0
            while done < 20:
                z = rng.normal(size=(1, head.input_width))
                if not _non_degenerate(head, z):
                    continue
                errs.append(_rel_fd_error(head, z, rng.normal(size=(1, schema.n_marginals))))
                done += 1
        worst[kind] = max(errs)
    ok = all(v < 1e-4 for v in worst.values())
    record("5 gradient correctness", ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (<1e-4)")
    assert ok


def test_6_toy(record):
    start = time.perf_counter()
    cfg = TrainConfig(hidden=(64, 64), epochs=200, seed=0)
    no_y = [0.0, 1.0, 1.0, 1.0]
    train_set = mask_labels(gen_toy(2000, seed=0), no_y, seed=0)
    test_set = gen_toy(2000, seed=1)

    iff = build_head(compile_rules(TOY_SCHEMA, parse_rules(TOY_IFF, TOY_SCHEMA), head="as"))
    model = train(cfg, train_set, iff)
    acc = float(np.mean(model.predict(test_set.features)[:, 0] == test_set.labels[:, 0]))

    imp = build_head(compile_rules(TOY_SCHEMA, parse_rules(TOY_IMPLICATION, TOY_SCHEMA), head="as"))
    model = train(cfg, train_set, imp)
    x = test_set.features
    region = (x[:, 0] > 0.55) & (x[:, 1] > 0.3) & (x[:, 1] < 0.7)
    share = float(np.mean(model.predict_proba(x[region])[:, 1] >= 0.5))
    elapsed = time.perf_counter() - start
    ok = acc >= 0.9 and share >= 0.95 and elapsed < 180
    record("6 toy reproduction", ok, f"iff y acc={acc:.3f} (>=0.90) implication share={share:.3f} (>=0.95) time={elapsed:.0f}s (<180s)")
    assert ok


@pytest.mark.skipif(not (MNIST / "images-idx3-ubyte.gz").exists(), reason="MNIST subset not present")
def test_7_sweep(record):
    start = time.perf_counter()
    data = gen_colored_digits(MNIST / "images-idx3-ubyte.gz", MNIST / "labels-idx1-ubyte.gz", 5000, seed=0)
    jobs = min(5, os.cpu_count() or 1)
    rows = run_sweep(data, DIGITS_SCHEMA, DIGITS_RULE, [0.01, 0.5], range(5), config=SWEEP_CONFIG, jobs=jobs)
    means = summarize(rows)
    low = {h: means[(h, 0.01)] for h in ("as", "joint", "independent")}
    high = [means[(h, 0.5)] for h in ("as", "joint", "independent")]
    elapsed = time.perf_counter() - start
    ok = low["as"] >= low["independent"] and max(high) - min(high) <= 0.05 and elapsed < 1800
    record(
        "7 sweep reproduction",
        ok,
        f"F1@0.01 as={low['as']:.3f} joint={low['joint']:.3f} indep={low['independent']:.3f}; "
        f"F1@0.5 spread={max(high) - min(high):.3f} (<=0.05) time={elapsed:.0f}s (<1800s)",
    )
    assert ok


def test_8_reduction(record):
    rng = np.random.default_rng(8)
    worst_p, mask_ok = 0.0, True
    for _ in range(50):
        schema = random_schema(rng, 4, 5)
        rule = random_ast(rng, schema, 4)
        reduced, red, rewritten = reduce_schema(rule, schema)
        bits_red = admissible_bits(rewritten, reduced)
        bits = admissible_bits(rule, schema)
        mask_ok &= bool(np.array_equal(expand_mask(bits_red, red, reduced), bits))
        if not bits_red.any():
            continue
        # random distribution over reduced admissible states plus replacement shares
        pi_red = np.where(bits_red, rng.dirichlet(np.ones(reduced.n_states)), 0.0)
        pi_red /= pi_red.sum()
        repl = {i: rng.dirichlet(np.ones(len(c.replaced))) for i, c in enumerate(red.concepts) if len(c.replaced) >= 2}
        expanded = expand_compressed_marginals(marginalize(pi_red, reduced), red, repl, reduced)
        # unreduced computation: spread each reduced state over its original states
        states = enumerate_states(schema)
        codes = red.reduce_states(states)
        flat = np.ravel_multi_index(tuple((codes - 1).T), reduced.sizes) if codes.shape[1] else np.zeros(len(states), int)
        pi = pi_red[flat].copy()
        for i, c in enumerate(red.concepts):
            share = np.ones(schema.sizes[i] + 1)
            for r, v in enumerate(c.replaced):
                share[v] = repl[i][r] if i in repl else 1.0
            pi *= share[states[:, i]]
        mask_ok &= bool(np.all(pi[~bits] == 0))
        worst_p = max(worst_p, float(np.max(np.abs(marginalize(pi, schema) - expanded))))
    ok = mask_ok and worst_p <= 1e-9
    record("8 reduction consistency", ok, f"masks={'ok' if mask_ok else 'FAIL'} marginal err={worst_p:.1e} (<=1e-9)")
    assert ok
