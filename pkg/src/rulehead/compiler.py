"""Compile a schema and a rule into the artifacts each head needs.

Artifacts are written as plain JSON (plus ``V.csv``) so other tools can read
them. Indices in files are 1-based: joint states, admissible slots and flat
marginal positions alike.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import heads as H
from .errors import CnfExplosion, EnumerationBudgetExceeded, Infeasible, RuleheadError, UnsatisfiableRule
from .logic import DEFAULT_CLAUSE_BUDGET, Cnf, prime_implicates, rule_to_cnf
from .polytope import InequalitySystem, InteriorPoint, clauses_to_inequalities, interior_point, interior_point_lp
from .rule_dsl import Rule, check_ast, format_ast
from .schema import ConceptSchema
from .state_space import (
    DEFAULT_STATE_BUDGET,
    AdmissibleMask,
    ConceptReduction,
    PlacementMatrix,
    ReducedSchemaMap,
    admissible_mask,
    placement_matrix,
    reduce_schema,
    vertex_matrix,
)

log = logging.getLogger(__name__)

HEAD_KINDS = ("base", "as", "vertex", "constraints")


@dataclass
class CompiledRules:
    head: str
    schema: ConceptSchema  # the schema the artifacts live on (reduced if reduction applied)
    rule: Rule
    cnf: Cnf | None = None
    mask: AdmissibleMask | None = None
    placement: PlacementMatrix | None = None
    V: np.ndarray | None = None
    system: InequalitySystem | None = None
    x0: InteriorPoint | None = None
    reduction: ReducedSchemaMap | None = None
    notes: list = field(default_factory=list)

    @property
    def original_schema(self) -> ConceptSchema:
        return self.reduction.original if self.reduction else self.schema

    def report(self) -> dict:
        s = self.schema
        rep = {
            "head": self.head,
            "t": s.n_states,
            "d": self.mask.count if self.mask is not None else None,
            "b": self.system.n_clauses if self.system is not None else None,
            "s": s.n_marginals,
            "reduction_applied": self.reduction is not None,
        }
        if self.reduction is not None:
            rep["original_t"] = self.reduction.original.n_states
            rep["reduced_outcome_sets"] = {
                self.reduction.original.concepts[i].name: (
                    "untouched" if cr.untouched else list(cr.compressed_outcomes)
                )
                for i, cr in enumerate(self.reduction.concepts)
            }
        if self.notes:
            rep["notes"] = list(self.notes)
        return rep


def compile_rules(
    schema: ConceptSchema,
    rule: Rule,
    head: str = "as",
    reduce: bool = False,
    budget: int = DEFAULT_STATE_BUDGET,
    clause_budget: int = DEFAULT_CLAUSE_BUDGET,
) -> CompiledRules:
    if head not in HEAD_KINDS:
        raise ValueError(f"unknown head {head!r}")
    check_ast(rule, schema)
    schema.check_state_count()
    reduction = None
    if reduce:
        schema, reduction, rule = reduce_schema(rule, schema)
    out = CompiledRules(head, schema, rule, reduction=reduction)

    try:
        out.cnf = rule_to_cnf(rule, schema, clause_budget)
    except CnfExplosion as e:
        if head == "constraints":
            raise
        out.notes.append(str(e))

    try:
        out.mask = admissible_mask(rule, schema, budget)
    except EnumerationBudgetExceeded as e:
        if head != "constraints":
            raise
        out.notes.append(str(e))

    if out.cnf is not None:
        # one inequality per prime implicate; a bare CNF can leave fractional
        # points outside the hull of the admissible one-hot marginals
        try:
            clauses = prime_implicates(out.cnf, schema, clause_budget)
        except CnfExplosion as e:
            log.warning("inequality system built from the plain CNF, it may be loose: %s", e)
            out.notes.append(f"plain CNF inequalities: {e}")
            clauses = out.cnf
        out.system = clauses_to_inequalities(clauses, schema)
    if out.mask is not None:
        out.placement = placement_matrix(out.mask)
        if head in ("vertex", "constraints"):
            out.V = vertex_matrix(out.mask, schema, budget)
    if head == "constraints":
        if out.V is not None:
            out.x0 = interior_point(out.V)
        else:
            try:
                out.x0 = interior_point_lp(out.system)
            except Infeasible as e:
                raise UnsatisfiableRule(str(e)) from e
    log.info("compiled %s head: %s", head, out.report())
    return out


def build_head(compiled: CompiledRules, kind: str | None = None) -> H.Head:
    kind = kind or compiled.head
    s = compiled.schema
    if kind == "base":
        inner = H.BaseHead(s, compiled.mask)
    elif kind == "as":
        inner = H.ASHead(s, compiled.placement)
    elif kind == "vertex":
        V = compiled.V if compiled.V is not None else vertex_matrix(compiled.mask, s)
        inner = H.VertexHead(s, V)
    elif kind == "constraints":
        inner = H.ConstraintsHead(s, compiled.system, compiled.x0)
    elif kind == "independent":
        inner = H.IndependentHead(s)
    else:
        raise ValueError(f"unknown head {kind!r}")
    if compiled.reduction is not None:
        return H.ReducedHead(inner, compiled.reduction)
    return inner


# --- serialisation ------------------------------------------------------------------


def _reduction_to_dict(red: ReducedSchemaMap) -> dict:
    return {
        "original_schema": red.original.to_dict(),
        "concepts": [
            {"kept": list(c.kept), "replaced": list(c.replaced), "reduced_index": c.reduced_index}
            for c in red.concepts
        ],
    }


def _reduction_from_dict(d) -> ReducedSchemaMap:
    return ReducedSchemaMap(
        ConceptSchema.from_dict(d["original_schema"]),
        tuple(ConceptReduction(tuple(c["kept"]), tuple(c["replaced"]), c["reduced_index"]) for c in d["concepts"]),
    )


def to_json(compiled: CompiledRules) -> dict:
    c = compiled
    doc = {
        "head": c.head,
        "schema": c.schema.to_dict(),
        "rule": format_ast(c.rule, c.schema),
        "report": c.report(),
    }
    if c.reduction is not None:
        doc["reduction"] = _reduction_to_dict(c.reduction)
    if c.cnf is not None:
        doc["clauses"] = [sorted([i, j] for i, j in clause) for clause in c.cnf.clauses]
    if c.mask is not None:
        doc["u"] = "".join("1" if b else "0" for b in c.mask.bits)
        doc["W"] = c.placement.states
    if c.V is not None:
        doc["V"] = c.V.astype(int).tolist()
    if c.system is not None:
        doc["Ahat"] = c.system.ahat.astype(int).tolist()
        doc["Q"] = c.system.Q.astype(int).tolist()
    if c.x0 is not None:
        doc["x0"] = c.x0.point.tolist()
        doc["frozen"] = sorted(k + 1 for k in c.x0.frozen)
    return doc


def from_json(doc: dict) -> CompiledRules:
    from .logic import Cnf
    from .rule_dsl import parse_rules

    try:
        schema = ConceptSchema.from_dict(doc["schema"])
        out = CompiledRules(doc["head"], schema, parse_rules(doc["rule"], schema))
        if "reduction" in doc:
            out.reduction = _reduction_from_dict(doc["reduction"])
        if "clauses" in doc:
            out.cnf = Cnf(tuple(frozenset((i, j) for i, j in cl) for cl in doc["clauses"]))
            out.system = InequalitySystem(np.array(doc["Ahat"], dtype=float).reshape(-1, schema.n_marginals), schema.sizes)
        if "u" in doc:
            out.mask = AdmissibleMask(np.frombuffer(doc["u"].encode(), dtype=np.uint8) == ord("1"))
            out.placement = placement_matrix(out.mask)
        if "V" in doc:
            out.V = np.array(doc["V"], dtype=float)
        if "x0" in doc:
            out.x0 = InteriorPoint(np.array(doc["x0"], dtype=float), frozenset(k - 1 for k in doc["frozen"]))
    except (KeyError, TypeError, ValueError) as e:
        raise RuleheadError(f"malformed compiled artifact: {e}") from e
    return out


def save(compiled: CompiledRules, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "compiled.json").write_text(json.dumps(to_json(compiled)) + "\n", encoding="utf-8")
    (out_dir / "report.json").write_text(json.dumps(compiled.report(), indent=2) + "\n", encoding="utf-8")
    if compiled.V is not None:
        with open(out_dir / "V.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(compiled.V.astype(int).tolist())
    if compiled.mask is not None:
        with open(out_dir / "W.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "state"])
            w.writerows(enumerate(compiled.placement.states, start=1))


def load(out_dir) -> CompiledRules:
    path = Path(out_dir) / "compiled.json"
    try:
        return from_json(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as e:
        raise RuleheadError(f"cannot read {path}: {e}") from e

