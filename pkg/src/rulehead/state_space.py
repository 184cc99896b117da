"""Joint concept states and the objects built by enumerating them.

Joint states are numbered 1..t in mixed radix with concept 0 most significant,
so for the woodpecker schema (2, 2, 3) state 1 is (1, 1, 1) and state 7 is
(2, 1, 1).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EnumerationBudgetExceeded, SchemaError, UnsatisfiableRule
from .logic import evaluate_batch
from .rule_dsl import TRUE, And, Const, Iff, Implies, Lit, Not, Or, Rule, walk
from .schema import Concept, ConceptSchema

DEFAULT_STATE_BUDGET = 2**24


def encode_state(c, schema: ConceptSchema) -> int:
    c = schema.check_vector(c)
    k = 0
    for v, n in zip(c, schema.sizes):
        k = k * n + (v - 1)
    return k + 1


def decode_state(k: int, schema: ConceptSchema) -> tuple[int, ...]:
    t = schema.n_states
    if not 1 <= k <= t:
        raise IndexError(f"state {k} out of range 1..{t}")
    k -= 1
    out = []
    for n in reversed(schema.sizes):
        k, r = divmod(k, n)
        out.append(r + 1)
    return tuple(reversed(out))


def check_budget(schema: ConceptSchema, budget=DEFAULT_STATE_BUDGET):
    schema.check_state_count()
    if schema.n_states > budget:
        raise EnumerationBudgetExceeded(
            f"{schema.n_states} joint states exceed the budget of {budget}; "
            "reduce the schema (--reduce) or use the constraints head"
        )


def enumerate_states(schema: ConceptSchema, budget=DEFAULT_STATE_BUDGET) -> np.ndarray:
    """All joint states as a ``(t, m+1)`` array of 1-based outcomes, in index order."""
    check_budget(schema, budget)
    dtype = np.int8 if max(schema.sizes) < 127 else np.int32
    grid = np.indices(schema.sizes, dtype=dtype).reshape(len(schema), -1).T
    return grid + 1


@dataclass(frozen=True)
class AdmissibleMask:
    bits: np.ndarray  # bool, length t

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def n_states(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class PlacementMatrix:
    """Sparse form of W: ``columns[k]`` is the 0-based joint state of admissible slot k."""

    columns: np.ndarray
    n_states: int

    @property
    def d(self) -> int:
        return len(self.columns)

    @property
    def states(self) -> list[int]:
        """1-based joint state index of every column."""
        return [int(k) + 1 for k in self.columns]

    def apply(self, pi_tilde: np.ndarray) -> np.ndarray:
        pi_tilde = np.asarray(pi_tilde, dtype=float)
        out = np.zeros(pi_tilde.shape[:-1] + (self.n_states,))
        out[..., self.columns] = pi_tilde
        return out

    def dense(self) -> np.ndarray:
        w = np.zeros((self.n_states, self.d))
        w[self.columns, np.arange(self.d)] = 1.0
        return w


def admissible_bits(ast: Rule, schema: ConceptSchema, budget=DEFAULT_STATE_BUDGET) -> np.ndarray:
    return evaluate_batch(ast, enumerate_states(schema, budget))


def admissible_mask(ast: Rule, schema: ConceptSchema, budget=DEFAULT_STATE_BUDGET) -> AdmissibleMask:
    bits = admissible_bits(ast, schema, budget)
    if not bits.any():
        raise UnsatisfiableRule("no joint state satisfies the rules")
    return AdmissibleMask(bits)


def placement_matrix(mask: AdmissibleMask) -> PlacementMatrix:
    return PlacementMatrix(np.flatnonzero(mask.bits), mask.n_states)


def marginalize(pi: np.ndarray, schema: ConceptSchema) -> np.ndarray:
    """Per-concept marginals of joint distributions over the last axis."""
    pi = np.asarray(pi, dtype=float)
    lead = pi.shape[:-1]
    cube = pi.reshape(lead + schema.sizes)
    nl = len(lead)
    axes = range(nl, nl + len(schema))
    blocks = [cube.sum(axis=tuple(a for a in axes if a != ax)) for ax in axes]
    return np.concatenate(blocks, axis=-1)


def one_hot_states(states: np.ndarray, schema: ConceptSchema) -> np.ndarray:
    """Concatenated one-hot encodings, shape ``(len(states), s)``."""
    out = np.zeros((states.shape[0], schema.n_marginals))
    rows = np.arange(states.shape[0])
    for i in range(len(schema)):
        out[rows, schema.block_offset(i) + states[:, i].astype(int) - 1] = 1.0
    return out


def vertex_matrix(mask: AdmissibleMask, schema: ConceptSchema, budget=DEFAULT_STATE_BUDGET) -> np.ndarray:
    """Dense ``s x d`` matrix whose columns are the vertices of the marginal polytope."""
    if schema.n_marginals * mask.count > budget:
        raise EnumerationBudgetExceeded(
            f"vertex matrix of {schema.n_marginals}x{mask.count} exceeds the budget of {budget}"
        )
    states = enumerate_states(schema)[mask.bits]
    return one_hot_states(states, schema).T


# --- state-space reduction ---------------------------------------------------


@dataclass(frozen=True)
class ConceptReduction:
    """How one original concept appears in the reduced schema.

    ``kept`` lists original outcomes that survive as themselves; ``replaced``
    lists those merged into the artificial 0 outcome. An untouched concept has
    every outcome replaced and no place in the reduced schema.
    """

    kept: tuple[int, ...]
    replaced: tuple[int, ...]
    reduced_index: int | None  # position in the reduced schema

    @property
    def untouched(self) -> bool:
        return self.reduced_index is None

    @property
    def has_zero(self) -> bool:
        return bool(self.replaced) and not self.untouched

    @property
    def compressed_outcomes(self) -> tuple[int, ...]:
        """Compressed outcome labels, 0 standing for the replaced group."""
        return ((0,) if self.has_zero else ()) + self.kept

    def reduced_outcome(self, v: int) -> int:
        """1-based reduced outcome for original outcome ``v``."""
        if v in self.replaced:
            return 1
        return self.kept.index(v) + 1 + (1 if self.has_zero else 0)


@dataclass(frozen=True)
class ReducedSchemaMap:
    original: ConceptSchema
    concepts: tuple[ConceptReduction, ...]

    @property
    def touched(self) -> list[int]:
        return [i for i, c in enumerate(self.concepts) if not c.untouched]

    def reduce_states(self, states: np.ndarray) -> np.ndarray:
        """Map original joint states (rows, 1-based) to reduced ones."""
        cols = []
        for i in self.touched:
            red = self.concepts[i]
            lut = np.zeros(self.original.sizes[i] + 1, dtype=np.int32)
            for v in range(1, self.original.sizes[i] + 1):
                lut[v] = red.reduced_outcome(v)
            cols.append(lut[states[:, i].astype(int)])
        return np.stack(cols, axis=1) if cols else np.zeros((len(states), 0), dtype=np.int32)


def _atoms(n: int, literal_sets) -> list[frozenset]:
    """Partition 1..n by membership pattern across the literal outcome sets."""
    groups = {}
    for v in range(1, n + 1):
        key = tuple(v in s for s in literal_sets)
        groups.setdefault(key, []).append(v)
    return [frozenset(g) for g in groups.values()]


def _zero_group(n: int, literal_sets) -> frozenset:
    """Outcomes to merge into the 0 outcome; empty if nothing should merge.

    The merged group must never be split by a literal. Outcomes mentioned by no
    literal are merged, as are the outcomes of the largest indistinguishable
    group when that group is bigger (so ``c IN {2,3,4}`` over four outcomes
    keeps only outcome 1).
    """
    atoms = _atoms(n, literal_sets)
    unmentioned = frozenset(v for v in range(1, n + 1) if not any(v in s for s in literal_sets))
    best = max(atoms, key=lambda a: (len(a), a == unmentioned, -min(a)))
    if len(best) > max(1, len(unmentioned)):
        return best
    return unmentioned


def _rewrite(ast: Rule, red: ReducedSchemaMap) -> Rule:
    if isinstance(ast, Lit):
        cr = red.concepts[ast.concept]
        if cr.untouched:
            return TRUE
        return Lit(cr.reduced_index, {cr.reduced_outcome(v) for v in ast.outcomes})
    if isinstance(ast, Const):
        return ast
    if isinstance(ast, Not):
        return Not(_rewrite(ast.arg, red))
    if isinstance(ast, And):
        return And(*(_rewrite(a, red) for a in ast.args))
    if isinstance(ast, Or):
        return Or(*(_rewrite(a, red) for a in ast.args))
    if isinstance(ast, Implies):
        return Implies(_rewrite(ast.lhs, red), _rewrite(ast.rhs, red))
    if isinstance(ast, Iff):
        return Iff(_rewrite(ast.lhs, red), _rewrite(ast.rhs, red))
    raise TypeError(f"not a rule node: {ast!r}")


OTHER = "other"


def reduce_schema(ast: Rule, schema: ConceptSchema):
    """Compress outcomes the rules never distinguish into a 0 outcome.

    Returns ``(reduced_schema, ReducedSchemaMap, rewritten_ast)``. Concepts the
    rules never mention are dropped from the reduced schema (they get their own
    plain classification head).
    """
    literal_sets = {}
    for node in walk(ast):
        if isinstance(node, Lit):
            literal_sets.setdefault(node.concept, []).append(set(node.outcomes))
    reductions, concepts = [], []
    for i, concept in enumerate(schema.concepts):
        n = concept.size
        if i not in literal_sets:
            reductions.append(ConceptReduction((), tuple(range(1, n + 1)), None))
            continue
        zero = _zero_group(n, literal_sets[i])
        if len(zero) == n:
            # every literal on this concept is constant
            reductions.append(ConceptReduction((), tuple(range(1, n + 1)), None))
            continue
        kept = tuple(v for v in range(1, n + 1) if v not in zero)
        cr = ConceptReduction(kept, tuple(sorted(zero)), len(concepts))
        values = [concept.values[v - 1] for v in kept]
        if cr.has_zero:
            other = OTHER
            while other in values:
                other += "_"
            values.insert(0, other)
        if len(values) < 2:
            raise SchemaError(f"concept {concept.name!r} collapses to a single outcome")
        reductions.append(cr)
        concepts.append(Concept(concept.name, tuple(values)))
    if not concepts:
        # a constant rule mentions nothing; keep concept 0 so the schema is valid
        reductions[0] = ConceptReduction(tuple(range(1, schema.sizes[0] + 1)), (), 0)
        concepts.append(schema.concepts[0])
    red_map = ReducedSchemaMap(schema, tuple(reductions))
    return ConceptSchema(tuple(concepts)), red_map, _rewrite(ast, red_map)


def expand_mask(reduced_bits: np.ndarray, red: ReducedSchemaMap, reduced_schema: ConceptSchema) -> np.ndarray:
    """Admissibility of every original joint state, read off the reduced mask."""
    states = enumerate_states(red.original)
    reduced_states = red.reduce_states(states)
    idx = np.zeros(len(states), dtype=np.int64)
    for col, n in enumerate(reduced_schema.sizes):
        idx = idx * n + (reduced_states[:, col] - 1)
    return np.asarray(reduced_bits)[idx]


def expand_compressed_marginals(
    compressed: np.ndarray, red: ReducedSchemaMap, replacement_probs: dict, reduced_schema: ConceptSchema
) -> np.ndarray:
    """Marginals over the original schema.

    ``replacement_probs[i]`` is the distribution over ``red.concepts[i].replaced``
    (in that order). It may be omitted when a single outcome was replaced. For
    untouched concepts it is the whole marginal.
    """
    compressed = np.asarray(compressed, dtype=float)
    lead = compressed.shape[:-1]
    blocks = []
    slices = reduced_schema.block_slices()
    for i, cr in enumerate(red.concepts):
        n = red.original.sizes[i]
        block = np.zeros(lead + (n,))
        if cr.replaced:
            r = replacement_probs.get(i)
            if r is None:
                if len(cr.replaced) != 1:
                    raise ValueError(f"concept {i} needs replacement probabilities")
                r = np.ones(lead + (1,))
            r = np.asarray(r, dtype=float)
            zero = 1.0 if cr.untouched else compressed[..., slices[cr.reduced_index]][..., :1]
            block[..., [v - 1 for v in cr.replaced]] = zero * r
        if cr.kept:
            src = compressed[..., slices[cr.reduced_index]]
            off = 1 if cr.has_zero else 0
            block[..., [v - 1 for v in cr.kept]] = src[..., off:]
        blocks.append(block)
    return np.concatenate(blocks, axis=-1)
