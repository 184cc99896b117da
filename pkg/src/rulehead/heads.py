"""Concept heads: final layers whose marginal outputs always satisfy the rules.

Every head maps a batch of raw inputs ``z`` (shape ``(B, input_width)``) to
concatenated marginals ``p`` (shape ``(B, s)``), and provides the exact
vector-Jacobian product for training. All arithmetic is float64.
"""
from __future__ import annotations

import numpy as np

from .polytope import InequalitySystem, InteriorPoint, RayMap
from .schema import ConceptSchema
from .state_space import AdmissibleMask, PlacementMatrix, ReducedSchemaMap, expand_compressed_marginals, marginalize

KINDS = ("base", "as", "vertex", "constraints", "independent")


def softmax(z, where=None):
    z = np.asarray(z, dtype=float)
    if where is not None:
        z = np.where(where, z, -np.inf)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_vjp(prob, g):
    return prob * (g - np.sum(prob * g, axis=-1, keepdims=True))


def sigmoid(x):
    e = np.exp(-np.abs(np.asarray(x, dtype=float)))
    return np.where(x >= 0, 1.0, e) / (1.0 + e)


def marginal_vjp(g_p, schema: ConceptSchema):
    """Cotangent of ``marginalize``: joint state k collects g at its outcomes."""
    g_p = np.atleast_2d(g_p)
    nb, m = g_p.shape[0], len(schema)
    cube = np.zeros((nb,) + schema.sizes)
    for i, sl in enumerate(schema.block_slices()):
        shape = [nb] + [1] * m
        shape[i + 1] = schema.sizes[i]
        cube = cube + g_p[:, sl].reshape(shape)
    return cube.reshape(nb, -1)


class Head:
    kind: str
    schema: ConceptSchema

    @property
    def input_width(self) -> int:
        raise NotImplementedError

    @property
    def output_width(self) -> int:
        return self.schema.n_marginals

    def forward(self, z):
        """Returns ``(p, cache)``."""
        raise NotImplementedError

    def backward(self, cache, g_p):
        raise NotImplementedError

    def __call__(self, z):
        return self.forward(np.atleast_2d(np.asarray(z, dtype=float)))[0]


class BaseHead(Head):
    """Softmax over all t joint states, renormalised on the admissible ones."""

    kind = "base"

    def __init__(self, schema: ConceptSchema, mask: AdmissibleMask):
        self.schema = schema
        self.mask = mask

    @property
    def input_width(self):
        return self.mask.n_states

    def forward(self, z):
        pi = softmax(z, where=self.mask.bits)
        return marginalize(pi, self.schema), pi

    def backward(self, pi, g_p):
        return softmax_vjp(pi, marginal_vjp(g_p, self.schema))


class ASHead(Head):
    """Softmax over admissible states only, placed into the joint vector by W."""

    kind = "as"

    def __init__(self, schema: ConceptSchema, placement: PlacementMatrix):
        self.schema = schema
        self.placement = placement

    @property
    def input_width(self):
        return self.placement.d

    def forward(self, z):
        pi_t = softmax(z)
        return marginalize(self.placement.apply(pi_t), self.schema), pi_t

    def backward(self, pi_t, g_p):
        g_pi = marginal_vjp(g_p, self.schema)[:, self.placement.columns]
        return softmax_vjp(pi_t, g_pi)


class VertexHead(Head):
    """Convex combination of polytope vertices with softmax weights."""

    kind = "vertex"

    def __init__(self, schema: ConceptSchema, V: np.ndarray):
        self.schema = schema
        self.V = np.asarray(V, dtype=float)

    @property
    def input_width(self):
        return self.V.shape[1]

    def forward(self, z):
        w = softmax(z)
        return w @ self.V.T, w

    def backward(self, w, g_p):
        return softmax_vjp(w, np.atleast_2d(g_p) @ self.V)


class ConstraintsHead(Head):
    """Ray from an interior point, gated by a sigmoid; needs only the H-system.

    Input is ``s`` direction entries followed by one gate logit.
    """

    kind = "constraints"

    def __init__(self, schema: ConceptSchema, system: InequalitySystem, x0: InteriorPoint):
        self.schema = schema
        self.system = system
        self.x0 = x0
        self.ray = RayMap.build(system, x0)

    @property
    def input_width(self):
        return self.schema.n_marginals + 1

    def forward(self, z):
        z = np.atleast_2d(z)
        gate = sigmoid(z[:, -1])
        out, cache = self.ray.forward(z[:, :-1], gate)
        return out, (gate, cache)

    def backward(self, cache, g_p):
        gate, ray_cache = cache
        g_dir, g_gate = self.ray.backward(gate, ray_cache, g_p)
        return np.concatenate([g_dir, (g_gate * gate * (1.0 - gate))[:, None]], axis=1)


class IndependentHead(Head):
    """One softmax per concept, no coupling and no rules (baseline)."""

    kind = "independent"

    def __init__(self, schema: ConceptSchema):
        self.schema = schema

    @property
    def input_width(self):
        return self.schema.n_marginals

    def forward(self, z):
        p = np.concatenate([softmax(z[:, sl]) for sl in self.schema.block_slices()], axis=1)
        return p, p

    def backward(self, p, g_p):
        g_p = np.atleast_2d(g_p)
        return np.concatenate(
            [softmax_vjp(p[:, sl], g_p[:, sl]) for sl in self.schema.block_slices()], axis=1
        )


class ReducedHead(Head):
    """A head over a reduced schema plus plain softmax heads for replaced outcomes.

    Output is over the original schema: a replaced outcome gets the compressed
    0-outcome probability times its share from the replacement head.
    """

    def __init__(self, inner: Head, reduction: ReducedSchemaMap):
        self.inner = inner
        self.reduction = reduction
        self.schema = reduction.original
        self.kind = inner.kind
        # (concept, slice into z) for every concept with >= 2 replaced outcomes
        self.extra = []
        start = inner.input_width
        for i, cr in enumerate(reduction.concepts):
            if len(cr.replaced) >= 2:
                self.extra.append((i, slice(start, start + len(cr.replaced))))
                start += len(cr.replaced)
        self._width = start

    @property
    def input_width(self):
        return self._width

    def forward(self, z):
        z = np.atleast_2d(z)
        q, inner_cache = self.inner.forward(z[:, : self.inner.input_width])
        repl = {i: softmax(z[:, sl]) for i, sl in self.extra}
        p = expand_compressed_marginals(q, self.reduction, repl, self.inner.schema)
        return p, (q, inner_cache, repl)

    def backward(self, cache, g_p):
        q, inner_cache, repl = cache
        g_p = np.atleast_2d(g_p)
        orig_sl = self.schema.block_slices()
        red_sl = self.inner.schema.block_slices()
        g_q = np.zeros_like(q)
        g_z = np.zeros((q.shape[0], self._width))
        extra = dict(self.extra)
        for i, cr in enumerate(self.reduction.concepts):
            g_block = g_p[:, orig_sl[i]]
            rep_idx = [v - 1 for v in cr.replaced]
            if not cr.untouched:
                sl = red_sl[cr.reduced_index]
                off = 1 if cr.has_zero else 0
                g_q[:, sl.start + off : sl.stop] = g_block[:, [v - 1 for v in cr.kept]]
            if not cr.replaced:
                continue
            r = repl.get(i, np.ones((q.shape[0], 1)))
            if cr.has_zero:
                g_q[:, red_sl[cr.reduced_index].start] = np.sum(g_block[:, rep_idx] * r, axis=1)
            if i in extra:
                zero = 1.0 if cr.untouched else q[:, red_sl[cr.reduced_index].start][:, None]
                g_z[:, extra[i]] = softmax_vjp(r, g_block[:, rep_idx] * zero)
        g_z[:, : self.inner.input_width] = self.inner.backward(inner_cache, g_q)
        return g_z


# functional forms ------------------------------------------------------------------


def base_head_forward(logits, mask: AdmissibleMask, schema: ConceptSchema):
    return BaseHead(schema, mask)(logits)


def as_head_forward(logits, placement: PlacementMatrix, schema: ConceptSchema):
    return ASHead(schema, placement)(logits)


def vertex_head_forward(logits, V):
    V = np.asarray(V, dtype=float)
    return softmax(np.atleast_2d(logits)) @ V.T


def constraints_head_forward(raw, gate_raw, system: InequalitySystem, x0: InteriorPoint, schema: ConceptSchema):
    z = np.concatenate([np.atleast_2d(raw), np.reshape(gate_raw, (-1, 1))], axis=1)
    return ConstraintsHead(schema, system, x0)(z)


def head_backward(head: Head, z, g_p):
    """Exact VJP of ``head`` at input ``z`` for output cotangent ``g_p``."""
    _, cache = head.forward(np.atleast_2d(np.asarray(z, dtype=float)))
    return head.backward(cache, np.atleast_2d(g_p))
