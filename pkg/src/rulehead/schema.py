"""Concept schemas and the flat layout of marginal vectors.

Outcomes are 1-based everywhere a user can see them. The concatenated marginal
vector is laid out concept-major: ``[p(0); p(1); ...; p(m)]`` with 0-based flat
indices.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError

UINT64_MAX = 2**64 - 1


@dataclass(frozen=True)
class Concept:
    name: str
    values: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if len(self.values) < 2:
            raise SchemaError(f"concept {self.name!r} needs at least 2 outcomes")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"duplicate value names in concept {self.name!r}")

    @property
    def size(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ConceptSchema:
    """Ordered concepts; index 0 is the prediction target."""

    concepts: tuple[Concept, ...]

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        if not self.concepts:
            raise SchemaError("schema has no concepts")
        names = [c.name for c in self.concepts]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate concept names")

    @classmethod
    def from_sizes(cls, sizes, names=None) -> ConceptSchema:
        names = names or [f"c{i}" for i in range(len(sizes))]
        return cls(
            tuple(
                Concept(name, tuple(f"v{j}" for j in range(1, n + 1)))
                for name, n in zip(names, sizes)
            )
        )

    def __len__(self):
        return len(self.concepts)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.size for c in self.concepts)

    @property
    def n_states(self) -> int:
        """Number of joint states ``t``."""
        return math.prod(self.sizes)

    @property
    def n_marginals(self) -> int:
        """Length ``s`` of the concatenated marginal vector."""
        return sum(self.sizes)

    def check_state_count(self):
        if self.n_states > UINT64_MAX:
            raise SchemaError(f"{self.n_states} joint states do not fit in 64 bits")

    def block_offset(self, i: int) -> int:
        if not 0 <= i < len(self.concepts):
            raise IndexError(f"concept index {i} out of range")
        return sum(self.sizes[:i])

    def block_slices(self) -> list[slice]:
        out, start = [], 0
        for n in self.sizes:
            out.append(slice(start, start + n))
            start += n
        return out

    def flat_index(self, i: int, j: int) -> int:
        """0-based flat position of outcome ``j`` (1-based) of concept ``i``."""
        if not 1 <= j <= self.sizes[i]:
            raise IndexError(f"outcome {j} out of range for concept {i}")
        return self.block_offset(i) + j - 1

    def concept_index(self, name: str) -> int:
        for i, c in enumerate(self.concepts):
            if c.name == name:
                return i
        raise KeyError(name)

    def value_index(self, i: int, value: str) -> int:
        try:
            return self.concepts[i].values.index(value) + 1
        except ValueError:
            raise KeyError(value) from None

    def check_vector(self, c) -> tuple[int, ...]:
        c = tuple(int(v) for v in c)
        if len(c) != len(self.concepts):
            raise SchemaError(f"concept vector has length {len(c)}, expected {len(self)}")
        for v, n in zip(c, self.sizes):
            if not 1 <= v <= n:
                raise SchemaError(f"outcome {v} out of range 1..{n}")
        return c

    def check_marginals(self, p, tol=1e-9) -> bool:
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.n_marginals or np.any(p < -tol):
            return False
        return all(np.all(np.abs(p[..., sl].sum(-1) - 1.0) <= tol) for sl in self.block_slices())

    def to_dict(self) -> dict:
        return {"concepts": [{"name": c.name, "values": list(c.values)} for c in self.concepts]}

    @classmethod
    def from_dict(cls, d) -> ConceptSchema:
        try:
            return cls(tuple(Concept(c["name"], tuple(c["values"])) for c in d["concepts"]))
        except (KeyError, TypeError) as e:
            raise SchemaError(f"malformed schema: {e}") from e

    @classmethod
    def load(cls, path) -> ConceptSchema:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: {e}") from e

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def block_offset(schema: ConceptSchema, i: int) -> int:
    return schema.block_offset(i)
