"""H-representation of the feasible marginal polytope.

Every CNF clause K gives one inequality ``sum_{(i,j) in K} p[i,j] >= 1``. With
the simplex constraints on each concept block this yields

    A p >= b,  A = [Ahat; I],  b = [1; 0]
    Q p  = 1,  Q = block-ones

and the polytope equals the convex hull of the vertex matrix columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible
from .logic import Cnf
from .schema import ConceptSchema

STEP_MARGIN = 1e-6


@dataclass(frozen=True)
class InequalitySystem:
    ahat: np.ndarray  # (n_clauses, s), 0/1
    sizes: tuple[int, ...]

    @property
    def n_clauses(self) -> int:
        return self.ahat.shape[0]

    @property
    def s(self) -> int:
        return self.ahat.shape[1]

    @property
    def A(self) -> np.ndarray:
        return np.vstack([self.ahat, np.eye(self.s)])

    @property
    def b(self) -> np.ndarray:
        return np.concatenate([np.ones(self.n_clauses), np.zeros(self.s)])

    @property
    def Q(self) -> np.ndarray:
        q = np.zeros((len(self.sizes), self.s))
        start = 0
        for i, n in enumerate(self.sizes):
            q[i, start : start + n] = 1.0
            start += n
        return q


def clauses_to_inequalities(cnf: Cnf, schema: ConceptSchema) -> InequalitySystem:
    ahat = np.zeros((len(cnf.clauses), schema.n_marginals))
    for r, clause in enumerate(cnf.clauses):
        for i, j in clause:
            ahat[r, schema.flat_index(i, j)] = 1.0
    return InequalitySystem(ahat, schema.sizes)


def contains(sys: InequalitySystem, p, tol=1e-9):
    """Membership test; vectorised over leading axes of ``p``."""
    p = np.asarray(p, dtype=float)
    ok_ineq = np.all(p @ sys.A.T >= sys.b - tol, axis=-1)
    ok_eq = np.all(np.abs(p @ sys.Q.T - 1.0) <= tol, axis=-1)
    return ok_ineq & ok_eq


# --- dense simplex --------------------------------------------------------------


def _pivot(T, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]


def _run_simplex(T, basis, n_cols, tol):
    """Maximise with Bland's rule. Last row of T holds reduced costs (c_B B^-1 A - c)."""
    m = T.shape[0] - 1
    for _ in range(50_000):
        entering = next((j for j in range(n_cols) if T[-1, j] < -tol), None)
        if entering is None:
            return
        best, leaving = None, None
        for r in range(m):
            a = T[r, entering]
            if a > tol:
                ratio = T[r, -1] / a
                if best is None or ratio < best - tol or (abs(ratio - best) <= tol and basis[r] < basis[leaving]):
                    best, leaving = ratio, r
        if leaving is None:
            raise ValueError("unbounded")
        _pivot(T, leaving, entering)
        basis[leaving] = entering
    raise RuntimeError("simplex iteration limit reached")


def simplex_max(c, A_eq, b_eq, tol=1e-9):
    """max c.x s.t. A_eq x = b_eq, x >= 0. Two-phase dense tableau, Bland's rule."""
    c = np.asarray(c, dtype=float)
    A = np.array(A_eq, dtype=float)
    b = np.array(b_eq, dtype=float)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    m, n = A.shape
    # phase 1: artificial basis
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n : n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    _run_simplex(T, basis, n + m, tol)
    if T[-1, -1] < -1e-7:
        raise Infeasible("constraint system has no feasible point")
    # drive remaining artificials out of the basis
    for r in range(m):
        if basis[r] >= n:
            col = next((j for j in range(n) if abs(T[r, j]) > tol), None)
            if col is not None:
                _pivot(T, r, col)
                basis[r] = col
    keep = [r for r in range(m) if basis[r] < n]
    T2 = np.zeros((len(keep) + 1, n + 1))
    T2[:-1, :n] = T[keep, :n]
    T2[:-1, -1] = T[keep, -1]
    basis2 = [basis[r] for r in keep]
    T2[-1, :n] = -c
    for r, j in enumerate(basis2):
        T2[-1] += c[j] * T2[r]
    _run_simplex(T2, basis2, n, tol)
    x = np.zeros(n)
    for r, j in enumerate(basis2):
        x[j] = T2[r, -1]
    return float(c @ x), x


def lp_max(sys: InequalitySystem, objective):
    """Maximise ``objective . p`` over the polytope. Returns ``(value, point)``."""
    s, nc = sys.s, sys.n_clauses
    # variables: p (s), clause surplus (nc)
    A_eq = np.zeros((nc + len(sys.sizes), s + nc))
    A_eq[:nc, :s] = sys.ahat
    A_eq[:nc, s:] = -np.eye(nc)
    A_eq[nc:, :s] = sys.Q
    b_eq = np.concatenate([np.ones(nc), np.ones(len(sys.sizes))])
    c = np.concatenate([np.asarray(objective, dtype=float), np.zeros(nc)])
    try:
        value, x = simplex_max(c, A_eq, b_eq)
    except ValueError as e:  # cannot happen for a bounded polytope
        raise Infeasible(str(e)) from e
    return value, x[:s]


# --- interior point --------------------------------------------------------------


@dataclass(frozen=True)
class InteriorPoint:
    point: np.ndarray
    frozen: frozenset = field(default_factory=frozenset)


def interior_point(V: np.ndarray) -> InteriorPoint:
    """Vertex centroid; coordinates shared by all vertices are frozen."""
    V = np.asarray(V, dtype=float)
    point = V.mean(axis=1)
    frozen = frozenset(int(k) for k in np.flatnonzero(np.ptp(V, axis=1) == 0))
    return InteriorPoint(point, frozen)


def interior_point_lp(sys: InequalitySystem, tol=1e-9) -> InteriorPoint:
    """Relative-interior point without vertex enumeration.

    For each inequality row, maximise its left-hand side; rows whose maximum
    equals the bound are implicit equalities. The average of the maximisers is
    strict on every other row.
    """
    A, b = sys.A, sys.b
    points = []
    for r in range(A.shape[0]):
        value, x = lp_max(sys, A[r])
        if value > b[r] + tol:
            points.append(x)
    if not points:
        _, x = lp_max(sys, np.zeros(sys.s))
        points.append(x)
    point = np.mean(points, axis=0)
    lo = np.array([-lp_max(sys, -e)[0] for e in np.eye(sys.s)])
    hi = np.array([lp_max(sys, e)[0] for e in np.eye(sys.s)])
    frozen = frozenset(int(k) for k in np.flatnonzero(hi - lo <= tol))
    return InteriorPoint(point, frozen)


# --- ray map into the polytope -----------------------------------------------------


@dataclass(frozen=True)
class RayMap:
    """Precomputed pieces of the direction-and-gate map into the polytope.

    ``projector`` projects onto the linear space parallel to the polytope's
    affine hull (frozen coordinates and implicit equality rows included);
    ``active`` marks inequality rows that can bound a step from ``x0``.
    """

    A: np.ndarray
    slack: np.ndarray
    active: np.ndarray
    projector: np.ndarray
    x0: np.ndarray

    @classmethod
    def build(cls, sys: InequalitySystem, x0: InteriorPoint, tol=1e-12):
        A = sys.A
        slack = A @ x0.point - sys.b
        implicit = slack <= 1e-10
        eq = np.vstack([sys.Q, A[implicit]])
        basis = _null_space(eq)
        projector = basis @ basis.T
        return cls(A, slack, ~implicit, projector, x0.point.copy())

    def forward(self, direction: np.ndarray, gate: np.ndarray):
        """Returns ``(out, cache)``; vectorised over a leading batch axis."""
        direction = np.atleast_2d(np.asarray(direction, dtype=float))
        gate = np.asarray(gate, dtype=float).reshape(-1)
        d = direction @ self.projector
        norm = np.linalg.norm(d, axis=1)
        live = norm >= 1e-12
        u = np.zeros_like(d)
        u[live] = d[live] / norm[live, None]
        rates = u @ self.A.T
        bounding = (rates < -1e-12) & self.active[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.where(bounding, self.slack[None, :] / -rates, np.inf)
        row = np.argmin(steps, axis=1)
        alpha = steps[np.arange(len(u)), row]
        live &= np.isfinite(alpha)
        alpha = np.where(live, alpha, 0.0)
        scale = gate * (1.0 - STEP_MARGIN) * alpha
        out = self.x0[None, :] + scale[:, None] * u
        return out, (u, norm, alpha, row, live, rates)

    def backward(self, gate, cache, g_out):
        """Cotangents for ``(direction, gate)``; the bounding row is held fixed."""
        u, norm, alpha, row, live, rates = cache
        gate = np.asarray(gate, dtype=float).reshape(-1)
        g_out = np.atleast_2d(g_out)
        k = 1.0 - STEP_MARGIN
        ug = np.einsum("bi,bi->b", u, g_out)
        g_gate = np.where(live, k * alpha * ug, 0.0)
        a_row = self.A[row]
        rate = rates[np.arange(len(u)), row]
        safe_rate = np.where(live, rate, -1.0)
        dalpha_du = (np.where(live, self.slack[row], 0.0) / safe_rate**2)[:, None] * a_row
        g_u = (gate * k)[:, None] * (alpha[:, None] * g_out + ug[:, None] * dalpha_du)
        radial = np.einsum("bi,bi->b", u, g_u)
        safe_norm = np.where(live, norm, 1.0)
        g_d = np.where(live[:, None], (g_u - radial[:, None] * u) / safe_norm[:, None], 0.0)
        return g_d @ self.projector, g_gate


def _null_space(M: np.ndarray, tol=1e-10) -> np.ndarray:
    """Orthonormal basis (columns) of the null space of M."""
    if M.size == 0:
        return np.eye(M.shape[1])
    _, sv, vt = np.linalg.svd(M)
    rank = int(np.sum(sv > tol * max(1.0, sv[0])))
    return vt[rank:].T


def map_to_polytope(direction, gate, x0: InteriorPoint, sys: InequalitySystem):
    """Move from ``x0`` along ``direction`` for a ``gate`` fraction of the way to the boundary."""
    ray = RayMap.build(sys, x0)
    out, _ = ray.forward(direction, np.atleast_1d(gate))
    return out[0] if np.ndim(direction) == 1 else out
