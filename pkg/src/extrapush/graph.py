"""Directed graphs, column-stochastic mixing matrices and their stationary distributions."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .constants import EXACT_TOL, LOAD_TOL, XI_T_MAX


class GraphError(ValueError):
    pass


class MatrixError(ValueError):
    pass


class StationaryDistributionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph on nodes ``0..n-1``.

    ``edges`` holds ordered pairs ``(i, j)`` meaning ``i -> j``. Self-loops are
    implicit: every node is its own in- and out-neighbor, so edge lists never
    contain ``(i, i)``.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"node count must be >= 1, got {self.n}")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            if i == j:
                raise GraphError(f"self-loop ({i}, {i}) listed; self-loops are implicit")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "DirectedGraph":
        edges = list(edges)
        if len(set(edges)) != len(edges):
            raise GraphError("duplicate edges")
        return cls(n, frozenset(edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def out_neighbors(self, i: int) -> list[int]:
        """``N_i^out`` including ``i`` itself, ascending."""
        return sorted({i} | {j for (k, j) in self.edges if k == i})

    def in_neighbors(self, i: int) -> list[int]:
        """``N_i^in`` including ``i`` itself, ascending."""
        return sorted({i} | {k for (k, j) in self.edges if j == i})

    def out_degree(self, i: int) -> int:
        return len(self.out_neighbors(i))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = True
        return adj


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Column-stochastic ``A`` together with ``Abar = (I + A)/2``."""

    a: np.ndarray
    a_bar: np.ndarray

    @classmethod
    def from_array(cls, a, tol: float = LOAD_TOL) -> "MixingMatrix":
        a = np.array(a, dtype=np.float64)
        _check_entries(a)
        bad = validate_column_stochastic(a, tol)
        if bad:
            raise MatrixError("not column stochastic: " + "; ".join(
                f"column {v.column} off by {v.deviation:.3g}" for v in bad))
        a.setflags(write=False)
        a_bar = (np.eye(a.shape[0]) + a) / 2
        a_bar.setflags(write=False)
        return cls(a, a_bar)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def graph(self) -> DirectedGraph:
        """Graph whose edge ``j -> i`` exists iff ``A_ij > 0`` for ``i != j``."""
        rows, cols = np.nonzero(self.a)
        return DirectedGraph(self.n, frozenset((int(j), int(i)) for i, j in zip(rows, cols) if i != j))

    def is_doubly_stochastic(self, tol: float = LOAD_TOL) -> bool:
        return bool(np.all(np.abs(self.a.sum(axis=1) - 1) <= tol))


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    """Perron vector ``phi`` of ``A`` with ``D = n diag(phi)``."""

    phi: np.ndarray
    iterations: int = 0

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def d(self) -> np.ndarray:
        return np.diag(self.n * self.phi)

    @property
    def d_inv(self) -> np.ndarray:
        return np.diag(1.0 / (self.n * self.phi))

    @property
    def scale(self) -> np.ndarray:
        """Diagonal of ``D`` as a vector, ``n * phi``."""
        return self.n * self.phi


class Violation(NamedTuple):
    column: int
    deviation: float


def _check_entries(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MatrixError(f"mixing matrix must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixError("mixing matrix contains NaN or infinite entries")
    if np.any(a < 0):
        i, j = np.argwhere(a < 0)[0]
        raise MatrixError(f"negative entry A[{i},{j}] = {a[i, j]}")


def validate_column_stochastic(a, tol: float = LOAD_TOL) -> list[Violation]:
    """List the columns whose sum differs from 1 by more than ``tol``."""
    sums = np.asarray(a, dtype=np.float64).sum(axis=0)
    return [Violation(int(j), float(s - 1.0)) for j, s in enumerate(sums) if abs(s - 1.0) > tol]


def build_out_degree_mixing(g: DirectedGraph) -> MixingMatrix:
    """``A_ij = 1/d_j`` for every in-neighbor ``j`` of ``i`` (self included)."""
    a = np.zeros((g.n, g.n))
    for j in range(g.n):
        outs = g.out_neighbors(j)
        a[outs, j] = 1.0 / len(outs)
    return MixingMatrix.from_array(a, tol=EXACT_TOL)


def is_strongly_connected(g: DirectedGraph) -> bool:
    """Forward and reverse reachability from node 0."""
    fwd = {i: [] for i in range(g.n)}
    rev = {i: [] for i in range(g.n)}
    for i, j in g.edges:
        fwd[i].append(j)
        rev[j].append(i)

    def reach(adj):
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen)

    return reach(fwd) == g.n and reach(rev) == g.n


def stationary_distribution(m: MixingMatrix, tol: float = 1e-14,
                            max_power: int = 1_000_000) -> StationaryDistribution:
    """Push-sum limit ``A^t 1 / n`` by power iteration from the uniform vector.

    Stops once successive iterates differ by at most ``tol`` (2-norm). Raises
    :class:`StationaryDistributionError` for a matrix whose graph is not strongly
    connected, where the limit is not unique and positive.
    """
    if not is_strongly_connected(m.graph()):
        raise StationaryDistributionError("mixing graph is not strongly connected")
    a = m.a
    v = np.full(m.n, 1.0 / m.n)
    for k in range(1, max_power + 1):
        nxt = a @ v
        if np.linalg.norm(nxt - v) <= tol:
            phi = nxt / nxt.sum()
            phi.setflags(write=False)
            return StationaryDistribution(phi, k)
        v = nxt
    raise StationaryDistributionError(
        f"power iteration did not settle within {max_power} steps "
        "(reducible or periodic mixing matrix?)")


def power_convergence_profile(m: MixingMatrix, t_max: int,
                              phi: np.ndarray | None = None) -> list[tuple[int, float]]:
    """Frobenius deviation ``||A^t - phi 1^T||`` for ``t = 0..t_max``."""
    if phi is None:
        phi = stationary_distribution(m).phi
    limit = np.outer(phi, np.ones(m.n))
    power = np.eye(m.n)
    out = [(0, float(np.linalg.norm(power - limit)))]
    for t in range(1, t_max + 1):
        power = m.a @ power
        out.append((t, float(np.linalg.norm(power - limit))))
    return out


def xi_diagnostic(m: MixingMatrix, t_max: int = XI_T_MAX) -> float:
    """``min over 1 <= t <= t_max`` of ``min_i (A^t 1)_i``."""
    w = np.ones(m.n)
    best = np.inf
    for _ in range(t_max):
        w = m.a @ w
        best = min(best, float(w.min()))
    return best


def null_space_check(m: MixingMatrix, phi, z) -> float:
    """``max(||(I - A) z||, ||(I - phi 1^T) z||)``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    phi = np.asarray(getattr(phi, "phi", phi))
    r_mix = np.linalg.norm(z - m.a @ z)
    r_lim = np.linalg.norm(z - np.outer(phi, z.sum(axis=0)))
    return float(max(r_mix, r_lim))


# -- files ------------------------------------------------------------------

def load_graph(path) -> DirectedGraph:
    """First line ``n``; then one ``i j`` pair per directed edge, 0-indexed."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise GraphError(f"{path}: empty graph file")
    try:
        n = int(lines[0])
        edges = [tuple(int(tok) for tok in ln.split()) for ln in lines[1:]]
    except ValueError as exc:
        raise GraphError(f"{path}: {exc}") from None
    if any(len(e) != 2 for e in edges):
        raise GraphError(f"{path}: every edge line needs exactly two indices")
    return DirectedGraph.from_edges(n, edges)


def save_graph(g: DirectedGraph, path) -> None:
    lines = [str(g.n)] + [f"{i} {j}" for i, j in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mixing(path, tol: float = LOAD_TOL) -> MixingMatrix:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        a = np.array([[float(tok) for tok in row] for row in rows])
    except ValueError as exc:
        raise MatrixError(f"{path}: {exc}") from None
    if a.ndim != 2:
        raise MatrixError(f"{path}: rows have unequal lengths")
    return MixingMatrix.from_array(a, tol=tol)


def save_mixing(m: MixingMatrix, path) -> None:
    Path(path).write_text("\n".join(" ".join(f"{v:.17g}" for v in row) for row in m.a) + "\n")


# -- presets ----------------------------------------------------------------

FIVE_NODE_EDGES = ((0, 1), (0, 2), (0, 4), (1, 0), (1, 3), (1, 4), (2, 4), (3, 0), (4, 1), (4, 2))

_Q, _T, _H = Fraction(1, 4), Fraction(1, 3), Fraction(1, 2)
FIVE_NODE_RATIONAL = (
    (_Q, _Q, 0, _H, 0),
    (_Q, _Q, 0, 0, _T),
    (_Q, 0, _H, 0, _T),
    (0, _Q, 0, _H, 0),
    (_Q, _Q, _H, 0, _T),
)


def five_node_graph() -> DirectedGraph:
    """Five-node benchmark digraph used throughout the experiments."""
    return DirectedGraph.from_edges(5, FIVE_NODE_EDGES)


def five_node_mixing() -> MixingMatrix:
    return build_out_degree_mixing(five_node_graph())


def complete_digraph(n: int) -> DirectedGraph:
    return DirectedGraph.from_edges(n, [(i, j) for i in range(n) for j in range(n) if i != j])


def cycle_digraph(n: int) -> DirectedGraph:
    return DirectedGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)] if n > 1 else [])


def random_strongly_connected(n: int, rng: np.random.Generator, p_extra: float = 0.3) -> DirectedGraph:
    """Random Hamiltonian cycle plus independent extra arcs with probability ``p_extra``."""
    if n == 1:
        return DirectedGraph(1)
    order = rng.permutation(n)
    edges = {(int(order[k]), int(order[(k + 1) % n])) for k in range(n)}
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < p_extra:
                edges.add((i, j))
    return DirectedGraph(n, frozenset(edges))


def ring_graph(n: int) -> DirectedGraph:
    """Undirected ring (both directions); its out-degree mixing is symmetric doubly stochastic."""
    if n <= 2:
        return complete_digraph(n)
    return DirectedGraph.from_edges(n, [(i, (i + k) % n) for i in range(n) for k in (1, n - 1)])


def graph_preset(name: str) -> DirectedGraph:
    """``paper-fig1``, ``complete:N``, ``cycle:N`` or ``ring:N``."""
    if name == "paper-fig1":
        return five_node_graph()
    kind, _, size = name.partition(":")
    builders = {"complete": complete_digraph, "cycle": cycle_digraph, "ring": ring_graph}
    if kind not in builders or not size.isdigit() or int(size) < 1:
        raise GraphError(f"unknown graph preset {name!r}; use paper-fig1, complete:N, cycle:N or ring:N")
    return builders[kind](int(size))
