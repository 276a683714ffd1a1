"""Undirected weighted graphs stored as symmetric CSR, plus set primitives.

Everything downstream works with :class:`Graph`: vertex ids are dense
``0..n-1``, each undirected edge is stored as two arcs, and the Laplacian
is never formed explicitly (``L x = d * x - A x``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class GraphError(ValueError):
    """Invalid graph or vertex-set input."""


class EdgeListParseError(GraphError):
    def __init__(self, path, lineno: int, line: str, reason: str):
        self.path = str(path)
        self.lineno = lineno
        self.line = line
        super().__init__(f"{path}:{lineno}: {reason}: {line!r}")


class DisconnectedGraphError(GraphError):
    """Raised by solver entry points that need a connected graph."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable symmetric sparse graph.

    ``indptr``/``indices``/``weights`` are CSR arrays with sorted neighbor
    lists. ``labels[i]`` is the id vertex ``i`` had in the source it was
    built from (file ids, or ids of a parent graph after subgraphing).
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    d: np.ndarray = field(init=False)
    volume_total: float = field(init=False)

    def __post_init__(self):
        n = len(self.indptr) - 1
        for name in ("indptr", "indices", "weights", "labels"):
            getattr(self, name).setflags(write=False)
        rows = np.repeat(np.arange(n), np.diff(self.indptr))
        d = np.bincount(rows, weights=self.weights, minlength=n).astype(float)
        d.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "volume_total", float(self.weights.sum()))

    # -- construction -------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, u, v, w=None, labels=None) -> "Graph":
        """Build from undirected edges; both arcs are inserted and duplicates summed.

        Self-loops are dropped. Weights must be strictly positive.
        """
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.ones(len(u)) if w is None else np.asarray(w, dtype=float)
        if not (len(u) == len(v) == len(w)):
            raise GraphError("edge arrays differ in length")
        if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise GraphError("edge endpoint out of range")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise GraphError("edge weights must be finite and strictly positive")
        keep = u != v
        u, v, w = u[keep], v[keep], w[keep]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        vals = np.concatenate([w, w])
        return cls.from_sparse(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)), labels=labels)

    @classmethod
    def from_sparse(cls, A, labels=None) -> "Graph":
        """Build from a symmetric sparse (or dense) adjacency matrix."""
        A = sp.csr_matrix(A, dtype=float)
        A.sum_duplicates()
        A.setdiag(0)
        A.eliminate_zeros()
        A.sort_indices()
        n = A.shape[0]
        if A.shape != (n, n):
            raise GraphError("adjacency must be square")
        if np.any(A.data < 0):
            raise GraphError("negative edge weight")
        if (A - A.T).count_nonzero() and abs(A - A.T).max() > 1e-12 * max(1.0, abs(A).max()):
            raise GraphError("adjacency is not symmetric")
        labels = np.arange(n) if labels is None else np.asarray(labels)
        if len(labels) != n:
            raise GraphError("labels length does not match vertex count")
        return cls(
            indptr=A.indptr.astype(np.int64),
            indices=A.indices.astype(np.int64),
            weights=A.data.astype(float),
            labels=labels.copy(),
        )

    # -- basic accessors ----------------------------------------------

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def num_arcs(self) -> int:
        return len(self.indices)

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def adjacency(self) -> sp.csr_matrix:
        A = self.__dict__.get("_A")
        if A is None:
            A = sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(self.n, self.n))
            object.__setattr__(self, "_A", A)
        return A

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def edge_weights(self, i: int) -> np.ndarray:
        return self.weights[self.indptr[i] : self.indptr[i + 1]]

    def unweighted_degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Undirected edges ``(u, v, w)`` with ``u < v``."""
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        upper = rows < self.indices
        return rows[upper], self.indices[upper], self.weights[upper]

    def dense_laplacian(self) -> np.ndarray:
        return np.diag(self.d) - self.adjacency.toarray()

    def vertex_set(self, members: Iterable[int]) -> "VertexSet":
        return VertexSet.of(self, members)

    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        ncomp, _ = connected_components(self.adjacency, directed=False)
        return ncomp == 1

    def require_solver_ready(self) -> None:
        """Entry check for spectral / SDP solvers."""
        if self.n < 2:
            raise GraphError("graph needs at least two vertices")
        if np.any(self.d <= 0):
            raise DisconnectedGraphError(
                "graph has isolated vertices; extract the largest connected component first"
            )
        if not self.is_connected():
            raise DisconnectedGraphError(
                "graph is disconnected; extract the largest connected component first"
            )


@dataclass(frozen=True, eq=False)
class VertexSet:
    members: np.ndarray
    volume: float
    n: int

    @classmethod
    def of(cls, graph: Graph, members: Iterable[int]) -> "VertexSet":
        m = np.asarray(sorted(members), dtype=np.int64)
        if len(m) and (m[0] < 0 or m[-1] >= graph.n):
            raise GraphError("vertex id out of range")
        if len(np.unique(m)) != len(m):
            raise GraphError("duplicate vertex ids")
        m.setflags(write=False)
        return cls(members=m, volume=float(graph.d[m].sum()), n=graph.n)

    def __len__(self) -> int:
        return len(self.members)

    def mask(self) -> np.ndarray:
        x = np.zeros(self.n, dtype=bool)
        x[self.members] = True
        return x

    def indicator(self) -> np.ndarray:
        return self.mask().astype(float)


def _as_set(graph: Graph, S) -> VertexSet:
    if isinstance(S, VertexSet):
        if S.n != graph.n:
            raise GraphError("vertex set belongs to a graph of different size")
        return S
    return VertexSet.of(graph, S)


def _check_proper(graph: Graph, S: VertexSet) -> None:
    if len(S) == 0 or len(S) == graph.n:
        raise GraphError("set must be nonempty and not the whole vertex set")


def boundary(graph: Graph, S) -> float:
    """Total weight of edges with exactly one endpoint in ``S``."""
    S = _as_set(graph, S)
    mask = S.mask()
    # iterate over arcs leaving the side with fewer vertices
    side = S.members if len(S) <= graph.n - len(S) else np.flatnonzero(~mask)
    inside = mask if side is S.members else ~mask
    rows = graph.adjacency[side]
    return float(rows.data[~inside[rows.indices]].sum())


def conductance(graph: Graph, S) -> float:
    S = _as_set(graph, S)
    _check_proper(graph, S)
    denom = min(S.volume, graph.volume_total - S.volume)
    if denom <= 0:
        raise GraphError("set or complement has zero volume")
    return boundary(graph, S) / denom


def psi_vector(graph: Graph, S) -> np.ndarray:
    """Shifted, rescaled indicator with ``psi @ d == 0`` and ``psi @ (d * psi) == 1``."""
    S = _as_set(graph, S)
    _check_proper(graph, S)
    vol = graph.volume_total
    vs, vc = S.volume, vol - S.volume
    if vs <= 0 or vc <= 0:
        raise GraphError("set or complement has zero volume")
    return np.sqrt(vol / (vs * vc)) * (S.indicator() - vs / vol)


def laplacian_matvec(graph: Graph, x) -> np.ndarray:
    """``L @ x`` for a vector or an ``n x k`` block."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != graph.n:
        raise GraphError(f"dimension mismatch: expected {graph.n} rows, got {x.shape[0]}")
    dx = graph.d * x if x.ndim == 1 else graph.d[:, None] * x
    return dx - graph.adjacency @ x


def quadratic_form(graph: Graph, x) -> float:
    """``x^T L x``, or ``Tr(X^T L X)`` for a block."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * laplacian_matvec(graph, x)))


def induced_subgraph(graph: Graph, vertices: Sequence[int]) -> Graph:
    vertices = np.asarray(vertices, dtype=np.int64)
    A = graph.adjacency[vertices][:, vertices]
    return Graph.from_sparse(A, labels=graph.labels[vertices])


def largest_connected_component(graph: Graph) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on the largest component.

    Returns ``(subgraph, kept)`` where ``kept[new_id] = old_id``. Equal-size
    components are ranked by their smallest vertex id.
    """
    if graph.n == 0:
        raise GraphError("empty graph")
    _, comp = connected_components(graph.adjacency, directed=False)
    sizes = np.bincount(comp)
    # component ids are assigned in order of first vertex, so argmax picks
    # the component with the smallest minimum id among the largest ones
    best = int(np.argmax(sizes))
    kept = np.flatnonzero(comp == best)
    if len(kept) == graph.n:
        return graph, kept
    return induced_subgraph(graph, kept), kept


def load_edge_list(
    path,
    *,
    zero_indexed: bool = True,
    weighted: bool | None = None,
    comment_prefixes: Sequence[str] = ("#", "%"),
    symmetric: bool = False,
) -> Graph:
    """Read a whitespace-separated ``u v [w]`` edge list.

    By default each line is an undirected edge; both arcs are inserted and
    repeated edges have their weights summed, so ``0 1`` and ``1 0`` give a
    weight-2 edge. With ``symmetric=True`` the file is taken to already list
    every edge in both directions, and each line contributes a single arc.

    Vertices are relabeled densely in increasing order of file id, so a
    file that already uses ``0..n-1`` keeps its ids; the original ids are kept in ``Graph.labels`` (shifted to 0-based when
    ``zero_indexed`` is false). ``weighted=None`` reads a third column when
    present.
    """
    path = Path(path)
    seen: set[int] = set()
    us, vs, ws = [], [], []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or any(line.startswith(p) for p in comment_prefixes):
                continue
            parts = line.split()
            if len(parts) < 2 or len(parts) > 3:
                raise EdgeListParseError(path, lineno, line, "expected 'u v [w]'")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeListParseError(path, lineno, line, "vertex ids must be integers") from None
            w = 1.0
            if len(parts) == 3 and weighted is not False:
                try:
                    w = float(parts[2])
                except ValueError:
                    raise EdgeListParseError(path, lineno, line, "weight is not a number") from None
                if w < 0:
                    raise GraphError(f"{path}:{lineno}: negative weight {w}")
            elif weighted and len(parts) == 2:
                raise EdgeListParseError(path, lineno, line, "missing weight column")
            seen.update((a, b))
            if a == b or w == 0:
                continue
            us.append(a)
            vs.append(b)
            ws.append(w)
    labels = np.array(sorted(seen), dtype=np.int64)
    n = len(labels)
    us = np.searchsorted(labels, np.asarray(us, dtype=np.int64))
    vs = np.searchsorted(labels, np.asarray(vs, dtype=np.int64))
    if not zero_indexed:
        labels = labels - 1
    if not symmetric:
        return Graph.from_edges(n, us, vs, ws, labels=labels)
    A = sp.coo_matrix((np.asarray(ws, float), (us, vs)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A = A.maximum(A.T)
    return Graph.from_sparse(A, labels=labels)


def write_edge_list(graph: Graph, path, *, use_labels: bool = False) -> None:
    u, v, w = graph.edges()
    if use_labels:
        u, v = graph.labels[u], graph.labels[v]
    unweighted = np.all(w == 1.0)
    with Path(path).open("w") as fh:
        for a, b, c in zip(u, v, w):
            fh.write(f"{a} {b}\n" if unweighted else f"{a} {b} {c!r}\n")
