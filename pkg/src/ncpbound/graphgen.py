"""Core decomposition and a geometric core-periphery generator."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import Graph, GraphError, induced_subgraph

log = logging.getLogger(__name__)


class EmptyCoreError(GraphError):
    """Requested k exceeds the largest core number."""


@dataclass(frozen=True)
class CoreDecomposition:
    core_number: np.ndarray
    order: np.ndarray

    @property
    def max_core(self) -> int:
        return int(self.core_number.max(initial=0))

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.core_number >= k)


def core_numbers(graph: Graph) -> CoreDecomposition:
    """Core number of every vertex by bucket peeling in ``O(n + m)``.

    Degrees count neighbors, so edge weights are ignored. ``order`` is the
    peeling order.
    """
    n = graph.n
    indptr, indices = graph.indptr, graph.indices
    deg = np.diff(indptr).astype(np.int64)
    if n == 0:
        return CoreDecomposition(deg.copy(), deg.copy())
    maxd = int(deg.max())
    # vertices sorted by degree, with bin starts and positions
    counts = np.bincount(deg, minlength=maxd + 1)
    start = np.zeros(maxd + 2, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    vert = np.argsort(deg, kind="stable")
    pos = np.empty(n, dtype=np.int64)
    pos[vert] = np.arange(n)
    bin_start = start[:-1].copy()
    deg = deg.tolist()
    vert = vert.tolist()
    pos = pos.tolist()
    bin_start = bin_start.tolist()
    for i in range(n):
        v = vert[i]
        dv = deg[v]
        for u in indices[indptr[v] : indptr[v + 1]].tolist():
            du = deg[u]
            if du > dv:
                # move u to the front of its bin, then shrink the bin
                pu, pw = pos[u], bin_start[du]
                w = vert[pw]
                if u != w:
                    vert[pu], vert[pw] = w, u
                    pos[u], pos[w] = pw, pu
                bin_start[du] += 1
                deg[u] = du - 1
    return CoreDecomposition(np.array(deg, dtype=np.int64), np.array(vert, dtype=np.int64))


def naive_core_numbers(graph: Graph) -> np.ndarray:
    """Core numbers by repeated deletion of low-degree vertices; quadratic,
    kept as a reference for the bucket version."""
    n = graph.n
    alive = np.ones(n, dtype=bool)
    deg = np.diff(graph.indptr).astype(np.int64)
    core = np.zeros(n, dtype=np.int64)
    k = 0
    while alive.any():
        low = np.flatnonzero(alive & (deg <= k))
        if low.size == 0:
            k += 1
            continue
        for v in low:
            core[v] = k
            alive[v] = False
            nb = graph.neighbors(v)
            deg[nb[alive[nb]]] -= 1
    return core


def k_core_subgraph(graph: Graph, k: int, decomposition: CoreDecomposition | None = None):
    """Induced subgraph on vertices with core number at least ``k``.

    Returns ``(subgraph, kept)`` with ``kept[new] = old``. The result may be
    disconnected. Raises :class:`EmptyCoreError` when ``k`` exceeds the
    largest core.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    dec = decomposition or core_numbers(graph)
    kept = dec.members(k)
    if kept.size == 0:
        raise EmptyCoreError(f"the {k}-core is empty (max core number is {dec.max_core})")
    return induced_subgraph(graph, kept), kept


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the core-periphery point cloud.

    With ``count_self`` the point itself is one of its ``neighbors``
    nearest points, so each vertex links to ``neighbors - 1`` others; this
    is the reading that reproduces about 1327 edges at ``n = 537``.
    """

    n: int = 537
    dim: int = 2
    core_fraction: float = 0.10
    core_scale: float = 0.1
    periphery_scale: float = 1.5
    neighbors: int = 5
    count_self: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.core_fraction < 1:
            raise ValueError("core_fraction must lie in (0, 1)")
        if self.neighbors < 1:
            raise ValueError("neighbors must be at least 1")
        if self.count_self and self.neighbors < 2:
            raise ValueError("neighbors must be at least 2 when the point counts itself")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.n < self.neighbors + 1:
            raise ValueError(f"need n >= neighbors + 1, got n={self.n}")

    @property
    def links(self) -> int:
        return self.neighbors - 1 if self.count_self else self.neighbors

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SynthGraph:
    graph: Graph
    points: np.ndarray
    is_core: np.ndarray


def knn_edges(points: np.ndarray, links: int) -> tuple[np.ndarray, np.ndarray]:
    """Directed edges from each point to its ``links`` nearest others,
    exact all-pairs Euclidean, ties broken by index."""
    sq = np.einsum("ij,ij->i", points, points)
    dist = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.fill_diagonal(dist, np.inf)
    nbrs = np.argsort(dist, axis=1, kind="stable")[:, :links]
    src = np.repeat(np.arange(len(points)), links)
    return src, nbrs.ravel()


def _has_duplicates(points: np.ndarray) -> bool:
    return len(np.unique(points, axis=0)) < len(points)


def generate_core_periphery(config: SynthConfig, *, max_retries: int = 5) -> SynthGraph:
    """Unweighted kNN graph over a dense core and a sparse periphery.

    Points are standard normal; a random ``core_fraction`` of them is shrunk
    by ``core_scale`` and the rest stretched by ``periphery_scale``.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n
    pts = rng.standard_normal((n, config.dim))
    n_core = max(1, int(round(config.core_fraction * n)))
    core = np.zeros(n, dtype=bool)
    core[rng.choice(n, size=n_core, replace=False)] = True
    pts *= np.where(core, config.core_scale, config.periphery_scale)[:, None]
    for attempt in range(max_retries + 1):
        if not _has_duplicates(pts):
            break
        if attempt == max_retries:
            raise GraphError("duplicate points persist after jittering")
        log.warning("duplicate points in synthetic cloud; jittering (attempt %d)", attempt + 1)
        pts = pts + 1e-9 * rng.standard_normal(pts.shape)
    u, v = knn_edges(pts, config.links)
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    pairs = np.unique(np.stack([lo, hi], axis=1), axis=0)
    g = Graph.from_edges(n, pairs[:, 0], pairs[:, 1])
    return SynthGraph(g, pts, core)


def write_coordinates(synth: SynthGraph, path) -> None:
    """CSV with columns ``vertex, x0..x{dim-1}, is_core``."""
    dim = synth.points.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", *[f"x{i}" for i in range(dim)], "is_core"])
        for i, row in enumerate(synth.points):
            w.writerow([i, *(format(float(x), ".17g") for x in row), int(synth.is_core[i])])


def random_connected(n: int, p: float, seed: int, *, max_tries: int = 1000) -> Graph:
    """Erdos-Renyi ``G(n, p)`` redrawn until connected."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        u, v = np.nonzero(np.triu(rng.random((n, n)) < p, 1))
        g = Graph.from_edges(n, u, v)
        if g.is_connected():
            return g
    raise GraphError(f"no connected G({n}, {p}) in {max_tries} draws")
