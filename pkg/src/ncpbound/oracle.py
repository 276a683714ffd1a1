"""Exact ground truth for small graphs.

Subset enumeration walks a Gray code so each step flips one vertex and
updates the cut and volume in O(degree).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError, VertexSet

MAX_BRUTE_N = 24
MAX_DENSE_N = 64
WINDOW_SLACK = 1e-12


class InfeasibleWindowError(GraphError):
    """No vertex set has volume inside the requested window."""


@dataclass(frozen=True)
class BruteResult:
    phi_mu: float
    argmin_set: VertexSet
    feasible_count: int
    visited: int


def _enumerate(graph: Graph, lo: float, hi: float) -> BruteResult:
    n = graph.n
    if n > MAX_BRUTE_N:
        raise GraphError(f"brute force is capped at n = {MAX_BRUTE_N}, got {n}")
    if n < 2:
        raise GraphError("need at least two vertices")
    if not graph.is_connected():
        raise GraphError("brute-force enumeration expects a connected graph")
    nbrs = [list(zip(graph.neighbors(i).tolist(), graph.edge_weights(i).tolist())) for i in range(n)]
    deg = graph.d.tolist()
    vol_total = graph.volume_total
    lo_s = lo - WINDOW_SLACK * vol_total
    hi_s = hi + WINDOW_SLACK * vol_total

    inside = [False] * n
    bits = 0
    cut = 0.0
    vol = 0.0
    best_phi = np.inf
    best_bits = None
    feasible = 0
    visited = 0
    full = (1 << n) - 1

    for step in range(1, 1 << n):
        v = (step & -step).bit_length() - 1
        # flipping v: edges to same-side neighbors become cut, cut ones heal
        delta = 0.0
        state = inside[v]
        for u, w in nbrs[v]:
            delta += w if inside[u] == state else -w
        cut += delta
        inside[v] = not state
        bits ^= 1 << v
        vol += -deg[v] if state else deg[v]
        if bits == full:
            continue
        visited += 1
        if vol < lo_s or vol > hi_s:
            continue
        feasible += 1
        phi = cut / min(vol, vol_total - vol)
        if best_bits is None or phi < best_phi - 1e-12 * max(1.0, best_phi):
            best_phi, best_bits = phi, bits
        elif phi <= best_phi + 1e-12 * max(1.0, best_phi) and _lex_less(bits, best_bits, n):
            best_phi, best_bits = min(phi, best_phi), bits

    if best_bits is None:
        raise InfeasibleWindowError(
            f"no vertex set has volume in [{lo:.6g}, {hi:.6g}] (Vol(G) = {vol_total:.6g})"
        )
    members = [i for i in range(n) if best_bits >> i & 1]
    return BruteResult(
        phi_mu=float(best_phi),
        argmin_set=graph.vertex_set(members),
        feasible_count=feasible,
        visited=visited,
    )


def _lex_less(a: int, b: int, n: int) -> bool:
    la = [i for i in range(n) if a >> i & 1]
    lb = [i for i in range(n) if b >> i & 1]
    return la < lb


def brute_mu_conductance(graph: Graph, mu: float) -> BruteResult:
    """Minimum conductance over sets with ``mu Vol(G) <= Vol(S) <= Vol(G)/2``."""
    if not 0 <= mu <= 0.5:
        raise ValueError(f"mu must lie in [0, 1/2], got {mu}")
    vol = graph.volume_total
    return _enumerate(graph, mu * vol, vol / 2)


def brute_min_conductance(graph: Graph) -> BruteResult:
    return _enumerate(graph, 0.0, graph.volume_total / 2)


def dense_eig_reference(graph_or_matrix, *, normalized: bool = False):
    """Full ascending spectrum ``(values, vectors)`` via LAPACK.

    For a :class:`Graph` the Laplacian is used, or ``D^{-1/2} L D^{-1/2}``
    when ``normalized`` is set.
    """
    if isinstance(graph_or_matrix, Graph):
        g = graph_or_matrix
        M = g.dense_laplacian()
        if normalized:
            s = 1.0 / np.sqrt(g.d)
            M = s[:, None] * M * s[None, :]
    else:
        M = np.asarray(graph_or_matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("expected a square matrix")
    if M.shape[0] > MAX_DENSE_N:
        raise ValueError(f"dense reference is capped at n = {MAX_DENSE_N}")
    return np.linalg.eigh(0.5 * (M + M.T))
