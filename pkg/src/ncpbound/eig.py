"""Extreme eigenpairs of sparse symmetric operators, matvec only.

The solver is a Lanczos iteration with full reorthogonalization and thick
restarts. Rayleigh-Ritz is done on the explicitly projected matrix
``V^T A V`` rather than the tridiagonal, which keeps restarts simple and
costs nothing noticeable at the basis sizes used here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .graph import DisconnectedGraphError, Graph, laplacian_matvec

DEFAULT_TOL = 1e-8
ZERO_EIG_THRESHOLD = 1e-10


@dataclass(frozen=True)
class SymOperator:
    n: int
    matvec: Callable[[np.ndarray], np.ndarray]
    diagonal: Optional[np.ndarray] = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x)

    def to_dense(self) -> np.ndarray:
        return np.column_stack([self.matvec(e) for e in np.eye(self.n)])


@dataclass(frozen=True)
class EigResult:
    value: float
    vector: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool


def dense_operator(M) -> SymOperator:
    M = np.asarray(M, dtype=float)
    return SymOperator(M.shape[0], lambda x: M @ x, np.diag(M).copy())


def laplacian_operator(graph: Graph) -> SymOperator:
    return SymOperator(graph.n, lambda x: laplacian_matvec(graph, x), graph.d.copy())


def normalized_laplacian_operator(graph: Graph) -> SymOperator:
    """``D^{-1/2} L D^{-1/2}``."""
    s = 1.0 / np.sqrt(graph.d)
    return SymOperator(graph.n, lambda x: s * laplacian_matvec(graph, s * x), np.ones(graph.n))


def default_max_iter(n: int) -> int:
    return min(10 * n, 5000)


def _orthogonalize(w: np.ndarray, *bases: np.ndarray) -> np.ndarray:
    # two passes of classical Gram-Schmidt
    for _ in range(2):
        for B in bases:
            if B is not None and B.shape[1]:
                w = w - B @ (B.T @ w)
    return w


def smallest_eigenpair(
    op: SymOperator,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    deflation_vectors: np.ndarray | None = None,
    *,
    seed: int = 0,
    max_basis: int = 300,
    keep: int = 8,
) -> EigResult:
    """Smallest algebraic eigenpair of ``op`` restricted to the orthogonal
    complement of ``deflation_vectors`` (orthonormal columns).

    ``iterations`` counts operator applications. A result with
    ``converged=False`` is still the best Ritz pair found.
    """
    n = op.n
    if n < 2:
        raise ValueError("operator dimension must be at least 2")
    Q = None
    if deflation_vectors is not None:
        Q = np.asarray(deflation_vectors, dtype=float)
        Q = Q.reshape(n, -1)
        if Q.shape[1] == 0:
            Q = None
    free_dim = n - (0 if Q is None else Q.shape[1])
    if free_dim < 1:
        raise ValueError("deflation leaves no room for an eigenvector")
    max_iter = default_max_iter(n) if max_iter is None else max_iter
    if Q is not None:
        # work with the compression P A P, P the projector onto span(Q)^perp
        raw = op
        op = SymOperator(n, lambda x: _orthogonalize(raw(x), Q))
    m = min(free_dim, max(max_basis, 2 * keep + 2))
    rng = np.random.default_rng(seed)

    def fresh_vector(V):
        for _ in range(5):
            v = _orthogonalize(rng.standard_normal(n), Q, V)
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                return v / nv
        return None

    V = np.empty((n, 0))
    W = np.empty((n, 0))
    H = np.empty((0, 0))
    v = fresh_vector(V)
    matvecs = 0
    best = None
    since_check = 0

    while True:
        w = op(v)
        matvecs += 1
        V = np.column_stack([V, v])
        W = np.column_stack([W, w])
        h = V.T @ w
        H = np.block([[H, h[:-1, None]], [h[None, :-1], h[-1:, None]]])
        j = V.shape[1]
        since_check += 1

        nxt = _orthogonalize(w, Q, V)
        nrm = np.linalg.norm(nxt)
        exhausted = nrm <= 1e-10 * max(1.0, np.linalg.norm(w))
        full = j >= m
        out_of_budget = matvecs >= max_iter

        if exhausted or full or out_of_budget or since_check >= min(10, max(1, j // 8)):
            since_check = 0
            nk = min(keep, j)
            vals, U = scipy.linalg.eigh(0.5 * (H + H.T), subset_by_index=[0, nk - 1])
            x = V @ U[:, 0]
            rn = float(np.linalg.norm(W @ U[:, 0] - vals[0] * x))
            best = (float(vals[0]), x)
            if rn <= tol or out_of_budget or (exhausted and j >= free_dim):
                break
            if full:
                # thick restart: keep the lowest Ritz vectors; nxt stays
                # orthogonal to their span
                V, W, H = V @ U, W @ U, np.diag(vals)
        v = fresh_vector(V) if exhausted else nxt / nrm
        if v is None:
            break

    value, x = best
    x = _orthogonalize(x, Q)
    x = x / np.linalg.norm(x)
    ax = op(x)
    value = float(x @ ax)
    residual = float(np.linalg.norm(ax - value * x))
    return EigResult(
        value=value,
        vector=x,
        residual_norm=residual,
        iterations=matvecs + 1,
        converged=residual <= tol,
    )


def smallest_eigenpairs(
    op: SymOperator,
    nev: int,
    tol: float = DEFAULT_TOL,
    max_iter: int | None = None,
    deflation_vectors: np.ndarray | None = None,
    *,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """``nev`` smallest pairs by successive explicit deflation.

    Locking one vector at a time finds repeated eigenvalues, which a single
    Krylov sequence cannot. A final Rayleigh-Ritz pass over the locked block
    cleans up cross-contamination. Returns ``(values, vectors, residuals,
    converged)``.
    """
    n = op.n
    base = np.empty((n, 0)) if deflation_vectors is None else np.asarray(deflation_vectors).reshape(n, -1)
    locked = np.empty((n, 0))
    ok = True
    for i in range(nev):
        res = smallest_eigenpair(
            op, tol=tol, max_iter=max_iter, deflation_vectors=np.column_stack([base, locked]),
            seed=seed + i,
        )
        ok &= res.converged
        locked = np.column_stack([locked, res.vector])
    locked, _ = np.linalg.qr(locked)
    AV = np.column_stack([op(locked[:, i]) for i in range(nev)])
    H = locked.T @ AV
    vals, U = np.linalg.eigh(0.5 * (H + H.T))
    vecs = locked @ U
    AV = AV @ U
    residuals = np.linalg.norm(AV - vecs * vals, axis=0)
    return vals, vecs, residuals, bool(ok and np.all(residuals <= 10 * tol))


def smallest_k_nonzero_generalized(
    graph: Graph, k: int, tol: float = DEFAULT_TOL, *, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """The ``k`` smallest nonzero pairs of ``L x = lambda D x``.

    Vectors are returned as columns of an ``n x k`` matrix, D-orthonormal
    and orthogonal to ``d``.
    """
    if graph.n < 2 or np.any(graph.d <= 0):
        raise DisconnectedGraphError(
            "graph has isolated vertices; extract the largest connected component first"
        )
    if not 1 <= k < graph.n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={graph.n}")
    sqrt_d = np.sqrt(graph.d)
    null = (sqrt_d / np.linalg.norm(sqrt_d))[:, None]
    vals, V, _, converged = smallest_eigenpairs(
        normalized_laplacian_operator(graph), k, tol=tol, deflation_vectors=null, seed=seed
    )
    if vals[0] < ZERO_EIG_THRESHOLD:
        raise DisconnectedGraphError(
            "second zero eigenvalue of the normalized Laplacian: graph is disconnected; "
            "extract the largest connected component first"
        )
    X = V / sqrt_d[:, None]
    # restore exact orthogonality to d lost in the back-transform
    X -= np.outer(np.ones(graph.n), (graph.d @ X) / graph.volume_total)
    G = X.T @ (graph.d[:, None] * X)
    C = np.linalg.cholesky(G)
    X = np.linalg.solve(C, X.T).T
    return vals, X


def lambda2(graph: Graph, tol: float = DEFAULT_TOL) -> float:
    vals, _ = smallest_k_nonzero_generalized(graph, 1, tol=tol)
    return float(vals[0])


def lambda2_lower_bound_point(graph: Graph, tol: float = DEFAULT_TOL) -> float:
    """``lambda_2 / 2``: the volume-independent lower bound on conductance."""
    return 0.5 * lambda2(graph, tol=tol)
