"""Low-rank (Burer-Monteiro) program for mu-conductance, solved by an
augmented Lagrangian method.

Variables are a factor ``Y`` (n x k) standing in for ``X = Y Y^T`` and a
slack ``s`` that turns the two-sided bound on ``Diag(X)`` into a box::

    minimize    Tr(Y^T L Y)
    subject to  Tr(Y^T D Y) = 1                       (e)
                ||Y^T d||^2 = 0                       (f)
                Diag(Y Y^T) + s = cap_hi * 1          (g)
                0 <= s <= s_hi                        (h), (i)

with ``cap_hi = (1-mu) / (mu Vol(G))`` and
``s_hi = (1-2mu) / (mu (1-mu) Vol(G))``. The equalities are handled by the
augmented Lagrangian; the box is left to L-BFGS-B. ``Y Y^T`` is never formed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .eig import smallest_k_nonzero_generalized
from .graph import Graph, laplacian_matvec

log = logging.getLogger(__name__)

DEFAULT_K = 5
RANK_GRID = (1, 3, 5, 10)


@dataclass(frozen=True, eq=False)
class MuProblem:
    graph: Graph
    mu: float
    k: int = DEFAULT_K

    def __post_init__(self):
        if not 0 < self.mu <= 0.5:
            raise ValueError(f"mu must lie in (0, 1/2], got {self.mu}")
        if self.k < 1:
            raise ValueError(f"rank k must be >= 1, got {self.k}")

    @property
    def cap_hi(self) -> float:
        return (1 - self.mu) / (self.mu * self.graph.volume_total)

    @property
    def s_hi(self) -> float:
        if self.mu == 0.5:
            return 0.0
        return (1 - 2 * self.mu) / (self.mu * (1 - self.mu) * self.graph.volume_total)

    @property
    def trace_cap(self) -> float:
        """Upper bound on ``Tr(X)`` over the feasible set: ``min{1, (1-mu) n / (mu Vol)}``.

        The first term comes from ``Tr(X) <= Tr(DX) = 1``, which needs every
        degree to be at least 1; for lighter weighted graphs it becomes
        ``1 / min(d)``.
        """
        dmin = float(self.graph.d.min())
        return min(1.0 / min(dmin, 1.0), (1 - self.mu) * self.graph.n / (self.mu * self.graph.volume_total))


@dataclass
class AlmConfig:
    sigma0: float = 10.0
    sigma_growth: float = 10.0
    sigma_max: float = 1e12
    tol_stat: float = 1e-5
    tol_feas: float = 1e-5
    max_outer: int = 100
    max_inner: int = 20000
    lbfgs_memory: int = 3
    seed: int = 0
    inner_tol0: float = 1e-3
    feas_decrease: float = 0.25
    stall_outer: int = 5
    eliminate_slack: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AlmConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown AlmConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "AlmConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LrsdpState:
    Y: np.ndarray
    s: np.ndarray
    lam: float = 0.0
    beta: float = 0.0
    gamma: np.ndarray | None = None
    sigma: float = 10.0

    def __post_init__(self):
        if self.gamma is None:
            self.gamma = np.zeros(len(self.s))

    def copy(self) -> "LrsdpState":
        return LrsdpState(self.Y.copy(), self.s.copy(), self.lam, self.beta, self.gamma.copy(), self.sigma)


def constraint_residuals(Y: np.ndarray, s: np.ndarray, prob: MuProblem):
    """``(c_e, c_f, c_g)`` for constraints (e), (f), (g)."""
    d = prob.graph.d
    c_e = float(np.sum(d[:, None] * Y * Y) - 1.0)
    ytd = Y.T @ d
    c_f = float(ytd @ ytd)
    c_g = np.einsum("ij,ij->i", Y, Y) + s - prob.cap_hi
    return c_e, c_f, c_g


def _evaluate(Y, s, lam, beta, gamma, sigma, prob: MuProblem, *, need_grad=True):
    g = prob.graph
    d = g.d
    LY = laplacian_matvec(g, Y)
    DY = d[:, None] * Y
    objective = float(np.sum(Y * LY))
    c_e = float(np.sum(Y * DY) - 1.0)
    ytd = Y.T @ d
    c_f = float(ytd @ ytd)
    c_g = np.einsum("ij,ij->i", Y, Y) + s - prob.cap_hi
    value = (
        objective
        - lam * c_e
        - beta * c_f
        - float(gamma @ c_g)
        + 0.5 * sigma * (c_e * c_e + c_f * c_f + float(c_g @ c_g))
    )
    if not need_grad:
        return value, None, None
    lam_eff = lam - sigma * c_e
    beta_eff = beta - sigma * c_f
    gam_eff = gamma - sigma * c_g
    gY = 2.0 * LY - 2.0 * lam_eff * DY - 2.0 * beta_eff * np.outer(d, ytd) - 2.0 * gam_eff[:, None] * Y
    gs = -gam_eff
    return value, gY, gs


def augmented_lagrangian(state: LrsdpState, prob: MuProblem) -> float:
    _check_dims(state, prob)
    return _evaluate(state.Y, state.s, state.lam, state.beta, state.gamma, state.sigma, prob, need_grad=False)[0]


def augmented_lagrangian_gradient(state: LrsdpState, prob: MuProblem) -> tuple[np.ndarray, np.ndarray]:
    _check_dims(state, prob)
    _, gY, gs = _evaluate(state.Y, state.s, state.lam, state.beta, state.gamma, state.sigma, prob)
    return gY, gs


def _check_dims(state: LrsdpState, prob: MuProblem) -> None:
    n = prob.graph.n
    if state.Y.ndim != 2 or state.Y.shape[0] != n or state.s.shape != (n,) or state.gamma.shape != (n,):
        raise ValueError("state dimensions do not match the graph")


def projected_gradient_norm(state: LrsdpState, prob: MuProblem) -> float:
    """Infinity norm of the box-projected gradient of the augmented Lagrangian."""
    gY, gs = augmented_lagrangian_gradient(state, prob)
    ps = state.s - np.clip(state.s - gs, 0.0, prob.s_hi)
    return float(max(np.abs(gY).max(initial=0.0), np.abs(ps).max(initial=0.0)))


@dataclass
class InnerResult:
    state: LrsdpState
    iterations: int
    evaluations: int
    projected_gradient: float
    success: bool
    message: str
    trace: list[float] = field(default_factory=list)


DENSE_LAPLACIAN_MAX_N = 400


def optimal_slack(Y: np.ndarray, gamma: np.ndarray, sigma: float, prob: MuProblem) -> np.ndarray:
    """Exact minimizer of the augmented Lagrangian over ``s`` in its box
    for fixed ``Y``; the problem separates by row."""
    r = np.einsum("ij,ij->i", Y, Y)
    return np.clip(prob.cap_hi - r + gamma / sigma, 0.0, prob.s_hi)


def _make_objective(prob: MuProblem, lam, beta, gamma, sigma, k, *, eliminate_slack: bool = False):
    """Flat-vector value and gradient of the augmented Lagrangian for the
    inner solver; same quantities as ``_evaluate`` with the per-call
    overhead stripped, which dominates on small graphs.

    With ``eliminate_slack`` the vector holds ``Y`` only and ``s`` is set to
    its exact box minimizer at every call. The reduced function is C^1 and,
    since ``s`` is optimal, its gradient is the ``Y`` block of the full one.
    """
    g = prob.graph
    n = g.n
    nk = n * k
    d = g.d
    dcol = d[:, None]
    cap = prob.cap_hi
    L = g.dense_laplacian() if n <= DENSE_LAPLACIAN_MAX_N else None
    A = g.adjacency
    gamma = np.asarray(gamma, dtype=float)
    half_sigma = 0.5 * sigma
    s_hi = prob.s_hi
    s_target = cap + gamma / sigma

    def fun(x):
        Y = x[:nk].reshape(n, k)
        if eliminate_slack:
            s = np.clip(s_target - np.einsum("ij,ij->i", Y, Y), 0.0, s_hi)
        else:
            s = x[nk:]
        LY = L @ Y if L is not None else dcol * Y - A @ Y
        DY = dcol * Y
        objective = float(np.vdot(Y, LY))
        c_e = float(np.vdot(Y, DY)) - 1.0
        ytd = d @ Y
        c_f = float(ytd @ ytd)
        c_g = np.einsum("ij,ij->i", Y, Y)
        c_g += s
        c_g -= cap
        gam_eff = gamma - sigma * c_g
        value = (
            objective - lam * c_e - beta * c_f - float(gamma @ c_g)
            + half_sigma * (c_e * c_e + c_f * c_f + float(c_g @ c_g))
        )
        lam_eff = lam - sigma * c_e
        beta_eff = beta - sigma * c_f
        gY = 2.0 * (LY - lam_eff * DY - beta_eff * np.outer(d, ytd) - gam_eff[:, None] * Y)
        if eliminate_slack:
            return value, gY.ravel()
        return value, np.concatenate([gY.ravel(), -gam_eff])

    return fun


def inner_solve(
    state: LrsdpState,
    prob: MuProblem,
    inner_tol: float,
    *,
    max_iter: int = 20000,
    memory: int = 3,
    record_trace: bool = False,
    eliminate_slack: bool = False,
) -> InnerResult:
    """Minimize the augmented Lagrangian over ``Y`` (free) and ``s`` (boxed)
    with multipliers and penalty held fixed.

    By default L-BFGS-B carries ``s`` with its box. ``eliminate_slack``
    minimizes over ``Y`` alone with ``s`` replaced by its exact box
    minimizer, which removes the stiff coupling between a row and its slack
    at large penalties.

    ``success`` is false when L-BFGS-B stops for any reason other than the
    projected-gradient test (line-search failure, iteration cap); the last
    iterate is returned either way.
    """
    n, k = state.Y.shape
    s_hi = prob.s_hi
    lam, beta, gamma, sigma = state.lam, state.beta, state.gamma, state.sigma

    fun = _make_objective(prob, lam, beta, gamma, sigma, k, eliminate_slack=eliminate_slack)

    start = state.copy()
    if eliminate_slack:
        start.s = optimal_slack(state.Y, gamma, sigma, prob)
        x0 = state.Y.ravel().copy()
    else:
        start.s = np.clip(state.s, 0.0, s_hi)
        x0 = np.concatenate([state.Y.ravel(), start.s])
    if projected_gradient_norm(start, prob) <= inner_tol:
        trace = [augmented_lagrangian(start, prob)] if record_trace else []
        return InnerResult(start, 0, 1, projected_gradient_norm(start, prob), True, "already stationary", trace)

    trace: list[float] = []
    callback = None
    if record_trace:
        trace.append(fun(x0)[0])

        def callback(intermediate_result):
            trace.append(float(intermediate_result.fun))

    bounds = [(None, None)] * (n * k)
    if not eliminate_slack:
        bounds += [(0.0, s_hi)] * n
    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={"maxcor": memory, "gtol": inner_tol, "ftol": 0.0, "maxiter": max_iter, "maxfun": 2 * max_iter},
    )
    out = state.copy()
    out.Y = res.x[: n * k].reshape(n, k).copy()
    if eliminate_slack:
        out.s = optimal_slack(out.Y, gamma, sigma, prob)
    else:
        out.s = np.clip(res.x[n * k :], 0.0, s_hi)
    pg = projected_gradient_norm(out, prob)
    message = res.message if isinstance(res.message, str) else res.message.decode()
    return InnerResult(out, int(res.nit), int(res.nfev), pg, pg <= inner_tol, message, trace)


def initialize(prob: MuProblem, sigma0: float = 10.0, *, seed: int = 0) -> LrsdpState:
    """Start from the ``k`` lowest nontrivial normalized-Laplacian eigenvectors,
    mapped back by ``D^{-1/2}`` and scaled so ``Tr(Y^T D Y) = 1``."""
    g = prob.graph
    g.require_solver_ready()
    if prob.k >= g.n:
        raise ValueError(f"rank k={prob.k} must be smaller than n={g.n}")
    _, X = smallest_k_nonzero_generalized(g, prob.k, seed=seed)
    Y0 = X / math.sqrt(prob.k)
    s0 = np.clip(prob.cap_hi - np.einsum("ij,ij->i", Y0, Y0), 0.0, prob.s_hi)
    return LrsdpState(Y=Y0, s=s0, lam=0.0, beta=0.0, gamma=np.zeros(g.n), sigma=sigma0)


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    stationarity_s: float
    c_e: float
    c_f: float
    c_g_inf: float
    feasibility: float
    comp_lower: float
    comp_upper: float


@dataclass(frozen=True, eq=False)
class KktSolution:
    """Primal-dual point returned by :func:`alm_solve`.

    ``lam``, ``beta``, ``gamma`` are the first-order multiplier estimates at
    the final iterate. ``g_box`` and ``l_box`` are the multipliers of
    ``s >= 0`` and ``s <= s_hi``.
    """

    problem: MuProblem
    Y: np.ndarray
    s: np.ndarray
    lam: float
    beta: float
    gamma: np.ndarray
    g_box: np.ndarray
    l_box: np.ndarray
    objective: float
    residuals: KktResiduals
    converged: bool
    outer_iterations: int
    inner_iterations: int
    sigma: float
    history: tuple = ()

    @classmethod
    def at(cls, state: LrsdpState, prob: MuProblem, **info) -> "KktSolution":
        Y, s = state.Y, state.s
        c_e, c_f, c_g = constraint_residuals(Y, s, prob)
        lam = state.lam - state.sigma * c_e
        beta = state.beta - state.sigma * c_f
        gamma = state.gamma - state.sigma * c_g
        g_box, l_box = box_multipliers(s, gamma, prob.s_hi)
        res = kkt_residuals(prob, Y, s, lam, beta, gamma, g_box, l_box)
        objective = float(np.sum(Y * laplacian_matvec(prob.graph, Y)))
        return cls(problem=prob, Y=Y, s=s, lam=lam, beta=beta, gamma=gamma, g_box=g_box,
                   l_box=l_box, objective=objective, residuals=res, sigma=state.sigma, **info)

    @property
    def mu(self) -> float:
        return self.problem.mu

    @property
    def k(self) -> int:
        return self.problem.k


def box_multipliers(s: np.ndarray, gamma: np.ndarray, s_hi: float):
    g_box = np.where(s <= 0.0, np.maximum(0.0, -gamma), 0.0)
    l_box = np.where(s >= s_hi, np.maximum(0.0, gamma), 0.0)
    return g_box, l_box


def dual_slack_apply(graph: Graph, lam: float, beta: float, gamma: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``(L - lam D - beta d d^T - Diag(gamma)) X`` for a vector or block."""
    d = graph.d
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        return laplacian_matvec(graph, X) - lam * d * X - beta * d * (d @ X) - gamma * X
    return (
        laplacian_matvec(graph, X)
        - lam * d[:, None] * X
        - beta * np.outer(d, d @ X)
        - gamma[:, None] * X
    )


def feasibility_measure(prob: MuProblem, c_e: float, c_f: float, c_g: np.ndarray) -> float:
    # row norms are bounded by cap_hi, so c_g is measured relative to it,
    # and never more loosely than in absolute terms
    return max(abs(c_e), c_f, float(np.abs(c_g).max(initial=0.0)) / min(prob.cap_hi, 1.0))


def kkt_residuals(prob, Y, s, lam, beta, gamma, g_box, l_box) -> KktResiduals:
    c_e, c_f, c_g = constraint_residuals(Y, s, prob)
    ZY = dual_slack_apply(prob.graph, lam, beta, gamma, Y)
    stat = float(np.linalg.norm(ZY) / (1.0 + np.linalg.norm(Y)))
    # natural residual of the s-block: s - P_box(s - grad_s), grad_s = -gamma
    stat_s = float(np.abs(s - np.clip(s + gamma, 0.0, prob.s_hi)).max(initial=0.0))
    return KktResiduals(
        stationarity=stat,
        stationarity_s=stat_s,
        c_e=c_e,
        c_f=c_f,
        c_g_inf=float(np.abs(c_g).max(initial=0.0)),
        feasibility=feasibility_measure(prob, c_e, c_f, c_g),
        comp_lower=float(g_box @ s),
        comp_upper=float(l_box @ (prob.s_hi - s)),
    )


def alm_solve(prob: MuProblem, config: AlmConfig | None = None, *, state: LrsdpState | None = None) -> KktSolution:
    """Drive the augmented Lagrangian to a KKT point of the low-rank program.

    Multipliers are updated when the constraint violation has dropped by
    ``feas_decrease`` since the last update, otherwise the penalty grows.
    Hitting ``max_outer`` returns the last iterate with ``converged=False``.
    """
    cfg = config or AlmConfig()
    n, k = prob.graph.n, prob.k
    st = state.copy() if state is not None else initialize(prob, cfg.sigma0, seed=cfg.seed)
    inner_tol = cfg.inner_tol0
    inner_floor = cfg.tol_stat
    prev_feas = math.inf
    history = []
    total_inner = 0
    converged = False
    outer = 0
    stalled = 0
    for outer in range(1, cfg.max_outer + 1):
        inner = inner_solve(
            st, prob, inner_tol, max_iter=cfg.max_inner, memory=cfg.lbfgs_memory,
            eliminate_slack=cfg.eliminate_slack,
        )
        st = inner.state
        total_inner += inner.iterations
        c_e, c_f, c_g = constraint_residuals(st.Y, st.s, prob)
        feas = feasibility_measure(prob, c_e, c_f, c_g)
        sol = KktSolution.at(st, prob, converged=False, outer_iterations=outer, inner_iterations=total_inner)
        r = sol.residuals
        stat = max(r.stationarity, r.stationarity_s)
        history.append(
            dict(outer=outer, sigma=st.sigma, inner_tol=inner_tol, inner_iterations=inner.iterations,
                 inner_success=inner.success, feasibility=feas, stationarity=stat,
                 c_e=c_e, c_f=c_f, c_g=float(np.abs(c_g).max(initial=0.0)),
                 objective=sol.objective)
        )
        log.debug("mu=%g k=%d outer=%d sigma=%.1e feas=%.2e stat=%.2e obj=%.10g %s",
                  prob.mu, k, outer, st.sigma, feas, stat, sol.objective, inner.message)
        if feas <= cfg.tol_feas and stat <= cfg.tol_stat:
            converged = True
            break
        if feas <= cfg.tol_feas:
            # feasible enough but not stationary: tighten the inner solve
            st.lam, st.beta, st.gamma = sol.lam, sol.beta, sol.gamma.copy()
            prev_feas = feas
            # an inf-norm gradient this small is enough for the Frobenius test
            stat_floor = cfg.tol_stat * (1.0 + float(np.linalg.norm(st.Y))) / math.sqrt(n * k)
            inner_tol = max(inner_tol / 10.0, stat_floor)
        elif feas <= cfg.feas_decrease * prev_feas:
            st.lam, st.beta, st.gamma = sol.lam, sol.beta, sol.gamma.copy()
            prev_feas = feas
            inner_tol = max(inner_tol / 10.0, inner_floor)
        else:
            if st.sigma >= cfg.sigma_max:
                stalled += 1
                if stalled >= cfg.stall_outer:
                    # penalty is capped and violation no longer falls:
                    # most likely no feasible point at this rank
                    break
            st.sigma = min(st.sigma * cfg.sigma_growth, cfg.sigma_max)
            continue
        stalled = 0

    if not converged:
        log.warning("ALM stopped without converging at mu=%g k=%d after %d outer steps (feas=%.2e stat=%.2e)",
                    prob.mu, k, outer, history[-1]["feasibility"], history[-1]["stationarity"])
    return replace(sol, converged=converged, history=tuple(history))
