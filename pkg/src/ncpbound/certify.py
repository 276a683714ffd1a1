"""A posteriori lower bounds on mu-conductance from a low-rank KKT point.

Given multipliers ``(lam, beta, gamma)`` at a KKT point of the low-rank
program, the dual slack ``Z = L - lam D - beta d d^T - Diag(gamma)`` is PSD
only if the point also solves the convex SDP. Its most negative eigenvalue,
``-theta``, measures the violation, and

    (Tr(Y^T L Y) - theta * min{1, (1-mu) n / (mu Vol(G))}) / 2  <=  phi_mu(G).

That inequality assumes ``Y`` is exactly feasible. The dual objective at the
same multipliers, less the same ``theta`` term, is a valid bound at any
point, so the reported ``bound`` is the smaller of the two; at a converged
point they agree to within the solver tolerance.

Because ``Y^T d = 0`` at any feasible point, ``beta`` does not appear in the
stationarity condition and may be taken as negative as we like. Letting it
go to minus infinity is the same as measuring ``Z`` only on the complement
of ``d``; that is the default (``beta_mode="optimal"``).
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .eig import DEFAULT_TOL, SymOperator, smallest_eigenpair
from .graph import Graph
from .lrsdp import AlmConfig, KktResiduals, KktSolution, MuProblem, alm_solve, dual_slack_apply


@dataclass(frozen=True)
class ThetaResult:
    theta: float
    theta_raw: float
    residual: float
    ritz_value: float
    converged: bool
    iterations: int


@dataclass(frozen=True)
class CertifiedBound:
    mu: float
    k: int
    n: int
    volume: float
    objective: float
    theta: float
    theta_raw: float
    theta_residual: float
    trace_cap: float
    bound: float
    primal_bound: float
    dual_bound: float
    certified: bool
    solver_converged: bool
    eig_converged: bool
    beta_mode: str
    residuals: KktResiduals
    outer_iterations: int
    inner_iterations: int
    alm_seconds: float = 0.0
    eig_seconds: float = 0.0

    @property
    def status(self) -> str:
        return "certified" if self.certified else "heuristic"

    def to_record(self, *, timings: bool = False) -> dict:
        """Plain dict for serialization; wall times only on request so that
        result files are reproducible byte for byte."""
        rec = asdict(self)
        rec["status"] = self.status
        if not timings:
            rec.pop("alm_seconds")
            rec.pop("eig_seconds")
        return rec


@dataclass(frozen=True)
class ProfileLowerBound:
    points: tuple[tuple[float, float], ...]
    raw: tuple[tuple[float, float], ...]
    certified: tuple[bool, ...] = ()

    @property
    def mus(self) -> list[float]:
        return [m for m, _ in self.points]

    @property
    def bounds(self) -> list[float]:
        return [b for _, b in self.points]

    def at(self, mu: float) -> float:
        """Envelope value usable at ``mu``: the best bound from any grid point <= mu."""
        best = -math.inf
        for m, b in self.points:
            if m <= mu * (1 + 1e-12):
                best = b
        return best


def dual_slack_operator(graph: Graph, lam: float, beta: float, gamma: np.ndarray) -> SymOperator:
    gamma = np.asarray(gamma, dtype=float)
    diag = graph.d - lam * graph.d - beta * graph.d**2 - gamma
    return SymOperator(graph.n, lambda x: dual_slack_apply(graph, lam, beta, gamma, x), diag)


def compute_theta(
    Z: SymOperator,
    eig_tol: float = DEFAULT_TOL,
    *,
    deflate: np.ndarray | None = None,
    max_iter: int | None = None,
    seed: int = 0,
) -> ThetaResult:
    """``theta = -min(0, lambda_min(Z))``, padded by the Ritz residual.

    A Ritz value sits above the eigenvalue it approximates, so the residual
    norm is subtracted before negating. ``theta_raw`` is the unpadded value.
    """
    defl = None
    if deflate is not None:
        defl = np.asarray(deflate, dtype=float).reshape(Z.n, -1)
        defl, _ = np.linalg.qr(defl)
    res = smallest_eigenpair(Z, tol=eig_tol, max_iter=max_iter, deflation_vectors=defl, seed=seed)
    theta = max(0.0, -(res.value - res.residual_norm))
    theta_raw = -min(0.0, res.value)
    return ThetaResult(theta, theta_raw, res.residual_norm, res.value, res.converged, res.iterations)


def dual_value(sol: KktSolution) -> float:
    """Dual objective at the solution's multipliers, with box multipliers
    ``l = max(gamma, 0)``; a lower bound on the SDP value once ``theta``
    is accounted for, whether or not the primal point is exactly feasible."""
    p = sol.problem
    gamma = sol.gamma
    return float(sol.lam + p.cap_hi * gamma.sum() - p.s_hi * np.maximum(gamma, 0.0).sum())


def bound_from_theta(
    sol: KktSolution,
    theta: ThetaResult,
    prob: MuProblem | None = None,
    *,
    beta_mode: str = "optimal",
    alm_seconds: float = 0.0,
    eig_seconds: float = 0.0,
) -> CertifiedBound:
    prob = prob or sol.problem
    if theta.theta < 0:
        raise ValueError("theta must be nonnegative")
    cap = prob.trace_cap
    primal = 0.5 * (sol.objective - theta.theta * cap)
    dual = 0.5 * (dual_value(sol) - theta.theta * cap)
    return CertifiedBound(
        mu=prob.mu,
        k=prob.k,
        n=prob.graph.n,
        volume=prob.graph.volume_total,
        objective=sol.objective,
        theta=theta.theta,
        theta_raw=theta.theta_raw,
        theta_residual=theta.residual,
        trace_cap=cap,
        bound=min(primal, dual),
        primal_bound=primal,
        dual_bound=dual,
        certified=bool(sol.converged and theta.converged),
        solver_converged=sol.converged,
        eig_converged=theta.converged,
        beta_mode=beta_mode,
        residuals=sol.residuals,
        outer_iterations=sol.outer_iterations,
        inner_iterations=sol.inner_iterations,
        alm_seconds=alm_seconds,
        eig_seconds=eig_seconds,
    )


def certify(
    sol: KktSolution,
    *,
    eig_tol: float = DEFAULT_TOL,
    beta_mode: str = "optimal",
    seed: int = 0,
    alm_seconds: float = 0.0,
) -> CertifiedBound:
    """Compute ``theta`` for a solved problem and assemble the bound.

    ``beta_mode="kkt"`` uses the multiplier for ``||Y^T d||^2 = 0`` exactly
    as the solver returned it instead of deflating ``d``.
    """
    if beta_mode not in ("optimal", "kkt"):
        raise ValueError(f"unknown beta_mode {beta_mode!r}")
    g = sol.problem.graph
    t0 = time.perf_counter()
    if beta_mode == "optimal":
        Z = dual_slack_operator(g, sol.lam, 0.0, sol.gamma)
        th = compute_theta(Z, eig_tol, deflate=g.d, seed=seed)
    else:
        Z = dual_slack_operator(g, sol.lam, sol.beta, sol.gamma)
        th = compute_theta(Z, eig_tol, seed=seed)
    eig_seconds = time.perf_counter() - t0
    return bound_from_theta(sol, th, beta_mode=beta_mode, alm_seconds=alm_seconds, eig_seconds=eig_seconds)


def lower_bound(
    graph: Graph,
    mu: float,
    k: int = 5,
    config: AlmConfig | None = None,
    *,
    eig_tol: float = DEFAULT_TOL,
    beta_mode: str = "optimal",
) -> CertifiedBound:
    """Solve the low-rank program at ``(mu, k)`` and certify the result."""
    cfg = config or AlmConfig()
    prob = MuProblem(graph, mu, k)
    t0 = time.perf_counter()
    sol = alm_solve(prob, cfg)
    alm_seconds = time.perf_counter() - t0
    return certify(sol, eig_tol=eig_tol, beta_mode=beta_mode, seed=cfg.seed, alm_seconds=alm_seconds)


def monotone_envelope(
    points: Sequence[tuple[float, float]], certified: Sequence[bool] | None = None
) -> ProfileLowerBound:
    """Running maximum of bounds over increasing ``mu``.

    ``phi_mu`` is nondecreasing in ``mu``, so any bound at a smaller ``mu``
    also holds at every larger one.
    """
    pts = [(float(m), float(b)) for m, b in points]
    mus = [m for m, _ in pts]
    if len(set(mus)) != len(mus):
        raise ValueError("duplicate mu in envelope input")
    if any(b <= a for a, b in zip(mus, mus[1:])):
        raise ValueError("mu values must be strictly increasing")
    out = []
    best = -math.inf
    for m, b in pts:
        best = max(best, b)
        out.append((m, best))
    flags = tuple(certified) if certified is not None else tuple(True for _ in pts)
    return ProfileLowerBound(points=tuple(out), raw=tuple(pts), certified=flags)


def envelope_from_bounds(
    bounds: Iterable[CertifiedBound], *, include_heuristic: bool = False
) -> ProfileLowerBound:
    """Best bound per ``mu`` (over ranks), then the monotone envelope.

    Heuristic (non-certified) bounds are left out unless asked for.
    """
    best: dict[float, CertifiedBound] = {}
    for b in bounds:
        if not (b.certified or include_heuristic):
            continue
        cur = best.get(b.mu)
        if cur is None or b.bound > cur.bound:
            best[b.mu] = b
    ordered = [best[m] for m in sorted(best)]
    return monotone_envelope([(b.mu, b.bound) for b in ordered], [b.certified for b in ordered])
