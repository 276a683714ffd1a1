"""Upper side of the community profile: seeded PageRank sweeps and binning.

Every sweep prefix is a real vertex set, so its conductance is an upper
bound on the minimum over the volume window it falls in. Binning the
samples by volume gives the empirical envelope that certified lower bounds
are compared against.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .certify import ProfileLowerBound
from .graph import Graph

DEFAULT_ALPHA = 0.85
DEFAULT_EPSILONS = tuple(float(x) for x in np.logspace(-2, -8, 7))
DEFAULT_SEED_COUNT = 100
VOLUME_BINS = 60
CONDUCTANCE_BINS = 40
SOUNDNESS_SLACK = 1e-9


class GapRangeError(ValueError):
    """Sweep samples and lower bounds share no usable volume range."""


class ProfileSoundnessError(AssertionError):
    """An observed set has conductance below a certified lower bound."""


@dataclass(frozen=True)
class PushResult:
    """Sparse output of the push procedure.

    ``p`` and ``r`` map vertex to value; entries never touched are zero.
    """

    seed: int
    alpha: float
    epsilon: float
    p: dict
    r: dict
    pushes: int

    def dense(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        p = np.zeros(n)
        r = np.zeros(n)
        for u, x in self.p.items():
            p[u] = x
        for u, x in self.r.items():
            r[u] = x
        return p, r


def ppr_push(
    graph: Graph,
    seed: int,
    alpha: float = DEFAULT_ALPHA,
    epsilon: float = 1e-4,
    *,
    max_pushes: int | None = None,
) -> PushResult:
    """Approximate personalized PageRank from ``seed`` by residual pushes.

    ``alpha`` is the probability of continuing the walk; a push at ``u``
    settles ``(1 - alpha) r_u`` into ``p_u`` and spreads the rest over the
    neighbors in proportion to edge weight. Pushing stops once
    ``r_u < epsilon d_u`` everywhere, and ``sum(p) + sum(r) = 1`` throughout.
    ``max_pushes`` stops early, leaving the residual condition unmet.
    """
    if not 0 <= seed < graph.n:
        raise IndexError(f"seed {seed} out of range for n = {graph.n}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    d = graph.d
    indptr, indices, weights = graph.indptr, graph.indices, graph.weights
    p: dict[int, float] = {}
    r: dict[int, float] = {seed: 1.0}
    active = [seed] if 1.0 >= epsilon * d[seed] else []
    pushes = 0
    while active and (max_pushes is None or pushes < max_pushes):
        # every active vertex pushes the residual it held at the start of
        # the round, so vertices related by symmetry are treated alike
        amounts = [r[u] for u in active]
        touched = set(active)
        for u, ru in zip(active, amounts):
            if max_pushes is not None and pushes >= max_pushes:
                break
            pushes += 1
            p[u] = p.get(u, 0.0) + (1.0 - alpha) * ru
            r[u] -= ru
            share = alpha * ru / d[u]
            for j in range(indptr[u], indptr[u + 1]):
                v = int(indices[j])
                r[v] = r.get(v, 0.0) + share * weights[j]
                touched.add(v)
        active = sorted(v for v in touched if r.get(v, 0.0) >= epsilon * d[v])
    return PushResult(seed, alpha, epsilon, p, {u: x for u, x in r.items() if x > 0.0}, pushes)


@dataclass(frozen=True)
class SweepSample:
    seed: int
    epsilon: float
    volume: float
    conductance: float
    size: int


def sweep_order(graph: Graph, vector) -> np.ndarray:
    """Support of ``vector`` sorted by ``x_i / d_i`` descending, ties by id.

    Signed vectors are accepted; negative entries simply come last.
    """
    if isinstance(vector, PushResult):
        items = vector.p
        ids = np.fromiter(items.keys(), dtype=np.int64, count=len(items))
        vals = np.fromiter(items.values(), dtype=float, count=len(items))
    else:
        x = np.asarray(vector, dtype=float)
        if x.shape != (graph.n,):
            raise ValueError(f"expected a length-{graph.n} vector")
        ids = np.flatnonzero(x)
        vals = x[ids]
    if ids.size == 0:
        return ids
    score = vals / graph.d[ids]
    return ids[np.lexsort((ids, -score))]


def sweep_cut(
    graph: Graph,
    vector,
    *,
    seed: int = -1,
    epsilon: float = math.nan,
    max_side: bool = False,
) -> list[SweepSample]:
    """One sample per proper prefix of the sweep order.

    ``volume`` is the smaller side's volume. With ``max_side`` only prefixes
    whose own volume stays within ``Vol(G)/2`` are kept.
    """
    if isinstance(vector, PushResult):
        seed, epsilon = vector.seed, vector.epsilon
    order = sweep_order(graph, vector)
    total = graph.volume_total
    d = graph.d
    indptr, indices, weights = graph.indptr, graph.indices, graph.weights
    inside = np.zeros(graph.n, dtype=bool)
    cut = 0.0
    vol = 0.0
    out = []
    for size, v in enumerate(order.tolist(), start=1):
        lo, hi = indptr[v], indptr[v + 1]
        w_in = float(weights[lo:hi][inside[indices[lo:hi]]].sum())
        cut += d[v] - 2.0 * w_in
        vol += d[v]
        inside[v] = True
        if size == graph.n:
            break
        if max_side and vol > total / 2:
            break
        small = min(vol, total - vol)
        out.append(SweepSample(seed, epsilon, small, max(cut, 0.0) / small, size))
    return out


@dataclass(frozen=True)
class SweepConfig:
    alpha: float = DEFAULT_ALPHA
    epsilons: tuple[float, ...] = DEFAULT_EPSILONS
    seeds: int | tuple[int, ...] = DEFAULT_SEED_COUNT
    rng_seed: int = 0
    max_side: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly descending")
        object.__setattr__(self, "epsilons", eps)
        if not isinstance(self.seeds, int):
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        elif self.seeds < 1:
            raise ValueError("seed count must be positive")

    def seed_vertices(self, n: int) -> list[int]:
        if not isinstance(self.seeds, int):
            bad = [s for s in self.seeds if not 0 <= s < n]
            if bad:
                raise IndexError(f"seed vertices out of range: {bad[:5]}")
            return list(self.seeds)
        # a prefix of one fixed permutation, so more seeds only add vertices
        rng = np.random.default_rng(self.rng_seed)
        return rng.permutation(n)[: min(self.seeds, n)].tolist()

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "epsilons": list(self.epsilons),
            "seeds": self.seeds if isinstance(self.seeds, int) else list(self.seeds),
            "rng_seed": self.rng_seed,
            "max_side": self.max_side,
        }


def _sweep_task(args) -> list[SweepSample]:
    graph, seed, alpha, epsilon, max_side = args
    return sweep_cut(graph, ppr_push(graph, seed, alpha, epsilon), max_side=max_side)


def default_workers() -> int:
    """Worker count from ``NCPBOUND_WORKERS``; 1 when unset."""
    raw = os.environ.get("NCPBOUND_WORKERS", "").strip()
    if not raw:
        return 1
    try:
        w = int(raw)
    except ValueError:
        raise ValueError(f"NCPBOUND_WORKERS must be an integer, got {raw!r}") from None
    return max(1, w)


def run_sweeps(graph: Graph, config: SweepConfig | None = None, *, workers: int | None = None) -> list[SweepSample]:
    """All sweep samples over seeds x epsilons, in seed-major order
    regardless of how many workers ran them."""
    cfg = config or SweepConfig()
    workers = default_workers() if workers is None else max(1, workers)
    tasks = [(graph, s, cfg.alpha, e, cfg.max_side) for s in cfg.seed_vertices(graph.n) for e in cfg.epsilons]
    if workers == 1 or len(tasks) < 2:
        chunks = map(_sweep_task, tasks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_sweep_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return [s for chunk in chunks for s in chunk]


@dataclass(frozen=True)
class ProfileBin:
    volume_lo: float
    volume_hi: float
    min_conductance: float
    count: int

    @property
    def occupied(self) -> bool:
        return self.count > 0


def volume_edges(volume_total: float, bins: int = VOLUME_BINS) -> np.ndarray:
    if bins < 1:
        raise ValueError("need at least one bin")
    top = max(volume_total / 2, 1.0 + 1e-12)
    return np.geomspace(1.0, top, bins + 1)


def _bin_index(edges: np.ndarray, volume: np.ndarray) -> np.ndarray:
    # out-of-range volumes go to the end bins so every sample is counted
    idx = np.searchsorted(edges, volume, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def build_profile(
    samples: Sequence[SweepSample],
    volume_total: float,
    bins: int = VOLUME_BINS,
    *,
    cumulative: bool = False,
) -> list[ProfileBin]:
    """Minimum conductance per log-spaced volume bin over ``[1, Vol/2]``.

    With ``cumulative`` each bin reports the minimum over all samples at or
    above its lower edge, the shape that matches a ``mu``-window.
    """
    if not samples:
        return []
    edges = volume_edges(volume_total, bins)
    vol = np.array([s.volume for s in samples])
    cond = np.array([s.conductance for s in samples])
    idx = _bin_index(edges, vol)
    counts = np.bincount(idx, minlength=bins)
    mins = np.full(bins, np.inf)
    np.minimum.at(mins, idx, cond)
    if cumulative:
        mins = np.minimum.accumulate(mins[::-1])[::-1]
    return [ProfileBin(float(edges[i]), float(edges[i + 1]), float(mins[i]), int(counts[i])) for i in range(bins)]


def merge_profiles(a: Sequence[ProfileBin], b: Sequence[ProfileBin]) -> list[ProfileBin]:
    """Combine two per-bin profiles built on the same edges."""
    if len(a) != len(b) or any(x.volume_lo != y.volume_lo for x, y in zip(a, b)):
        raise ValueError("profiles use different bins")
    return [
        ProfileBin(x.volume_lo, x.volume_hi, min(x.min_conductance, y.min_conductance), x.count + y.count)
        for x, y in zip(a, b)
    ]


@dataclass(frozen=True)
class Heatmap:
    volume_edges: np.ndarray
    conductance_edges: np.ndarray
    counts: np.ndarray = field(repr=False)


def heatmap(
    samples: Sequence[SweepSample],
    volume_total: float,
    vol_bins: int = VOLUME_BINS,
    cond_bins: int = CONDUCTANCE_BINS,
) -> Heatmap:
    """2-D log-log histogram of (volume, conductance)."""
    vedges = volume_edges(volume_total, vol_bins)
    if not samples:
        return Heatmap(vedges, np.geomspace(1e-3, 1.0, cond_bins + 1), np.zeros((vol_bins, cond_bins), dtype=np.int64))
    vol = np.array([s.volume for s in samples])
    cond = np.array([s.conductance for s in samples])
    cmin = float(cond[cond > 0].min()) if np.any(cond > 0) else 1e-3
    cmin = min(cmin, 0.1)
    cedges = np.geomspace(cmin, 1.0, cond_bins + 1)
    vi = _bin_index(vedges, vol)
    ci = _bin_index(cedges, np.maximum(cond, cmin))
    counts = np.zeros((vol_bins, cond_bins), dtype=np.int64)
    np.add.at(counts, (vi, ci), 1)
    return Heatmap(vedges, cedges, counts)


@dataclass(frozen=True)
class GapEntry:
    mu: float
    volume_floor: float
    upper: float | None
    lower: float
    certified: bool

    @property
    def ratio(self) -> float | None:
        if self.upper is None:
            return None
        if self.lower <= 0:
            return math.inf
        return self.upper / self.lower


def gap_report(
    bins: Sequence[ProfileBin], lower: ProfileLowerBound, volume_total: float
) -> list[GapEntry]:
    """Empirical upper value against the certified bound at each ``mu``.

    Only bins lying entirely inside ``[mu Vol, Vol/2]`` count toward the
    upper value. Raises :class:`ProfileSoundnessError` if a certified bound
    sits above an observed conductance and :class:`GapRangeError` if no
    ``mu`` has any sample in its window.
    """
    if not bins or not lower.points:
        raise GapRangeError("empty profile or empty lower bound")
    flags = lower.certified or tuple(True for _ in lower.points)
    out = []
    for (mu, lb), cert in zip(lower.points, flags):
        floor = mu * volume_total
        vals = [b.min_conductance for b in bins if b.occupied and b.volume_lo >= floor * (1 - 1e-12)]
        upper = min(vals) if vals else None
        if cert and upper is not None and upper < lb - SOUNDNESS_SLACK:
            raise ProfileSoundnessError(
                f"sweep set with conductance {upper:.6g} lies below the certified bound {lb:.6g} at mu={mu:g}"
            )
        out.append(GapEntry(mu, floor, upper, lb, bool(cert)))
    if all(e.upper is None for e in out):
        raise GapRangeError("no profile bin lies inside any mu window")
    return out


def samples_in_window(samples: Iterable[SweepSample], mu: float, volume_total: float) -> list[SweepSample]:
    floor = mu * volume_total
    return [s for s in samples if floor <= s.volume <= volume_total / 2]
