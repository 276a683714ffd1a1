import numpy as np
import pytest

from ncpbound.certify import lower_bound, monotone_envelope
from ncpbound.graph import conductance, psi_vector
from ncpbound.graphgen import SynthConfig, generate_core_periphery
from ncpbound.ncp import (
    GapRangeError,
    ProfileBin,
    ProfileSoundnessError,
    SweepConfig,
    SweepSample,
    build_profile,
    default_workers,
    gap_report,
    heatmap,
    merge_profiles,
    ppr_push,
    run_sweeps,
    samples_in_window,
    sweep_cut,
    sweep_order,
    volume_edges,
)

from conftest import barbell, complete, cycle, star, suite


def _sample(volume, cond, seed=0):
    return SweepSample(seed, 1e-3, float(volume), float(cond), 1)


def test_push_threshold_boundary():
    g = complete(4)
    # r_seed = 1 and d_seed = 3: a push fires iff 1 >= 3 eps
    assert ppr_push(g, 0, 0.85, 1.0).pushes == 0
    assert ppr_push(g, 0, 0.85, 1 / 3 + 1e-12).p == {}
    fired = ppr_push(g, 0, 0.85, 1 / 3)
    assert fired.pushes >= 1
    assert fired.p[0] == pytest.approx(0.15)


def test_push_symmetry_k4():
    for seed in range(4):
        p, _ = ppr_push(complete(4), seed, 0.85, 1e-6).dense(4)
        others = np.delete(p, seed)
        np.testing.assert_allclose(others, others[0], rtol=1e-12)
        assert p[seed] > others[0]


def test_push_mass_every_step():
    g = suite()[0]
    full = ppr_push(g, 2, 0.85, 1e-5)
    for t in range(full.pushes + 1):
        res = ppr_push(g, 2, 0.85, 1e-5, max_pushes=t)
        assert res.pushes == t
        p, r = res.dense(g.n)
        assert p.min() >= 0 and r.min() >= 0
        assert p.sum() + r.sum() == pytest.approx(1.0, abs=1e-12)


def test_push_residual_condition():
    for g in suite()[:5]:
        for eps in (1e-2, 1e-4, 1e-7):
            _, r = ppr_push(g, 0, 0.85, eps).dense(g.n)
            assert np.all(r < eps * g.d)


def test_push_argument_checks():
    g = complete(4)
    with pytest.raises(IndexError):
        ppr_push(g, 4)
    with pytest.raises(ValueError):
        ppr_push(g, 0, alpha=1.0)
    with pytest.raises(ValueError):
        ppr_push(g, 0, epsilon=0.0)


def test_sweep_barbell_psi():
    g = barbell()
    samples = sweep_cut(g, psi_vector(g, [0, 1, 2, 3]))
    assert min(s.conductance for s in samples) == pytest.approx(1 / 13)


def test_sweep_one_hot():
    g = suite()[1]
    x = np.zeros(g.n)
    x[3] = 1.0
    samples = sweep_cut(g, x)
    assert samples[0].size == 1
    assert samples[0].conductance == pytest.approx(1.0)
    assert samples[0].volume == g.d[3]


def test_sweep_constant_orders_by_id():
    np.testing.assert_array_equal(sweep_order(cycle(7), np.ones(7)), np.arange(7))
    g = suite()[2]
    np.testing.assert_array_equal(sweep_order(g, g.d), np.arange(g.n))


def test_sweep_zero_vector():
    assert sweep_cut(complete(4), np.zeros(4)) == []


def test_sweep_recompute_from_scratch():
    rng = np.random.default_rng(0)
    for g in suite()[:8]:
        x = rng.random(g.n)
        order = sweep_order(g, x)
        samples = sweep_cut(g, x)
        assert len(samples) == g.n - 1
        for s in samples:
            S = order[: s.size]
            assert s.conductance == pytest.approx(conductance(g, S), abs=1e-10)
            vol = g.d[S].sum()
            assert s.volume == pytest.approx(min(vol, g.volume_total - vol))
            assert 0 < s.conductance <= 1
            assert s.volume <= g.volume_total / 2


def test_sweep_max_side():
    g = suite()[3]
    x = np.random.default_rng(1).random(g.n)
    order = sweep_order(g, x)
    for s in sweep_cut(g, x, max_side=True):
        assert g.d[order[: s.size]].sum() <= g.volume_total / 2


def test_sweep_config_validation():
    with pytest.raises(ValueError, match="descending"):
        SweepConfig(epsilons=(1e-4, 1e-2))
    with pytest.raises(ValueError, match="positive"):
        SweepConfig(epsilons=(1e-2, -1.0))
    with pytest.raises(ValueError):
        SweepConfig(alpha=0.0)
    with pytest.raises(IndexError):
        SweepConfig(seeds=(0, 99)).seed_vertices(10)
    cfg = SweepConfig(seeds=5, rng_seed=3)
    assert cfg.seed_vertices(20) == cfg.seed_vertices(20)
    assert len(set(cfg.seed_vertices(20))) == 5
    more = SweepConfig(seeds=10, rng_seed=3).seed_vertices(20)
    assert more[:5] == cfg.seed_vertices(20)


def test_default_workers(monkeypatch):
    monkeypatch.delenv("NCPBOUND_WORKERS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("NCPBOUND_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("NCPBOUND_WORKERS", "x")
    with pytest.raises(ValueError):
        default_workers()


def test_run_sweeps_single_seed_single_eps():
    g = suite()[4]
    cfg = SweepConfig(epsilons=(1e-4,), seeds=(2,))
    assert run_sweeps(g, cfg, workers=1) == sweep_cut(g, ppr_push(g, 2, cfg.alpha, 1e-4))


def test_run_sweeps_worker_count_irrelevant():
    g = suite()[5]
    cfg = SweepConfig(epsilons=(1e-2, 1e-4), seeds=4)
    assert run_sweeps(g, cfg, workers=1) == run_sweeps(g, cfg, workers=2)


def test_volume_edges_cover():
    e = volume_edges(200.0, 10)
    assert e[0] == 1.0 and e[-1] == pytest.approx(100.0)
    assert np.all(np.diff(e) > 0)


def test_profile_one_sample():
    bins = build_profile([_sample(10, 0.3)], 200.0, 10)
    occ = [b for b in bins if b.occupied]
    assert len(occ) == 1
    assert occ[0].min_conductance == 0.3 and occ[0].count == 1
    assert occ[0].volume_lo <= 10 < occ[0].volume_hi


def test_profile_duplicates_and_empty():
    assert build_profile([], 100.0) == []
    one = build_profile([_sample(10, 0.3)], 200.0, 10)
    two = build_profile([_sample(10, 0.3)] * 2, 200.0, 10)
    assert [b.count for b in two] == [2 * b.count for b in one]
    assert [b.min_conductance for b in two] == [b.min_conductance for b in one]


def test_profile_counts_and_cumulative():
    rng = np.random.default_rng(2)
    samples = [_sample(v, c) for v, c in zip(rng.uniform(1, 100, 300), rng.uniform(0.01, 1, 300))]
    bins = build_profile(samples, 200.0, 12)
    assert sum(b.count for b in bins) == 300
    cum = build_profile(samples, 200.0, 12, cumulative=True)
    for i, b in enumerate(cum):
        assert b.min_conductance == min(x.min_conductance for x in bins[i:])


def test_merge_matches_joint_profile():
    rng = np.random.default_rng(3)
    a = [_sample(v, c) for v, c in zip(rng.uniform(1, 100, 50), rng.random(50))]
    b = [_sample(v, c) for v, c in zip(rng.uniform(1, 100, 50), rng.random(50))]
    merged = merge_profiles(build_profile(a, 200.0, 8), build_profile(b, 200.0, 8))
    assert merged == build_profile(a + b, 200.0, 8)
    with pytest.raises(ValueError):
        merge_profiles(build_profile(a, 200.0, 8), build_profile(b, 200.0, 9))


def test_heatmap_counts():
    rng = np.random.default_rng(4)
    samples = [_sample(v, c) for v, c in zip(rng.uniform(1, 100, 100), rng.uniform(0.01, 1, 100))]
    hm = heatmap(samples, 200.0, 6, 5)
    assert hm.counts.shape == (6, 5)
    assert hm.counts.sum() == 100
    np.testing.assert_array_equal(hm.counts.sum(axis=1), [b.count for b in build_profile(samples, 200.0, 6)])


def test_gap_ratio_one():
    bins = [ProfileBin(10.0, 20.0, 0.25, 3)]
    (entry,) = gap_report(bins, monotone_envelope([(0.1, 0.25)]), 100.0)
    assert entry.ratio == 1.0


def test_gap_soundness_violation():
    bins = [ProfileBin(10.0, 20.0, 0.2, 3)]
    with pytest.raises(ProfileSoundnessError):
        gap_report(bins, monotone_envelope([(0.1, 0.25)]), 100.0)
    # heuristic bounds are reported without the check
    env = monotone_envelope([(0.1, 0.25)], certified=[False])
    assert gap_report(bins, env, 100.0)[0].upper == 0.2


def test_gap_range_error():
    bins = [ProfileBin(1.0, 2.0, 0.2, 3)]
    with pytest.raises(GapRangeError):
        gap_report(bins, monotone_envelope([(0.3, 0.1)]), 100.0)
    with pytest.raises(GapRangeError):
        gap_report([], monotone_envelope([(0.3, 0.1)]), 100.0)


def test_more_samples_lower_the_upper_side():
    g = suite()[6]
    env = monotone_envelope([(0.05, 0.0), (0.2, 0.0)])
    small = run_sweeps(g, SweepConfig(epsilons=(1e-3,), seeds=2))
    large = run_sweeps(g, SweepConfig(epsilons=(1e-3,), seeds=6))
    a = gap_report(build_profile(small, g.volume_total, 10), env, g.volume_total)
    b = gap_report(build_profile(large, g.volume_total, 10), env, g.volume_total)
    for x, y in zip(a, b):
        if x.upper is not None:
            assert y.upper <= x.upper
    prof_small = build_profile(small, g.volume_total, 10)
    prof_large = build_profile(large, g.volume_total, 10)
    for x, y in zip(prof_small, prof_large):
        assert y.min_conductance <= x.min_conductance


def test_sweeps_above_certified_bounds_on_suite():
    mus = (0.05, 0.2, 0.4)
    for g in suite()[:4]:
        samples = run_sweeps(g, SweepConfig(epsilons=(1e-2, 1e-4, 1e-6), seeds=g.n))
        for mu in mus:
            b = lower_bound(g, mu, 3)
            for s in samples_in_window(samples, mu, g.volume_total):
                assert s.conductance >= b.bound - 1e-9


def test_barbell_sweeps_find_bridge():
    g = barbell()
    samples = run_sweeps(g, SweepConfig(epsilons=(1e-2, 1e-4), seeds=8))
    assert min(s.conductance for s in samples) == pytest.approx(1 / 13)


def test_star_samples_bounded():
    for s in run_sweeps(star(5), SweepConfig(epsilons=(1e-3,), seeds=6)):
        assert 0 < s.conductance <= 1


def test_synthetic_profile_dips_near_core_scale():
    synth = generate_core_periphery(SynthConfig(seed=0))
    g = synth.graph
    core_volume = g.d[synth.is_core].sum()
    samples = run_sweeps(g, SweepConfig(seeds=100), workers=default_workers())
    assert len(samples) >= 10_000
    bins = [b for b in build_profile(samples, g.volume_total, 30) if b.occupied]
    mins = [b.min_conductance for b in bins]
    # small sets are singletons and near-singletons, so the profile starts at 1
    assert mins[0] == 1.0
    rises = [
        i for i in range(len(bins) - 1)
        if mins[i + 1] > mins[i] and core_volume / 4 <= bins[i].volume_hi <= 2 * core_volume
    ]
    assert rises
