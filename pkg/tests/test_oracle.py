import numpy as np
import pytest

from ncpbound.graph import Graph, conductance
from ncpbound.oracle import (
    InfeasibleWindowError,
    brute_min_conductance,
    brute_mu_conductance,
    dense_eig_reference,
)

from conftest import SUITE_MUS, barbell, complete, cycle, path, star, suite


def test_k4():
    r = brute_mu_conductance(complete(4), 0.5)
    assert r.phi_mu == pytest.approx(2 / 3)
    assert len(r.argmin_set) == 2
    assert brute_mu_conductance(complete(4), 0.2).phi_mu == pytest.approx(2 / 3)
    assert brute_min_conductance(complete(4)).phi_mu == pytest.approx(2 / 3)


def test_barbell():
    r = brute_mu_conductance(barbell(), 0.5)
    assert r.phi_mu == pytest.approx(1 / 13)
    side = sorted(r.argmin_set.members.tolist())
    assert side in ([0, 1, 2, 3], [4, 5, 6, 7])


def test_star_and_path():
    assert brute_min_conductance(star(4)).phi_mu == pytest.approx(1.0)
    assert brute_min_conductance(path(4)).phi_mu == pytest.approx(1 / 3)


def test_visits_every_proper_subset():
    for n in (4, 7):
        assert brute_min_conductance(cycle(n)).visited == 2**n - 2


def test_argmin_consistent():
    for g in suite()[:10]:
        for mu in SUITE_MUS:
            r = brute_mu_conductance(g, mu)
            S = r.argmin_set
            assert mu * g.volume_total * (1 - 1e-12) <= S.volume <= g.volume_total / 2 * (1 + 1e-12)
            assert conductance(g, S) == pytest.approx(r.phi_mu, rel=1e-12)
            assert r.feasible_count >= 1


def test_monotone_in_mu():
    for g in suite():
        vals = [brute_mu_conductance(g, mu).phi_mu for mu in SUITE_MUS]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


def test_equals_min_conductance_when_argmin_is_large():
    for g in suite():
        r = brute_min_conductance(g)
        mu = r.argmin_set.volume / g.volume_total
        assert brute_mu_conductance(g, mu).phi_mu == pytest.approx(r.phi_mu)


def test_infeasible_window():
    # weighted triangle with degrees 5, 3, 6: no vertex set has volume exactly 7
    g = Graph.from_edges(3, [0, 1, 0], [1, 2, 2], [1.0, 2.0, 4.0])
    with pytest.raises(InfeasibleWindowError):
        brute_mu_conductance(g, 0.5)


def test_rejects_disconnected_and_large():
    with pytest.raises(Exception):
        brute_min_conductance(Graph.from_edges(4, [0, 2], [1, 3]))
    with pytest.raises(Exception):
        brute_min_conductance(cycle(30))


def test_dense_reference_spectra():
    vals, _ = dense_eig_reference(cycle(4))
    np.testing.assert_allclose(vals, [0, 2, 2, 4], atol=1e-12)
    vals, _ = dense_eig_reference(Graph.from_edges(2, [0], [1]))
    np.testing.assert_allclose(vals, [0, 2], atol=1e-12)
    vals, _ = dense_eig_reference(complete(4), normalized=True)
    np.testing.assert_allclose(vals, [0, 4 / 3, 4 / 3, 4 / 3], atol=1e-12)
