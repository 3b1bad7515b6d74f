import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagsync.dynamics import ContractViolation
from lagsync.topology import (Gains, GraphSchedule, TopologyError, analyze, apply_inhibition, build_graph,
                              consensus_block, modified_laplacian, sufficient_conditions,
                              sync_basis)


def _spectrum(graph, K1, K2, n=1):
    lap, basis, rep = analyze(graph, Gains(K1, K2, 1.0, n=n), n)
    return lap, basis, rep


def test_two_robot_blocks():
    lap, basis, rep = _spectrum(build_graph("ring", 2), 5.0, 2.0)
    np.testing.assert_allclose(basis.D1, [[3.0]])
    np.testing.assert_allclose(basis.D2, [[7.0]])
    np.testing.assert_allclose(rep.spectrum, (3.0, 7.0))


def test_four_ring_spectrum():
    lap, basis, rep = _spectrum(build_graph("ring", 4), 5.0, 2.0)
    np.testing.assert_allclose(rep.spectrum, (1.0, 9.0, 5.0, 5.0), atol=1e-12)
    V, D = basis.V, basis.D()
    assert np.linalg.norm(V @ D @ V.T - lap.L) < 1e-9
    np.testing.assert_allclose(V.T @ V, np.eye(4), atol=1e-12)


def test_four_ring_multijoint_spectrum():
    K1, K2 = np.array([5.0, 7.0, 9.0]), np.array([2.0, 1.0, 4.0])
    lap, basis, rep = analyze(build_graph("ring", 4), Gains(K1, K2, 1.0))
    np.testing.assert_allclose(np.diag(basis.D1), K1 - 2 * K2, atol=1e-12)
    assert np.linalg.norm(basis.V @ basis.D() @ basis.V.T - lap.L) < 1e-9
    assert basis.block_diagonal


def test_three_robot_basis_columns():
    _, basis, _ = _spectrum(build_graph("ring", 3), 5.0, 2.0)
    Vs = basis.V_sync
    np.testing.assert_allclose(Vs[:, 0], [np.sqrt(2 / 3), -1 / np.sqrt(6), -1 / np.sqrt(6)], atol=1e-12)
    np.testing.assert_allclose(Vs[:, 1], [0.0, 1 / np.sqrt(2), -1 / np.sqrt(2)], atol=1e-12)


def test_inline_chain_keeps_consensus_eigenvector():
    lap, basis, rep = _spectrum(build_graph("inline", 3), 5.0, 2.0)
    one = consensus_block(3, 1)
    np.testing.assert_allclose(lap.L @ one, (5.0 - 4.0) * one, atol=1e-12)
    np.testing.assert_allclose(rep.spectrum, (1.0, 7.0, 3.0), atol=1e-12)


def test_digraph_reports_symmetrized_part():
    lap, basis, rep = _spectrum(build_graph("digraph", 4), 5.0, 2.0)
    assert rep.symmetrized and not lap.symmetric
    np.testing.assert_allclose(rep.spectrum, (1.0, 9.0, 5.0, 5.0), atol=1e-12)


def test_five_ring_matches_circulant_eigenvalues(rng):
    K1 = rng.uniform(3, 8, 2)
    K2 = rng.uniform(0.1, 1.4, 2)
    lap = modified_laplacian(build_graph("ring", 5), Gains(K1, K2, 1.0))
    numeric = np.sort(np.linalg.eig(lap.L)[0].real)
    analytic = np.sort([K1[j] - 2 * K2[j] * np.cos(2 * np.pi * k / 5) for k in range(5) for j in range(2)])
    np.testing.assert_allclose(numeric, analytic, atol=1e-10)


def test_condition_report_regimes():
    _, _, rep = _spectrum(build_graph("ring", 4), 5.0, 2.0)
    assert rep.tracking_ok and rep.sync_ok and not rep.indifferent
    _, _, rep = _spectrum(build_graph("ring", 2), 20.0, 20.0, n=2)
    assert rep.indifferent and rep.sync_ok and not rep.tracking_ok
    np.testing.assert_allclose(rep.D2_eigs, (40.0, 40.0))


def test_decoupled_network():
    _, basis, rep = _spectrum(build_graph("ring", 3), 5.0, 0.0)
    np.testing.assert_allclose(np.diag(basis.D2), 5.0)
    assert rep.sync_ok and rep.tracking_ok


def test_sufficient_conditions_depend_on_p():
    g = Gains(5.0, 3.0, 1.0, n=2)
    assert sufficient_conditions(build_graph("ring", 2), g)["holds"]
    res = sufficient_conditions(build_graph("ring", 3), g)
    assert res["condition"] == "K1 - 2 K2 > 0" and not res["holds"]


def test_partial_selector_keeps_gain_difference_pd():
    for k1, k2 in ((5.0, 2.0), (3.0, 2.9), (20.0, 15.0)):
        P = np.diag([1.0, 0.0])
        K1, K2 = np.eye(2) * k1, np.eye(2) * k2
        assert np.linalg.eigvalsh(K1 - K2 @ P).min() > 0
    lap = modified_laplacian(build_graph("ring", 2, partial_mask=(1, 0)), Gains(5.0, 2.0, 1.0, n=2))
    np.testing.assert_allclose(lap.block(0, 1), -np.diag([2.0, 0.0]))


def test_inhibition_makes_indifferent_ring_contracting():
    g = Gains(4.0, 2.0, 1.0, n=1)
    graph = build_graph("ring", 4)
    base = modified_laplacian(graph, g)
    assert abs(np.linalg.eigvalsh(base.L).min()) < 1e-12
    gr, gg = apply_inhibition(graph, g, (0, 2), g.K2)
    L = modified_laplacian(gr, gg).L
    assert np.linalg.eigvalsh(L).min() > 0.1
    np.testing.assert_allclose(L[0, 2], 2.0)


def test_inhibition_edge_cases():
    g = Gains(4.0, 2.0, 1.0, n=1)
    graph = build_graph("ring", 4)
    assert apply_inhibition(graph, g, (0, 2), 0.0) == (graph, g)
    with pytest.raises(ContractViolation):
        apply_inhibition(graph, g, (0, 2), -1.0)
    with pytest.raises(ContractViolation):
        apply_inhibition(graph, Gains(5.0, 2.0, 1.0, n=1), (0, 2), 2.0)


def test_graph_validation():
    with pytest.raises(TopologyError):
        build_graph("ring", 1)
    with pytest.raises(TopologyError):
        build_graph("custom", 3, edges=[(0, 1), (1, 0), (2, 0), (2, 1)])
    with pytest.raises(TopologyError):
        build_graph("star", 4)
    with pytest.raises(ContractViolation):
        build_graph("ring", 3, partial_mask=(1, 0.5))
    with pytest.raises(ContractViolation):
        sync_basis(np.triu(np.ones((4, 4))), 4, 1)
    with pytest.raises(ContractViolation):
        Gains(-1.0, 1.0, 1.0, n=1)
    with pytest.raises(ContractViolation):
        Gains(1.0, 1.0, 1.0, Gamma=np.array([[1.0, 2.0], [2.0, 1.0]]), n=1)


def test_custom_regular_graph_matches_ring():
    edges = [(i, (i + d) % 5) for i in range(5) for d in (1, -1)]
    g = Gains(5.0, 2.0, 1.0, n=1)
    a = modified_laplacian(build_graph("custom", 5, edges=edges), g).L
    b = modified_laplacian(build_graph("ring", 5), g).L
    np.testing.assert_allclose(a, b)


def test_schedule_lookup():
    s = GraphSchedule((0.0, 2.0), (build_graph("ring", 4), build_graph("inline", 4)))
    assert s.at(1.999).kind == "ring" and s.at(2.0).kind == "inline"
    with pytest.raises(ContractViolation):
        GraphSchedule((0.0, 1.0), (build_graph("ring", 4), build_graph("ring", 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(1, 3), st.floats(0.5, 10), st.floats(0.0, 5.0),
       st.sampled_from(["ring", "inline", "digraph"]))
def test_basis_properties(p, n, k1, k2, kind):
    graph = build_graph(kind, p)
    lap, basis, rep = analyze(graph, Gains(k1, k2, 1.0, n=n), n)
    V = basis.V
    np.testing.assert_allclose(V.T @ V, np.eye(p * n), atol=1e-9)
    np.testing.assert_allclose(basis.V_sync.T @ consensus_block(p, n), 0.0, atol=1e-9)
    Ls = lap.symmetrized()
    assert np.linalg.norm(V @ basis.D() @ V.T - Ls) < 1e-8 * max(1.0, np.abs(Ls).max())
    assert rep.sync_ok == (np.linalg.eigvalsh(Ls + 0.5 * (lap.U + lap.U.T)).min() > 1e-9 * max(1, np.abs(Ls).max()))


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 8), st.floats(0.5, 10), st.floats(0.0, 5.0))
def test_ring_tracking_condition_matches_closed_form(p, k1, k2):
    _, _, rep = analyze(build_graph("ring", p), Gains(k1, k2, 1.0, n=1), 1)
    if abs(k1 - 2 * k2) > 1e-6:
        assert rep.tracking_ok == (k1 - 2 * k2 > 0)
        np.testing.assert_allclose(rep.rate_tracking, k1 - 2 * k2, atol=1e-9)
