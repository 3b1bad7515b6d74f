import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagsync import analysis as A
from lagsync.controllers import ControllerSpec, DesiredTrajectory
from lagsync.dynamics import ContractViolation
from lagsync.simulator import SimConfig, make_group, run
from lagsync.topology import Gains, build_graph, sync_basis

from conftest import arm_trajectory


@pytest.fixture(scope="module")
def pair_log():
    from lagsync.dynamics import default_model
    arm = default_model("two-link-arm")
    grp = make_group("pair", arm, build_graph("ring", 2),
                     ControllerSpec("tracking-sync", Gains(5.0, 2.0, 5.0, n=2)), arm_trajectory())
    return run(SimConfig(t_final=3.0, seed=4, decimation=1), grp)


def test_fit_rate_exact_exponential():
    t = np.linspace(0, 10, 2001)
    fit = A.fit_rate((t, 3.0 * np.exp(-2.0 * t)))
    assert abs(fit.lam - 2.0) < 1e-6 * 2.0
    assert fit.r_squared > 0.9999 and not fit.flagged


def test_fit_rate_stops_before_plateau():
    t = np.linspace(0, 20, 4001)
    v = np.exp(-1.0 * t) + 1e-4
    fit = A.fit_rate((t, v))
    assert fit.t1 < 8.0
    assert abs(fit.lam - 1.0) < 0.05
    naive = A.fit_rate((t, v), window=(2.0, 20.0))
    assert naive.lam < 0.7


def test_fit_rate_flags_nonpositive_values():
    t = np.linspace(0, 10, 101)
    v = np.exp(-t)
    v[60:] = 0.0
    fit = A.fit_rate((t, v), window=(1.0, 9.0))
    assert fit.flagged and fit.t1 < 6.0
    assert abs(fit.lam - 1.0) < 1e-9
    with pytest.raises(ContractViolation):
        A.fit_rate((t, np.zeros_like(t)), window=(1.0, 9.0))


def test_two_robot_sync_error_closed_form(pair_log):
    gl = pair_log.group(0)
    expected = np.linalg.norm(gl.q[:, 0] - gl.q[:, 1], axis=1) / np.sqrt(2)
    np.testing.assert_allclose(A.sync_error(gl).value, expected, atol=1e-14)
    basis = sync_basis(gl.laplacians[0].L, 2, 2)
    np.testing.assert_allclose(A.sync_error(gl, basis).value, expected, atol=1e-14)
    with pytest.raises(ContractViolation):
        A.sync_error(gl, sync_basis(gl.laplacians[0].L[:2, :2], 2, 1))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 3))
def test_sync_error_ignores_common_mode(pair_log, c0, c1, w):
    gl = pair_log.group(0)
    shift = np.stack([c0 + np.sin(w * gl.t), c1 * gl.t], axis=1)[:, None, :]
    moved = dataclasses.replace(gl, q=gl.q + shift)
    np.testing.assert_allclose(A.sync_error(moved).value, A.sync_error(gl).value, atol=1e-12)


def test_identical_robots_have_zero_sync_error(pair_log):
    gl = pair_log.group(0)
    same = dataclasses.replace(gl, q=np.repeat(gl.q[:, :1], 2, axis=1))
    assert np.all(A.sync_error(same).value == 0)


def test_contraction_residual_small_on_stable_run(cart):
    from conftest import ring4_trajectory
    grp = make_group("ring", cart, build_graph("ring", 4),
                     ControllerSpec("tracking-sync", Gains(5.0, 2.0, 5.0, n=3)), ring4_trajectory())
    log = run(SimConfig(t_final=2.0, seed=1, decimation=1), grp)
    assert A.contraction_residual(log).max_relative < 1e-3


def test_contraction_residual_zero_at_rest(arm):
    rest = np.array([0.2, 0.1])
    grp = make_group("rest", arm, build_graph("ring", 2),
                     ControllerSpec("tracking-sync", Gains(5.0, 2.0, 5.0, n=2)),
                     DesiredTrajectory.constant_at(rest), q0=np.tile(rest, (2, 1)), qdot0=np.zeros((2, 2)))
    log = run(SimConfig(t_final=0.1, seed=0, decimation=1), grp)
    res = A.contraction_residual(log)
    np.testing.assert_array_equal(res.absolute[1:-1], 0.0)


def test_consensus_component_of_composites_decays(pair_log):
    gl = pair_log.group(0)
    mean_s = np.linalg.norm(gl.s.sum(axis=1), axis=1) / np.sqrt(2)
    assert mean_s[-1] < 1e-2 * mean_s[:10].max()


def test_delay_functional_degenerate_and_monotone(arm):
    g = Gains(5.0, 2.0, 5.0, n=2)
    rest = DesiredTrajectory.constant_at([0.3, -0.2])
    grp = make_group("d", arm, build_graph("ring", 2), ControllerSpec("delayed", g, delay_T=0.1), rest)
    log = run(SimConfig(t_final=4.0, seed=1, decimation=1), grp)
    V0 = A.delay_functional(log, T=0.0)
    gl = log.group(0)
    M = A._batched_M(gl.models, gl.q)
    np.testing.assert_allclose(V0.value, np.einsum("tpi,tpij,tpj->t", gl.s, M, gl.s))
    V = A.delay_functional(log, T=0.1)
    assert V.t[0] == pytest.approx(0.1)
    assert V.max_increment <= 1e-9 * V.value[0]
    terms = A.delay_coupling_terms(log, 0.1)
    assert np.all(np.isnan(terms[gl.t < 0.1 - 1e-9]))
    assert np.abs(terms[-1]).max() < 1e-2 * np.nanmax(np.abs(terms))


def test_reduced_model_not_applicable_when_unsynchronized(pair_log, arm):
    res = A.reduced_model_compare(pair_log, arm, np.eye(2), arm_trajectory(), sync_tol=1e-30)
    assert not res.applicable and res.reason


def test_reduced_model_exact_when_synchronized(arm):
    q0 = np.array([[0.2, -0.1]] * 2)
    grp = make_group("pair", arm, build_graph("ring", 2),
                     ControllerSpec("tracking-sync", Gains(5.0, 2.0, 5.0, n=2)), arm_trajectory(),
                     q0=q0, qdot0=np.zeros((2, 2)))
    log = run(SimConfig(t_final=2.0, seed=0, decimation=1), grp)
    res = A.reduced_model_compare(log, arm, 3.0 * np.eye(2), arm_trajectory())
    assert res.applicable and res.t_start == 0.0
    assert np.all(res.margin + 1e-9 >= 0)


def test_summary_metrics(pair_log):
    row = A.summary_metrics(pair_log, "pair")
    assert tuple(row) == A.SUMMARY_FIELDS
    assert row["run_id"] == "pair" and row["final_sync_err"] >= 0
    assert np.isnan(A.summary_metrics(pair_log, "x", residual=False)["max_residual"])
