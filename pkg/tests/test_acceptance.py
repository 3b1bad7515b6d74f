"""Acceptance criteria, one test per criterion.

Each test records a single PASS/FAIL line that is echoed in the terminal
summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, arm_trajectory
from lagsync import analysis as A
from lagsync import kernels
from lagsync.checks import evaluate
from lagsync.config import build_experiment, load_preset, raw_preset, validate_config
from lagsync.controllers import ControllerSpec, DesiredTrajectory
from lagsync.dynamics import default_model
from lagsync.simulator import SimConfig, Simulator, make_group, run
from lagsync.topology import Gains, apply_inhibition, build_graph, modified_laplacian, sync_basis


def record(idx, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{idx:2d}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def run_preset(name, **overrides):
    exp = build_experiment(load_preset(name), **overrides)
    t0 = time.perf_counter()
    log = Simulator(exp.scenario, exp.sim).run()
    return exp, log, time.perf_counter() - t0


_cache = {}


def preset_log(name):
    if name not in _cache:
        _cache[name] = run_preset(name)
    return _cache[name]


def _mcg(model, q, v):
    a, g = model.batch_args(len(q))
    return kernels.mcg(model.code, a, g, q, v)


def test_01_skew_symmetry_and_regressor():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_skew = worst_reg = 0.0
    for kind in ("two-link-arm", "cart-double-pendulum"):
        model = default_model(kind)
        N, n = 1000, model.n
        q = rng.uniform(-np.pi, np.pi, (N, n))
        v, x = rng.uniform(-2, 2, (N, n)), rng.uniform(-1, 1, (N, n))
        h = 1e-4
        Mp2, Mp1, Mm1, Mm2 = (_mcg(model, q + c * h * v, v)[0] for c in (2, 1, -1, -2))
        Mdot = (-Mp2 + 8 * Mp1 - 8 * Mm1 + Mm2) / (12 * h)
        M, C, g = _mcg(model, q, v)
        worst_skew = max(worst_skew, np.abs(np.einsum("ti,tij,tj->t", x, Mdot - 2 * C, x)).max())
        vr, ar = rng.uniform(-2, 2, (N, n)), rng.uniform(-2, 2, (N, n))
        a, grav = model.batch_args(N)
        Y = kernels.regressor(model.code, grav, q, v, vr, ar)
        rhs = np.einsum("tij,tj->ti", M, ar) + np.einsum("tij,tj->ti", C, vr) + g
        worst_reg = max(worst_reg, np.linalg.norm(Y @ model.a - rhs, axis=1).max())
    elapsed = time.perf_counter() - t0
    ok = worst_skew < 1e-9 and worst_reg < 1e-10 and elapsed < 5.0
    record(1, "skew symmetry and regressor", ok,
           f"max |x'(Mdot-2C)x| = {worst_skew:.2e} (< 1e-9), max ||Ya - rhs|| = {worst_reg:.2e} "
           f"(< 1e-10), {elapsed:.2f} s (< 5 s)")


def test_02_spectral_fixtures():
    details, ok = [], True
    for p, K1, K2, expect in ((2, 5.0, 2.0, (3.0, 7.0)), (4, 5.0, 2.0, (1.0, 9.0, 5.0, 5.0))):
        lap = modified_laplacian(build_graph("ring", p), Gains(K1, K2, 1.0, n=1))
        basis = sync_basis(lap.L, p, 1)
        spec = tuple(np.round(np.concatenate([np.diag(basis.D1), np.diag(basis.D2)]), 12))
        recon = np.linalg.norm(basis.V @ basis.D() @ basis.V.T - lap.L)
        ok &= np.allclose(spec, expect, atol=1e-9) and recon < 1e-9
        details.append(f"p={p} spectrum {tuple(float(s) for s in spec)} recon {recon:.1e}")
    record(2, "spectral fixtures", ok, "; ".join(details))


def test_03_ring_sync_faster_than_tracking():
    exp, log, elapsed = preset_log("fig4")
    gl = log.group(0)
    sync = A.sync_error(gl).value[-1]
    track = A.tracking_error(gl).value[-1].max()
    fs = A.fit_rate(A.sync_error(gl))
    trk = A.tracking_error(gl)
    ft = A.fit_rate((trk.t, trk.composite))
    ok = (sync < 1e-3 and track < 1e-2 and fs.lam > ft.lam and fs.r_squared > 0.95
          and ft.r_squared > 0.95 and elapsed < 30.0)
    record(3, "four-robot ring", ok,
           f"sync {sync:.2e} (< 1e-3), tracking {track:.2e} (< 1e-2), lambda_sync {fs.lam:.3f} "
           f"(r2 {fs.r_squared:.4f}) > lambda_track {ft.lam:.3f} (r2 {ft.r_squared:.4f}), "
           f"{elapsed:.1f} s (< 30 s)")


def test_04_indifferent_regime():
    cfg = raw_preset("fig4")
    cfg["gains"].update(K1=4.0, K2=2.0)
    exp = build_experiment(validate_config(cfg))
    gl = Simulator(exp.scenario, exp.sim).run().group(0)
    sync = A.sync_error(gl).value[-1]
    tmin = A.tracking_error(gl).value.min()
    ok = sync < 1e-3 and tmin > 0.05
    record(4, "indifferent regime", ok, f"sync {sync:.2e} (< 1e-3), min tracking over time {tmin:.3f} (> 0.05)")


def test_05_fast_inhibition():
    cart = default_model("cart-double-pendulum")
    gains = Gains(4.0, 2.0, 5.0, n=3)
    graph, gains = apply_inhibition(build_graph("ring", 4), gains, (0, 2), K=2.0)
    grp = make_group("inhib", cart, graph, ControllerSpec("tracking-sync", gains), DesiredTrajectory.zero(3))
    gl = run(SimConfig(t_final=40.0, seed=1), grp).group(0)
    sync = A.sync_error(gl).value[-1]
    qmax = np.linalg.norm(gl.q[-1], axis=1).max()
    ok = sync < 1e-3 and qmax < 1e-3
    record(5, "fast inhibition", ok, f"sync {sync:.2e} (< 1e-3), max ||q_i|| {qmax:.2e} (< 1e-3)")


def test_06_adaptive_presets():
    _, loga, _ = preset_log("fig6a")
    _, logb, _ = preset_log("fig6b")
    ga, gb = loga.group(0), logb.group(0)
    sa, ta = A.sync_error(ga).value[-1], A.tracking_error(ga).value[-1].max()
    ahat = max(np.abs(ga.ahat).max(), np.abs(gb.ahat).max())
    sb = A.sync_error(gb).value[-1]
    te = A.tracking_error(gb)
    tail = te.value[te.t >= te.t[-1] - 5.0].mean(axis=0).min()
    ok = sa < 1e-2 and ta < 1e-2 and np.isfinite(ahat) and ahat < 1e3 and sb < 1e-2 and tail > 0.05
    record(6, "adaptive", ok,
           f"stable: sync {sa:.2e}, tracking {ta:.2e} (< 1e-2); indifferent: sync {sb:.2e} (< 1e-2), "
           f"tail-mean tracking {tail:.3f} (> 0.05); max |a_hat| {ahat:.2f}")


def test_07_pd_coupling():
    arm = default_model("two-link-arm")
    rest = np.array([0.3, -0.2])
    grp = make_group("pd", arm, build_graph("ring", 2), ControllerSpec("pd", Gains(5.0, 2.0, 2.0, n=2)),
                     DesiredTrajectory.constant_at(rest))
    log = run(SimConfig(t_final=40.0, seed=1, decimation=1), grp)
    gl = log.group(0)
    to_rest = np.abs(gl.q[-1] - rest).max()
    pair = np.abs(gl.q[-1, 0] - gl.q[-1, 1]).max()
    dV = A.pd_lyapunov(log, rest).max_increment

    vgrp = make_group("vel", arm, build_graph("ring", 2),
                      ControllerSpec("velocity-only", Gains(5.0, 2.0, 0.0, n=2)),
                      DesiredTrajectory.constant_at(rest))
    vl = run(SimConfig(t_final=40.0, seed=1), vgrp).group(0)
    vsync = np.abs(vl.qdot[-1, 0] - vl.qdot[-1, 1]).max()
    ok = to_rest < 1e-3 and pair < 1e-3 and dV < 1e-6 and vsync < 1e-3
    record(7, "PD coupling", ok,
           f"|q - q_rest| {to_rest:.2e}, |q1 - q2| {pair:.2e}, max dV {dV:.2e} (< 1e-6); "
           f"Lambda=0 velocity gap {vsync:.2e}")


def test_08_partial_state_coupling():
    arm = default_model("two-link-arm")
    graph = build_graph("ring", 2, partial_mask=(1, 0))
    g = Gains(20.0, 15.0, 10.0, n=2)
    grp = make_group("partial", arm, graph, ControllerSpec("partial", g, graph=graph), arm_trajectory())
    gl = run(SimConfig(t_final=30.0, seed=1), grp).group(0)
    sync = A.sync_error(gl).value[-1]
    track = A.tracking_error(gl).value[-1].max()
    ok = sync < 1e-2 and track < 1e-2
    record(8, "partial-state coupling", ok, f"P = diag(1, 0): sync {sync:.2e}, tracking {track:.2e} (< 1e-2)")


def test_09_time_delay():
    arm = default_model("two-link-arm")
    g = Gains(20.0, 15.0, 10.0, n=2)
    gaps = {}
    for T in (0.05, 0.2):
        grp = make_group("delay", arm, build_graph("ring", 2), ControllerSpec("delayed", g, delay_T=T),
                         arm_trajectory())
        gl = run(SimConfig(t_final=60.0, seed=1), grp).group(0)
        gaps[T] = np.linalg.norm(gl.q[-1, 0] - gl.q[-1, 1])
    # the functional is a Lyapunov certificate for a constant reference
    rest = DesiredTrajectory.constant_at([0.3, -0.2])
    inc = {}
    for T in (0.05, 0.2):
        grp = make_group("delay", arm, build_graph("ring", 2),
                         ControllerSpec("delayed", Gains(5.0, 2.0, 5.0, n=2), delay_T=T), rest)
        V = A.delay_functional(run(SimConfig(t_final=10.0, seed=1, decimation=1), grp), T=T)
        inc[T] = V.max_increment / V.value[0]
    ok = all(v < 1e-2 for v in gaps.values()) and all(v <= 1e-9 for v in inc.values())
    record(9, "time delay", ok,
           ", ".join(f"T={T}: ||q1 - q2|| {gaps[T]:.2e} (< 1e-2), max relative dV {inc[T]:.1e}"
                     for T in gaps))


def test_10_concurrent_hierarchy():
    exp, log, _ = preset_log("fig5")
    results = evaluate(log, exp.config["acceptance"])
    net = A.network_sync_error(log)
    g1 = A.sync_error(log.group(0))
    settled = net.t >= g1.t[np.flatnonzero(g1.value < 1e-3)[0]]
    later = net.value[settled]
    decreasing = later[-1] < 1e-2 * later[0]
    ok = all(r.passed for r in results) and decreasing
    record(10, "concurrent hierarchy", ok,
           "; ".join(r.line() for r in results) +
           f"; network sync {later[0]:.2e} -> {later[-1]:.2e} after group 1 settles")


def test_11_contraction_residual_order():
    res = {}
    for dt in (1e-3, 5e-4):
        exp, log, _ = run_preset("fig4", dt=dt, t_final=5.0, decimation=1)
        res[dt] = A.contraction_residual(log).max_relative
    ratio = res[1e-3] / res[5e-4]
    ok = res[1e-3] < 1e-2 and ratio >= 3.0
    record(11, "contraction residual", ok,
           f"dt=1e-3: {res[1e-3]:.2e} (< 1e-2), dt=5e-4: {res[5e-4]:.2e}, ratio {ratio:.2f} (about 4)")


def test_12_model_reduction():
    exp, log, _ = preset_log("fig4")
    grp = exp.scenario.groups[0]
    g = grp.controller.gains
    D1 = g.K1 - 2 * g.K2
    cmp = A.reduced_model_compare(log, grp.models[0], D1, grp.trajectory)
    worst = float(cmp.margin.min()) if cmp.applicable else -np.inf
    ok = cmp.applicable and worst >= -1e-3
    record(12, "model reduction", ok,
           f"from t={cmp.t_start:.2f} s, min(envelope + 1e-3 - deviation) = {worst + 1e-3:.2e} (>= 0), "
           f"max deviation {cmp.deviation.max():.2e}")


@pytest.fixture(autouse=True, scope="module")
def _clear_cache():
    yield
    _cache.clear()
