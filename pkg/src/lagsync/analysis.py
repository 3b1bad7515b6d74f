"""Post-hoc metrics computed from simulation logs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import ContractViolation, LagrangianModel
from .simulator import GroupLog, TrajectoryLog
from .topology import SyncBasis

SYNC_TOL = 1e-3


@dataclass(frozen=True)
class ErrorSeries:
    t: np.ndarray
    value: np.ndarray
    composite: np.ndarray | None = None


@dataclass(frozen=True)
class RateFit:
    lam: float
    r_squared: float
    t0: float
    t1: float
    n_points: int
    flagged: bool = False


def _group(log, group):
    if isinstance(log, GroupLog):
        return log
    return log.group(group)


def _disagreement(x):
    """``||V_sync' x||`` for ``x`` of shape (N, p, n) from pairwise differences.

    Uses ``||V_sync' x||^2 = (1/p) sum_{i<j} ||x_i - x_j||^2``, which is
    exactly zero when all members agree.
    """
    p = x.shape[1]
    i, j = np.triu_indices(p, 1)
    d = x[:, i] - x[:, j]
    return np.sqrt(np.einsum("tkn,tkn->t", d, d) / p)


def sync_error(log, basis: SyncBasis | None = None, group=0) -> ErrorSeries:
    """``||V_sync' {q}||`` and the composite version ``||V_sync' x||`` with ``x = {s}``."""
    g = _group(log, group)
    if basis is not None:
        if (basis.p, basis.n) != (g.p, g.n):
            raise ContractViolation("basis does not match the group dimensions")
        N = len(g.t)
        return ErrorSeries(g.t, np.linalg.norm(g.q.reshape(N, -1) @ basis.V_sync, axis=1),
                           np.linalg.norm(g.s.reshape(N, -1) @ basis.V_sync, axis=1))
    return ErrorSeries(g.t, _disagreement(g.q), _disagreement(g.s))


def network_sync_error(log: TrajectoryLog) -> ErrorSeries:
    """Disagreement over every robot of every group (all groups must share n)."""
    if len({g.n for g in log.groups}) != 1:
        raise ContractViolation("network sync error needs a common joint count")
    q = np.concatenate([g.q for g in log.groups], axis=1)
    return ErrorSeries(log.t, _disagreement(q))


def tracking_error(log, group=0) -> ErrorSeries:
    """Per-robot ``||q_i - q_d,i||``; ``value`` has shape ``(N, p)``.

    ``composite`` holds the stacked norm over all robots.
    """
    g = _group(log, group)
    e = g.q - g.qd
    return ErrorSeries(g.t, np.linalg.norm(e, axis=2), np.linalg.norm(e.reshape(len(g.t), -1), axis=1))


def fit_rate(series, window=None, floor: float = 1e-6) -> RateFit:
    """Exponential rate from a least-squares fit of ``log(value)`` against ``t``.

    The default window starts at ``0.1 t_final`` and ends where the series
    first drops below ``floor``. When the last 10% of samples decays at
    under a tenth of the earlier mean rate it is taken as a plateau and the
    window ends below ``max(floor, 10 x median)`` instead. Nonpositive values inside the
    window shrink it to the preceding segment and set ``flagged``.
    """
    if isinstance(series, ErrorSeries):
        t, v = series.t, series.value
    else:
        t, v = series
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ContractViolation("fit_rate expects a scalar series")
    if window is None:
        t0 = t[0] + 0.1 * (t[-1] - t[0])
        k0, k9 = int(np.searchsorted(t, t0)), int(0.9 * len(v))
        tail = v[k9:]
        thr = floor
        if k9 - k0 > 1 and tail.size > 1 and v[k0] > 0 and np.all(tail > 0):
            # plateau: the tail decays at under a tenth of the earlier mean rate
            early = np.log(v[k0] / v[k9]) / (t[k9] - t[k0])
            late = np.log(tail[0] / tail[-1]) / (t[-1] - t[k9])
            if early > 0 and late < 0.1 * early:
                thr = max(floor, 10.0 * float(np.median(tail)))
        after = np.flatnonzero((t >= t0) & (v < thr))
        t1 = t[after[0]] if after.size else t[-1]
    else:
        t0, t1 = window
    sel = np.flatnonzero((t >= t0) & (t <= t1))
    flagged = False
    bad = np.flatnonzero(v[sel] <= 0)
    if bad.size:
        sel = sel[: bad[0]]
        flagged = True
    if sel.size < 3:
        raise ContractViolation("fewer than three positive samples in the fit window")
    tt, lv = t[sel], np.log(v[sel])
    A = np.column_stack([tt, np.ones_like(tt)])
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(-coef[0]), float(min(max(r2, 0.0), 1.0)), float(tt[0]), float(tt[-1]),
                   int(sel.size), flagged)


def _batched_M(models, q):
    """Mass matrices for ``q`` of shape (N, p, n) with per-member models."""
    N, p, n = q.shape
    code = models[0].code
    a = np.tile(np.vstack([m.a for m in models]), (N, 1))
    grav = np.zeros(N * p)
    M = kernels.mcg(code, a, grav, q.reshape(N * p, n), np.zeros((N * p, n)))[0]
    return M.reshape(N, p, n, n)


@dataclass(frozen=True)
class ResidualSeries:
    t: np.ndarray
    absolute: np.ndarray
    relative: np.ndarray
    energy: np.ndarray

    @property
    def max_relative(self) -> float:
        r = self.relative[np.isfinite(self.relative)]
        return float(r.max()) if r.size else float("nan")


def contraction_residual(log, L=None, models=None, group=0, energy_floor: float = 1e-12) -> ResidualSeries:
    """Residual of ``d/dt (x'[M]x) = -2 x' L x`` along a logged run.

    ``x`` stacks the composite variables. The derivative uses second-order
    central differences on the logged samples, so endpoints are excluded.
    Samples where ``x'[M]x`` is below ``energy_floor`` times its peak are
    reported as NaN in ``relative`` (rounding dominates there).
    """
    g = _group(log, group)
    models = g.models if models is None else models
    N = len(g.t)
    if L is None:
        Ls = [0.5 * (lap.L + lap.L.T) for lap in g.laplacians]
        Lt = np.stack([Ls[k] for k in g.graph_index])
    else:
        Lm = L.L if hasattr(L, "L") else np.asarray(L)
        Lt = np.broadcast_to(0.5 * (Lm + Lm.T), (N,) + Lm.shape)
    M = _batched_M(models, g.q)
    E = np.einsum("tpi,tpij,tpj->t", g.s, M, g.s)
    x = g.s.reshape(N, -1)
    diss = np.einsum("ti,tij,tj->t", x, Lt, x)
    dE = np.full(N, np.nan)
    h = np.diff(g.t)
    dE[1:-1] = (E[2:] - E[:-2]) / (h[1:] + h[:-1])
    res = np.abs(dE + 2.0 * diss)
    rel = np.divide(res, E, out=np.full(N, np.nan), where=E > 0)
    rel[(E < energy_floor * E.max()) | ~np.isfinite(dE)] = np.nan
    return ResidualSeries(g.t, res, rel, E)


@dataclass(frozen=True)
class FunctionalSeries:
    t: np.ndarray
    value: np.ndarray

    @property
    def increments(self):
        return np.diff(self.value)

    @property
    def max_increment(self) -> float:
        d = self.increments
        return float(d.max()) if d.size else 0.0


def pd_lyapunov(log, q_rest, group=0) -> FunctionalSeries:
    """``V = 1/2 sum qdot' M qdot + 1/2 e' L (I x Lambda) e`` with ``e = {q - q_rest}``.

    For two robots the potential term is
    ``1/2 [e1' K1 Lambda e1 + e2' K1 Lambda e2 - 2 e1' K2 Lambda e2]``.
    """
    g = _group(log, group)
    N = len(g.t)
    M = _batched_M(g.models, g.q)
    kin = 0.5 * np.einsum("tpi,tpij,tpj->t", g.qdot, M, g.qdot)
    Lam = g.gains.Lambda
    L = g.laplacians[0].L
    S = L @ np.kron(np.eye(g.p), Lam)
    S = 0.5 * (S + S.T)
    e = (g.q - np.asarray(q_rest, dtype=float)).reshape(N, -1)
    pot = 0.5 * np.einsum("ti,ij,tj->t", e, S, e)
    return FunctionalSeries(g.t, kin + pot)


def _interp_rows(t, arr, tq):
    """Linear interpolation of ``arr`` (N, ...) at times ``tq``."""
    flat = arr.reshape(len(t), -1)
    out = np.empty((len(tq), flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.interp(tq, t, flat[:, j])
    return out.reshape((len(tq),) + arr.shape[1:])


def delayed_composites(log, T, group=0):
    """``s_j(t - T)`` rebuilt from the log with the current desired trajectory."""
    g = _group(log, group)
    lam = np.diag(g.gains.Lambda)
    tq = g.t - T
    qp = _interp_rows(g.t, g.q, tq)
    vp = _interp_rows(g.t, g.qdot, tq)
    s_past = vp + lam * qp - (g.qd_dot + lam * g.qd)
    s_past[tq < g.t[0] - 1e-12] = np.nan
    return s_past


def delay_coupling_terms(log, T, group=0):
    """Two-robot coupling torques ``tau_21, tau_12`` as (N, 2, n); NaN before ``T``."""
    g = _group(log, group)
    if g.p != 2:
        raise ContractViolation("delay coupling terms are defined for two robots")
    K2 = g.gains.K2
    sp = delayed_composites(g, T)
    t21 = (sp[:, 1] - g.s[:, 0]) @ K2.T
    t12 = (sp[:, 0] - g.s[:, 1]) @ K2.T
    return np.stack([t21, t12], axis=1)


def delay_functional(log, gains=None, T: float = 0.0, group=0) -> FunctionalSeries:
    """``V(t) = sum s_i' M_i s_i + int_{t-T}^t sum s_i' K2 s_i``, evaluated from ``t = T``.

    The integral uses the cumulative trapezoid rule on logged samples with
    linear interpolation at ``t - T``. With ``T = 0`` the integral vanishes.
    """
    g = _group(log, group)
    K2 = g.gains.K2 if gains is None else gains.K2
    M = _batched_M(g.models, g.q)
    Vm = np.einsum("tpi,tpij,tpj->t", g.s, M, g.s)
    if T <= 0:
        return FunctionalSeries(g.t, Vm)
    w = np.einsum("tpi,ij,tpj->t", g.s, K2, g.s)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(g.t))])
    start = np.searchsorted(g.t, g.t[0] + T - 1e-12)
    t = g.t[start:]
    integral = cum[start:] - np.interp(t - T, g.t, cum)
    return FunctionalSeries(t, Vm[start:] + integral)


@dataclass(frozen=True)
class ReducedComparison:
    applicable: bool
    t_start: float
    t: np.ndarray
    deviation: np.ndarray
    envelope: np.ndarray
    reason: str = ""

    @property
    def margin(self) -> np.ndarray:
        """``envelope - deviation`` per sample and robot."""
        return self.envelope[:, None] - self.deviation


def reduced_model_compare(log, model: LagrangianModel, D1, trajectory, group=0,
                          sync_tol: float = SYNC_TOL, t_start: float | None = None) -> ReducedComparison:
    """Compare each robot with the reduced single-robot dynamics.

    The reduced system ``M s' + C s + D1 s = 0`` is integrated with RK4 from
    the network mean state at the first sample where the sync error is below
    ``sync_tol`` (or at ``t_start``). ``envelope`` is the running maximum of
    the sync error over the remaining samples, read backwards, so it bounds
    the sync error from the current time onwards.
    """
    g = _group(log, group)
    se = sync_error(g).value
    if t_start is None:
        ok = np.flatnonzero(se < sync_tol)
        if not ok.size:
            return ReducedComparison(False, math.nan, g.t[:0], np.zeros((0, g.p)), np.zeros(0),
                                     "sync error never reaches the tolerance")
        i0 = int(ok[0])
    else:
        i0 = int(np.searchsorted(g.t, t_start))
    D1 = np.asarray(D1, dtype=float)
    lam = np.diag(g.gains.Lambda)
    code = model.code
    a, grav = model.batch_args(1)
    q = g.q[i0].mean(axis=0)[None].copy()
    v = g.qdot[i0].mean(axis=0)[None].copy()

    def f(t, q, v):
        qd, qdv, qdd = (x[None] for x in trajectory(float(t)))
        qr = qdv - lam * (q - qd)
        qrr = qdd - lam * (v - qdv)
        s = v - qr
        tau = kernels.inverse_dynamics(code, a, grav, q, v, qr, qrr) - s @ D1.T
        return v, kernels.forward_dynamics(code, a, grav, q, v, tau)

    ts = g.t[i0:]
    sub = max(1, int(round((ts[1] - ts[0]) / log_dt(log)))) if len(ts) > 1 else 1
    out = np.empty((len(ts), g.n))
    out[0] = q[0]
    for j in range(1, len(ts)):
        h = (ts[j] - ts[j - 1]) / sub
        t = ts[j - 1]
        for _ in range(sub):
            k1q, k1v = f(t, q, v)
            k2q, k2v = f(t + h / 2, q + h / 2 * k1q, v + h / 2 * k1v)
            k3q, k3v = f(t + h / 2, q + h / 2 * k2q, v + h / 2 * k2v)
            k4q, k4v = f(t + h, q + h * k3q, v + h * k3v)
            q = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
            v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            t += h
        out[j] = q[0]
    dev = np.linalg.norm(g.q[i0:] - out[:, None, :], axis=2)
    env = np.maximum.accumulate(se[i0:][::-1])[::-1]
    return ReducedComparison(True, float(ts[0]), ts, dev, env)


def log_dt(log):
    return log.dt if isinstance(log, TrajectoryLog) else (log.t[1] - log.t[0])


def summary_metrics(log: TrajectoryLog, run_id: str = "run", residual: bool = True) -> dict:
    """Row of the per-run summary CSV.

    ``max_residual`` covers undisturbed tracking-sync and partial groups
    with analytic references; pass ``residual=False`` for disturbed runs.
    """
    parts = [sync_error(g).value ** 2 for g in log.groups]
    sync = np.sqrt(np.sum(parts, axis=0))
    trk = np.sqrt(np.sum([tracking_error(g).composite ** 2 for g in log.groups], axis=0))
    row = {"run_id": run_id}
    for key, ser in (("sync", sync), ("track", trk)):
        try:
            fit = fit_rate((log.t, ser))
            row[f"lambda_{key}"], row[f"r2_{key}"] = fit.lam, fit.r_squared
        except ContractViolation:
            row[f"lambda_{key}"], row[f"r2_{key}"] = math.nan, math.nan
    resid = []
    for g in log.groups if residual else ():
        if g.law in ("tracking-sync", "partial") and not g.relayed.any():
            resid.append(contraction_residual(g).max_relative)
    row["max_residual"] = max(resid) if resid else math.nan
    row["final_sync_err"] = float(sync[-1])
    row["final_track_err"] = float(max(tracking_error(g).value[-1].max() for g in log.groups))
    return {k: row[k] for k in SUMMARY_FIELDS}


SUMMARY_FIELDS = ("run_id", "lambda_sync", "lambda_track", "r2_sync", "r2_track",
                  "max_residual", "final_sync_err", "final_track_err")
