"""Fixed-step RK4 integration of coupled robot networks.

A scenario is an ordered list of groups. Each group is a regular network of
identical-kind robots running one control law. Groups after the first may
receive their desired trajectories from members of earlier groups through
relay edges (a concurrent hierarchy). All robots of all groups share one
flat state vector and are advanced synchronously.

State layout per group: ``q (p, n)``, ``qdot (p, n)``, then ``a_hat (p, k)``
for adaptive laws and the high-pass filter state ``z (p, n)`` when the group
receives relayed references.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .controllers import ControllerSpec, DesiredTrajectory
from .dynamics import ContractViolation, LagrangianModel
from .topology import CouplingGraph, GraphSchedule, ModifiedLaplacian, modified_laplacian

log = logging.getLogger(__name__)


class SimulationBlowUp(RuntimeError):
    """Non-finite or runaway state; ``t_last_good`` is the last finite sample time."""

    def __init__(self, message, t_last_good):
        super().__init__(message)
        self.t_last_good = t_last_good


# ------------------------------------------------------------------ scenario

@dataclass(frozen=True)
class RelayEdge:
    """Member ``src`` of group ``src_group`` sets the reference of ``dst``.

    The relayed reference is ``q_d = scale * q_src[select] + offset`` and
    ``qdot_d = scale * qdot_src[select]``.
    """

    src_group: int
    src: int
    dst_group: int
    dst: int
    scale: float = 1.0
    offset: float | Sequence[float] = 0.0
    select: tuple | None = None


@dataclass(eq=False)
class Group:
    """One regular network.

    Parameters
    ----------
    models : list of LagrangianModel
        One per member, all of the same kind.
    graph : CouplingGraph or GraphSchedule
    controller : ControllerSpec
    trajectory : DesiredTrajectory, optional
        Common reference. Members with an incoming relay edge ignore it.
    q0, qdot0 : array (p, n), optional
        Initial conditions; drawn from the seeded generator when omitted.
    """

    name: str
    models: list
    graph: object
    controller: ControllerSpec
    trajectory: DesiredTrajectory | None = None
    q0: np.ndarray | None = None
    qdot0: np.ndarray | None = None

    def __post_init__(self):
        self._schedule = self.graph if isinstance(self.graph, GraphSchedule) \
            else GraphSchedule((0.0,), (self.graph,))
        if not self.models:
            raise ContractViolation(f"group {self.name} has no robots")
        kinds = {m.kind for m in self.models}
        if len(kinds) != 1:
            raise ContractViolation(f"group {self.name} mixes model kinds {sorted(kinds)}")
        if self.p != len(self.models):
            raise ContractViolation(
                f"group {self.name}: graph has p={self.p} but {len(self.models)} models given")
        if self.controller.gains.n != self.n:
            raise ContractViolation(f"group {self.name}: gains are {self.controller.gains.n}-dimensional, "
                                    f"models have n={self.n}")
        if self.trajectory is not None and self.trajectory.n != self.n:
            raise ContractViolation(f"group {self.name}: trajectory has n={self.trajectory.n}")
        law = self.controller.law
        if law in ("pd", "velocity-only"):
            if self.trajectory is not None and not self.trajectory.constant:
                raise ContractViolation("PD coupling drives robots to a rest state; use a constant reference")
            if any(m.gravity_on for m in self.models) and not self.controller.gravity_feedforward:
                raise ContractViolation("PD coupling needs gravity-free models or gravity feed-forward")
        if law == "adaptive" and self.controller.gains.Gamma.shape[0] != self.k:
            raise ContractViolation(f"Gamma must be {self.k}x{self.k}")

    @property
    def schedule(self) -> GraphSchedule:
        return self._schedule

    @property
    def p(self) -> int:
        return self.schedule.p

    @property
    def n(self) -> int:
        return self.models[0].n

    @property
    def k(self) -> int:
        return len(self.models[0].a)

    @property
    def code(self) -> int:
        return self.models[0].code


@dataclass(eq=False)
class ConcurrentScenario:
    groups: list
    relays: list = field(default_factory=list)

    def __post_init__(self):
        G = len(self.groups)
        seen = set()
        for e in self.relays:
            if not (0 <= e.src_group < G and 0 <= e.dst_group < G):
                raise ContractViolation(f"relay {e} references a missing group")
            if not 0 <= e.src < self.groups[e.src_group].p or not 0 <= e.dst < self.groups[e.dst_group].p:
                raise ContractViolation(f"relay {e} references a missing member")
            if (e.dst_group, e.dst) in seen:
                raise ContractViolation(f"member {e.dst} of group {e.dst_group} has two relay sources")
            seen.add((e.dst_group, e.dst))
        self.order = self._topological_order()
        for gi, g in enumerate(self.groups):
            relayed = {e.dst for e in self.relays if e.dst_group == gi}
            if g.trajectory is None and len(relayed) < g.p:
                raise ContractViolation(f"group {g.name} has members without any reference")
            if g.controller.law in ("pd", "velocity-only", "delayed") and relayed:
                raise ContractViolation(f"law {g.controller.law} does not accept relayed references")

    def _topological_order(self):
        G = len(self.groups)
        succ = {i: set() for i in range(G)}
        indeg = [0] * G
        for e in self.relays:
            if e.dst_group == e.src_group:
                raise ContractViolation("relay edges must connect different groups")
            if e.dst_group not in succ[e.src_group]:
                succ[e.src_group].add(e.dst_group)
                indeg[e.dst_group] += 1
        ready = [i for i in range(G) if indeg[i] == 0]
        order = []
        while ready:
            i = ready.pop(0)
            order.append(i)
            for j in sorted(succ[i]):
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
        if len(order) != G:
            raise ContractViolation("relay edges between groups form a cycle")
        return order

    @property
    def hierarchical(self) -> bool:
        return bool(self.relays)


def single_group(group: Group) -> ConcurrentScenario:
    return ConcurrentScenario([group], [])


# ------------------------------------------------------------------- config

@dataclass(frozen=True)
class Disturbance:
    """Bounded per-robot torque: ``sinusoid`` or piecewise-constant ``noise``."""

    kind: str = "sinusoid"
    amplitude: float = 0.1
    freq_range: tuple = (0.5, 3.0)

    def __post_init__(self):
        if self.kind not in ("sinusoid", "noise"):
            raise ContractViolation(f"unknown disturbance kind {self.kind!r}")
        if not self.amplitude >= 0:
            raise ContractViolation("disturbance amplitude must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "Disturbance":
        """Parse ``kind:amplitude``, e.g. ``sinusoid:0.1``."""
        kind, _, amp = text.partition(":")
        return cls(kind.strip(), float(amp) if amp else 0.1)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_final: float = 10.0
    seed: int = 0
    decimation: int = 10
    q_bound: float = 0.5
    qdot_bound: float = 0.2
    integrator: str = "rk4"
    disturbance: Disturbance | None = None
    hp_tau: float = 0.01
    blowup: float = 1e8

    def __post_init__(self):
        if not self.dt > 0:
            raise ContractViolation("dt must be positive")
        if not self.t_final >= self.dt:
            raise ContractViolation("t_final must be at least dt")
        if self.integrator != "rk4":
            raise ContractViolation("only the rk4 integrator is provided")
        if int(self.decimation) < 1:
            raise ContractViolation("decimation must be >= 1")
        if not self.hp_tau > 0:
            raise ContractViolation("high-pass filter constant must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


# ------------------------------------------------------------- delay buffer

class DelayBuffer:
    """Time-ordered history of ``(q, qdot)`` with linear interpolation.

    Samples are appended once per integration step. Queries before the first
    sample return ``None`` (warm-up); queries after the last sample are
    rejected as non-causal.
    """

    def __init__(self, shape, capacity: int = 1024):
        self.shape = tuple(shape)
        self._t = np.empty(capacity)
        self._q = np.empty((capacity,) + self.shape)
        self._v = np.empty((capacity,) + self.shape)
        self._len = 0

    def __len__(self):
        return self._len

    def append(self, t, q, qdot):
        if self._len and t <= self._t[self._len - 1]:
            raise ContractViolation("delay buffer times must increase")
        if self._len == len(self._t):
            cap = 2 * len(self._t)
            self._t = np.resize(self._t, cap)
            self._q = np.resize(self._q, (cap,) + self.shape)
            self._v = np.resize(self._v, (cap,) + self.shape)
        i = self._len
        self._t[i] = t
        self._q[i] = q
        self._v[i] = qdot
        self._len += 1

    @property
    def t_last(self):
        return self._t[self._len - 1] if self._len else -np.inf

    def sample(self, t_query: float, eps: float = 1e-12):
        """Interpolated ``(q, qdot)`` at ``t_query`` or ``None`` during warm-up."""
        if not self._len or t_query < self._t[0] - eps:
            return None
        tl = self._t[self._len - 1]
        if t_query > tl + eps * max(1.0, abs(tl)):
            raise ContractViolation(f"non-causal delay query at t={t_query} (history ends at {tl})")
        t = self._t
        i = int(np.searchsorted(t[: self._len], t_query, side="right")) - 1
        i = min(max(i, 0), self._len - 1)
        if i == self._len - 1 or abs(t_query - t[i]) <= eps:
            return self._q[i].copy(), self._v[i].copy()
        w = (t_query - t[i]) / (t[i + 1] - t[i])
        return ((1 - w) * self._q[i] + w * self._q[i + 1],
                (1 - w) * self._v[i] + w * self._v[i + 1])


def delay_sample(buffer: DelayBuffer, t_query: float):
    """Functional alias for ``buffer.sample``."""
    return buffer.sample(t_query)


# ----------------------------------------------------------------------- log

@dataclass(eq=False)
class GroupLog:
    name: str
    p: int
    n: int
    k: int
    law: str
    model_tags: list
    offset: int
    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qd: np.ndarray
    qd_dot: np.ndarray
    s: np.ndarray
    tau: np.ndarray
    ahat: np.ndarray | None
    warmup: np.ndarray
    graph_index: np.ndarray
    laplacians: list
    models: list
    gains: object
    relayed: np.ndarray

    def robot_ids(self):
        return list(range(self.offset, self.offset + self.p))


@dataclass(eq=False)
class TrajectoryLog:
    t: np.ndarray
    groups: list
    dt: float
    decimation: int
    seed: int
    relays: list = field(default_factory=list)

    def group(self, key=0) -> GroupLog:
        if isinstance(key, int):
            return self.groups[key]
        for g in self.groups:
            if g.name == key:
                return g
        raise KeyError(key)

    @property
    def p_total(self):
        return sum(g.p for g in self.groups)

    def to_csv(self, path) -> list:
        """Write the per-robot long-format CSV. Returns the written paths.

        Groups with different joint counts go to separate files named
        ``<stem>_<group>.csv``.
        """
        path = Path(path)
        ns = {g.n for g in self.groups}
        batches = [(path, self.groups)] if len(ns) == 1 else \
            [(path.with_name(f"{path.stem}_{g.name}{path.suffix}"), [g]) for g in self.groups]
        written = []
        for out, groups in batches:
            n = groups[0].n
            kmax = max((g.k for g in groups if g.ahat is not None), default=0)
            header = ["t", "robot"] + [f"q{j + 1}" for j in range(n)] + \
                [f"qd{j + 1}" for j in range(n)] + [f"s{j + 1}" for j in range(n)] + \
                [f"tau{j + 1}" for j in range(n)] + [f"ahat{j + 1}" for j in range(kmax)]
            with open(out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for it, t in enumerate(self.t):
                    for g in groups:
                        for i in range(g.p):
                            row = [repr(float(t)), g.offset + i]
                            row += [repr(float(x)) for x in g.q[it, i]]
                            row += [repr(float(x)) for x in g.qd[it, i]]
                            row += [repr(float(x)) for x in g.s[it, i]]
                            row += [repr(float(x)) for x in g.tau[it, i]]
                            if kmax:
                                row += ([repr(float(x)) for x in g.ahat[it, i]]
                                        if g.ahat is not None else [""] * kmax)
                            w.writerow(row)
            written.append(out)
        return written


# ----------------------------------------------------------------- simulator

@dataclass(eq=False)
class _GroupRuntime:
    group: Group
    sl_q: slice
    sl_v: slice
    sl_a: slice | None
    sl_z: slice | None
    a: np.ndarray
    grav: np.ndarray
    lam: np.ndarray
    laps: list
    split: list
    relay_rows: np.ndarray
    relay_src: list
    buffer: DelayBuffer | None = None
    graph_idx: int = 0
    p: int = 0
    n: int = 0
    schedule: GraphSchedule | None = None
    code: int = 0
    relay_map: tuple | None = None


@dataclass(eq=False)
class NetworkState:
    """Flat integration state plus per-group bookkeeping."""

    t: float
    y: np.ndarray
    step_index: int = 0

    def group_arrays(self, rt: _GroupRuntime):
        p, n = rt.p, rt.n
        return self.y[rt.sl_q].reshape(p, n), self.y[rt.sl_v].reshape(p, n)


class Simulator:
    """Synchronous RK4 integrator for a ``ConcurrentScenario``."""

    def __init__(self, scenario: ConcurrentScenario, config: SimConfig):
        self.scenario = scenario
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self._dist_params = None
        self._dist_step = None
        self.runtimes = []
        off = 0
        for gi, g in enumerate(scenario.groups):
            p, n, k = g.p, g.n, g.k
            sl_q = slice(off, off + p * n)
            off += p * n
            sl_v = slice(off, off + p * n)
            off += p * n
            sl_a = None
            if g.controller.law == "adaptive":
                sl_a = slice(off, off + p * k)
                off += p * k
            relays = [e for e in scenario.relays if e.dst_group == gi]
            sl_z = None
            if relays:
                sl_z = slice(off, off + p * n)
                off += p * n
            laps, split = [], []
            for graph in g.schedule.graphs:
                lap = modified_laplacian(graph, g.controller.gains, n)
                laps.append(lap)
                split.append(_split_delay(lap, p, n))
            a = np.vstack([m.a for m in g.models])
            grav = np.array([m.grav for m in g.models])
            rows = np.array(sorted(e.dst for e in relays), dtype=int)
            src = [next(e for e in relays if e.dst == r) for r in rows]
            for e in src:
                sel = e.select if e.select is not None else tuple(range(n))
                if len(sel) != n or max(sel) >= scenario.groups[e.src_group].n:
                    raise ContractViolation(f"relay {e} cannot map source coordinates to n={n}")
            buf = None
            if g.controller.law == "delayed":
                if g.controller.delay_T < config.dt:
                    raise ContractViolation("delay_T must be at least one integration step")
                buf = DelayBuffer((p, n), capacity=config.n_steps + 2)
            self.runtimes.append(_GroupRuntime(
                g, sl_q, sl_v, sl_a, sl_z, a, grav, np.diag(g.controller.gains.Lambda).copy(),
                laps, split, rows, src, buf, 0, p, n, g.schedule, g.code))
        self.size = off
        for rt in self.runtimes:
            if rt.sl_z is None:
                continue
            r = len(rt.relay_rows)
            qidx = np.empty((r, rt.n), dtype=int)
            vidx = np.empty((r, rt.n), dtype=int)
            scale = np.empty((r, 1))
            offset = np.empty((r, rt.n))
            for row, e in enumerate(rt.relay_src):
                srt = self.runtimes[e.src_group]
                sel = np.asarray(e.select if e.select is not None else range(rt.n))
                qidx[row] = srt.sl_q.start + e.src * srt.n + sel
                vidx[row] = srt.sl_v.start + e.src * srt.n + sel
                scale[row] = e.scale
                offset[row] = np.broadcast_to(np.asarray(e.offset, dtype=float), (rt.n,))
            rt.relay_map = (qidx, vidx, scale, offset)
        self.state = NetworkState(0.0, self._initial_state())
        for rt in self.runtimes:
            if rt.buffer is not None:
                q, v = self.state.group_arrays(rt)
                rt.buffer.append(0.0, q, v)

    # -- initial conditions
    def _initial_state(self):
        cfg = self.config
        y = np.zeros(self.size)
        for rt in self.runtimes:
            g = rt.group
            shape = (g.p, g.n)
            q0 = self.rng.uniform(-cfg.q_bound, cfg.q_bound, shape)
            v0 = self.rng.uniform(-cfg.qdot_bound, cfg.qdot_bound, shape)
            if g.q0 is not None:
                q0 = np.broadcast_to(np.asarray(g.q0, dtype=float), shape).copy()
            if g.qdot0 is not None:
                v0 = np.broadcast_to(np.asarray(g.qdot0, dtype=float), shape).copy()
            y[rt.sl_q] = q0.ravel()
            y[rt.sl_v] = v0.ravel()
            if rt.sl_a is not None:
                a0 = g.controller.a_hat0
                a0 = rt.a.copy() if a0 is None else np.broadcast_to(np.asarray(a0, float), (g.p, g.k))
                y[rt.sl_a] = np.asarray(a0).ravel()
        for rt in self.runtimes:
            if rt.sl_z is not None:
                z = np.zeros((rt.p, rt.n))
                z[rt.relay_rows] = self._relay_values(rt, y)[1]
                y[rt.sl_z] = z.ravel()
        if not np.all(np.isfinite(y)):
            raise ContractViolation("initial state is not finite")
        return y

    # -- disturbances
    def _disturbance(self, t, step):
        d = self.config.disturbance
        if d is None or d.amplitude == 0:
            return None
        shapes = [(rt.group.p, rt.group.n) for rt in self.runtimes]
        if d.kind == "sinusoid":
            if self._dist_params is None:
                lo, hi = d.freq_range
                self._dist_params = [(self.rng.uniform(lo, hi, s), self.rng.uniform(0, 2 * np.pi, s))
                                     for s in shapes]
            return [d.amplitude * np.sin(w * t + ph) for w, ph in self._dist_params]
        if self._dist_step is None or self._dist_step[0] != step:
            self._dist_step = (step, [self.rng.uniform(-d.amplitude, d.amplitude, s) for s in shapes])
        return self._dist_step[1]

    # -- references
    def _relay_values(self, rt: _GroupRuntime, y):
        """Relayed ``(q_d, qdot_d)`` for the relayed rows of ``rt``."""
        qidx, vidx, scale, offset = rt.relay_map
        return scale * y[qidx] + offset, scale * y[vidx]

    def _references(self, rt: _GroupRuntime, t, y):
        g = rt.group
        p, n = rt.p, rt.n
        if g.trajectory is not None:
            qd, qdv, qdd = (np.repeat(x[None], p, axis=0) for x in g.trajectory(float(t)))
        else:
            qd = np.zeros((p, n))
            qdv = np.zeros((p, n))
            qdd = np.zeros((p, n))
        zdot = None
        if rt.sl_z is not None:
            z = y[rt.sl_z].reshape(p, n)
            zdot = np.zeros((p, n))
            rows = rt.relay_rows
            qd[rows], qdv[rows] = self._relay_values(rt, y)
            qdd[rows] = (qdv[rows] - z[rows]) / self.config.hp_tau
            zdot[rows] = qdd[rows]
        return qd, qdv, qdd, zdot

    # -- right-hand side
    def rhs(self, t, y, step, with_aux=False):
        ydot = np.empty_like(y)
        dist = self._disturbance(t, step)
        aux = []
        for gi, rt in enumerate(self.runtimes):
            ctrl = rt.group.controller
            law = ctrl.law
            p, n = rt.p, rt.n
            q = y[rt.sl_q].reshape(p, n)
            v = y[rt.sl_v].reshape(p, n)
            qd, qdv, qdd, zdot = self._references(rt, t, y)
            d = None if dist is None else dist[gi]
            warm = False
            if law in ("adaptive", "delayed"):
                tau, s, warm = self._general_law(rt, t, y, ydot, q, v, qd, qdv, qdd)
                applied = tau if d is None else tau + d
                acc = kernels.forward_dynamics(rt.code, rt.a, rt.grav, q, v, applied)
            else:
                mode = kernels.FF_INVERSE
                if law in ("pd", "velocity-only"):
                    mode = kernels.FF_GRAVITY if ctrl.gravity_feedforward else kernels.FF_NONE
                acc, tau, s = kernels.closed_loop(rt.code, rt.a, rt.grav, q, v, qd, qdv, qdd, rt.lam,
                                                  rt.laps[rt.graph_idx].L, mode, d)
            ydot[rt.sl_q] = y[rt.sl_v]
            ydot[rt.sl_v] = acc.ravel()
            if rt.sl_z is not None:
                ydot[rt.sl_z] = zdot.ravel()
            if with_aux:
                aux.append({"qd": qd, "qd_dot": qdv, "s": s, "tau": tau, "warmup": warm})
        return (ydot, aux) if with_aux else ydot

    def _general_law(self, rt, t, y, ydot, q, v, qd, qdv, qdd):
        """Adaptive and delayed laws; writes the estimate rate into ``ydot``."""
        ctrl = rt.group.controller
        lam = rt.lam
        qr_dot = qdv - lam * (q - qd)
        qr_ddot = qdd - lam * (v - qdv)
        s = v - qr_dot
        warm = False
        if ctrl.law == "adaptive":
            ahat = y[rt.sl_a].reshape(rt.p, -1)
            Y = kernels.regressor(rt.code, rt.grav, q, v, qr_dot, qr_ddot)
            ff = np.einsum("pnk,pk->pn", Y, ahat)
            ydot[rt.sl_a] = (-np.einsum("pnk,pn->pk", Y, s) @ ctrl.gains.Gamma.T).ravel()
            coup = rt.laps[rt.graph_idx].L @ s.ravel()
        else:
            ff = kernels.inverse_dynamics(rt.code, rt.a, rt.grav, q, v, qr_dot, qr_ddot)
            L_self, L_off, R = rt.split[rt.graph_idx]
            hist = rt.buffer.sample(t - ctrl.delay_T)
            if hist is None:
                # hold-zero warm-up: neighbor terms replaced by the own signal
                coup = (L_self + R) @ s.ravel()
                warm = True
            else:
                s_past = hist[1] + lam * hist[0] - (qdv + lam * qd)
                coup = L_self @ s.ravel() + L_off @ s_past.ravel()
        return ff - coup.reshape(rt.p, rt.n), s, warm

    # -- stepping
    def _update_graphs(self, t):
        for rt in self.runtimes:
            sch = rt.schedule
            rt.graph_idx = 0 if len(sch.times) == 1 else sch.index_at(t + 1e-12)

    def step(self):
        """Advance every robot by one RK4 step."""
        st = self.state
        dt = self.config.dt
        t, y, k = st.t, st.y, st.step_index
        self._update_graphs(t)
        k1 = self.rhs(t, y, k)
        k2 = self.rhs(t + 0.5 * dt, y + 0.5 * dt * k1, k)
        k3 = self.rhs(t + 0.5 * dt, y + 0.5 * dt * k2, k)
        k4 = self.rhs(t + dt, y + dt * k3, k)
        y_new = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = (k + 1) * dt
        if not np.all(np.isfinite(y_new)) or np.abs(y_new).max() > self.config.blowup:
            raise SimulationBlowUp(f"state diverged during the step starting at t={t:.6g} s", t)
        st.t, st.y, st.step_index = t_new, y_new, k + 1
        for rt in self.runtimes:
            if rt.buffer is not None:
                q, v = st.group_arrays(rt)
                rt.buffer.append(t_new, q, v)
        return st

    def run(self) -> TrajectoryLog:
        cfg = self.config
        nsteps = cfg.n_steps
        dec = int(cfg.decimation)
        idx = list(range(0, nsteps + 1, dec))
        if idx[-1] != nsteps:
            idx.append(nsteps)
        N = len(idx)
        store = []
        for rt in self.runtimes:
            g = rt.group
            p, n = g.p, g.n
            store.append({key: np.empty((N, p, n)) for key in ("q", "qdot", "qd", "qd_dot", "s", "tau")})
            store[-1]["ahat"] = np.empty((N, p, g.k)) if rt.sl_a is not None else None
            store[-1]["warmup"] = np.zeros(N, dtype=bool)
            store[-1]["graph_index"] = np.zeros(N, dtype=int)
        times = np.empty(N)
        j = 0
        for step in range(nsteps + 1):
            if step == idx[j]:
                st = self.state
                self._update_graphs(st.t)
                _, aux = self.rhs(st.t, st.y, step, with_aux=True)
                times[j] = st.t
                for rt, rec, ax in zip(self.runtimes, store, aux):
                    q, v = st.group_arrays(rt)
                    rec["q"][j] = q
                    rec["qdot"][j] = v
                    for key in ("qd", "qd_dot", "s", "tau"):
                        rec[key][j] = ax[key]
                    rec["warmup"][j] = ax["warmup"]
                    rec["graph_index"][j] = rt.graph_idx
                    if rec["ahat"] is not None:
                        rec["ahat"][j] = st.y[rt.sl_a].reshape(rt.group.p, rt.group.k)
                j += 1
                if j == N:
                    break
            self.step()
        groups = []
        off = 0
        for rt, rec in zip(self.runtimes, store):
            g = rt.group
            relayed = np.zeros(g.p, dtype=bool)
            relayed[rt.relay_rows] = True
            groups.append(GroupLog(
                g.name, g.p, g.n, g.k, g.controller.law, [m.tag for m in g.models], off,
                times, rec["q"], rec["qdot"], rec["qd"], rec["qd_dot"], rec["s"], rec["tau"],
                rec["ahat"], rec["warmup"], rec["graph_index"], rt.laps, list(g.models),
                g.controller.gains, relayed))
            off += g.p
        return TrajectoryLog(times, groups, cfg.dt, dec, cfg.seed, list(self.scenario.relays))


def _split_delay(lap: ModifiedLaplacian, p, n):
    """Split ``L`` into own-robot blocks, neighbor blocks and neighbor row sums."""
    L = lap.L
    L_self = np.zeros_like(L)
    R = np.zeros_like(L)
    for i in range(p):
        b = slice(i * n, (i + 1) * n)
        L_self[b, b] = L[b, b]
        for j in range(p):
            if j != i:
                R[b, b] += L[b, j * n:(j + 1) * n]
    return L_self, L - L_self, R


def step(sim: Simulator):
    """Advance ``sim`` by one step and return its ``NetworkState``."""
    return sim.step()


def run(config: SimConfig, scenario) -> TrajectoryLog:
    """Integrate a single group or a scenario over ``[0, t_final]``."""
    if isinstance(scenario, Group):
        scenario = single_group(scenario)
    return Simulator(scenario, config).run()


def run_concurrent(scenario: ConcurrentScenario, config: SimConfig) -> TrajectoryLog:
    """Integrate a concurrent hierarchy; the scenario validates acyclicity."""
    if not isinstance(scenario, ConcurrentScenario):
        raise ContractViolation("run_concurrent expects a ConcurrentScenario")
    return Simulator(scenario, config).run()


def make_group(name, model: LagrangianModel, graph, controller: ControllerSpec, trajectory=None,
               q0=None, qdot0=None) -> Group:
    """Group of identical robots built from one model."""
    p = graph.p if isinstance(graph, (CouplingGraph, GraphSchedule)) else int(graph)
    return Group(name, [model] * p, graph, controller, trajectory, q0, qdot0)
