"""Decentralized control laws and desired trajectories.

Every torque function here is written for a single robot and only receives
its own state, its own trajectory signals and the composite variables of its
neighbors. The simulator evaluates the same laws in batched form; the tests
check that both agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import ContractViolation, LagrangianModel, RobotState, UnsupportedCapability
from .dynamics import inverse_dynamics, regressor
from .topology import CouplingGraph, Gains

LAWS = ("tracking-sync", "adaptive", "pd", "velocity-only", "partial", "delayed")


# ---------------------------------------------------------------- trajectories

@dataclass(frozen=True)
class JointProfile:
    """``offset + rate t + sum_k amp_k cos(omega_k t + phase_k)`` for one joint."""

    offset: float = 0.0
    rate: float = 0.0
    terms: tuple = ()

    def eval(self, t):
        if isinstance(t, (float, int)):
            return self._eval_scalar(float(t))
        t = np.asarray(t, dtype=float)
        q = self.offset + self.rate * t
        qd = self.rate + 0.0 * t
        qdd = 0.0 * t
        for amp, w, ph in self.terms:
            arg = w * t + ph
            q = q + amp * np.cos(arg)
            qd = qd - amp * w * np.sin(arg)
            qdd = qdd - amp * w * w * np.cos(arg)
        return q, qd, qdd

    def _eval_scalar(self, t):
        q = self.offset + self.rate * t
        qd = self.rate
        qdd = 0.0
        for amp, w, ph in self.terms:
            c, s = math.cos(w * t + ph), math.sin(w * t + ph)
            q += amp * c
            qd -= amp * w * s
            qdd -= amp * w * w * c
        return q, qd, qdd


@dataclass(frozen=True)
class DesiredTrajectory:
    """Desired joint trajectory with analytic derivatives.

    Attributes
    ----------
    n : int
    fn : callable
        ``fn(t) -> (q_d, qdot_d, qddot_d)``, each of length ``n``.
    source : str
        ``"analytic"``, ``"relayed"`` or ``"filtered"``.
    """

    n: int
    fn: Callable
    source: str = "analytic"
    constant: bool = False

    def __call__(self, t):
        return self.fn(t)

    def q(self, t):
        return self.fn(t)[0]

    def qdot(self, t):
        return self.fn(t)[1]

    def qddot(self, t):
        return self.fn(t)[2]

    @classmethod
    def from_profiles(cls, profiles: Sequence[JointProfile]):
        profiles = tuple(profiles)
        const = all(p.rate == 0 and not p.terms for p in profiles)

        def fn(t):
            vals = [p.eval(t) for p in profiles]
            if isinstance(t, (float, int)):
                return tuple(np.array(v) for v in zip(*vals))
            return tuple(np.array([v[k] for v in vals], dtype=float) for k in range(3))

        return cls(len(profiles), fn, "analytic", const)

    @classmethod
    def constant_at(cls, q0):
        q0 = np.asarray(q0, dtype=float)
        return cls.from_profiles([JointProfile(offset=float(x)) for x in q0])

    @classmethod
    def zero(cls, n):
        return cls.constant_at(np.zeros(n))


def profile_from_spec(spec) -> JointProfile:
    """Parse a joint profile mapping.

    Keys: ``offset``, ``rate``, and ``terms`` as a list of mappings with
    ``amp``, ``freq`` (rad/s) and ``phase``. ``{"sin": [amp, freq]}`` is
    accepted as shorthand for a cosine term with phase ``-pi/2``.
    """
    if isinstance(spec, (int, float)):
        return JointProfile(offset=float(spec))
    terms = []
    for term in spec.get("terms", []) or []:
        if "sin" in term:
            amp, w = term["sin"]
            terms.append((float(amp), float(w), -np.pi / 2))
        elif "cos" in term:
            amp, w = term["cos"]
            terms.append((float(amp), float(w), 0.0))
        else:
            terms.append((float(term["amp"]), float(term["freq"]), float(term.get("phase", 0.0))))
    return JointProfile(float(spec.get("offset", 0.0)), float(spec.get("rate", 0.0)), tuple(terms))


def trajectory_from_spec(spec, n: int) -> DesiredTrajectory:
    """Build a trajectory from a config mapping (``kind``: zero, constant or profile)."""
    if spec is None:
        return DesiredTrajectory.zero(n)
    kind = spec.get("kind", "profile")
    if kind == "zero":
        return DesiredTrajectory.zero(n)
    if kind == "constant":
        return DesiredTrajectory.constant_at(spec["q"])
    if kind == "profile":
        joints = spec["joints"]
        if len(joints) != n:
            raise ContractViolation(f"trajectory has {len(joints)} joints, model has n={n}")
        return DesiredTrajectory.from_profiles([profile_from_spec(j) for j in joints])
    if kind == "relayed":
        return None
    raise ContractViolation(f"unknown trajectory kind {kind!r}")


# ------------------------------------------------------------- composite signals

@dataclass(frozen=True)
class CompositeSignals:
    qr_dot: np.ndarray
    qr_ddot: np.ndarray
    s: np.ndarray


def reference_signals(traj, state: RobotState, Lambda, t: float) -> CompositeSignals:
    """Reference velocity, acceleration and composite variable.

    ``qr_dot = qd_dot - Lambda (q - q_d)``, ``qr_ddot = qd_ddot - Lambda
    (qdot - qd_dot)`` and ``s = qdot - qr_dot``. ``traj`` is a
    ``DesiredTrajectory`` or a tuple ``(q_d, qdot_d, qddot_d)`` already
    evaluated at ``t``.
    """
    qd, qd_dot, qd_ddot = traj(t) if callable(traj) else traj
    Lam = np.asarray(Lambda, dtype=float)
    if Lam.ndim < 2:
        Lam = np.diag(np.broadcast_to(Lam, state.q.shape))
    if len(qd) != len(state.q) or Lam.shape != (len(state.q),) * 2:
        raise ContractViolation("trajectory, state and Lambda dimensions differ")
    qr_dot = qd_dot - Lam @ (state.q - qd)
    qr_ddot = qd_ddot - Lam @ (state.qdot - qd_dot)
    return CompositeSignals(qr_dot, qr_ddot, state.qdot - qr_dot)


def delayed_composite(q_past, qdot_past, traj_now, Lambda):
    """``s(t - T) = qdot(t-T) + Lambda q(t-T) - (qd_dot(t) + Lambda q_d(t))``.

    ``traj_now`` holds ``(q_d, qdot_d, ...)`` at the current time.
    """
    Lam = np.asarray(Lambda, dtype=float)
    qd, qd_dot = traj_now[0], traj_now[1]
    return qdot_past + Lam @ q_past - (qd_dot + Lam @ qd)


# ------------------------------------------------------------------ control laws

def _feedforward(model, state, sig):
    return inverse_dynamics(model, state.q, state.qdot, sig.qr_dot, sig.qr_ddot)


def coupling_term(neighbor_s, K2, weights=None, m=None):
    """``sum_j w_j K2 s_j`` with ``w_j = 2/m`` unless weights are given."""
    neighbor_s = [np.asarray(x, dtype=float) for x in neighbor_s]
    if not neighbor_s:
        raise ContractViolation("coupled law needs at least one neighbor")
    m = len(neighbor_s) if m is None else m
    if weights is None:
        weights = [2.0 / m] * len(neighbor_s)
    if len(weights) != len(neighbor_s):
        raise ContractViolation("one weight per neighbor is required")
    return sum(w * (K2 @ sj) for w, sj in zip(weights, neighbor_s))


def tracking_sync_torque(model: LagrangianModel, state_i: RobotState, signals_i: CompositeSignals,
                         neighbor_s, gains: Gains, m: int | None = None, weights=None):
    """``M qr_ddot + C qr_dot + g - K1 s_i + sum_j (2/m) K2 s_j``.

    For the two-way ring (``m = 2``) the coupling reduces to
    ``K2 s_{i-1} + K2 s_{i+1}``. Two-robot networks pass ``weights=[1]``.
    """
    ff = _feedforward(model, state_i, signals_i)
    return ff - gains.K1 @ signals_i.s + coupling_term(neighbor_s, gains.K2, weights, m)


def inline_endpoint_torque(model: LagrangianModel, state_i: RobotState, signals_i: CompositeSignals,
                           sole_neighbor_s, gains: Gains, *, graph: CouplingGraph, member: int):
    """Endpoint law of an inline chain: ``ff - (K1 - K2) s_i + K2 s_j``."""
    if not graph.is_endpoint(member):
        raise ContractViolation(f"member {member} is not an endpoint of an inline chain")
    ff = _feedforward(model, state_i, signals_i)
    return ff - (gains.K1 - gains.K2) @ signals_i.s + gains.K2 @ np.asarray(sole_neighbor_s)


@dataclass(frozen=True)
class ParamEstimate:
    a_hat: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.Gamma, dtype=float)
        if G.ndim == 1:
            G = np.diag(G)
        if G.shape != (len(self.a_hat),) * 2 or not np.allclose(G, G.T) \
                or np.linalg.eigvalsh(G).min() <= 0:
            raise ContractViolation("Gamma must be symmetric positive definite of size dim(a)")
        object.__setattr__(self, "a_hat", np.asarray(self.a_hat, dtype=float))
        object.__setattr__(self, "Gamma", G)


def adaptation_rate(Y, s, Gamma):
    """``a_hat_dot = -Gamma Y' s``."""
    return -Gamma @ (Y.T @ s)


def adaptive_step(model: LagrangianModel, state_i: RobotState, signals_i: CompositeSignals,
                  neighbor_s, estimate: ParamEstimate, gains: Gains, dt: float,
                  m: int | None = None, weights=None):
    """Adaptive law ``Y a_hat - K1 s_i + coupling`` and one update of ``a_hat``.

    The state is frozen over the step, so the RK4 update of the estimate
    reduces to a forward Euler step here; the simulator integrates ``a_hat``
    together with the plant instead.

    Returns
    -------
    tau : ndarray
    ParamEstimate
        Estimate after ``dt``.
    """
    try:
        Y = regressor(model, state_i.q, state_i.qdot, signals_i.qr_dot, signals_i.qr_ddot)
    except UnsupportedCapability:
        raise
    tau = Y @ estimate.a_hat - gains.K1 @ signals_i.s \
        + coupling_term(neighbor_s, gains.K2, weights, m)
    a_new = estimate.a_hat + dt * adaptation_rate(Y, signals_i.s, estimate.Gamma)
    return tau, ParamEstimate(a_new, estimate.Gamma)


def pd_torque(state_i: RobotState, neighbor_state: RobotState, gains: Gains, q_d_rest,
              model: LagrangianModel | None = None, gravity_feedforward: bool = False):
    """``-K1 (qdot_i + Lambda e_i) + K2 (qdot_j + Lambda e_j)`` about a rest point.

    With ``Lambda = 0`` this is pure velocity coupling. A model with gravity
    needs ``gravity_feedforward=True``, which adds ``g(q_i)``.
    """
    qd = np.asarray(q_d_rest, dtype=float)
    tau = -gains.K1 @ (state_i.qdot + gains.Lambda @ (state_i.q - qd)) \
        + gains.K2 @ (neighbor_state.qdot + gains.Lambda @ (neighbor_state.q - qd))
    if model is not None and model.gravity_on:
        if not gravity_feedforward:
            raise ContractViolation("PD coupling needs zero gravity or gravity feed-forward")
        tau = tau + model.gravity(state_i.q)
    return tau


def partial_state_torque(model: LagrangianModel, state_i: RobotState, signals_i: CompositeSignals,
                         neighbor_signals, gains: Gains, P, m: int | None = None, weights=None):
    """Tracking law with the neighbor terms filtered by the selector ``P``."""
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = np.diag(P)
    off = P - np.diag(np.diag(P))
    if np.any(off != 0) or not np.all(np.isin(np.diag(P), (0.0, 1.0))):
        raise ContractViolation("P must be diagonal with entries in {0, 1}")
    s_nb = [x.s if isinstance(x, CompositeSignals) else np.asarray(x) for x in neighbor_signals]
    ff = _feedforward(model, state_i, signals_i)
    return ff - gains.K1 @ signals_i.s + coupling_term(s_nb, gains.K2 @ P, weights, m)


def delayed_torque(model: LagrangianModel, state_i: RobotState, signals_i: CompositeSignals,
                   delayed_neighbor_s, gains: Gains, weight: float = 1.0):
    """Two-robot delayed law ``ff - (K1 - K2) s_i + tau_ji``.

    ``tau_ji = K2 (s_j(t - T) - s_i(t))``. Passing ``None`` for the delayed
    signal (history not yet available) holds ``tau_ji`` at zero.

    Returns
    -------
    tau : ndarray
    warmup : bool
        True when the hold-zero policy was applied.
    """
    ff = _feedforward(model, state_i, signals_i)
    s = signals_i.s
    base = ff - (gains.K1 - weight * gains.K2) @ s
    if delayed_neighbor_s is None:
        return base, True
    tau_ji = weight * gains.K2 @ (np.asarray(delayed_neighbor_s) - s)
    return base + tau_ji, False


def inhibition_term(s_a, s_b, K):
    """Extra torque ``-K (s_a + s_b)`` applied to both ends of the inhibitory link."""
    return -np.asarray(K) @ (np.asarray(s_a) + np.asarray(s_b))


# -------------------------------------------------------------- controller spec

@dataclass(frozen=True, eq=False)
class ControllerSpec:
    """Control law selection for one group.

    ``velocity-only`` is the PD law with ``Lambda = 0``. ``delayed`` requires
    ``delay_T > 0``. ``partial`` requires a partial selector on the graph.
    """

    law: str
    gains: Gains
    graph: CouplingGraph | None = None
    delay_T: float = 0.0
    a_hat0: np.ndarray | None = None
    gravity_feedforward: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.law not in LAWS:
            raise ContractViolation(f"unknown law {self.law!r}; expected one of {LAWS}")
        if self.law == "delayed" and not self.delay_T > 0:
            raise ContractViolation("delayed law needs delay_T > 0")
        if self.law != "delayed" and self.delay_T:
            raise ContractViolation("delay_T is only used by the delayed law")
        if self.law == "adaptive" and self.gains.Gamma is None:
            raise ContractViolation("adaptive law needs Gamma")
        if self.law == "partial" and (self.graph is None or self.graph.partial_mask is None):
            raise ContractViolation("partial law needs a partial_mask on the graph")
        if self.law == "velocity-only" and np.any(self.gains.Lambda):
            raise ContractViolation("velocity-only coupling uses Lambda = 0")
